"""Reading and writing matrices, attributes, mined configurations and tables.

See docs/formats.md for the exact layouts.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Any, Iterable, Literal, Mapping, Sequence
import csv
import io
import numpy as np
import yaml
from rbacmine.attributes import AttributeTable
from rbacmine.errors import FormatError
from rbacmine.matrix import BinaryMatrix
from rbacmine.rbac import FlatRbacConfig, HierRbacConfig

__all__ = ('MatrixLayout', 'parse_matrix', 'format_matrix', 'read_matrix', 'write_matrix',
           'parse_attributes', 'read_attributes', 'write_attributes', 'RbacConfigDocument',
           'dump_config', 'load_config', 'read_config', 'write_config', 'write_csv',
           'write_yaml', 'read_yaml',)

StrPath = str | PathLike[str]
MatrixLayout = Literal['dense', 'sparse']

CONFIG_FORMAT = 'rbacmine-config/1'


def _read_text(path: StrPath) -> str:
    data = Path(path).read_bytes()
    try:
        return data.decode('utf-8')
    except UnicodeDecodeError as e:
        line = data.count(b'\n', 0, e.start) + 1
        raise FormatError(f'Not valid UTF-8 at byte {e.start}.', path, line) from None


def _is_index(text: str) -> bool:
    return text.isascii() and text.isdecimal()


def parse_matrix(text: str, path: StrPath | None = None) -> BinaryMatrix:
    """Parse a matrix file; lines starting with `#` are comments."""

    lines = [(number, line.strip()) for number, line in enumerate(text.splitlines(), start=1)
             if line.strip() and not line.lstrip().startswith('#')]
    if not lines:
        raise FormatError('Missing header line.', path)
    number, header = lines[0]
    parts = header.split()
    if len(parts) != 3 or parts[2] not in ('dense', 'sparse'):
        raise FormatError('Header should read "<rows> <cols> dense|sparse".', path, number)
    if not (_is_index(parts[0]) and _is_index(parts[1])):
        raise FormatError('Header sizes should be integers.', path, number)
    rows, cols = int(parts[0]), int(parts[1])
    if rows < 1 or cols < 1:
        raise FormatError('Matrix should have at least one row and one column.', path, number)

    body = lines[1:]
    bits = np.zeros((rows, cols), dtype=np.bool_)
    if parts[2] == 'dense':
        if len(body) != rows:
            raise FormatError(f'Expected {rows} rows, found {len(body)}.', path,
                              body[-1][0] if body else number)
        for i, (number, line) in enumerate(body):
            if len(line) != cols or set(line) - {'0', '1'}:
                raise FormatError(f'Row should be {cols} characters of 0 and 1.', path, number)
            bits[i] = np.frombuffer(line.encode('ascii'), dtype=np.uint8) == ord('1')
        return BinaryMatrix(bits)

    for number, line in body:
        entry = line.split()
        if len(entry) != 2 or not all(_is_index(e) for e in entry):
            raise FormatError('Sparse entry should read "<row> <col>".', path, number)
        i, d = int(entry[0]), int(entry[1])
        if not (1 <= i <= rows and 1 <= d <= cols):
            raise FormatError(f'Entry ({i}, {d}) out of range.', path, number)
        if bits[i - 1, d - 1]:
            raise FormatError(f'Duplicate entry ({i}, {d}).', path, number)
        bits[i - 1, d - 1] = True
    return BinaryMatrix(bits)


def format_matrix(matrix: BinaryMatrix, layout: MatrixLayout = 'dense') -> str:
    out = [f'{matrix.rows} {matrix.cols} {layout}']
    if layout == 'dense':
        out.extend(str(matrix).splitlines())
    elif layout == 'sparse':
        out.extend(f'{i + 1} {d + 1}' for i, d in zip(*np.nonzero(matrix.bits)))
    else:
        raise ValueError(f'Unknown matrix layout {layout!r}.')
    return '\n'.join(out) + '\n'


def read_matrix(path: StrPath) -> BinaryMatrix:
    return parse_matrix(_read_text(path), path)


def write_matrix(path: StrPath, matrix: BinaryMatrix, layout: MatrixLayout = 'dense') -> None:
    Path(path).write_text(format_matrix(matrix, layout), encoding='utf-8', newline='\n')


def parse_attributes(text: str, num_users: int | None = None,
                     path: StrPath | None = None) -> dict[str, AttributeTable]:
    """Parse `user,kind,value` rows (1-based users, header line required)."""

    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ['user', 'kind', 'value']:
        raise FormatError('Header should read "user,kind,value".', path, 1)
    seen: dict[str, dict[int, str]] = {}
    for number, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise FormatError('Row should have three fields.', path, number)
        user_text, kind, value = (field_.strip() for field_ in row)
        if not _is_index(user_text) or int(user_text) < 1:
            raise FormatError('User index should be a positive integer.', path, number)
        user = int(user_text)
        if num_users is not None and user > num_users:
            raise FormatError(f'User {user} out of range 1..{num_users}.', path, number)
        per_kind = seen.setdefault(kind, {})
        if user in per_kind:
            raise FormatError(f'User {user} has two values of {kind!r}.', path, number)
        per_kind[user] = value
    tables = {}
    for kind, per_kind in seen.items():
        expected = num_users if num_users is not None else max(per_kind)
        missing = sorted(set(range(1, expected + 1)) - set(per_kind))
        if missing:
            raise FormatError(f'Attribute {kind!r} misses users {missing[:5]}.', path)
        tables[kind] = AttributeTable.from_labels(kind, [per_kind[u] for u in range(1, expected + 1)])
    return tables


def read_attributes(path: StrPath, num_users: int | None = None) -> dict[str, AttributeTable]:
    return parse_attributes(_read_text(path), num_users, path)


def write_attributes(path: StrPath, tables: Iterable[AttributeTable]) -> None:
    rows = [(user + 1, table.kind, label)
            for table in tables for user, label in enumerate(table.labels)]
    write_csv(path, ('user', 'kind', 'value'), rows)


def _rows(matrix: BinaryMatrix) -> list[str]:
    return str(matrix).splitlines()


def _matrix(rows: Sequence[str], what: str, path: StrPath | None) -> BinaryMatrix:
    try:
        return BinaryMatrix.from_rows(rows)
    except (ValueError, TypeError) as e:
        raise FormatError(f'Bad {what}: {e}', path) from None


def _plain(value: Any) -> Any:
    """numpy scalars and arrays as YAML-safe Python values."""

    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass(frozen=True)
class RbacConfigDocument:
    """A mined configuration with its parameters and fit diagnostics."""

    model: str
    config: FlatRbacConfig | HierRbacConfig
    parameters: dict[str, Any] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    confidence_file: str | None = None


def dump_config(document: RbacConfigDocument) -> str:
    config = document.config
    data: dict[str, Any] = {'format': CONFIG_FORMAT, 'model': document.model}
    if isinstance(config, FlatRbacConfig):
        data['shape'] = {'users': config.num_users, 'roles': config.num_roles,
                         'permissions': config.num_permissions}
        data['roles'] = _rows(config.u)
        data['users'] = _rows(config.z)
    else:
        data['shape'] = {'users': config.z.rows, 'business_roles': config.num_business_roles,
                         'technical_roles': config.num_technical_roles,
                         'permissions': config.y.cols}
        data['business_roles'] = _rows(config.v)
        data['technical_roles'] = _rows(config.y)
        data['users'] = _rows(config.z)
    data['parameters'] = _plain(document.parameters)
    data['diagnostics'] = _plain(document.diagnostics)
    data['confidence_file'] = document.confidence_file
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None, width=1 << 16)


def load_config(text: str, path: StrPath | None = None) -> RbacConfigDocument:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise FormatError(f'Not a YAML document: {e}', path) from None
    if not isinstance(data, dict) or data.get('format') != CONFIG_FORMAT:
        raise FormatError(f'Expected a {CONFIG_FORMAT} document.', path)
    try:
        users = _matrix(data['users'], 'user assignments', path)
        config: FlatRbacConfig | HierRbacConfig
        if 'roles' in data:
            config = FlatRbacConfig(users, _matrix(data['roles'], 'roles', path))
        else:
            config = HierRbacConfig(users, _matrix(data['business_roles'], 'business roles', path),
                                    _matrix(data['technical_roles'], 'technical roles', path))
    except KeyError as e:
        raise FormatError(f'Missing section {e}.', path) from None
    except ValueError as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(str(e), path) from None
    return RbacConfigDocument(str(data['model']), config, dict(data.get('parameters') or {}),
                              dict(data.get('diagnostics') or {}), data.get('confidence_file'))


def read_config(path: StrPath) -> RbacConfigDocument:
    return load_config(_read_text(path), path)


def write_config(path: StrPath, document: RbacConfigDocument) -> None:
    Path(path).write_text(dump_config(document), encoding='utf-8', newline='\n')


def write_csv(path: StrPath, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        writer.writerows([_plain(v) for v in row] for row in rows)


def write_yaml(path: StrPath, data: Mapping[str, Any]) -> None:
    Path(path).write_text(yaml.safe_dump(_plain(data), sort_keys=False), encoding='utf-8',
                          newline='\n')


def read_yaml(path: StrPath) -> dict[str, Any]:
    try:
        data = yaml.safe_load(_read_text(path))
    except yaml.YAMLError as e:
        raise FormatError(f'Not a YAML document: {e}', path) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise FormatError('Expected a mapping at the top level.', path)
    return data
