from pathlib import Path
import numpy as np
import pytest
from rbacmine.attributes import AttributeTable
from rbacmine.errors import FormatError
from rbacmine.formats import (RbacConfigDocument, dump_config, format_matrix, load_config,
                              parse_attributes, parse_matrix, read_attributes, read_config,
                              read_matrix, read_yaml, write_attributes, write_config, write_csv,
                              write_matrix, write_yaml)
from rbacmine.matrix import BinaryMatrix
from rbacmine.rbac import FlatRbacConfig, HierRbacConfig

DENSE = """\
# three users
3 4 dense
0110

1000
0001
"""

SPARSE = """\
3 4 sparse
1 2
1 3
# comment between entries
2 1
3 4
"""

def test_parse_matrix() -> None:
    expected = BinaryMatrix.from_rows(['0110', '1000', '0001'])
    assert parse_matrix(DENSE) == expected
    assert parse_matrix(SPARSE) == expected
    assert parse_matrix('2 2 sparse\n') == BinaryMatrix.zeros(2, 2)

@pytest.mark.parametrize('text, line, message', [
    ('', None, 'Missing header'),
    ('3 4\n', 1, 'Header'),
    ('x 4 dense\n', 1, 'integers'),
    ('\u00b2 4 dense\n', 1, 'integers'),
    ('0 4 dense\n', 1, 'at least one row'),
    ('2 3 dense\n010\n', 2, 'Expected 2 rows'),
    ('2 3 dense\n010\n0120\n', 3, 'characters of 0 and 1'),
    ('2 3 sparse\n1 1\n1\n', 3, 'Sparse entry'),
    ('2 2 sparse\n1 \u00b2\n', 2, 'Sparse entry'),
    ('2 3 sparse\n3 1\n', 2, 'out of range'),
    ('2 3 sparse\n0 1\n', 2, 'out of range'),
    ('# c\n2 3 sparse\n1 1\n1 1\n', 4, 'Duplicate'),
])
def test_parse_matrix_errors(text: str, line: int | None, message: str) -> None:
    with pytest.raises(FormatError, match=message) as info:
        parse_matrix(text, 'm.txt')
    assert info.value.line == line
    assert info.value.path == 'm.txt'
    assert str(info.value).startswith('m.txt')

def test_format_matrix() -> None:
    x = BinaryMatrix.from_rows(['0110', '1000', '0001'])
    assert format_matrix(x) == '3 4 dense\n0110\n1000\n0001\n'
    assert format_matrix(x, 'sparse') == '3 4 sparse\n1 2\n1 3\n2 1\n3 4\n'
    with pytest.raises(ValueError):
        format_matrix(x, 'csv')  # type: ignore[arg-type]

def test_matrix_files(tmp_path: Path) -> None:
    x = BinaryMatrix.random(7, 5, seed=3)
    for layout in ('dense', 'sparse'):
        path = tmp_path / f'{layout}.txt'
        write_matrix(path, x, layout)  # type: ignore[arg-type]
        assert read_matrix(path) == x
        text = path.read_text(encoding='utf-8')
        assert format_matrix(parse_matrix(text), layout) == text  # type: ignore[arg-type]

def test_parse_attributes() -> None:
    text = 'user,kind,value\n1,ou,sales\n2,ou,it\n1,site,zurich\n2,site,zurich\n\n3,ou,sales\n3,site,bern\n'
    tables = parse_attributes(text, num_users=3)
    assert set(tables) == {'ou', 'site'}
    assert tables['ou'].labels == ('sales', 'it', 'sales')
    assert tables['ou'].vocabulary == ('it', 'sales')
    assert tables['site'].counts().tolist() == [1, 2]
    assert parse_attributes(text)['ou'].num_users == 3

@pytest.mark.parametrize('text, message', [
    ('id,kind,value\n1,ou,a\n', 'Header'),
    ('user,kind,value\n1,ou\n', 'three fields'),
    ('user,kind,value\n0,ou,a\n', 'positive integer'),
    ('user,kind,value\n\u00b2,ou,a\n', 'positive integer'),
    ('user,kind,value\n4,ou,a\n', 'out of range'),
    ('user,kind,value\n1,ou,a\n1,ou,b\n', 'two values'),
    ('user,kind,value\n1,ou,a\n3,ou,b\n', r'misses users \[2\]'),
])
def test_parse_attributes_errors(text: str, message: str) -> None:
    with pytest.raises(FormatError, match=message):
        parse_attributes(text, num_users=3)

def test_attribute_files(tmp_path: Path) -> None:
    tables = [AttributeTable.from_labels('ou', ['b', 'a', 'b']),
              AttributeTable.from_labels('site', ['x', 'x', 'y'])]
    path = tmp_path / 'attributes.csv'
    write_attributes(path, tables)
    assert path.read_text(encoding='utf-8').splitlines()[:2] == ['user,kind,value', '1,ou,b']
    read = read_attributes(path, 3)
    assert read['ou'].labels == tables[0].labels
    assert read['site'].labels == tables[1].labels

def test_invalid_utf8(tmp_path: Path) -> None:
    path = tmp_path / 'broken.txt'
    path.write_bytes(b'2 2 dense\n0\xff\n01\n')
    with pytest.raises(FormatError, match='UTF-8') as info:
        read_matrix(path)
    assert info.value.line == 2
    with pytest.raises(FormatError, match='UTF-8'):
        read_attributes(path)
    with pytest.raises(FormatError, match='UTF-8'):
        read_yaml(path)

def test_flat_config_document(tmp_path: Path) -> None:
    config = FlatRbacConfig(BinaryMatrix.from_rows(['10', '11', '00']),
                            BinaryMatrix.from_rows(['0110', '1001']))
    document = RbacConfigDocument('mac', config, {'eps': np.float64(0.1), 'r': 0.5,
                                                  'beta': np.array([[0.1, 0.9]])},
                                  {'converged': True, 'iterations': np.int64(12)}, 'conf.csv')
    text = dump_config(document)
    loaded = load_config(text)
    assert loaded.model == 'mac'
    assert loaded.config == config
    assert loaded.parameters == {'eps': 0.1, 'r': 0.5, 'beta': [[0.1, 0.9]]}
    assert loaded.diagnostics == {'converged': True, 'iterations': 12}
    assert loaded.confidence_file == 'conf.csv'

    path = tmp_path / 'config.yaml'
    write_config(path, document)
    assert read_config(path).config == config
    assert dump_config(read_config(path)) == text

def test_hierarchical_config_document() -> None:
    config = HierRbacConfig(BinaryMatrix.one_hot([0, 1, 0]), BinaryMatrix.from_rows(['10', '11']),
                            BinaryMatrix.from_rows(['110', '001']))
    loaded = load_config(dump_config(RbacConfigDocument('ddm', config)))
    assert isinstance(loaded.config, HierRbacConfig)
    assert loaded.config == config
    assert loaded.parameters == {} and loaded.confidence_file is None

@pytest.mark.parametrize('text, message', [
    ('[1, 2', 'Not a YAML'),
    ('format: other\n', 'Expected'),
    ("format: rbacmine-config/1\nmodel: mac\nusers: ['10']\n", 'Missing section'),
    ("format: rbacmine-config/1\nmodel: mac\nusers: ['10', '1']\nroles: ['11']\n", 'Bad user'),
    ("format: rbacmine-config/1\nmodel: mac\nusers: ['1']\nroles: ['11', '01']\n", 'flat RBAC'),
])
def test_load_config_errors(text: str, message: str) -> None:
    with pytest.raises(FormatError, match=message):
        load_config(text, 'c.yaml')

def test_tables(tmp_path: Path) -> None:
    path = tmp_path / 'table.csv'
    write_csv(path, ('k', 'median'), [(np.int64(2), np.float64(0.25)), (3, 0.5)])
    assert path.read_text(encoding='utf-8') == 'k,median\n2,0.25\n3,0.5\n'

    path = tmp_path / 'data.yaml'
    write_yaml(path, {'seed': np.int64(4), 'noise': [0.0, 0.1]})
    assert read_yaml(path) == {'seed': 4, 'noise': [0.0, 0.1]}
    path.write_text('', encoding='utf-8')
    assert read_yaml(path) == {}
    path.write_text('- 1\n', encoding='utf-8')
    with pytest.raises(FormatError, match='mapping'):
        read_yaml(path)
