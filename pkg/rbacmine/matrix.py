"""Binary matrices and the Boolean algebra on them.

Every relation in an RBAC configuration is a 0/1 matrix: the observed
user-permission matrix X, user-role assignments Z, role-permission
assignments U, and in the two-level case V and Y. `BinaryMatrix` is the
immutable value type for all of them.
"""

from __future__ import annotations
from typing import Any, Iterable, Iterator, Sequence, final
import numpy as np
from more_itertools import all_equal
from rbacmine.errors import ShapeError
from rbacmine.typing import BoolArray, Seed
from rbacmine._numeric import as_generator

__all__ = ('BinaryMatrix', 'bool_mat_prod', 'hamming',)


@final
class BinaryMatrix:
    """An immutable nonempty matrix of bits.

    `a @ b` is the Boolean product, `~a` the complement, `a.T` the transpose.
    Equality and hashing are by shape and content."""

    __slots__ = ('_bits', '_hash')

    def __init__(self, bits: Any) -> None:
        arr = np.asarray(bits)
        if arr.ndim != 2:
            raise ShapeError(f'A binary matrix should be two-dimensional, got {arr.ndim} axes.')
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f'A binary matrix should be nonempty, got shape {arr.shape}.')
        if arr.dtype != np.bool_:
            if not np.all((arr == 0) | (arr == 1)):
                raise ValueError('Every entry should be exactly 0 or 1.')
            arr = arr.astype(np.bool_)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        self._bits: BoolArray = arr
        self._hash: int | None = None

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[int] | str]) -> BinaryMatrix:
        """Build from rows given as 0/1 sequences or strings like `'0110'`."""

        parsed = [[int(c) for c in row] for row in rows]
        if not parsed:
            raise ShapeError('A binary matrix should be nonempty, got no rows.')
        if not all_equal(len(row) for row in parsed):
            raise ShapeError('All rows should have the same length.')
        return cls(np.array(parsed, dtype=np.int64))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> BinaryMatrix:
        return cls(np.zeros((rows, cols), dtype=np.bool_))

    @classmethod
    def ones(cls, rows: int, cols: int) -> BinaryMatrix:
        return cls(np.ones((rows, cols), dtype=np.bool_))

    @classmethod
    def identity(cls, size: int) -> BinaryMatrix:
        return cls(np.eye(size, dtype=np.bool_))

    @classmethod
    def random(cls, rows: int, cols: int, density: float = 0.5,
               seed: Seed = None) -> BinaryMatrix:
        rng = as_generator(seed)
        return cls(rng.random((rows, cols)) < density)

    @classmethod
    def one_hot(cls, labels: Sequence[int] | np.ndarray, width: int | None = None) -> BinaryMatrix:
        """Rows with a single 1 in column `labels[i]`."""

        labels = np.asarray(labels, dtype=np.int64)
        if width is None:
            width = int(labels.max()) + 1
        out = np.zeros((labels.size, width), dtype=np.bool_)
        out[np.arange(labels.size), labels] = True
        return cls(out)

    @property
    def bits(self) -> BoolArray:
        """A read-only boolean view of the entries."""

        return self._bits

    @property
    def rows(self) -> int:
        return int(self._bits.shape[0])

    @property
    def cols(self) -> int:
        return int(self._bits.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def T(self) -> BinaryMatrix:  # pylint: disable=invalid-name
        return BinaryMatrix(self._bits.T)

    @property
    def density(self) -> float:
        """Fraction of entries equal to 1."""

        return float(self._bits.mean())

    def count(self) -> int:
        return int(self._bits.sum())

    def as_float(self) -> np.ndarray:
        return self._bits.astype(np.float64)

    def rows_as_tuples(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(b) for b in row) for row in self._bits)

    def __getitem__(self, index: tuple[int, int]) -> int:
        return int(self._bits[index])

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return iter(self.rows_as_tuples())

    def __invert__(self) -> BinaryMatrix:
        """Complement: `~a` flips every bit."""

        return BinaryMatrix(~self._bits)

    def __matmul__(self, other: BinaryMatrix) -> BinaryMatrix:
        """`self @ other == bool_mat_prod(self, other)`"""

        if not isinstance(other, BinaryMatrix):
            return NotImplemented
        return bool_mat_prod(self, other)

    def __or__(self, other: BinaryMatrix) -> BinaryMatrix:
        if not isinstance(other, BinaryMatrix):
            return NotImplemented
        if self.shape != other.shape:
            raise ShapeError.mismatch('an elementwise OR', self.shape, other.shape)
        return BinaryMatrix(self._bits | other._bits)

    def __and__(self, other: BinaryMatrix) -> BinaryMatrix:
        if not isinstance(other, BinaryMatrix):
            return NotImplemented
        if self.shape != other.shape:
            raise ShapeError.mismatch('an elementwise AND', self.shape, other.shape)
        return BinaryMatrix(self._bits & other._bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.shape, np.packbits(self._bits).tobytes()))
        return self._hash

    def __repr__(self) -> str:
        return f'BinaryMatrix.from_rows({[self._row_str(r) for r in self._bits]!r})'

    def __str__(self) -> str:
        return '\n'.join(self._row_str(r) for r in self._bits)

    @staticmethod
    def _row_str(row: np.ndarray) -> str:
        return ''.join('1' if b else '0' for b in row)


def bool_mat_prod(a: BinaryMatrix, b: BinaryMatrix) -> BinaryMatrix:
    """Boolean matrix product: `result[i, d] = OR_k (a[i, k] AND b[k, d])`."""

    if a.cols != b.rows:
        raise ShapeError.mismatch('a Boolean product', a.shape, b.shape)
    # integer product counts witnesses; any positive count is a 1
    counts = a.bits.astype(np.int64) @ b.bits.astype(np.int64)
    return BinaryMatrix(counts > 0)


def hamming(a: BinaryMatrix, b: BinaryMatrix) -> int:
    """Number of entries where `a` and `b` differ."""

    if a.shape != b.shape:
        raise ShapeError.mismatch('a Hamming distance', a.shape, b.shape)
    return int(np.count_nonzero(a.bits != b.bits))
