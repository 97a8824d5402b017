from __future__ import annotations
from dataclasses import dataclass
from typing import Sequence
import numpy as np
from rbacmine.errors import DomainError, ShapeError
from rbacmine.typing import BoolArray, FloatArray, IntArray

__all__ = ('AttributeTable',)


@dataclass(frozen=True)
class AttributeTable:
    """One business attribute kind: every user has exactly one value of it.

    `values[i]` indexes into `vocabulary`."""

    kind: str
    values: IntArray
    vocabulary: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.int64)
        if values.ndim != 1 or values.size == 0:
            raise ShapeError('Attribute values should be a nonempty vector.')
        if values.min() < 0 or values.max() >= len(self.vocabulary):
            raise DomainError(f'Attribute values of {self.kind!r} should index its vocabulary.')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'vocabulary', tuple(self.vocabulary))

    @classmethod
    def from_labels(cls, kind: str, labels: Sequence[str]) -> AttributeTable:
        """Vocabulary is the sorted set of labels."""

        vocabulary = tuple(sorted(set(labels)))
        index = {label: i for i, label in enumerate(vocabulary)}
        return cls(kind, np.array([index[label] for label in labels], dtype=np.int64), vocabulary)

    @property
    def num_users(self) -> int:
        return int(self.values.size)

    @property
    def num_values(self) -> int:
        return len(self.vocabulary)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.vocabulary[v] for v in self.values)

    def counts(self) -> IntArray:
        """Number of users holding every value."""

        return np.bincount(self.values, minlength=self.num_values)

    def one_hot(self) -> FloatArray:
        """N×S matrix `w[i, s]`."""

        w = np.zeros((self.num_users, self.num_values))
        w[np.arange(self.num_users), self.values] = 1.0
        return w

    def frequent_values(self, min_count: int = 1) -> BoolArray:
        if min_count < 1:
            raise DomainError('Minimal count should be at least 1.')
        return self.counts() >= min_count

    def frequent_users(self, min_count: int = 1) -> BoolArray:
        """Users whose value is held by at least `min_count` users."""

        return self.frequent_values(min_count)[self.values]

    def subset(self, users: Sequence[int] | IntArray) -> AttributeTable:
        """The same attribute restricted to `users`, vocabulary kept."""

        return AttributeTable(self.kind, self.values[np.asarray(users, dtype=np.int64)],
                              self.vocabulary)

    def check_users(self, num_users: int) -> None:
        if self.num_users != num_users:
            raise ShapeError(f'Attribute {self.kind!r} covers {self.num_users} users, '
                             f'expected {num_users}.')
