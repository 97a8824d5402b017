from __future__ import annotations
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb
import numpy as np
from rbacmine.errors import DomainError
from rbacmine.typing import BoolArray, RoleSet

__all__ = ('RoleSetCatalog', 'role_set_catalog',)


@dataclass(frozen=True)
class RoleSetCatalog:
    """All role subsets of size at most `max_set_size`, the empty set first.

    Sets are ordered by size, then lexicographically; `membership[s, k]`
    tells whether role `k` is in set number `s`."""

    num_roles: int
    max_set_size: int
    sets: tuple[RoleSet, ...] = field(init=False, repr=False, compare=False)
    membership: BoolArray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.num_roles < 1:
            raise DomainError('There should be at least one role.')
        if self.max_set_size < 1:
            raise DomainError('Role sets should allow at least one role.')
        size = min(self.max_set_size, self.num_roles)
        sets = tuple(s for m in range(size + 1)
                     for s in combinations(range(self.num_roles), m))
        membership = np.zeros((len(sets), self.num_roles), dtype=np.bool_)
        for index, s in enumerate(sets):
            membership[index, list(s)] = True
        membership.setflags(write=False)
        object.__setattr__(self, 'sets', sets)
        object.__setattr__(self, 'membership', membership)

    def __len__(self) -> int:
        return len(self.sets)

    def __getitem__(self, index: int) -> RoleSet:
        return self.sets[index]

    @property
    def expected_size(self) -> int:
        """`sum_{m <= M} C(K, m)`"""

        return sum(comb(self.num_roles, m)
                   for m in range(min(self.max_set_size, self.num_roles) + 1))

    def index(self, role_set: RoleSet) -> int:
        return self._indices()[tuple(sorted(role_set))]

    def _indices(self) -> dict[RoleSet, int]:
        return _set_indices(self)


@lru_cache
def _set_indices(catalog: RoleSetCatalog) -> dict[RoleSet, int]:
    return {s: index for index, s in enumerate(catalog.sets)}


@lru_cache
def role_set_catalog(num_roles: int, max_set_size: int) -> RoleSetCatalog:
    return RoleSetCatalog(num_roles, max_set_size)
