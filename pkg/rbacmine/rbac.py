from __future__ import annotations
from dataclasses import dataclass
import numpy as np
from rbacmine.errors import ShapeError
from rbacmine.matrix import BinaryMatrix, bool_mat_prod

__all__ = ('FlatRbacConfig', 'HierRbacConfig', 'collapse_hierarchy',)


def collapse_hierarchy(v: BinaryMatrix, y: BinaryMatrix) -> BinaryMatrix:
    """Flatten business-to-technical and technical-to-permission relations.

    `u[k, d] = OR_l (v[k, l] AND y[l, d])`, so that `z @ collapse_hierarchy(v, y)`
    equals `(z @ v) @ y`."""

    if v.cols != y.rows:
        raise ShapeError.mismatch('collapsing a hierarchy', v.shape, y.shape)
    return bool_mat_prod(v, y)


@dataclass(frozen=True)
class FlatRbacConfig:
    """Users-to-roles `z` (N×K) and roles-to-permissions `u` (K×D)."""

    z: BinaryMatrix
    u: BinaryMatrix

    def __post_init__(self) -> None:
        if self.z.cols != self.u.rows:
            raise ShapeError.mismatch('a flat RBAC configuration', self.z.shape, self.u.shape)

    @property
    def num_users(self) -> int:
        return self.z.rows

    @property
    def num_roles(self) -> int:
        return self.z.cols

    @property
    def num_permissions(self) -> int:
        return self.u.cols

    def reconstruct(self) -> BinaryMatrix:
        return bool_mat_prod(self.z, self.u)

    def role_sets(self) -> tuple[tuple[int, ...], ...]:
        """For every user, the sorted roles it holds."""

        return tuple(tuple(int(k) for k in np.flatnonzero(row)) for row in self.z.bits)


@dataclass(frozen=True)
class HierRbacConfig:
    """A two-level configuration `z` (N×K), `v` (K×L), `y` (L×D)."""

    z: BinaryMatrix
    v: BinaryMatrix
    y: BinaryMatrix

    def __post_init__(self) -> None:
        if self.z.cols != self.v.rows or self.v.cols != self.y.rows:
            raise ShapeError.mismatch('a two-level RBAC configuration',
                                      self.z.shape, self.v.shape, self.y.shape)

    @property
    def num_business_roles(self) -> int:
        return self.v.rows

    @property
    def num_technical_roles(self) -> int:
        return self.v.cols

    @property
    def is_disjoint(self) -> bool:
        """Whether every user has one business role and every permission one technical role."""

        return bool(np.all(self.z.bits.sum(axis=1) == 1)
                    and np.all(self.y.bits.sum(axis=0) == 1))

    def flatten(self) -> FlatRbacConfig:
        return FlatRbacConfig(self.z, collapse_hierarchy(self.v, self.y))

    def reconstruct(self) -> BinaryMatrix:
        return bool_mat_prod(bool_mat_prod(self.z, self.v), self.y)
