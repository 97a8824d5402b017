"""Likelihoods shared by every model.

A user holding roles `z_i` misses permission `d` only when every held role
misses it, so `p(x_id = 0) = prod_k beta_kd ** z_ik`. Two-level hierarchies
add one more disjunction through technical roles.
"""

from __future__ import annotations
from dataclasses import dataclass
import numpy as np
from scipy.special import xlogy
from rbacmine.errors import ShapeError
from rbacmine.matrix import BinaryMatrix
from rbacmine.typing import FloatArray
from rbacmine._numeric import check_prob

__all__ = ('ProbParams', 'prob_absent_flat', 'log_lik_flat',
           'prob_absent_two_level', 'log_lik_two_level',)


@dataclass(frozen=True)
class ProbParams:
    """Role-permission absence probabilities `beta[k, d] = p(u_kd = 0)`.

    `v_plus[k, l]` is the optional hierarchy analogue, the probability that
    business role `k` includes technical role `l`."""

    beta: FloatArray
    v_plus: FloatArray | None = None

    def __post_init__(self) -> None:
        beta = np.array(self.beta, dtype=np.float64)
        if beta.ndim != 2:
            raise ShapeError(f'beta should be a K×D matrix, got shape {beta.shape}.')
        check_prob('beta', beta)
        beta.setflags(write=False)
        object.__setattr__(self, 'beta', beta)
        if self.v_plus is not None:
            v_plus = np.array(self.v_plus, dtype=np.float64)
            if v_plus.ndim != 2 or v_plus.shape[0] != beta.shape[0]:
                raise ShapeError.mismatch('hierarchy parameters', beta.shape, v_plus.shape)
            check_prob('v_plus', v_plus)
            v_plus.setflags(write=False)
            object.__setattr__(self, 'v_plus', v_plus)

    @property
    def num_roles(self) -> int:
        return int(self.beta.shape[0])

    @property
    def num_permissions(self) -> int:
        return int(self.beta.shape[1])


def prob_absent_flat(z: BinaryMatrix, params: ProbParams) -> FloatArray:
    """N×D matrix of `p(x_id = 0) = prod_k beta_kd ** z_ik`."""

    if z.cols != params.num_roles:
        raise ShapeError.mismatch('user-role assignments and role parameters',
                                  z.shape, params.beta.shape)
    zb = z.bits
    out = np.ones((z.rows, params.num_permissions))
    for k in range(params.num_roles):
        out[zb[:, k]] *= params.beta[k]
    return out


def log_lik_flat(x: BinaryMatrix, z: BinaryMatrix, params: ProbParams) -> float:
    """Exact `sum_{i,d} log p(x_id | beta, z_i)`.

    Returns `-inf` only if an observed bit has probability exactly 0."""

    if x.rows != z.rows or x.cols != params.num_permissions:
        raise ShapeError.mismatch('a flat likelihood', x.shape, z.shape, params.beta.shape)
    p0 = prob_absent_flat(z, params)
    p1 = 1.0 - p0
    xb = x.bits
    # xlogy(0, 0) == 0 keeps unobserved zeros harmless
    with np.errstate(divide='ignore'):
        total = xlogy(xb, p1).sum() + xlogy(~xb, p0).sum()
    return float(total)


def prob_absent_two_level(z_plus: FloatArray, y_plus: FloatArray, v_plus: FloatArray) -> float:
    """Probability that a user misses a permission in a two-level hierarchy.

    `prod_k (1 - z_k + z_k * prod_l (1 - y_l + y_l * (1 - v_kl)))`

    Exact when the draws of `y` are independent for every business role."""

    z_plus = np.asarray(z_plus, dtype=np.float64)
    y_plus = np.asarray(y_plus, dtype=np.float64)
    v_plus = np.asarray(v_plus, dtype=np.float64)
    if z_plus.ndim != 1 or y_plus.ndim != 1 or v_plus.shape != (z_plus.size, y_plus.size):
        raise ShapeError.mismatch('two-level parameters', z_plus.shape, v_plus.shape, y_plus.shape)
    check_prob('z_plus', z_plus)
    check_prob('y_plus', y_plus)
    check_prob('v_plus', v_plus)
    per_role = np.prod(1.0 - y_plus + y_plus * (1.0 - v_plus), axis=1)
    return float(np.prod(1.0 - z_plus + z_plus * per_role))


def log_lik_two_level(x: BinaryMatrix, z: BinaryMatrix, y: BinaryMatrix,
                      v_plus: FloatArray) -> float:
    """Log-likelihood of `x` given binary `z`, `y` and inclusion probabilities `v_plus`.

    Reduces to `log_lik_flat` with `beta[k, d] = prod_l (1 - v_plus[k, l]) ** y[l, d]`."""

    v_plus = np.asarray(v_plus, dtype=np.float64)
    if z.cols != v_plus.shape[0] or v_plus.shape[1] != y.rows:
        raise ShapeError.mismatch('a two-level likelihood', z.shape, v_plus.shape, y.shape)
    check_prob('v_plus', v_plus)
    beta = np.where(y.bits[np.newaxis], (1.0 - v_plus)[:, :, np.newaxis], 1.0).prod(axis=1)
    return log_lik_flat(x, z, ProbParams(beta))
