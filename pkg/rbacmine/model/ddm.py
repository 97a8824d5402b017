"""Disjoint decomposition: users and permissions are both partitioned.

Every user belongs to one business role, every permission to one technical
role, and a block of the two is granted with a Beta-Bernoulli probability
integrated out of the model. Both partitions carry a Dirichlet-process
(Chinese restaurant) prior. The posterior is explored by Gibbs sampling that
alternates user and permission sweeps; the most probable visited state is
reported.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional
import logging
import time
import numpy as np
from scipy.special import betaln, gammaln, logsumexp
from rbacmine.errors import DomainError, ShapeError
from rbacmine.matrix import BinaryMatrix
from rbacmine.rbac import FlatRbacConfig, HierRbacConfig
from rbacmine.evaluation import Fitter
from rbacmine.typing import BoolArray, FloatArray, IntArray, Seed
from rbacmine._numeric import as_generator, spawn_generators

__all__ = ('DdmConfig', 'DdmState', 'DdmDiagnostics', 'DdmFit', 'dp_prior', 'sample_crp',
           'log_crp', 'log_evidence', 'log_joint', 'canonical_labels', 'gibbs_resample_user',
           'gibbs_resample_permission', 'user_conditional', 'permission_conditional',
           'gibbs_sweep', 'fit_ddm', 'ddm_reconstruct', 'ddm_fitter',)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DdmConfig:
    alpha: float = 1.0
    beta_prior_strength: float = 0.5
    max_alternations: int = 200
    stagnation_window: int = 5
    seed: int | None = None
    init: str = 'crp'
    chains: int = 1

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise DomainError('Concentration alpha should be positive.')
        if not self.beta_prior_strength > 0:
            raise DomainError('Beta prior strength should be positive.')
        if self.max_alternations < 1 or self.stagnation_window < 1 or self.chains < 1:
            raise DomainError('Alternations, stagnation window and chains should be positive.')
        if self.init not in ('crp', 'single'):
            raise DomainError(f'Unknown initialization {self.init!r}.')


def dp_prior(counts: IntArray | list[int], n_total: int, alpha: float,
             target: Optional[int]) -> float:
    """Probability that an item joins role `target` (or a new role, for None).

    `counts` are role sizes without the item itself, `n_total` includes it."""

    if not alpha > 0:
        raise DomainError('Concentration alpha should be positive.')
    denominator = n_total - 1 + alpha
    if target is None:
        return alpha / denominator
    return float(counts[target]) / denominator


def sample_crp(n: int, alpha: float, seed: Seed = None) -> IntArray:
    """Sequential Chinese-restaurant draw of a partition of `n` items, labels in order of appearance."""

    if not alpha > 0:
        raise DomainError('Concentration alpha should be positive.')
    rng = as_generator(seed)
    labels = np.zeros(n, dtype=np.int64)
    sizes: list[int] = []
    for i in range(n):
        weights = np.array(sizes + [alpha], dtype=np.float64)
        choice = int(rng.choice(len(weights), p=weights / (i + alpha)))
        if choice == len(sizes):
            sizes.append(1)
        else:
            sizes[choice] += 1
        labels[i] = choice
    return labels


def log_crp(sizes: IntArray | list[int], alpha: float) -> float:
    """Log probability of a partition with the given block sizes under the CRP."""

    sizes = np.asarray(sizes, dtype=np.float64)
    sizes = sizes[sizes > 0]
    n = sizes.sum()
    return float(sizes.size * np.log(alpha) + gammaln(sizes).sum()
                 + gammaln(alpha) - gammaln(alpha + n))


def log_evidence(n1: IntArray, n0: IntArray, gamma_prior: float) -> float:
    """`sum_{k,l} log B(n1 + g, n0 + g) - log B(g, g)`; empty blocks add 0."""

    n1 = np.asarray(n1, dtype=np.float64)
    n0 = np.asarray(n0, dtype=np.float64)
    return float(np.sum(betaln(n1 + gamma_prior, n0 + gamma_prior) - betaln(gamma_prior, gamma_prior)))


def canonical_labels(labels: IntArray) -> IntArray:
    """Relabel so that blocks are numbered by first appearance."""

    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.int64)


@dataclass
class DdmState:
    """Partitions of users and permissions with their block counters.

    `n1[k, l]` and `n0[k, l]` count ones and zeros of `x` in the block of
    business role `k` and technical role `l`. Role ids are `0..K-1` with no
    empty role."""

    user_assign: IntArray
    perm_assign: IntArray
    n1: IntArray
    n0: IntArray

    @classmethod
    def from_assignments(cls, x: BinaryMatrix, user_assign: IntArray,
                         perm_assign: IntArray) -> DdmState:
        users = canonical_labels(np.asarray(user_assign, dtype=np.int64))
        perms = canonical_labels(np.asarray(perm_assign, dtype=np.int64))
        if users.shape != (x.rows,) or perms.shape != (x.cols,):
            raise ShapeError.mismatch('partitions of the data', x.shape, (users.size, perms.size))
        n1, n0 = _count_blocks(x, users, perms)
        return cls(users, perms, n1, n0)

    @property
    def num_business_roles(self) -> int:
        return int(self.n1.shape[0])

    @property
    def num_technical_roles(self) -> int:
        return int(self.n1.shape[1])

    @property
    def user_sizes(self) -> IntArray:
        return np.bincount(self.user_assign, minlength=self.num_business_roles)

    @property
    def perm_sizes(self) -> IntArray:
        return np.bincount(self.perm_assign, minlength=self.num_technical_roles)

    def copy(self) -> DdmState:
        return DdmState(self.user_assign.copy(), self.perm_assign.copy(),
                        self.n1.copy(), self.n0.copy())

    def posterior_mean(self, gamma_prior: float) -> FloatArray:
        """Posterior mean probability that a block is granted."""

        return (self.n1 + gamma_prior) / (self.n1 + self.n0 + 2.0 * gamma_prior)

    def to_config(self, gamma_prior: float) -> HierRbacConfig:
        z = BinaryMatrix.one_hot(self.user_assign, self.num_business_roles)
        y = BinaryMatrix.one_hot(self.perm_assign, self.num_technical_roles).T
        v = BinaryMatrix(self.posterior_mean(gamma_prior) > 0.5)
        return HierRbacConfig(z, v, y)

    def partition_key(self) -> tuple[bytes, bytes]:
        return (canonical_labels(self.user_assign).tobytes(),
                canonical_labels(self.perm_assign).tobytes())


def _count_blocks(x: BinaryMatrix, users: IntArray, perms: IntArray) -> tuple[IntArray, IntArray]:
    num_users = int(users.max()) + 1
    num_perms = int(perms.max()) + 1
    z = np.zeros((x.rows, num_users), dtype=np.int64)
    z[np.arange(x.rows), users] = 1
    y = np.zeros((x.cols, num_perms), dtype=np.int64)
    y[np.arange(x.cols), perms] = 1
    n1 = z.T @ x.bits.astype(np.int64) @ y
    sizes = np.outer(z.sum(axis=0), y.sum(axis=0))
    return n1, sizes - n1


def log_joint(state: DdmState, config: DdmConfig) -> float:
    """Log evidence plus the CRP log priors of both partitions."""

    return (log_evidence(state.n1, state.n0, config.beta_prior_strength)
            + log_crp(state.user_sizes, config.alpha) + log_crp(state.perm_sizes, config.alpha))


class _Removed(NamedTuple):
    assign: IntArray
    n1: IntArray
    n0: IntArray
    ones: IntArray
    zeros: IntArray
    probabilities: FloatArray


def _conditional(data: BoolArray, i: int, assign: IntArray, other: IntArray,
                 n1: IntArray, n0: IntArray, alpha: float, gamma_prior: float) -> _Removed:
    """Take row `i` of `data` out of its role and compute where it may go.

    Rows are partitioned by `assign`, columns by `other`. Probabilities list
    the remaining roles first and a new role last."""

    assign, n1, n0 = assign.copy(), n1.copy(), n0.copy()
    num_other = n1.shape[1]
    ones = np.bincount(other, weights=data[i], minlength=num_other).astype(np.int64)
    zeros = np.bincount(other, minlength=num_other) - ones

    old = int(assign[i])
    n1[old] -= ones
    n0[old] -= zeros
    sizes = np.bincount(np.delete(assign, i), minlength=n1.shape[0])
    if sizes[old] == 0:
        n1 = np.delete(n1, old, axis=0)
        n0 = np.delete(n0, old, axis=0)
        sizes = np.delete(sizes, old)
        assign[assign > old] -= 1
    assign[i] = -1

    g = gamma_prior
    join = np.sum(betaln(n1 + ones + g, n0 + zeros + g) - betaln(n1 + g, n0 + g), axis=1)
    fresh = np.sum(betaln(ones + g, zeros + g) - betaln(g, g))
    log_prior = np.log(np.append(sizes, alpha) / (data.shape[0] - 1 + alpha))
    log_p = np.append(join, fresh) + log_prior
    p = np.exp(log_p - logsumexp(log_p))
    return _Removed(assign, n1, n0, ones, zeros, p / p.sum())


def _resample_row(data: BoolArray, i: int, assign: IntArray, other: IntArray,
                  n1: IntArray, n0: IntArray, alpha: float, gamma_prior: float,
                  rng: np.random.Generator) -> tuple[IntArray, IntArray, IntArray]:
    removed = _conditional(data, i, assign, other, n1, n0, alpha, gamma_prior)
    assign, n1, n0 = removed.assign, removed.n1, removed.n0
    p = removed.probabilities
    new = int(rng.choice(p.size, p=p))
    if new == n1.shape[0]:
        n1 = np.vstack([n1, np.zeros((1, n1.shape[1]), dtype=np.int64)])
        n0 = np.vstack([n0, np.zeros((1, n0.shape[1]), dtype=np.int64)])
    n1[new] += removed.ones
    n0[new] += removed.zeros
    assign[i] = new
    return assign, n1, n0


def user_conditional(state: DdmState, x: BinaryMatrix, i: int, config: DdmConfig) -> FloatArray:
    """Distribution of the business role of user `i` given the rest.

    Entries follow the role ids left after taking the user out (an emptied
    role is dropped), with a new role last."""

    return _conditional(x.bits, i, state.user_assign, state.perm_assign, state.n1, state.n0,
                        config.alpha, config.beta_prior_strength).probabilities


def permission_conditional(state: DdmState, x: BinaryMatrix, d: int, config: DdmConfig) -> FloatArray:
    return _conditional(x.bits.T, d, state.perm_assign, state.user_assign, state.n1.T, state.n0.T,
                        config.alpha, config.beta_prior_strength).probabilities


def gibbs_resample_user(state: DdmState, x: BinaryMatrix, i: int, config: DdmConfig,
                        rng: np.random.Generator) -> DdmState:
    """Draw a new business role for user `i` given everything else; updates `state` in place."""

    if not 0 <= i < x.rows:
        raise IndexError(f'User {i} out of range.')
    state.user_assign, state.n1, state.n0 = _resample_row(
        x.bits, i, state.user_assign, state.perm_assign,
        state.n1, state.n0, config.alpha, config.beta_prior_strength, rng)
    return state


def gibbs_resample_permission(state: DdmState, x: BinaryMatrix, d: int, config: DdmConfig,
                              rng: np.random.Generator) -> DdmState:
    """Draw a new technical role for permission `d`: the user update on transposed data."""

    if not 0 <= d < x.cols:
        raise IndexError(f'Permission {d} out of range.')
    perm_assign, n1t, n0t = _resample_row(
        x.bits.T, d, state.perm_assign, state.user_assign,
        state.n1.T, state.n0.T, config.alpha, config.beta_prior_strength, rng)
    state.perm_assign = perm_assign
    state.n1, state.n0 = np.ascontiguousarray(n1t.T), np.ascontiguousarray(n0t.T)
    return state


def gibbs_sweep(state: DdmState, x: BinaryMatrix, config: DdmConfig, rng: np.random.Generator,
                on_step: Callable[[DdmState], None] | None = None) -> DdmState:
    """One alternation: every user in order, then every permission in order."""

    for i in range(x.rows):
        gibbs_resample_user(state, x, i, config, rng)
        if on_step is not None:
            on_step(state)
    for d in range(x.cols):
        gibbs_resample_permission(state, x, d, config, rng)
        if on_step is not None:
            on_step(state)
    return state


@dataclass(frozen=True)
class DdmDiagnostics:
    fit_config: DdmConfig
    alternations: int
    converged: bool
    map_log_joint: float
    final_log_joint: float
    best_visited: float
    map_alternation: int
    num_business_roles: int
    num_technical_roles: int
    runtime: float
    chain: int = 0
    chain_scores: tuple[float, ...] = ()
    trace: tuple[float, ...] = field(default=(), repr=False)


class DdmFit(NamedTuple):
    rbac: HierRbacConfig
    state: DdmState
    diagnostics: DdmDiagnostics


class _ChainResult(NamedTuple):
    best: DdmState
    best_joint: float
    best_alternation: int
    final_joint: float
    best_visited: float
    alternations: int
    converged: bool
    trace: tuple[float, ...]


def _initial_state(x: BinaryMatrix, config: DdmConfig, rng: np.random.Generator) -> DdmState:
    if config.init == 'single':
        return DdmState.from_assignments(x, np.zeros(x.rows, dtype=np.int64),
                                         np.zeros(x.cols, dtype=np.int64))
    return DdmState.from_assignments(x, sample_crp(x.rows, config.alpha, rng),
                                     sample_crp(x.cols, config.alpha, rng))


def _run_chain(x: BinaryMatrix, config: DdmConfig, rng: np.random.Generator) -> _ChainResult:
    state = _initial_state(x, config, rng)
    joint = log_joint(state, config)
    best, best_joint, best_alternation = state.copy(), joint, 0
    visited_max = joint
    alternation = 0

    def track(current: DdmState) -> None:
        nonlocal best, best_joint, best_alternation, visited_max
        value = log_joint(current, config)
        visited_max = max(visited_max, value)
        if value > best_joint:
            best, best_joint, best_alternation = current.copy(), value, alternation

    trace = [joint]
    stagnant = 0
    converged = False
    key = state.partition_key()
    for alternation in range(1, config.max_alternations + 1):
        gibbs_sweep(state, x, config, rng, track)
        joint = log_joint(state, config)
        trace.append(joint)
        new_key = state.partition_key()
        stagnant = stagnant + 1 if new_key == key else 0
        key = new_key
        logger.debug('alternation %d: log joint %.4f, %d x %d roles', alternation, joint,
                     state.num_business_roles, state.num_technical_roles)
        if stagnant >= config.stagnation_window:
            converged = True
            break
    return _ChainResult(best, best_joint, best_alternation, joint, visited_max,
                        alternation, converged, tuple(trace))


def fit_ddm(x: BinaryMatrix, config: DdmConfig, seed: Seed = None) -> DdmFit:
    """Fit a two-level configuration by Gibbs sampling and report the MAP state.

    Sampling stops after `config.max_alternations` alternations or once the
    partitions did not change for `config.stagnation_window` alternations in
    a row. With several chains the one with the highest MAP joint wins.
    `v[k, l]` is set when the posterior mean of block `(k, l)` exceeds 1/2."""

    started = time.perf_counter()
    chains = spawn_generators(config.seed if seed is None else seed, config.chains)
    results = [_run_chain(x, config, rng) for rng in chains]
    index = max(range(len(results)), key=lambda c: (results[c].best_joint, -c))
    chain = results[index]
    rbac = chain.best.to_config(config.beta_prior_strength)
    diagnostics = DdmDiagnostics(
        fit_config=config,
        alternations=chain.alternations,
        converged=chain.converged,
        map_log_joint=chain.best_joint,
        final_log_joint=chain.final_joint,
        best_visited=chain.best_visited,
        map_alternation=chain.best_alternation,
        num_business_roles=chain.best.num_business_roles,
        num_technical_roles=chain.best.num_technical_roles,
        runtime=time.perf_counter() - started,
        chain=index,
        chain_scores=tuple(r.best_joint for r in results),
        trace=chain.trace,
    )
    logger.info('DDM fit: %d business and %d technical roles, MAP log joint %.4f after %d alternations',
                diagnostics.num_business_roles, diagnostics.num_technical_roles,
                diagnostics.map_log_joint, diagnostics.alternations)
    return DdmFit(rbac, chain.best, diagnostics)


def ddm_reconstruct(config: HierRbacConfig) -> BinaryMatrix:
    """`z @ v @ y`"""

    return config.reconstruct()


def ddm_fitter(template: DdmConfig) -> Fitter:
    """Evaluation adapter: ignores the number of roles, which the sampler infers."""

    def fit(x: BinaryMatrix, _k: int, seed: int | None) -> FlatRbacConfig:
        return fit_ddm(x, template, seed=seed).rbac.flatten()

    return fit
