"""Multi-assignment clustering with a mixture noise process.

A user owns a set of roles `L`; a permission is granted by the structure
with probability `1 - prod_{k in L} beta_kd`, and with probability `eps`
the bit is replaced by a noise bit that is 1 with probability `r`, so

    q[L, d] = p(x_id = 1 | L) = eps * r + (1 - eps) * (1 - beta[L, d]).

Fitting is deterministic-annealing EM: the E-step is a Gibbs distribution
over role sets at a temperature that cools geometrically, the M-step solves
the first-order conditions for every parameter with safeguarded Newton steps.
"""

from __future__ import annotations
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple
import logging
import time
import warnings
import numpy as np
from scipy.special import logsumexp, xlogy
from rbacmine.errors import ConvergenceWarning, DomainError, ShapeError
from rbacmine.evaluation import Fitter
from rbacmine.matrix import BinaryMatrix
from rbacmine.rbac import FlatRbacConfig
from rbacmine.typing import BoolArray, FloatArray, RoleSet, Seed
from rbacmine._numeric import PARAM_FLOOR, check_prob, clamp_param, clamp_prob, spawn_generators
from rbacmine.model._rolesets import RoleSetCatalog, role_set_catalog

__all__ = ('MacParams', 'Responsibilities', 'MacFitConfig', 'MacDiagnostics', 'MacFit',
           'MStepStats', 'q_value', 'set_absence', 'q_matrix', 'mac_risks', 'per_item_risk',
           'e_step', 'm_step', 'free_energy', 'free_energy_gradient', 'expected_risk_gradient',
           'fit_mac', 'reconstruction_log_likelihood', 'posterior_bit_probability',
           'posterior_cell_confidence', 'catalog_for', 'mac_fitter',)

logger = logging.getLogger(__name__)

# a user is settled once its most likely role set exceeds this
SETTLED: float = 1.0 - 1e-6


@dataclass(frozen=True)
class MacParams:
    """Role absence probabilities `beta` (K×D), noise fraction `eps`, noise-bit bias `r`."""

    beta: FloatArray
    eps: float
    r: float

    def __post_init__(self) -> None:
        beta = np.array(self.beta, dtype=np.float64)
        if beta.ndim != 2:
            raise ShapeError(f'beta should be a K×D matrix, got shape {beta.shape}.')
        check_prob('beta', beta)
        check_prob('eps', self.eps)
        check_prob('r', self.r)
        beta.setflags(write=False)
        object.__setattr__(self, 'beta', beta)
        object.__setattr__(self, 'eps', float(self.eps))
        object.__setattr__(self, 'r', float(self.r))

    @property
    def num_roles(self) -> int:
        return int(self.beta.shape[0])

    @property
    def num_permissions(self) -> int:
        return int(self.beta.shape[1])

    def binarize(self) -> BinaryMatrix:
        """Roles include a permission when its absence probability is below one half."""

        return BinaryMatrix(self.beta < 0.5)


@dataclass(frozen=True)
class Responsibilities:
    """`gamma[i, s]`, the probability that user `i` owns role set `s`, at `temperature`."""

    gamma: FloatArray
    temperature: float

    def __post_init__(self) -> None:
        gamma = np.array(self.gamma, dtype=np.float64)
        if gamma.ndim != 2:
            raise ShapeError(f'Responsibilities should be a matrix, got shape {gamma.shape}.')
        if not np.allclose(gamma.sum(axis=1), 1.0, rtol=0.0, atol=1e-9):
            raise DomainError('Every row of responsibilities should sum to 1.')
        if not self.temperature > 0:
            raise DomainError('Temperature should be positive.')
        gamma.setflags(write=False)
        object.__setattr__(self, 'gamma', gamma)

    @property
    def hard(self) -> np.ndarray:
        """Index of the most likely role set of every user."""

        return np.argmax(self.gamma, axis=1)

    @property
    def settled(self) -> bool:
        return bool(np.all(self.gamma.max(axis=1) > SETTLED))


@dataclass(frozen=True)
class MacFitConfig:
    num_roles: int
    max_set_size: int = 2
    temperature_factor: float = 1.0
    cooling_rate: float = 0.95
    convergence_threshold: float = 1e-6
    max_iterations: int = 1000
    newton_tol: float = 1e-8
    max_newton_iterations: int = 50
    max_m_sweeps: int = 200
    seed: int | None = None
    eps_init: float = 0.1
    r_init: float = 0.5
    update_noise: bool = True
    jitter: float = 0.05
    restarts: int = 1

    def __post_init__(self) -> None:
        if self.num_roles < 1:
            raise DomainError('There should be at least one role.')
        if self.max_set_size < 1:
            raise DomainError('Role sets should allow at least one role.')
        if not 0.0 < self.cooling_rate < 1.0:
            raise DomainError('Cooling rate should lie in (0, 1).')
        if not (self.temperature_factor > 0 and self.convergence_threshold > 0
                and self.newton_tol > 0):
            raise DomainError('Temperature factor and thresholds should be positive.')
        if min(self.max_iterations, self.max_newton_iterations,
               self.max_m_sweeps, self.restarts) < 1:
            raise DomainError('Iteration limits and restarts should be positive.')
        check_prob('eps_init', self.eps_init)
        check_prob('r_init', self.r_init)
        if not 0.0 <= self.jitter < 0.5:
            raise DomainError('Jitter should lie in [0, 0.5).')

    @property
    def catalog(self) -> RoleSetCatalog:
        return role_set_catalog(self.num_roles, self.max_set_size)


@dataclass(frozen=True)
class MStepStats:
    sweeps: int = 0
    max_residual: float = 0.0
    # parameter name -> number of bisection fallbacks
    fallbacks: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class MacDiagnostics:
    fit_config: MacFitConfig
    iterations: int
    converged: bool
    initial_temperature: float
    final_temperature: float
    log_likelihood: float
    reconstruction_log_likelihood: float
    free_energy: float
    max_residual: float
    newton_fallbacks: int
    runtime: float
    restart: int = 0
    restart_scores: tuple[float, ...] = ()


class MacFit(NamedTuple):
    rbac: FlatRbacConfig
    params: MacParams
    responsibilities: Responsibilities
    diagnostics: MacDiagnostics

    @property
    def catalog(self) -> RoleSetCatalog:
        return self.diagnostics.fit_config.catalog


def catalog_for(num_roles: int, num_sets: int) -> RoleSetCatalog:
    """The catalog over `num_roles` roles that has exactly `num_sets` sets."""

    for size in range(1, num_roles + 1):
        catalog = role_set_catalog(num_roles, size)
        if len(catalog) == num_sets:
            return catalog
    raise ShapeError(f'No role-set catalog over {num_roles} roles has {num_sets} sets.')


def q_value(beta_set: float, eps: float, r: float) -> float:
    """`eps * r + (1 - eps) * (1 - beta_set)`, the probability of observing a 1."""

    for name, value in (('beta_set', beta_set), ('eps', eps), ('r', r)):
        check_prob(name, value)
    return eps * r + (1.0 - eps) * (1.0 - beta_set)


def set_absence(beta: FloatArray, catalog: RoleSetCatalog) -> FloatArray:
    """S×D matrix of `prod_{k in L} beta_kd` for every catalog set, 1 for the empty set."""

    out = np.ones((len(catalog), beta.shape[1]))
    for k in range(catalog.num_roles):
        out[catalog.membership[:, k]] *= beta[k]
    return out


def _absence_excluding(beta: FloatArray, catalog: RoleSetCatalog, role: int) -> tuple[BoolArray, FloatArray]:
    """Sets containing `role` and their absence products without `role` itself."""

    rows = catalog.membership[:, role]
    sub = catalog.membership[rows]
    out = np.ones((sub.shape[0], beta.shape[1]))
    for k in range(catalog.num_roles):
        if k != role:
            out[sub[:, k]] *= beta[k]
    return rows, out


def q_matrix(params: MacParams, catalog: RoleSetCatalog) -> FloatArray:
    _check_catalog(params, catalog)
    return params.eps * params.r + (1.0 - params.eps) * (1.0 - set_absence(params.beta, catalog))


def mac_risks(x: BinaryMatrix, params: MacParams, catalog: RoleSetCatalog) -> FloatArray:
    """N×S matrix of negative log-likelihoods of every user under every role set."""

    if x.cols != params.num_permissions:
        raise ShapeError.mismatch('data and role parameters', x.shape, params.beta.shape)
    q = clamp_prob(q_matrix(params, catalog))
    xf = x.as_float()
    return -(xf @ np.log(q).T + (1.0 - xf) @ np.log1p(-q).T)


def per_item_risk(x_row: BoolArray | np.ndarray, role_set: RoleSet, params: MacParams) -> float:
    """`-sum_d log(x_d * q_d + (1 - x_d) * (1 - q_d))` for a single user and role set."""

    x_row = np.asarray(x_row).astype(np.bool_)
    if x_row.shape != (params.num_permissions,):
        raise ShapeError.mismatch('a user row and role parameters', x_row.shape, params.beta.shape)
    beta_set = np.prod(params.beta[list(role_set)], axis=0) if role_set else np.ones(params.num_permissions)
    q = clamp_prob(params.eps * params.r + (1.0 - params.eps) * (1.0 - beta_set))
    return float(-np.sum(np.where(x_row, np.log(q), np.log1p(-q))))


def _check_catalog(params: MacParams, catalog: RoleSetCatalog) -> None:
    if catalog.num_roles != params.num_roles:
        raise ShapeError(f'Catalog covers {catalog.num_roles} roles '
                         f'but parameters have {params.num_roles}.')


def _gibbs(risks: FloatArray, temperature: float) -> tuple[FloatArray, FloatArray]:
    """Row-normalized `exp(-risks / T)` and the row log-partition functions."""

    if not np.all(np.isfinite(risks)):
        raise FloatingPointError('Non-finite role-set risk after clamping.')
    logits = -risks / temperature
    log_z = logsumexp(logits, axis=1, keepdims=True)
    gamma = np.exp(logits - log_z)
    # log_z absorbs ties below the precision of huge logits
    gamma /= gamma.sum(axis=1, keepdims=True)
    return gamma, log_z[:, 0]


def _total_risks(x: BinaryMatrix, params: MacParams, catalog: RoleSetCatalog, temperature: float,
                 extra_costs: FloatArray | None) -> FloatArray:
    if not temperature > 0:
        raise DomainError('Temperature should be positive.')
    risks = mac_risks(x, params, catalog)
    if extra_costs is None:
        return risks
    if extra_costs.shape != risks.shape:
        raise ShapeError.mismatch('role-set costs', risks.shape, extra_costs.shape)
    return risks + extra_costs


def e_step(x: BinaryMatrix, params: MacParams, catalog: RoleSetCatalog, temperature: float,
           extra_costs: FloatArray | None = None) -> Responsibilities:
    gamma, _ = _gibbs(_total_risks(x, params, catalog, temperature, extra_costs), temperature)
    return Responsibilities(gamma, temperature)


def free_energy(x: BinaryMatrix, params: MacParams, catalog: RoleSetCatalog, temperature: float,
                extra_costs: FloatArray | None = None) -> float:
    """`F = -T * sum_i log sum_L exp(-R[i, L] / T)`"""

    _, log_z = _gibbs(_total_risks(x, params, catalog, temperature, extra_costs), temperature)
    return float(-temperature * log_z.sum())


class _Gradients(NamedTuple):
    beta: FloatArray
    eps: float
    r: float


def _sufficient_stats(x: BinaryMatrix, gamma: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Expected counts of observed ones and zeros per role set and permission."""

    xf = x.as_float()
    ones = gamma.T @ xf
    zeros = gamma.T @ (1.0 - xf)
    return ones, zeros


def _risk_gradients(ones: FloatArray, zeros: FloatArray,
                    params: MacParams, catalog: RoleSetCatalog) -> _Gradients:
    """Gradient of the expected risk `sum_{i,L} gamma[i, L] * R[i, L]` at fixed gamma."""

    absent = set_absence(params.beta, catalog)
    eps, r = params.eps, params.r
    q = clamp_prob(eps * r + (1.0 - eps) * (1.0 - absent))
    dq = -(ones / q - zeros / (1.0 - q))
    grad_beta = np.empty_like(params.beta)
    for role in range(params.num_roles):
        rows, others = _absence_excluding(params.beta, catalog, role)
        grad_beta[role] = np.sum(dq[rows] * (-(1.0 - eps) * others), axis=0)
    grad_eps = float(np.sum(dq * (r - 1.0 + absent)))
    grad_r = float(np.sum(dq * eps))
    return _Gradients(grad_beta, grad_eps, grad_r)


def free_energy_gradient(x: BinaryMatrix, params: MacParams, catalog: RoleSetCatalog,
                         temperature: float) -> tuple[FloatArray, float, float]:
    """Analytic `(dF/dbeta, dF/deps, dF/dr)` of `free_energy` at `temperature`."""

    return expected_risk_gradient(x, e_step(x, params, catalog, temperature), catalog, params)


def expected_risk_gradient(x: BinaryMatrix, gamma: Responsibilities, catalog: RoleSetCatalog,
                           params: MacParams) -> tuple[FloatArray, float, float]:
    """Gradient of `sum_{i,L} gamma[i, L] * R[i, L]` at fixed responsibilities.

    Its projection onto the box of admissible parameters is what `m_step` drives to zero."""

    _check_catalog(params, catalog)
    ones, zeros = _sufficient_stats(x, gamma.gamma)
    return tuple(_risk_gradients(ones, zeros, params, catalog))  # type: ignore[return-value]


def _projected(grad: FloatArray | float, value: FloatArray | float,
               lo: float, hi: float) -> FloatArray:
    """Zero the gradient where a bound is active and the gradient points outward."""

    grad = np.asarray(grad, dtype=np.float64)
    value = np.asarray(value, dtype=np.float64)
    stuck = ((value <= lo) & (grad > 0)) | ((value >= hi) & (grad < 0))
    return np.where(stuck, 0.0, grad)


def _solve_affine(offset: FloatArray, slope: FloatArray, ones: FloatArray, zeros: FloatArray,
                  start: FloatArray, tol: float, max_iterations: int) -> tuple[FloatArray, int]:
    """Minimize `-sum_m [ones log q + zeros log(1 - q)]`, `q = offset + slope * t`, per column.

    Every column is an independent convex problem in a scalar `t` restricted to
    `[PARAM_FLOOR, 1 - PARAM_FLOOR]`. Newton steps leaving the bracket are
    replaced by bisection; returns the solution and the number of such fallbacks.
    Columns whose derivative stays below `tol` on the whole bracket keep `start`."""

    lo_bound, hi_bound = PARAM_FLOOR, 1.0 - PARAM_FLOOR

    def derivative(t: FloatArray) -> FloatArray:
        q = clamp_prob(offset + slope * t)
        return -np.sum(slope * (ones / q - zeros / (1.0 - q)), axis=0)

    def curvature(t: FloatArray) -> FloatArray:
        q = clamp_prob(offset + slope * t)
        return np.sum(slope ** 2 * (ones / q ** 2 + zeros / (1.0 - q) ** 2), axis=0)

    n = start.shape[0]
    result = np.clip(start, lo_bound, hi_bound)
    inert = ~np.any((slope != 0) & ((ones + zeros) > 0), axis=0)
    g_lo = derivative(np.full(n, lo_bound))
    g_hi = derivative(np.full(n, hi_bound))
    inert |= (np.abs(g_lo) < tol) & (np.abs(g_hi) < tol)
    result = np.where(g_lo >= 0, lo_bound, result)
    result = np.where(g_hi <= 0, hi_bound, result)
    interior = ~inert & (g_lo < 0) & (g_hi > 0)
    active = interior.copy()

    lo = np.full(n, lo_bound)
    hi = np.full(n, hi_bound)
    fallbacks = 0
    t = result.copy()
    for _ in range(max_iterations):
        if not np.any(active):
            break
        g = derivative(t)
        lo = np.where(active & (g < 0), t, lo)
        hi = np.where(active & (g > 0), t, hi)
        active &= (np.abs(g) >= tol) & (hi - lo > 1e-15)
        if not np.any(active):
            break
        with np.errstate(divide='ignore', invalid='ignore'):
            step = t - g / curvature(t)
        outside = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        fallbacks += int(np.count_nonzero(active & outside))
        step = np.where(outside, 0.5 * (lo + hi), step)
        t = np.where(active, step, t)
    result = np.where(interior, t, result)
    return np.where(inert, start, result), fallbacks


def _m_step(x: BinaryMatrix, gamma: Responsibilities, catalog: RoleSetCatalog, params: MacParams,
            tol: float = 1e-8, max_newton_iterations: int = 50, max_sweeps: int = 200,
            update_noise: bool = True,
            noise_gamma: FloatArray | None = None) -> tuple[MacParams, MStepStats]:
    """`noise_gamma`, if given, replaces the responsibilities in the updates of `eps` and `r`."""

    if gamma.gamma.shape != (x.rows, len(catalog)):
        raise ShapeError.mismatch('responsibilities and role-set catalog',
                                  gamma.gamma.shape, (x.rows, len(catalog)))
    _check_catalog(params, catalog)
    ones, zeros = _sufficient_stats(x, gamma.gamma)
    noise_ones, noise_zeros = (ones, zeros) if noise_gamma is None else \
        _sufficient_stats(x, noise_gamma)
    beta = clamp_param(params.beta).copy()
    eps, r = params.eps, params.r
    if update_noise:
        eps, r = float(clamp_param(eps)), float(clamp_param(r))
    fallbacks = {'beta': 0, 'eps': 0, 'r': 0}
    residual = np.inf
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for role in range(catalog.num_roles):
            rows, others = _absence_excluding(beta, catalog, role)
            offset = np.broadcast_to(eps * r + (1.0 - eps), others.shape)
            slope = -(1.0 - eps) * others
            beta[role], used = _solve_affine(offset, slope, ones[rows], zeros[rows],
                                             beta[role], tol, max_newton_iterations)
            fallbacks['beta'] += used
        if update_noise:
            absent = set_absence(beta, catalog).reshape(-1, 1)
            flat_ones, flat_zeros = noise_ones.reshape(-1, 1), noise_zeros.reshape(-1, 1)
            solved, used = _solve_affine(1.0 - absent, r - 1.0 + absent, flat_ones, flat_zeros,
                                         np.array([eps]), tol, max_newton_iterations)
            eps = float(solved[0])
            fallbacks['eps'] += used
            solved, used = _solve_affine((1.0 - eps) * (1.0 - absent), np.full_like(absent, eps),
                                         flat_ones, flat_zeros, np.array([r]), tol,
                                         max_newton_iterations)
            r = float(solved[0])
            fallbacks['r'] += used
        candidate = MacParams(beta.copy(), eps, r)
        grads = _risk_gradients(ones, zeros, candidate, catalog)
        lo, hi = PARAM_FLOOR, 1.0 - PARAM_FLOOR
        parts = [np.abs(_projected(grads.beta, beta, lo, hi)).max(initial=0.0)]
        if update_noise:
            if noise_gamma is not None:
                grads = _risk_gradients(noise_ones, noise_zeros, candidate, catalog)
            parts.append(float(np.abs(_projected(grads.eps, eps, lo, hi))))
            parts.append(float(np.abs(_projected(grads.r, r, lo, hi))))
        residual = float(max(parts))
        if residual < tol:
            break
    for name, count in fallbacks.items():
        if count:
            logger.debug('M-step: %d bisection fallback(s) for %s', count, name)
    return MacParams(beta, eps, r), MStepStats(sweeps, residual, fallbacks)


def m_step(x: BinaryMatrix, gamma: Responsibilities, catalog: RoleSetCatalog, params: MacParams,
           tol: float = 1e-8, max_newton_iterations: int = 50, max_sweeps: int = 200,
           update_noise: bool = True) -> MacParams:
    """Minimize the expected risk at fixed responsibilities.

    Cycles over the rows of `beta`, then `eps` and `r`, solving each first-order
    condition by Newton's method, until every projected residual is below `tol`.
    With `update_noise=False`, `eps` and `r` are kept as given."""

    updated, _ = _m_step(x, gamma, catalog, params, tol, max_newton_iterations,
                         max_sweeps, update_noise)
    return updated


def reconstruction_log_likelihood(x: BinaryMatrix, reconstruction: BinaryMatrix) -> float:
    """Log-likelihood of `x` given a binary reconstruction, with noise profiled out.

    Under the mixture noise process, a reconstructed 1 is observed as 0 with
    probability `eps * (1 - r)` and a reconstructed 0 as 1 with probability
    `eps * r`; both rates take their maximum-likelihood values."""

    if x.shape != reconstruction.shape:
        raise ShapeError.mismatch('data and reconstruction', x.shape, reconstruction.shape)
    xb, rb = x.bits, reconstruction.bits
    n11 = np.count_nonzero(xb & rb)
    n01 = np.count_nonzero(~xb & rb)
    n10 = np.count_nonzero(xb & ~rb)
    n00 = np.count_nonzero(~xb & ~rb)
    flip_out = n01 / (n11 + n01) if n11 + n01 else 0.0
    flip_in = n10 / (n10 + n00) if n10 + n00 else 0.0
    if flip_out + flip_in > 1.0:
        # mixture cannot anticorrelate; best is a constant bit rate
        rate = (n11 + n10) / x.size
        return float(xlogy(n11 + n10, rate) + xlogy(n01 + n00, 1.0 - rate))
    return float(xlogy(n11, 1.0 - flip_out) + xlogy(n01, flip_out)
                 + xlogy(n10, flip_in) + xlogy(n00, 1.0 - flip_in))


def posterior_bit_probability(params: MacParams, gamma: Responsibilities,
                              catalog: RoleSetCatalog) -> FloatArray:
    """N×D matrix of `p(x_id = 1)` under the fitted mixture."""

    return gamma.gamma @ q_matrix(params, catalog)


def posterior_cell_confidence(x: BinaryMatrix, config: FlatRbacConfig, params: MacParams,
                              gamma: Responsibilities,
                              catalog: RoleSetCatalog | None = None) -> FloatArray:
    """Posterior probability that the reconstructed bit of every cell is the noise-free one.

    For a role set `L` the noise-free bit is 1 with prior `1 - beta[L, d]`; the
    observed bit updates it through the noise channel, which keeps a 1 with
    probability `1 - eps * (1 - r)` and turns a 0 into 1 with probability
    `eps * r`. The result is averaged over role sets with `gamma`."""

    if catalog is None:
        catalog = catalog_for(params.num_roles, gamma.gamma.shape[1])
    _check_catalog(params, catalog)
    if x.shape != (config.num_users, config.num_permissions):
        raise ShapeError.mismatch('data and configuration', x.shape,
                                  (config.num_users, config.num_permissions))
    eps, r = params.eps, params.r
    xb = x.bits
    given_one = clamp_prob(np.where(xb, 1.0 - eps * (1.0 - r), eps * (1.0 - r)))
    given_zero = clamp_prob(np.where(xb, eps * r, 1.0 - eps * r))
    present = 1.0 - set_absence(params.beta, catalog)
    p1 = np.zeros(x.shape)
    for s in range(len(catalog)):
        joint = present[s] * given_one
        p1 += gamma.gamma[:, s, np.newaxis] * joint / (joint + (1.0 - present[s]) * given_zero)
    return np.where(config.reconstruct().bits, p1, 1.0 - p1)


def _initial_params(x: BinaryMatrix, config: MacFitConfig, rng: np.random.Generator) -> MacParams:
    """Roles start as complements of random user rows, nudged off 0 and 1."""

    picks = rng.choice(x.rows, size=config.num_roles, replace=x.rows < config.num_roles)
    rows = x.as_float()[picks]
    nudge = rng.uniform(0.0, config.jitter, size=rows.shape)
    beta = (1.0 - rows) * (1.0 - nudge) + rows * nudge
    return MacParams(clamp_param(beta), config.eps_init, config.r_init)


CostHook = Callable[[FloatArray | None], FloatArray]


@dataclass
class _AnnealResult:
    params: MacParams
    responsibilities: Responsibilities
    iterations: int
    converged: bool
    initial_temperature: float
    max_residual: float
    newton_fallbacks: int


def _anneal(x: BinaryMatrix, config: MacFitConfig, rng: np.random.Generator,
            extra_costs: CostHook | None = None) -> _AnnealResult:
    """Deterministic annealing from a random start.

    `extra_costs` maps the previous responsibilities (None before the first
    E-step) to additional role-set costs."""

    catalog = config.catalog
    params = _initial_params(x, config, rng)
    initial = mac_risks(x, params, catalog)
    temperature = config.temperature_factor * float(initial.mean())
    if not temperature > 0:
        temperature = config.temperature_factor
    t0 = temperature
    settled_at = 1.0 - config.convergence_threshold

    previous: FloatArray | None = None
    best: tuple[float, MacParams, Responsibilities] | None = None
    fallbacks = 0
    residual = 0.0
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iterations + 1):
        costs = None if extra_costs is None else extra_costs(previous)
        gamma = e_step(x, params, catalog, temperature, costs)
        converged = bool(np.all(gamma.gamma.max(axis=1) > settled_at))
        # eps and r follow the most likely role sets
        hardened = np.eye(len(catalog))[gamma.hard]
        params, stats = _m_step(x, gamma, catalog, params, config.newton_tol,
                                config.max_newton_iterations, config.max_m_sweeps,
                                config.update_noise, hardened)
        fallbacks += sum(stats.fallbacks.values())
        residual = stats.max_residual
        previous = gamma.gamma
        if converged:
            logger.debug('annealing settled after %d iterations at T=%.3g', iteration, temperature)
            return _AnnealResult(params, gamma, iteration, True, t0, residual, fallbacks)
        score = _hard_log_likelihood(x, params, catalog, gamma)
        if best is None or score > best[0]:
            best = (score, params, gamma)
        logger.debug('iteration %d: T=%.4g, hard log-likelihood %.4f', iteration, temperature, score)
        temperature *= config.cooling_rate

    assert best is not None
    _, params, gamma = best
    return _AnnealResult(params, gamma, iteration, False, t0, residual, fallbacks)


def _hard_log_likelihood(x: BinaryMatrix, params: MacParams, catalog: RoleSetCatalog,
                         gamma: Responsibilities) -> float:
    risks = mac_risks(x, params, catalog)
    return float(-risks[np.arange(x.rows), gamma.hard].sum())


def _binarize(params: MacParams, gamma: Responsibilities, catalog: RoleSetCatalog) -> FlatRbacConfig:
    z = BinaryMatrix(catalog.membership[gamma.hard])
    return FlatRbacConfig(z, params.binarize())


def fit_annealed(x: BinaryMatrix, config: MacFitConfig, seed: Seed | None,
                  extra_costs: Callable[[], CostHook] | None) -> MacFit:
    started = time.perf_counter()
    catalog = config.catalog
    generators = spawn_generators(config.seed if seed is None else seed, config.restarts)
    runs = []
    for index, rng in enumerate(generators):
        hook = None if extra_costs is None else extra_costs()
        run = _anneal(x, config, rng, hook)
        rbac = _binarize(run.params, run.responsibilities, catalog)
        score = reconstruction_log_likelihood(x, rbac.reconstruct())
        logger.info('restart %d: %d iterations, converged=%s, log-likelihood %.4f',
                    index, run.iterations, run.converged, score)
        runs.append((score, index, run, rbac))
    # highest score wins, earliest restart on ties
    score, index, run, rbac = max(runs, key=lambda item: (item[0], -item[1]))
    if not run.converged:
        warnings.warn(f'Annealing did not settle within {config.max_iterations} iterations.',
                      ConvergenceWarning, stacklevel=3)
    diagnostics = MacDiagnostics(
        fit_config=config,
        iterations=run.iterations,
        converged=run.converged,
        initial_temperature=run.initial_temperature,
        final_temperature=run.responsibilities.temperature,
        log_likelihood=_hard_log_likelihood(x, run.params, catalog, run.responsibilities),
        reconstruction_log_likelihood=score,
        free_energy=free_energy(x, run.params, catalog, run.responsibilities.temperature),
        max_residual=run.max_residual,
        newton_fallbacks=run.newton_fallbacks,
        runtime=time.perf_counter() - started,
        restart=index,
        restart_scores=tuple(item[0] for item in runs),
    )
    return MacFit(rbac, run.params, run.responsibilities, diagnostics)


def fit_mac(x: BinaryMatrix, config: MacFitConfig, seed: Seed = None) -> MacFit:
    """Fit a flat RBAC configuration by deterministic-annealing EM.

    Starts at a temperature of the order of the mean role-set risk and cools
    geometrically until every user settles on one role set. Roles are then
    read off as `u_kd = beta_kd < 0.5` and users take the roles of their most
    likely set. `seed` overrides `config.seed`.

    If the temperature schedule runs out first, the best visited state is
    returned with `diagnostics.converged` false and a `ConvergenceWarning`."""

    return fit_annealed(x, config, seed, None)


def mac_fitter(template: MacFitConfig) -> Fitter:
    """Evaluation adapter fitting `template` with the requested number of roles."""

    def fit(x: BinaryMatrix, k: int, seed: int | None) -> FlatRbacConfig:
        config = replace(template, num_roles=k)
        return fit_mac(x, config, seed=config.seed if seed is None else seed).rbac

    return fit
