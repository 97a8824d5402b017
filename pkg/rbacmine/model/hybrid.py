"""Role mining guided by a business attribute.

The annealed fit of `rbacmine.model.mac` gets one more cost per user and
role set: roles that are popular among users sharing the user's attribute
value are rewarded, others penalized. With weight `lam`, the E-step sees
`R_ll / D + lam * R_s`; the fit works with the equivalent `R_ll + lam * D * R_s`
so the temperature schedule is the one of the plain fit.
"""

from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import partial
from typing import NamedTuple, Sequence
import logging
import numpy as np
from rbacmine.attributes import AttributeTable
from rbacmine.errors import DomainError, ShapeError
from rbacmine.evaluation import SplitSpec, generalization_error, split_users, summarize, transfer_roles
from rbacmine.matrix import BinaryMatrix
from rbacmine.rbac import FlatRbacConfig
from rbacmine.relevance import DEFAULT_MIN_COUNT, conditional_role_entropy
from rbacmine.typing import FloatArray, RoleSet, Seed
from rbacmine.model._rolesets import RoleSetCatalog
from rbacmine.model.mac import (CostHook, MacDiagnostics, MacFitConfig, MacParams,
                               Responsibilities, fit_annealed)

__all__ = ('HybridConfig', 'HybridDiagnostics', 'HybridFit', 'SweepPoint', 'LambdaSweep',
           'business_cost', 'business_cost_rolewise', 'per_item_business_cost',
           'expected_counts', 'business_costs', 'fit_hybrid', 'lambda_sweep',)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HybridConfig:
    mac: MacFitConfig
    lam: float = 0.0
    kind: str | None = None
    min_count: int = DEFAULT_MIN_COUNT

    def __post_init__(self) -> None:
        if not self.lam >= 0:
            raise DomainError('The business weight should be nonnegative.')
        if self.min_count < 1:
            raise DomainError('Minimal count should be at least 1.')


def _group_mask(attrs: AttributeTable, min_count: int) -> FloatArray:
    """One-hot attributes with rare values zeroed out."""

    w = attrs.one_hot()
    w[:, ~attrs.frequent_values(min_count)] = 0.0
    return w


def business_cost(z: BinaryMatrix, attrs: AttributeTable, min_count: int = 1) -> float:
    """`(1/N) sum_s sum_{i,i'} w_is w_i's sum_k z_i'k (1 - 2 z_i'k z_ik)` over ordered pairs.

    Self-pairs are included. Users with attribute values held by fewer than
    `min_count` users are left out of the sum but still count in `N`."""

    attrs.check_users(z.rows)
    zf = z.as_float()
    w = _group_mask(attrs, min_count)
    same = w @ w.T
    sizes = zf.sum(axis=1)
    # pair (i, i') contributes |z_i'| - 2 z_i . z_i'
    total = same.sum(axis=0) @ sizes - 2.0 * np.sum(same * (zf @ zf.T))
    return float(total / z.rows)


def business_cost_rolewise(z: BinaryMatrix, attrs: AttributeTable, min_count: int = 1) -> float:
    """`(1/N) sum_s [n_s sum_k N_sk - 2 sum_k N_sk ** 2]` with `N_sk` users of value `s` in role `k`."""

    attrs.check_users(z.rows)
    w = _group_mask(attrs, min_count)
    counts = w.T @ z.as_float()
    group_sizes = w.sum(axis=0)
    return float((group_sizes @ counts.sum(axis=1) - 2.0 * np.sum(counts ** 2)) / z.rows)


def expected_counts(gamma: Responsibilities | FloatArray, catalog: RoleSetCatalog,
                    attrs: AttributeTable, min_count: int = 1) -> FloatArray:
    """S×K expected number of users per attribute value and role."""

    g = gamma.gamma if isinstance(gamma, Responsibilities) else np.asarray(gamma, dtype=np.float64)
    if g.shape != (attrs.num_users, len(catalog)):
        raise ShapeError.mismatch('responsibilities and attributes', g.shape,
                                  (attrs.num_users, len(catalog)))
    return _group_mask(attrs, min_count).T @ g @ catalog.membership.astype(np.float64)


def per_item_business_cost(role_set: RoleSet, user: int, counts: FloatArray,
                           attrs: AttributeTable) -> float:
    """`sum_{k not in L} N_sk / N - sum_{k in L} N_sk / N` for the value `s` of `user`."""

    s = int(attrs.values[user])
    if s >= counts.shape[0]:
        raise DomainError(f'Attribute value {s} has no expected counts.')
    row = counts[s] / attrs.num_users
    inside = np.zeros(row.size, dtype=np.bool_)
    inside[list(role_set)] = True
    return float(row[~inside].sum() - row[inside].sum())


def business_costs(counts: FloatArray, catalog: RoleSetCatalog, attrs: AttributeTable) -> FloatArray:
    """N×S matrix of `per_item_business_cost` for every user and catalog set."""

    per_user = counts[attrs.values] / attrs.num_users
    membership = catalog.membership.astype(np.float64)
    return per_user.sum(axis=1, keepdims=True) - 2.0 * per_user @ membership.T


def _business_hook(attrs: AttributeTable, catalog: RoleSetCatalog, scale: float,
                   min_count: int) -> CostHook:
    uniform = np.full((attrs.num_users, len(catalog)), 1.0 / len(catalog))

    def costs(previous: FloatArray | None) -> FloatArray:
        gamma = uniform if previous is None else previous
        counts = expected_counts(gamma, catalog, attrs, min_count)
        return scale * business_costs(counts, catalog, attrs)

    return costs


@dataclass(frozen=True)
class HybridDiagnostics:
    mac: MacDiagnostics
    lam: float
    kind: str
    business_cost: float
    role_entropy: float

    @property
    def converged(self) -> bool:
        return self.mac.converged


class HybridFit(NamedTuple):
    rbac: FlatRbacConfig
    params: MacParams
    responsibilities: Responsibilities
    diagnostics: HybridDiagnostics


def fit_hybrid(x: BinaryMatrix, attrs: AttributeTable, config: HybridConfig,
               seed: Seed = None) -> HybridFit:
    """Annealed role mining with a business-attribute cost.

    With `config.lam == 0` this runs exactly the plain fit."""

    attrs.check_users(x.rows)
    catalog = config.mac.catalog
    scale = config.lam * x.cols
    hook = (lambda: _business_hook(attrs, catalog, scale, config.min_count)) if scale > 0 else None
    fit = fit_annealed(x, config.mac, seed, hook)
    diagnostics = HybridDiagnostics(
        fit.diagnostics, config.lam, attrs.kind,
        business_cost(fit.rbac.z, attrs, config.min_count),
        conditional_role_entropy(fit.rbac.z, attrs),
    )
    logger.info('hybrid fit with lam=%g: role entropy %.4f bits', config.lam,
                diagnostics.role_entropy)
    return HybridFit(fit.rbac, fit.params, fit.responsibilities, diagnostics)


@dataclass(frozen=True)
class SweepPoint:
    lam: float
    gen_error: float
    role_entropy: float
    gen_errors: tuple[float, ...]
    role_entropies: tuple[float, ...]


@dataclass(frozen=True)
class LambdaSweep:
    points: list[SweepPoint]
    knee: int

    @property
    def knee_point(self) -> SweepPoint:
        return self.points[self.knee]


def _knee(errors: FloatArray, entropies: FloatArray) -> int:
    """Point closest to the ideal corner after scaling both axes to [0, 1]."""

    def scaled(v: FloatArray) -> FloatArray:
        span = v.max() - v.min()
        return np.zeros_like(v) if span == 0 else (v - v.min()) / span

    return int(np.argmin(np.hypot(scaled(errors), scaled(entropies))))


def lambda_sweep(x: BinaryMatrix, attrs: AttributeTable, config: HybridConfig,
                 lambdas: Sequence[float], spec: SplitSpec, workers: int = 1) -> LambdaSweep:
    """Generalization error and conditional role entropy for every weight.

    Every weight is evaluated on the same splits; entropy is measured on the
    training users' mined roles. Medians over repetitions are reported.
    With `workers > 1` the repetitions of a weight run in a thread pool."""

    if not lambdas:
        raise DomainError('There should be at least one weight to sweep.')
    if workers < 1:
        raise DomainError('There should be at least one worker.')
    attrs.check_users(x.rows)

    def run(lam: float, rep: int) -> tuple[float, float]:
        split = split_users(x, spec, rep)
        fit = fit_hybrid(split.train, attrs.subset(split.train_index), replace(config, lam=lam),
                         seed=spec.fold_seed(rep))
        z_prime = transfer_roles(split.train, fit.rbac.z, split.test)
        return generalization_error(z_prime, fit.rbac.u, split.test), fit.diagnostics.role_entropy

    points = []
    for lam in lambdas:
        reps = range(spec.repetitions)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(partial(run, lam), reps))
        else:
            results = [run(lam, rep) for rep in reps]
        errors = [error for error, _ in results]
        entropies = [entropy for _, entropy in results]
        points.append(SweepPoint(lam, summarize(errors)[0], summarize(entropies)[0],
                                 tuple(errors), tuple(entropies)))
        logger.info('lam=%g: generalization error %.4f, role entropy %.4f',
                    lam, points[-1].gen_error, points[-1].role_entropy)
    knee = _knee(np.array([p.gen_error for p in points]), np.array([p.role_entropy for p in points]))
    return LambdaSweep(points, knee)
