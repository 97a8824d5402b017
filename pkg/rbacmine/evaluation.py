"""Generalization error of mined configurations and related diagnostics.

A configuration is scored on users it has not seen: each hold-out user
copies the roles of its nearest training user (by Hamming distance of
permission rows), and the error is the fraction of hold-out cells the
copied roles mispredict. Nothing here depends on how the roles were mined.
"""

from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional, Sequence
import logging
import numpy as np
from rbacmine.errors import DomainError, ShapeError
from rbacmine.matrix import BinaryMatrix, bool_mat_prod, hamming
from rbacmine.rbac import FlatRbacConfig
from rbacmine.typing import FloatArray, IntArray

__all__ = ('SplitSpec', 'UserSplit', 'ErrorBreakdown', 'CalibrationBin', 'FoldResult',
           'KSweep', 'EvalReport', 'NoiseCurvePoint', 'Fitter', 'split_users',
           'nearest_rows', 'transfer_roles', 'generalization_error', 'error_breakdown', 'calibration_curve',
           'cross_validate_k', 'run_protocol', 'noise_curve', 'summarize',)

logger = logging.getLogger(__name__)

# training matrix, number of roles, seed -> mined configuration
Fitter = Callable[[BinaryMatrix, int, Optional[int]], FlatRbacConfig]

_CHUNK = 1024


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int | None = None
    repetitions: int = 5

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise DomainError('Training fraction should lie in (0, 1).')
        if self.repetitions < 1:
            raise DomainError('There should be at least one repetition.')

    def fold_seed(self, *path: int) -> int | None:
        """A seed for one job of the protocol, determined by `seed` and `path`."""

        if self.seed is None:
            return None
        return int(np.random.SeedSequence([self.seed, *path]).generate_state(1)[0])


class UserSplit(NamedTuple):
    train: BinaryMatrix
    test: BinaryMatrix
    train_index: IntArray
    test_index: IntArray


def split_users(x: BinaryMatrix, spec: SplitSpec, repetition: int = 0) -> UserSplit:
    """Random disjoint split of the users; `round(fraction * N)` go to training."""

    if x.rows < 2:
        raise DomainError('Splitting needs at least two users.')
    n_train = int(np.floor(spec.train_fraction * x.rows + 0.5))
    if not 0 < n_train < x.rows:
        raise DomainError(f'A fraction of {spec.train_fraction} leaves one side of '
                          f'{x.rows} users empty.')
    rng = np.random.default_rng(None if spec.seed is None else [spec.seed, repetition])
    order = rng.permutation(x.rows)
    train_index = np.sort(order[:n_train])
    test_index = np.sort(order[n_train:])
    return UserSplit(BinaryMatrix(x.bits[train_index]), BinaryMatrix(x.bits[test_index]),
                     train_index, test_index)


def nearest_rows(x1: BinaryMatrix, x2: BinaryMatrix) -> IntArray:
    """For every row of `x2`, the first row of `x1` closest in Hamming distance."""

    if x1.cols != x2.cols:
        raise ShapeError.mismatch('nearest-neighbour search', x1.shape, x2.shape)
    a = x1.bits.astype(np.int64)
    ones1 = a.sum(axis=1)
    out = np.empty(x2.rows, dtype=np.int64)
    for start in range(0, x2.rows, _CHUNK):
        b = x2.bits[start:start + _CHUNK].astype(np.int64)
        dist = b.sum(axis=1)[:, np.newaxis] + ones1[np.newaxis, :] - 2 * (b @ a.T)
        out[start:start + _CHUNK] = np.argmin(dist, axis=1)
    return out


def transfer_roles(x1: BinaryMatrix, z_hat: BinaryMatrix, x2: BinaryMatrix) -> BinaryMatrix:
    """Roles for hold-out users, copied from their nearest training users.

    Ties go to the smallest training index."""

    if z_hat.rows != x1.rows:
        raise ShapeError.mismatch('training data and its role assignments', x1.shape, z_hat.shape)
    return BinaryMatrix(z_hat.bits[nearest_rows(x1, x2)])


def generalization_error(z_prime: BinaryMatrix, u_hat: BinaryMatrix, x2: BinaryMatrix) -> float:
    return hamming(bool_mat_prod(z_prime, u_hat), x2) / x2.size


@dataclass(frozen=True)
class ErrorBreakdown:
    """Cell fractions by kind of reconstruction error against ground truth.

    New errors sit on cells the noise left alone; repeated errors reproduce
    noise the model failed to remove."""

    new_false_positive: float
    new_false_negative: float
    repeated_false_positive: float
    repeated_false_negative: float
    correct: float

    @property
    def total_error(self) -> float:
        return (self.new_false_positive + self.new_false_negative
                + self.repeated_false_positive + self.repeated_false_negative)


def error_breakdown(reconstruction: BinaryMatrix, x_observed: BinaryMatrix,
                    x_clean: BinaryMatrix) -> ErrorBreakdown:
    if not reconstruction.shape == x_observed.shape == x_clean.shape:
        raise ShapeError.mismatch('error breakdown', reconstruction.shape,
                                  x_observed.shape, x_clean.shape)
    rec, obs, clean = reconstruction.bits, x_observed.bits, x_clean.bits
    wrong = rec != clean
    noisy = obs != clean
    cells = clean.size
    counts = (
        np.count_nonzero(wrong & ~noisy & rec),
        np.count_nonzero(wrong & ~noisy & ~rec),
        np.count_nonzero(wrong & noisy & rec),
        np.count_nonzero(wrong & noisy & ~rec),
    )
    return ErrorBreakdown(*(c / cells for c in counts), correct=(cells - sum(counts)) / cells)


@dataclass(frozen=True)
class CalibrationBin:
    lower: float
    upper: float
    mean_confidence: float
    error_rate: float
    count: int

    @property
    def center(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def empty(self) -> bool:
        return self.count == 0


def calibration_curve(confidences: FloatArray, reconstruction: BinaryMatrix,
                      x_clean: BinaryMatrix, bins: int = 10) -> list[CalibrationBin]:
    """Empirical error rate of reconstructed cells, binned by model confidence."""

    if bins < 2:
        raise DomainError('Calibration needs at least two bins.')
    confidences = np.asarray(confidences, dtype=np.float64)
    if confidences.shape != reconstruction.shape or reconstruction.shape != x_clean.shape:
        raise ShapeError.mismatch('calibration', confidences.shape,
                                  reconstruction.shape, x_clean.shape)
    if not np.all((confidences >= 0.0) & (confidences <= 1.0)):
        raise DomainError('Confidences should be finite and lie in [0, 1].')
    edges = np.linspace(0.0, 1.0, bins + 1)
    # last bin is closed on the right
    which = np.clip(np.searchsorted(edges, confidences.ravel(), side='right') - 1, 0, bins - 1)
    wrong = (reconstruction.bits != x_clean.bits).ravel()
    flat = confidences.ravel()
    out = []
    for b in range(bins):
        mask = which == b
        count = int(np.count_nonzero(mask))
        out.append(CalibrationBin(
            float(edges[b]), float(edges[b + 1]),
            float(flat[mask].mean()) if count else float('nan'),
            float(wrong[mask].mean()) if count else float('nan'),
            count,
        ))
    return out


def summarize(errors: Iterable[float]) -> tuple[float, float, float]:
    """`(median, 25th percentile, 75th percentile)`"""

    values = np.asarray(list(errors), dtype=np.float64)
    if values.size == 0:
        return float('nan'), float('nan'), float('nan')
    p25, median, p75 = np.percentile(values, [25, 50, 75])
    return float(median), float(p25), float(p75)


@dataclass(frozen=True)
class FoldResult:
    repetition: int
    k: int
    train_error: float = float('nan')
    gen_error: float = float('nan')
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _run_fold(x: BinaryMatrix, k: int, fit: Fitter, spec: SplitSpec, repetition: int) -> FoldResult:
    split = split_users(x, spec, repetition)
    try:
        mined = fit(split.train, k, spec.fold_seed(repetition, k))
    except (ValueError, ArithmeticError) as e:
        logger.warning('fold %d with k=%d failed: %s', repetition, k, e)
        return FoldResult(repetition, k, error=str(e) or type(e).__name__)
    train_error = hamming(mined.reconstruct(), split.train) / split.train.size
    z_prime = transfer_roles(split.train, mined.z, split.test)
    gen_error = generalization_error(z_prime, mined.u, split.test)
    logger.debug('fold %d, k=%d: train %.4f, generalization %.4f',
                 repetition, k, train_error, gen_error)
    return FoldResult(repetition, k, train_error, gen_error)


def _run_folds(x: BinaryMatrix, k: int, fit: Fitter, spec: SplitSpec,
               workers: int) -> list[FoldResult]:
    reps = range(spec.repetitions)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda rep: _run_fold(x, k, fit, spec, rep), reps))
    else:
        results = [_run_fold(x, k, fit, spec, rep) for rep in reps]
    return sorted(results, key=lambda f: f.repetition)


@dataclass(frozen=True)
class KSweep:
    """Validation errors per number of roles and the selected number."""

    folds: dict[int, list[FoldResult]]
    selected_k: int

    def medians(self) -> dict[int, float]:
        return {k: _median_of(folds) for k, folds in self.folds.items()}

    def rows(self) -> list[tuple[int, float, float, float, int]]:
        """`(k, median, p25, p75, failed folds)` per tried k."""

        return [(k, *summarize(f.gen_error for f in folds if not f.failed),
                 sum(f.failed for f in folds)) for k, folds in self.folds.items()]


def _median_of(folds: Sequence[FoldResult]) -> float:
    return summarize(f.gen_error for f in folds if not f.failed)[0]


def cross_validate_k(x: BinaryMatrix, k_candidates: Iterable[int], fit: Fitter,
                     spec: SplitSpec, workers: int = 1) -> KSweep:
    """Pick the number of roles with the lowest median validation error.

    Candidates are tried in increasing order. The sweep stops once a median
    exceeds the best so far by more than the best one's interquartile range.
    A candidate with more than half of its folds failed is disqualified."""

    candidates = sorted(set(k_candidates))
    if not candidates:
        raise DomainError('There should be at least one candidate number of roles.')
    folds: dict[int, list[FoldResult]] = {}
    best_k: int | None = None
    best = (np.inf, np.inf)
    for k in candidates:
        results = _run_folds(x, k, fit, spec, workers)
        folds[k] = results
        failed = sum(f.failed for f in results)
        if failed * 2 > len(results):
            logger.warning('k=%d disqualified: %d of %d folds failed', k, failed, len(results))
            continue
        median, p25, p75 = summarize(f.gen_error for f in results if not f.failed)
        logger.info('k=%d: median generalization error %.4f', k, median)
        if median < best[0]:
            best_k, best = k, (median, p75 - p25)
        elif median > best[0] + best[1]:
            logger.info('stopping the sweep at k=%d', k)
            break
    if best_k is None:
        if len(candidates) == 1:
            best_k = candidates[0]
        else:
            raise DomainError('Every candidate number of roles was disqualified.')
    return KSweep(folds, best_k)


@dataclass(frozen=True)
class EvalReport:
    folds: list[FoldResult]
    median: float
    p25: float
    p75: float
    sweeps: list[KSweep] = field(default_factory=list)
    breakdowns: list[ErrorBreakdown] = field(default_factory=list)
    calibration: list[CalibrationBin] | None = None

    @property
    def errors(self) -> list[float]:
        return [f.gen_error for f in self.folds if not f.failed]

    @property
    def generalization_error(self) -> float:
        return self.median


def run_protocol(x: BinaryMatrix, fit: Fitter, spec: SplitSpec, k: int | None = None,
                 k_candidates: Iterable[int] | None = None, x_clean: BinaryMatrix | None = None,
                 workers: int = 1) -> EvalReport:
    """Repeated hold-out evaluation.

    In every repetition the users are split; with `k_candidates`, the number of
    roles is chosen by `cross_validate_k` on the training users alone, then the
    model is refit on all training users and scored on the hold-out users.
    With `x_clean`, every repetition also gets an error breakdown of the
    hold-out reconstruction against ground truth."""

    if (k is None) == (k_candidates is None):
        raise DomainError('Give either a number of roles or candidates for it.')
    if x_clean is not None and x_clean.shape != x.shape:
        raise ShapeError.mismatch('observed and clean data', x.shape, x_clean.shape)
    candidates = None if k_candidates is None else list(k_candidates)
    folds, sweeps, breakdowns = [], [], []
    for rep in range(spec.repetitions):
        split = split_users(x, spec, rep)
        chosen = k
        if candidates is not None:
            inner = SplitSpec(spec.train_fraction, spec.fold_seed(rep, 0), spec.repetitions)
            sweep = cross_validate_k(split.train, candidates, fit, inner, workers)
            sweeps.append(sweep)
            chosen = sweep.selected_k
        assert chosen is not None
        try:
            mined = fit(split.train, chosen, spec.fold_seed(rep, chosen))
        except (ValueError, ArithmeticError) as e:
            logger.warning('repetition %d failed: %s', rep, e)
            folds.append(FoldResult(rep, chosen, error=str(e) or type(e).__name__))
            continue
        z_prime = transfer_roles(split.train, mined.z, split.test)
        folds.append(FoldResult(
            rep, chosen,
            hamming(mined.reconstruct(), split.train) / split.train.size,
            generalization_error(z_prime, mined.u, split.test),
        ))
        if x_clean is not None:
            clean = BinaryMatrix(x_clean.bits[split.test_index])
            breakdowns.append(error_breakdown(bool_mat_prod(z_prime, mined.u), split.test, clean))
    median, p25, p75 = summarize(f.gen_error for f in folds if not f.failed)
    return EvalReport(folds, median, p25, p75, sweeps, breakdowns)


@dataclass(frozen=True)
class NoiseCurvePoint:
    noise: float
    median: float
    p25: float
    p75: float
    errors: tuple[float, ...]


def noise_curve(noises: Sequence[float], seeds: Sequence[int],
                generate: Callable[[float, int], BinaryMatrix], fit: Fitter, k: int,
                train_fraction: float = 0.8) -> list[NoiseCurvePoint]:
    """Generalization error against noise level, one split per generated dataset."""

    points = []
    for noise in noises:
        errors = []
        for seed in seeds:
            spec = SplitSpec(train_fraction, seed, 1)
            report = run_protocol(generate(noise, seed), fit, spec, k=k)
            errors.extend(report.errors)
        median, p25, p75 = summarize(errors)
        logger.info('noise %.3f: median generalization error %.4f', noise, median)
        points.append(NoiseCurvePoint(noise, median, p25, p75, tuple(errors)))
    return points
