"""End-to-end runs on synthetic data; slow, deselect with `-m "not slow"`."""

from pathlib import Path
import os
import numpy as np
import pytest
from scipy.stats import spearmanr
from rbacmine.evaluation import (SplitSpec, calibration_curve, cross_validate_k, noise_curve,
                                 run_protocol)
from rbacmine.formats import read_matrix
from rbacmine.matrix import BinaryMatrix
from rbacmine.synth import gen_ddm_data, gen_mac_data, role_aligned_attributes
from rbacmine.model.ddm import DdmConfig, ddm_fitter
from rbacmine.model.hybrid import HybridConfig, fit_hybrid, lambda_sweep
from rbacmine.model.mac import MacFitConfig, fit_mac, mac_fitter, posterior_cell_confidence

pytestmark = pytest.mark.slow

NOISES = [0.0, 0.1, 0.2, 0.3]

def test_noise_curve_mac() -> None:
    def generate(noise: float, seed: int) -> BinaryMatrix:
        return gen_mac_data(n=400, d=50, k=10, noise=noise, seed=seed).x_observed

    fit = mac_fitter(MacFitConfig(num_roles=10, restarts=3))
    medians = [p.median for p in noise_curve(NOISES, range(10), generate, fit, k=10)]
    assert medians[0] < 0.01
    assert all(a <= b for a, b in zip(medians, medians[1:]))

def test_noise_curve_ddm() -> None:
    def generate(noise: float, seed: int) -> BinaryMatrix:
        return gen_ddm_data(n=400, d=50, noise=noise, seed=seed).x_observed

    medians = [p.median for p in noise_curve(NOISES, range(10), generate, ddm_fitter(DdmConfig()), k=0)]
    assert medians[0] < 0.01
    assert all(a <= b for a, b in zip(medians, medians[1:]))

def test_confidence_calibration() -> None:
    data = gen_mac_data(n=400, d=50, k=10, noise=0.2, seed=3)
    fit = fit_mac(data.x_observed, MacFitConfig(num_roles=10, restarts=3), seed=0)
    confidence = posterior_cell_confidence(data.x_observed, fit.rbac, fit.params,
                                           fit.responsibilities, fit.catalog)
    curve = [b for b in calibration_curve(confidence, fit.rbac.reconstruct(), data.x_clean)
             if not b.empty]
    assert len(curve) >= 3
    rho, _ = spearmanr([b.mean_confidence for b in curve], [b.error_rate for b in curve])
    assert rho < -0.8

def test_business_weight_trade_off() -> None:
    data = gen_mac_data(n=200, d=30, k=4, noise=0.1, seed=5)
    attrs = role_aligned_attributes(data, groups=2, seed=5)['aligned']
    config = HybridConfig(MacFitConfig(num_roles=4), min_count=10)
    sweep = lambda_sweep(data.x_observed, attrs, config, [0.0, 0.1, 1.0, 10.0],
                         SplitSpec(seed=0, repetitions=3))
    entropies = [p.role_entropy for p in sweep.points]
    assert all(a >= b - 1e-9 for a, b in zip(entropies, entropies[1:]))

    plain = fit_mac(data.x_observed, config.mac, seed=2)
    hybrid = fit_hybrid(data.x_observed, attrs, config, seed=2)
    assert hybrid.rbac == plain.rbac
    assert np.array_equal(hybrid.params.beta, plain.params.beta)

def _dominos() -> Path | None:
    path = Path(os.environ.get('RBACMINE_DOMINOS', 'data/dominos.txt'))
    return path if path.is_file() else None

@pytest.mark.skipif(_dominos() is None, reason='dominos dataset not available')
def test_dominos() -> None:
    x = read_matrix(_dominos())  # type: ignore[arg-type]
    report = run_protocol(x, mac_fitter(MacFitConfig(num_roles=2)), SplitSpec(0.8, 0, 5),
                          k_candidates=range(2, 21))
    assert 0.01 <= report.median <= 0.025

def test_selects_generating_number_of_roles() -> None:
    fit = mac_fitter(MacFitConfig(num_roles=1, restarts=2))
    selected = []
    for seed in range(10):
        data = gen_mac_data(n=200, d=30, k=3, noise=0.05, seed=seed)
        sweep = cross_validate_k(data.x_observed, [2, 3, 4, 5], fit, SplitSpec(seed=seed))
        selected.append(sweep.selected_k)
    assert sum(k in (3, 4) for k in selected) >= 8
