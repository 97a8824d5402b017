from itertools import product
from math import log
import numpy as np
import pytest
from rbacmine.errors import ConvergenceWarning, DomainError, ShapeError
from rbacmine.matrix import BinaryMatrix
from rbacmine.rbac import FlatRbacConfig
from rbacmine.synth import gen_mac_data
from rbacmine._numeric import PARAM_FLOOR
from rbacmine.model._rolesets import role_set_catalog
from rbacmine.model.mac import (MacFitConfig, MacParams, Responsibilities, e_step,
                                expected_risk_gradient, fit_mac, free_energy,
                                free_energy_gradient, m_step, mac_fitter, mac_risks,
                                per_item_risk, posterior_cell_confidence, q_matrix, q_value,
                                reconstruction_log_likelihood)

def random_params(rng: np.random.Generator, k: int, d: int) -> MacParams:
    return MacParams(rng.uniform(0.1, 0.9, size=(k, d)), rng.uniform(0.05, 0.4),
                     rng.uniform(0.2, 0.8))

def random_gamma(rng: np.random.Generator, n: int, sets: int) -> Responsibilities:
    return Responsibilities(rng.dirichlet(np.ones(sets), size=n), 1.0)

def projected(grad: np.ndarray, value: np.ndarray) -> np.ndarray:
    stuck = ((value <= PARAM_FLOOR) & (grad > 0)) | ((value >= 1.0 - PARAM_FLOOR) & (grad < 0))
    return np.where(stuck, 0.0, grad)

def test_params_validation() -> None:
    with pytest.raises(DomainError, match='eps'):
        MacParams(np.full((2, 2), 0.5), 1.5, 0.5)
    with pytest.raises(ShapeError):
        MacParams(np.full(2, 0.5), 0.1, 0.5)
    with pytest.raises(DomainError, match='sum to 1'):
        Responsibilities(np.array([[0.5, 0.4]]), 1.0)
    with pytest.raises(DomainError, match='Cooling'):
        MacFitConfig(num_roles=2, cooling_rate=1.0)

@pytest.mark.parametrize('beta_set, eps, r, q', [
    (0.3, 0.0, 0.9, 0.7),
    (0.3, 1.0, 0.9, 0.9),
    (0.2, 0.1, 0.5, 0.77),
])
def test_q_value(beta_set: float, eps: float, r: float, q: float) -> None:
    assert q_value(beta_set, eps, r) == pytest.approx(q)

def test_per_item_risk_limits() -> None:
    # roles 0 and 1 generate the row exactly
    beta = np.array([[0.0, 1.0, 1.0, 1.0], [1.0, 1.0, 0.0, 1.0], [1.0, 0.0, 1.0, 1.0]])
    params = MacParams(beta, 0.0, 0.5)
    assert 0.0 <= per_item_risk([1, 0, 1, 0], (0, 1), params) <= 4 * 2e-12
    assert per_item_risk([0, 0, 0, 0], (), params) == pytest.approx(0.0, abs=1e-10)
    assert per_item_risk([1, 0, 1, 0], (0,), params) > 20

def test_noise_marginalization() -> None:
    """The mixture risk is minus the log of the explicit sum over which cells are noise."""

    rng = np.random.default_rng(19)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        params = random_params(rng, 3, d)
        role_set = tuple(sorted(rng.choice(3, size=int(rng.integers(0, 3)), replace=False)))
        x = rng.random(d) < 0.5
        absent = np.prod(params.beta[list(role_set)], axis=0) if role_set else np.ones(d)
        total = 0.0
        for noise in product([False, True], repeat=d):
            term = 1.0
            for j, is_noise in enumerate(noise):
                if is_noise:
                    term *= params.eps * (params.r if x[j] else 1.0 - params.r)
                else:
                    term *= (1.0 - params.eps) * ((1.0 - absent[j]) if x[j] else absent[j])
            total += term
        assert per_item_risk(x, role_set, params) == pytest.approx(-log(total), rel=1e-12)

def test_mac_risks_match_per_item() -> None:
    rng = np.random.default_rng(1)
    catalog = role_set_catalog(3, 2)
    params = random_params(rng, 3, 5)
    x = BinaryMatrix.random(4, 5, seed=rng)
    risks = mac_risks(x, params, catalog)
    assert risks.shape == (4, len(catalog))
    for i in range(4):
        for s, role_set in enumerate(catalog.sets):
            assert risks[i, s] == pytest.approx(per_item_risk(x.bits[i], role_set, params))

def test_e_step_limits() -> None:
    rng = np.random.default_rng(2)
    catalog = role_set_catalog(3, 2)
    params = random_params(rng, 3, 6)
    x = BinaryMatrix.random(5, 6, seed=rng)
    hot = e_step(x, params, catalog, 1e12).gamma
    assert np.allclose(hot, 1.0 / len(catalog), atol=1e-6)

    risks = mac_risks(x, params, catalog)
    cold = e_step(x, params, catalog, 1e-7)
    assert np.allclose(cold.gamma, np.eye(len(catalog))[np.argmin(risks, axis=1)], atol=1e-6)
    assert cold.settled
    assert not e_step(x, params, catalog, 1e12).settled

def test_e_step_closed_form() -> None:
    rng = np.random.default_rng(3)
    catalog = role_set_catalog(2, 1)
    params = random_params(rng, 2, 4)
    x = BinaryMatrix.random(2, 4, seed=rng)
    gamma = e_step(x, params, catalog, 1.0).gamma
    for i in range(2):
        weights = np.array([np.exp(-per_item_risk(x.bits[i], s, params)) for s in catalog.sets])
        assert gamma[i] == pytest.approx(weights / weights.sum())
    with pytest.raises(ShapeError, match='role-set costs'):
        e_step(x, params, catalog, 1.0, np.zeros((2, 2)))

@pytest.mark.parametrize('temperature', [1e-3, 1e-10, 1e-14])
def test_e_step_tied_sets(temperature: float) -> None:
    catalog = role_set_catalog(2, 1)
    params = MacParams([[0.01, 0.01, 0.99, 0.99]] * 2, 0.05, 0.5)
    x = BinaryMatrix.from_rows(['1100', '1100'])
    gamma = e_step(x, params, catalog, temperature).gamma
    assert np.all(np.abs(gamma.sum(axis=1) - 1.0) < 1e-12)
    assert np.allclose(gamma[:, 1:], 0.5)

def test_free_energy_definition() -> None:
    rng = np.random.default_rng(4)
    catalog = role_set_catalog(3, 2)
    params = random_params(rng, 3, 4)
    x = BinaryMatrix.random(6, 4, seed=rng)
    expected = -sum(log(sum(np.exp(-per_item_risk(x.bits[i], s, params)) for s in catalog.sets))
                    for i in range(6))
    assert free_energy(x, params, catalog, 1.0) == pytest.approx(expected)
    # one dominant set: F tends to its total risk as T shrinks
    costs = np.full((6, len(catalog)), 1e6)
    costs[:, 2] = 0.0
    risks = mac_risks(x, params, catalog)
    assert free_energy(x, params, catalog, 0.5, costs) == pytest.approx(risks[:, 2].sum())
    with pytest.raises(ShapeError, match='role-set costs'):
        free_energy(x, params, catalog, 1.0, costs[:, :3])

def test_gradient_finite_differences() -> None:
    rng = np.random.default_rng(5)
    h = 1e-6
    for _ in range(50):
        k = int(rng.integers(1, 4))
        catalog = role_set_catalog(k, 2)
        params = random_params(rng, k, 3)
        x = BinaryMatrix.random(5, 3, seed=rng)
        t = rng.uniform(0.5, 3.0)
        grad_beta, grad_eps, grad_r = free_energy_gradient(x, params, catalog, t)

        def energy(beta: np.ndarray, eps: float, r: float) -> float:
            return free_energy(x, MacParams(beta, eps, r), catalog, t)  # pylint: disable=cell-var-from-loop

        numeric = np.empty_like(params.beta)
        for index in np.ndindex(*params.beta.shape):
            up, down = params.beta.copy(), params.beta.copy()
            up[index] += h
            down[index] -= h
            numeric[index] = (energy(up, params.eps, params.r)
                              - energy(down, params.eps, params.r)) / (2 * h)
        np.testing.assert_allclose(grad_beta, numeric, rtol=1e-5, atol=1e-6)
        numeric_eps = (energy(params.beta, params.eps + h, params.r)
                       - energy(params.beta, params.eps - h, params.r)) / (2 * h)
        numeric_r = (energy(params.beta, params.eps, params.r + h)
                     - energy(params.beta, params.eps, params.r - h)) / (2 * h)
        assert grad_eps == pytest.approx(numeric_eps, rel=1e-5, abs=1e-6)
        assert grad_r == pytest.approx(numeric_r, rel=1e-5, abs=1e-6)

def test_m_step_residuals() -> None:
    rng = np.random.default_rng(6)
    catalog = role_set_catalog(3, 1)
    for _ in range(50):
        x = BinaryMatrix.random(8, 4, seed=rng)
        gamma = random_gamma(rng, 8, len(catalog))
        params = MacParams(np.full((3, 4), 0.5), 0.2, 0.4)
        updated = m_step(x, gamma, catalog, params, tol=1e-10, update_noise=False)
        assert updated.eps == 0.2 and updated.r == 0.4
        grad_beta, _, _ = expected_risk_gradient(x, gamma, catalog, updated)
        assert np.abs(projected(grad_beta, updated.beta)).max() < 1e-8

def test_m_step_decreases_expected_risk() -> None:
    rng = np.random.default_rng(7)
    catalog = role_set_catalog(3, 2)
    for _ in range(20):
        x = BinaryMatrix.random(10, 5, seed=rng)
        gamma = random_gamma(rng, 10, len(catalog))
        params = random_params(rng, 3, 5)
        before = np.sum(gamma.gamma * mac_risks(x, params, catalog))
        updated = m_step(x, gamma, catalog, params)
        assert np.sum(gamma.gamma * mac_risks(x, updated, catalog)) <= before + 1e-9

def test_m_step_stationary_point() -> None:
    x = BinaryMatrix.from_rows(['1101', '1001', '1100', '0011', '0111', '0010'])
    catalog = role_set_catalog(2, 1)
    gamma = Responsibilities(np.eye(len(catalog))[[1, 1, 1, 2, 2, 2]], 0.1)
    params = m_step(x, gamma, catalog, MacParams(np.full((2, 4), 0.5), 0.0, 0.5),
                    update_noise=False)
    zeros = 1.0 - x.as_float()
    expected = np.clip(np.stack([zeros[:3].mean(axis=0), zeros[3:].mean(axis=0)]),
                       PARAM_FLOOR, 1.0 - PARAM_FLOOR)
    np.testing.assert_allclose(params.beta, expected, atol=1e-7)

def test_m_step_single_set() -> None:
    x = BinaryMatrix.from_rows(['1', '0', '1', '0', '0', '1', '0'])
    catalog = role_set_catalog(1, 1)
    gamma = Responsibilities(np.tile([0.0, 1.0], (7, 1)), 1.0)
    params = m_step(x, gamma, catalog, MacParams([[0.5]], 0.1, 0.5))
    assert q_matrix(params, catalog)[1, 0] == pytest.approx(3 / 7, abs=1e-7)

def test_em_step_lowers_free_energy() -> None:
    rng = np.random.default_rng(8)
    catalog = role_set_catalog(3, 2)
    for t in (0.5, 1.0, 4.0):
        x = BinaryMatrix.random(12, 6, seed=rng)
        params = random_params(rng, 3, 6)
        before = free_energy(x, params, catalog, t)
        updated = m_step(x, e_step(x, params, catalog, t), catalog, params)
        assert free_energy(x, updated, catalog, t) <= before + 1e-9

def test_reconstruction_log_likelihood() -> None:
    x = BinaryMatrix.from_rows(['110', '011'])
    assert reconstruction_log_likelihood(x, x) == 0.0
    flipped = BinaryMatrix.from_rows(['111', '011'])
    # one reconstructed 1 out of five observed as 0
    assert reconstruction_log_likelihood(x, flipped) == pytest.approx(4 * log(0.8) + log(0.2))
    assert reconstruction_log_likelihood(x, ~x) <= reconstruction_log_likelihood(x, flipped)

def test_confidence() -> None:
    catalog = role_set_catalog(2, 2)
    u = BinaryMatrix.from_rows(['1100', '0011'])
    choices = [1, 2, 3, 0]
    z = BinaryMatrix(catalog.membership[choices])
    config = FlatRbacConfig(z, u)
    x = config.reconstruct()
    gamma = Responsibilities(np.eye(len(catalog))[choices], 0.01)

    deterministic = MacParams(1.0 - u.as_float(), 0.0, 0.5)
    assert np.all(posterior_cell_confidence(x, config, deterministic, gamma) >= 1 - 1e-11)

    # pure noise: the observation says nothing, the roles alone decide
    noise = MacParams(np.full((2, 4), 0.3), 1.0, 0.5)
    present = np.array([[0.0] * 4, [0.7] * 4, [0.7] * 4, [0.91] * 4])[[1, 2, 3, 0]]
    expected = np.where(x.bits, present, 1.0 - present)
    assert np.allclose(posterior_cell_confidence(x, config, noise, gamma), expected)

    rng = np.random.default_rng(9)
    params = random_params(rng, 2, 4)
    soft = random_gamma(rng, 4, len(catalog))
    observed = BinaryMatrix.random(4, 4, seed=rng)
    confidence = posterior_cell_confidence(observed, config, params, soft, catalog)
    eps, r = params.eps, params.r
    for i, d in np.ndindex(4, 4):
        p1 = 0.0
        for s, role_set in enumerate(catalog.sets):
            prior = 1.0 - float(np.prod([params.beta[k, d] for k in role_set]))
            if observed[i, d]:
                one, zero = 1.0 - eps * (1.0 - r), eps * r
            else:
                one, zero = eps * (1.0 - r), 1.0 - eps * r
            p1 += soft.gamma[i, s] * prior * one / (prior * one + (1.0 - prior) * zero)
        assert confidence[i, d] == pytest.approx(p1 if x[i, d] else 1.0 - p1)

def test_confidence_drops_on_disagreement() -> None:
    catalog = role_set_catalog(1, 1)
    config = FlatRbacConfig(BinaryMatrix.ones(2, 1), BinaryMatrix.ones(1, 3))
    params = MacParams([[0.2, 0.2, 0.2]], 0.3, 0.5)
    gamma = Responsibilities([[0.0, 1.0], [0.0, 1.0]], 0.1)
    x = BinaryMatrix.from_rows(['111', '101'])
    confidence = posterior_cell_confidence(x, config, params, gamma, catalog)
    assert confidence[0, 1] > 0.8 + 1e-3
    assert confidence[1, 1] < 0.8 - 1e-3
    assert confidence[0, 0] == confidence[1, 0]

def test_fit_recovers_separable_roles() -> None:
    u = BinaryMatrix.from_rows(['11110000', '00001111'])
    z = BinaryMatrix.from_rows(['10'] * 4 + ['01'] * 4 + ['11'] * 4)
    x = z @ u
    config = MacFitConfig(num_roles=2, max_set_size=2, restarts=3)
    recovered = sum(fit_mac(x, config, seed=seed).rbac.reconstruct() == x for seed in range(10))
    assert recovered >= 6

@pytest.mark.parametrize('seed', range(10))
def test_fit_single_role(seed: int) -> None:
    x = BinaryMatrix.ones(5, 4)
    fit = fit_mac(x, MacFitConfig(num_roles=1), seed=seed)
    assert fit.rbac.u == BinaryMatrix.ones(1, 4)
    assert fit.rbac.z == BinaryMatrix.ones(5, 1)
    assert fit.params.eps < 0.01
    assert fit.diagnostics.converged

def test_fit_noiseless_with_shared_structure() -> None:
    x = gen_mac_data(n=60, d=12, k=3, noise=0.0, seed=0).x_observed
    fit = fit_mac(x, MacFitConfig(num_roles=3, restarts=2), seed=0)
    assert np.allclose(fit.responsibilities.gamma.sum(axis=1), 1.0)
    assert fit.rbac.num_users == 60

def test_fit_deterministic() -> None:
    x = BinaryMatrix.random(15, 6, 0.4, seed=12)
    config = MacFitConfig(num_roles=3, seed=4)
    first, second = fit_mac(x, config), fit_mac(x, config)
    assert first.rbac == second.rbac
    assert np.array_equal(first.params.beta, second.params.beta)
    assert first.diagnostics.restart_scores == second.diagnostics.restart_scores

def test_fit_not_converged() -> None:
    x = BinaryMatrix.random(20, 8, seed=1)
    with pytest.warns(ConvergenceWarning):
        fit = fit_mac(x, MacFitConfig(num_roles=3, max_iterations=1), seed=0)
    assert not fit.diagnostics.converged
    assert fit.diagnostics.iterations == 1
    assert fit.rbac.num_users == 20

def test_fitter() -> None:
    x = BinaryMatrix.random(10, 5, seed=3)
    fit = mac_fitter(MacFitConfig(num_roles=1))
    assert fit(x, 3, 0).num_roles == 3

def exhaustive_optimum(x: BinaryMatrix, k: int, max_set_size: int) -> float:
    catalog = role_set_catalog(k, max_set_size)
    membership = catalog.membership.astype(np.int64)
    scores: dict[bytes, float] = {}
    for bits in product([0, 1], repeat=k * x.cols):
        per_set = (membership @ np.array(bits).reshape(k, x.cols)) > 0
        for choice in product(range(len(catalog)), repeat=x.rows):
            rec = per_set[list(choice)]
            key = rec.tobytes()
            if key not in scores:
                scores[key] = reconstruction_log_likelihood(x, BinaryMatrix(rec))
    return max(scores.values())

@pytest.mark.slow
def test_fit_near_exhaustive_optimum() -> None:
    config = MacFitConfig(num_roles=2, max_set_size=2, restarts=5)
    good = 0
    for seed in range(20):
        x = BinaryMatrix.random(4, 3, seed=1000 + seed)
        best = exhaustive_optimum(x, 2, 2)
        found = reconstruction_log_likelihood(x, fit_mac(x, config, seed=seed).rbac.reconstruct())
        assert found <= best + 1e-9
        good += found >= best / 0.99 - 1e-9
    assert good >= 16
