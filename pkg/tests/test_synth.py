import numpy as np
import pytest
from rbacmine.errors import DomainError
from rbacmine.matrix import hamming
from rbacmine.rbac import FlatRbacConfig, HierRbacConfig
from rbacmine.synth import apply_noise, gen_ddm_data, gen_mac_data, role_aligned_attributes
from rbacmine.model.ddm import sample_crp

def test_mac_data_without_noise() -> None:
    data = gen_mac_data(n=60, d=20, k=5, max_roles=2, seed=1)
    assert data.x_observed == data.x_clean
    assert isinstance(data.truth, FlatRbacConfig)
    assert data.truth.num_roles == 5
    assert len(set(data.truth.u.rows_as_tuples())) == 5
    sizes = data.truth.z.bits.sum(axis=1)
    assert np.all((sizes >= 1) & (sizes <= 2))
    assert data.noise_cells.size == 0

def test_mac_data_deterministic() -> None:
    first = gen_mac_data(n=30, d=10, k=4, noise=0.2, seed=5)
    second = gen_mac_data(n=30, d=10, k=4, noise=0.2, seed=5)
    assert first.x_observed == second.x_observed
    assert first.truth == second.truth
    assert gen_mac_data(n=30, d=10, k=4, noise=0.2, seed=6).x_observed != first.x_observed

def test_noise_cells() -> None:
    data = gen_mac_data(n=50, d=20, k=4, noise=0.1, seed=2)
    assert data.noise_cells.size == 100
    assert len(set(data.noise_cells.tolist())) == 100
    changed = np.flatnonzero((data.x_observed.bits != data.x_clean.bits).ravel())
    assert set(changed.tolist()) <= set(data.noise_cells.tolist())
    # fair coin flips keep about half of the chosen cells
    assert 20 <= hamming(data.x_observed, data.x_clean) <= 80

def test_full_noise() -> None:
    data = gen_mac_data(n=200, d=50, k=3, noise=1.0, seed=3)
    assert data.x_observed.density == pytest.approx(0.5, abs=0.02)

def test_apply_noise() -> None:
    data = gen_mac_data(n=10, d=10, k=2, seed=0)
    rng = np.random.default_rng(0)
    noisy, cells = apply_noise(data.x_clean, 0.0, rng)
    assert noisy == data.x_clean and cells.size == 0
    with pytest.raises(DomainError, match='Noise'):
        apply_noise(data.x_clean, 1.5, rng)

@pytest.mark.parametrize('kwargs', [
    {'n': 0}, {'k': 0}, {'max_roles': 0}, {'d': 2, 'k': 4}, {'density': 0.0},
])
def test_mac_data_errors(kwargs: dict[str, float]) -> None:
    with pytest.raises(DomainError):
        gen_mac_data(**kwargs)  # type: ignore[arg-type]

def test_ddm_data() -> None:
    data = gen_ddm_data(n=40, d=15, alpha=1.0, seed=4)
    assert isinstance(data.truth, HierRbacConfig)
    assert data.truth.is_disjoint
    assert data.x_clean == data.truth.reconstruct()
    assert data.flat_truth.reconstruct() == data.x_clean
    assert data.kind == 'ddm'
    with pytest.raises(DomainError):
        gen_ddm_data(alpha=0.0)

def test_ddm_data_small_alpha() -> None:
    data = gen_ddm_data(n=30, d=10, alpha=1e-9, seed=7)
    assert data.truth.num_business_roles == 1
    assert data.truth.num_technical_roles == 1

def test_crp_role_count() -> None:
    alpha, n, draws = 2.0, 50, 200
    i = np.arange(1, n + 1)
    mean = np.sum(alpha / (alpha + i - 1))
    variance = np.sum(alpha * (i - 1) / (alpha + i - 1) ** 2)
    rng = np.random.default_rng(11)
    counts = [int(sample_crp(n, alpha, rng).max()) + 1 for _ in range(draws)]
    assert abs(np.mean(counts) - mean) < 4 * np.sqrt(variance / draws)

def test_role_aligned_attributes() -> None:
    data = gen_mac_data(n=40, d=12, k=4, seed=9)
    attrs = role_aligned_attributes(data, groups=2, seed=0)
    assert set(attrs) == {'aligned', 'distractor'}
    aligned = attrs['aligned']
    assert aligned.vocabulary == ('g0', 'g1')
    first_role = np.argmax(data.truth.z.bits, axis=1)
    assert aligned.values.tolist() == (first_role % 2).tolist()
    assert attrs['distractor'].num_users == 40
    with pytest.raises(DomainError):
        role_aligned_attributes(data, groups=0)
