"""Synthetic access-control data with known ground truth.

Two generators: flat role structures with users holding several roles, and
two-level structures drawn from the disjoint decomposition's own priors.
Noise replaces randomly chosen cells by fair coin flips, so about half of
them keep their value.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Literal
import logging
import numpy as np
from rbacmine.attributes import AttributeTable
from rbacmine.errors import DomainError
from rbacmine.matrix import BinaryMatrix
from rbacmine.rbac import FlatRbacConfig, HierRbacConfig
from rbacmine.typing import IntArray, Seed
from rbacmine._numeric import as_generator
from rbacmine.model._rolesets import role_set_catalog
from rbacmine.model.ddm import sample_crp

__all__ = ('SyntheticDataset', 'apply_noise', 'gen_mac_data', 'gen_ddm_data',
           'role_aligned_attributes',)

logger = logging.getLogger(__name__)

GeneratorKind = Literal['mac', 'ddm']


@dataclass(frozen=True)
class SyntheticDataset:
    x_observed: BinaryMatrix
    x_clean: BinaryMatrix
    truth: FlatRbacConfig | HierRbacConfig
    noise: float
    kind: GeneratorKind
    seed: int | None
    noise_cells: IntArray = field(repr=False)

    def __post_init__(self) -> None:
        if self.truth.reconstruct() != self.x_clean:
            raise ValueError('Clean data should be the reconstruction of the true configuration.')
        if self.noise_cells.size != int(np.floor(self.noise * self.x_clean.size)):
            raise ValueError('Number of noise cells should match the noise fraction.')

    @property
    def flat_truth(self) -> FlatRbacConfig:
        return self.truth if isinstance(self.truth, FlatRbacConfig) else self.truth.flatten()


def apply_noise(x: BinaryMatrix, noise: float, rng: np.random.Generator) -> tuple[BinaryMatrix, IntArray]:
    """Replace `floor(noise * cells)` distinct cells by fair coin flips.

    Returns the noisy matrix and the flat indices of the chosen cells."""

    if not 0.0 <= noise <= 1.0:
        raise DomainError('Noise fraction should lie in [0, 1].')
    count = int(np.floor(noise * x.size))
    cells = np.sort(rng.choice(x.size, size=count, replace=False))
    bits = x.bits.copy().ravel()
    bits[cells] = rng.random(count) < 0.5
    return BinaryMatrix(bits.reshape(x.shape)), cells


def _distinct_roles(k: int, d: int, density: float, rng: np.random.Generator) -> BinaryMatrix:
    roles: list[bytes] = []
    rows = []
    attempts = 0
    while len(rows) < k:
        attempts += 1
        if attempts > 1000 * k:
            raise DomainError(f'Could not draw {k} distinct roles with density {density}.')
        row = rng.random(d) < density
        if not row.any() or row.tobytes() in roles:
            continue
        roles.append(row.tobytes())
        rows.append(row)
    return BinaryMatrix(np.array(rows))


def gen_mac_data(n: int = 400, d: int = 50, k: int = 10, max_roles: int = 2,
                 noise: float = 0.0, seed: int | None = None,
                 density: float = 0.3) -> SyntheticDataset:
    """Users holding up to `max_roles` of `k` distinct random roles.

    Every user gets a uniformly chosen nonempty role set of at most
    `max_roles` roles; a role includes each permission with probability
    `density`."""

    if min(n, d, k, max_roles) < 1:
        raise DomainError('Sizes should be positive.')
    if d < 63 and k > 2 ** d - 1:
        raise DomainError(f'There are fewer than {k} distinct nonempty roles over {d} permissions.')
    if not 0.0 < density <= 1.0:
        raise DomainError('Density should lie in (0, 1].')
    rng = as_generator(seed)
    u = _distinct_roles(k, d, density, rng)
    catalog = role_set_catalog(k, max_roles)
    picks = rng.integers(1, len(catalog), size=n)  # set 0 is the empty one
    z = BinaryMatrix(catalog.membership[picks])
    truth = FlatRbacConfig(z, u)
    clean = truth.reconstruct()
    observed, cells = apply_noise(clean, noise, rng)
    logger.debug('generated %d x %d MAC data with %d roles, %d noise cells', n, d, k, cells.size)
    return SyntheticDataset(observed, clean, truth, noise, 'mac', seed, cells)


def gen_ddm_data(n: int = 400, d: int = 50, alpha: float = 1.0,
                 beta_prior_strength: float = 0.5, seed: int | None = None,
                 noise: float = 0.0) -> SyntheticDataset:
    """Partitions from the Chinese restaurant process, blocks from Beta-Bernoulli draws."""

    if min(n, d) < 1:
        raise DomainError('Sizes should be positive.')
    if not (alpha > 0 and beta_prior_strength > 0):
        raise DomainError('Concentration and Beta prior strength should be positive.')
    rng = as_generator(seed)
    users = sample_crp(n, alpha, rng)
    perms = sample_crp(d, alpha, rng)
    num_business, num_technical = int(users.max()) + 1, int(perms.max()) + 1
    beta = rng.beta(beta_prior_strength, beta_prior_strength, size=(num_business, num_technical))
    v = BinaryMatrix(rng.random(beta.shape) < 1.0 - beta)
    truth = HierRbacConfig(BinaryMatrix.one_hot(users, num_business), v,
                           BinaryMatrix.one_hot(perms, num_technical).T)
    clean = truth.reconstruct()
    observed, cells = apply_noise(clean, noise, rng)
    logger.debug('generated %d x %d DDM data with %d x %d roles', n, d, num_business, num_technical)
    return SyntheticDataset(observed, clean, truth, noise, 'ddm', seed, cells)


def role_aligned_attributes(dataset: SyntheticDataset, groups: int = 2,
                            seed: Seed = None) -> dict[str, AttributeTable]:
    """An attribute following the true roles and a distractor independent of them.

    `aligned` puts a user in group `min(roles) mod groups`; `distractor` is a
    uniform random split into the same number of groups."""

    if groups < 1:
        raise DomainError('There should be at least one group.')
    rng = as_generator(seed)
    z = dataset.flat_truth.z.bits
    first_role = np.where(z.any(axis=1), np.argmax(z, axis=1), 0)
    labels = [f'g{g}' for g in range(groups)]
    aligned = np.asarray(first_role % groups, dtype=np.int64)
    distractor = rng.integers(0, groups, size=z.shape[0])
    return {
        'aligned': AttributeTable('aligned', aligned, labels),
        'distractor': AttributeTable('distractor', distractor, labels),
    }
