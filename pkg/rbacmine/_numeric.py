from __future__ import annotations
from typing import Final
import numpy as np
from rbacmine.errors import DomainError
from rbacmine.typing import FloatArray, Seed

__all__ = ('PROB_FLOOR', 'PARAM_FLOOR', 'clamp_prob', 'clamp_param',
           'as_generator', 'check_prob', 'spawn_generators')

# log arguments never go below this
PROB_FLOOR: Final = 1e-12
# fitted parameters stay inside (PARAM_FLOOR, 1 - PARAM_FLOOR)
PARAM_FLOOR: Final = 1e-6


def clamp_prob(p: FloatArray | float) -> FloatArray:
    return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


def clamp_param(p: FloatArray | float) -> FloatArray:
    return np.clip(p, PARAM_FLOOR, 1.0 - PARAM_FLOOR)


def check_prob(name: str, value: FloatArray | float) -> None:
    """Raise `DomainError` unless every entry of `value` is a probability."""

    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f'{name} should lie in [0, 1].')


def as_generator(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_generators(seed: Seed, count: int) -> list[np.random.Generator]:
    """Independent generators for restarts, chains and folds."""

    if isinstance(seed, np.random.Generator):
        return [np.random.default_rng(int(s)) for s in seed.integers(2 ** 63, size=count)]
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in seed.spawn(count)]
