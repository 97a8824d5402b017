from __future__ import annotations
from typing import Union
import numpy as np
import numpy.typing as npt

__all__ = ('BoolArray', 'FloatArray', 'IntArray', 'Seed', 'RoleSet',)

BoolArray = npt.NDArray[np.bool_]
FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
Seed = Union[int, np.random.SeedSequence, np.random.Generator, None]
RoleSet = tuple[int, ...]
