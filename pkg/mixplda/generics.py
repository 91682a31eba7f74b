from typing import TypeAlias

import numpy as np
import numpy.typing as npt

__all__ = ["Vector", "Matrix", "IntVector", "Interval"]

Vector: TypeAlias = npt.NDArray[np.float64]
Matrix: TypeAlias = npt.NDArray[np.float64]
IntVector: TypeAlias = npt.NDArray[np.int64]
Interval: TypeAlias = tuple[float, float]
