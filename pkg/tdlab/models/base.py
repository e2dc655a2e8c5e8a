# tdlab/models/base.py
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict


class ArrayModel(BaseModel):
    """Immutable pydantic model holding float64 numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def readonly_array(value: Any, ndim: int, name: str) -> np.ndarray:
    """Copy ``value`` into a read-only float64 array of the given rank."""
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr
