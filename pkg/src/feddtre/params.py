"""Flat parameter vectors."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import InvalidInputError, ShapeError


def as_params(values, dim: Optional[int] = None) -> np.ndarray:
    """Return a read-only float64 copy of ``values`` after shape/finiteness checks."""
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    if arr.size == 0:
        raise InvalidInputError("parameter vector must be non-empty")
    if dim is not None and arr.size != dim:
        raise ShapeError(f"expected dim {dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("parameter vector contains NaN or Inf")
    arr.setflags(write=False)
    return arr


def check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.size} vs {b.size}")
