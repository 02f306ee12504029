"""Input validation helpers shared by the oracle, pipeline, and estimator."""

from __future__ import annotations

import numpy as np


def check_token_matrix(x, name: str = "X", dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a 2-D float64 array of token vectors and validate it.

    Raises ValueError on empty input, wrong rank, non-finite entries, or a
    mismatch against an expected embedding dimension.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D array of token vectors, got ndim={arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name}: empty token matrix with shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"{name}: embedding dim {arr.shape[1]} does not match expected {dim}")
    return np.ascontiguousarray(arr)


def check_unit_norm(arr: np.ndarray, name: str = "X", tol: float = 1e-6) -> None:
    """Require every row of ``arr`` to have unit L2 norm within ``tol``."""
    norms = np.linalg.norm(arr, axis=1)
    bad = np.abs(norms - 1.0) > tol
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"{name}: vector {idx} has norm {norms[idx]:.8f}, expected 1 within {tol:g} "
            "(cosine similarity assumes pre-normalized vectors)"
        )


def check_fraction(value: float, name: str, closed_low: bool = True, closed_high: bool = True) -> float:
    """Validate a scalar in the unit interval, with configurable endpoints."""
    v = float(value)
    low_ok = v >= 0.0 if closed_low else v > 0.0
    high_ok = v <= 1.0 if closed_high else v < 1.0
    if not (low_ok and high_ok):
        lo = "[" if closed_low else "("
        hi = "]" if closed_high else ")"
        raise ValueError(f"{name}: {value!r} outside {lo}0, 1{hi}")
    return v


def check_index(i: int, size: int, name: str) -> int:
    i = int(i)
    if not 0 <= i < size:
        raise IndexError(f"{name}: index {i} out of range [0, {size})")
    return i
