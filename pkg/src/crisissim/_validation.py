"""Input validation helpers shared by the estimator-style modules."""

from __future__ import annotations

import numbers

import numpy as np

__all__ = ["check_array", "check_random_state", "check_is_fitted", "NotFittedError"]


class NotFittedError(RuntimeError):
    pass


def check_array(x, *, ndim: int = 2, allow_nan: bool = False,
                dtype=np.float64, name: str = "X") -> np.ndarray:
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim == 1 and ndim == 2:
        arr = arr.reshape(1, -1)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not allow_nan and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if allow_nan and np.any(np.isinf(arr)):
        raise ValueError(f"{name} contains infinities")
    return arr


def check_random_state(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a Generator from {seed!r}")


def check_is_fitted(estimator, attr: str) -> None:
    if getattr(estimator, attr, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() first")
