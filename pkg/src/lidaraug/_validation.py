"""Input validation helpers shared by the estimators and the functional API."""
from __future__ import annotations

import numbers

import numpy as np


def check_point_cloud(cloud, *, copy=False) -> np.ndarray:
    """Return ``cloud`` as a C-contiguous ``(N, 4)`` float32 array.

    Raises ``ValueError`` on wrong shape or non-finite values.
    """
    arr = np.asarray(cloud)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"point cloud must have shape (N, 4), got {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if copy and arr is cloud:
        arr = arr.copy()
    if not np.isfinite(arr).all():
        raise ValueError("point cloud contains NaN or Inf values")
    return arr


def check_labels(labels, n_points=None) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(labels), dtype=np.uint32)
    if arr.ndim != 1:
        raise ValueError(f"labels must be one-dimensional, got shape {arr.shape}")
    if n_points is not None and arr.shape[0] != n_points:
        raise ValueError(
            f"label count {arr.shape[0]} does not match point count {n_points}"
        )
    return arr


def check_probability(value, name):
    if not isinstance(value, numbers.Real) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be a probability in [0, 1], got {value!r}")
    return float(value)


def check_random_state(seed) -> np.random.Generator:
    """Turn ``seed`` into a ``numpy.random.Generator``.

    Unlike :func:`sklearn.utils.check_random_state` this always yields the
    new-style generator, which is what every sampler in this package takes.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a numpy Generator")
