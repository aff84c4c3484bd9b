"""Small vector helpers used by the simulator, perception and dialogue code."""
from __future__ import annotations

import math
import random
from typing import Iterable, Sequence

import numpy as np


def vec3(x, y=None, z=None) -> np.ndarray:
    """Coerce a point (3 scalars or one iterable) into a float64 array."""
    if y is None:
        arr = np.asarray(x, dtype=float)
    else:
        arr = np.array([x, y, z], dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    return arr


def xyz(p) -> list[float]:
    """JSON-friendly [x, y, z] with plain floats."""
    a = vec3(p)
    return [float(a[0]), float(a[1]), float(a[2])]


def dist(a, b) -> float:
    return float(np.linalg.norm(vec3(a) - vec3(b)))


def dist_xy(a, b) -> float:
    d = vec3(a) - vec3(b)
    return math.hypot(d[0], d[1])


def centroid(points: Iterable[Sequence[float]]) -> np.ndarray:
    pts = [vec3(p) for p in points]
    if not pts:
        raise ValueError("centroid of no points")
    return np.mean(pts, axis=0)


def uniform_ball(rng: random.Random, radius: float) -> np.ndarray:
    """Uniform sample from a solid 3D ball, via rejection from the cube."""
    if radius <= 0:
        return np.zeros(3)
    while True:
        v = np.array([rng.uniform(-1, 1) for _ in range(3)])
        if float(np.dot(v, v)) <= 1.0:
            return v * radius
