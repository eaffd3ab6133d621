"""Quaternion utilities.

Quaternions are plain numpy arrays in (w, x, y, z) order with unit norm.
q and -q represent the same rotation; functions that care about the
identification (distances, canonical form) handle it explicitly.
All functions broadcast over leading axes.
"""
from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def canonicalize(q: np.ndarray) -> np.ndarray:
    """Fix the sign ambiguity: first nonzero component of (w, x, y, z) > 0.

    Stable serialization depends on this; geometry does not.
    """
    q = np.asarray(q, dtype=np.float64)
    sign = np.sign(q[..., 0])
    for k in (1, 2, 3):
        sign = np.where(sign == 0.0, np.sign(q[..., k]), sign)
    sign = np.where(sign == 0.0, 1.0, sign)
    return q * sign[..., None]


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w1, x1, y1, z1 = (a[..., i] for i in range(4))
    w2, x2, y2, z2 = (b[..., i] for i in range(4))
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * float(angle)
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion(s) to rotation matrix/matrices, shape (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = (q[..., i] for i in range(4))
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply rotation(s) q to vector(s) v."""
    m = to_matrix(q)
    return np.einsum("...ij,...j->...i", m, np.asarray(v, dtype=np.float64))


def geodesic_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray | float:
    """Angle of the relative rotation between a and b, in [0, pi].

    Respects the q == -q identification; a metric on SO(3).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dot = np.sum(a * b, axis=-1)
    cos = np.clip(2.0 * dot * dot - 1.0, -1.0, 1.0)
    d = np.arccos(cos)
    return float(d) if d.ndim == 0 else d


def random_rotations(n: int, rng: np.random.Generator) -> np.ndarray:
    """n rotations sampled uniformly (Haar measure), shape (n, 4)."""
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def cyclic_group(axis, order: int) -> np.ndarray:
    """Rotational symmetry group C_n about `axis`: order quaternions incl. identity."""
    if order < 1:
        raise ValueError("symmetry order must be >= 1")
    return np.stack(
        [from_axis_angle(axis, 2.0 * np.pi * k / order) for k in range(order)]
    )
