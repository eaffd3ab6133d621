"""Pure-numpy evaluation of per-pose log-likelihood sums over a pose grid.

Reference implementation of the hot kernel; the compiled module in
_native.pyx mirrors it operation for operation (same expression order, no
FMA contraction) so both engines produce identical bits.

For every (rotation i, translation j) the kernel projects all N keypoints
and accumulates per-channel log-probabilities:

    logs[i, j] = sum_k  log_data[k, pixel of projection]   (in-crop)
                        log_floor                          (out of crop)

A pose with any keypoint at or behind the camera plane (Z <= 0) scores
N * log_floor. Work is split over fixed-size rotation blocks; the block
size never depends on the worker count, so output is bit-stable for any
number of workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 2048


def _rotate_block(quats: np.ndarray, kx, ky, kz):
    """Rotated keypoints for a block of quaternions, shape 3 x (B, N).

    Expression order matches the native kernel exactly.
    """
    w, x, y, z = (quats[:, i, None] for i in range(4))
    r00 = 1.0 - 2.0 * (y * y + z * z)
    r01 = 2.0 * (x * y - w * z)
    r02 = 2.0 * (x * z + w * y)
    r10 = 2.0 * (x * y + w * z)
    r11 = 1.0 - 2.0 * (x * x + z * z)
    r12 = 2.0 * (y * z - w * x)
    r20 = 2.0 * (x * z - w * y)
    r21 = 2.0 * (y * z + w * x)
    r22 = 1.0 - 2.0 * (x * x + y * y)
    rx = r00 * kx + r01 * ky + r02 * kz
    ry = r10 * kx + r11 * ky + r12 * kz
    rz = r20 * kx + r21 * ky + r22 * kz
    return rx, ry, rz


def _eval_block(
    out, quats, keypoints, translations, log_data, fx, fy, cx, cy, ox, oy,
    scale, log_floor,
):
    n = keypoints.shape[0]
    r = log_data.shape[1]
    chan = np.arange(n)
    kx, ky, kz = keypoints[:, 0], keypoints[:, 1], keypoints[:, 2]
    rx, ry, rz = _rotate_block(quats, kx, ky, kz)
    behind_total = 0
    for j, t in enumerate(translations):
        px = rx + t[0]
        py = ry + t[1]
        pz = rz + t[2]
        behind = pz <= 0.0
        zs = np.where(behind, 1.0, pz)
        u = scale * ((fx * px / zs + cx) - ox)
        v = scale * ((fy * py / zs + cy) - oy)
        inb = (u >= 0.0) & (u < r) & (v >= 0.0) & (v < r)
        iu = np.clip(np.floor(u), 0, r - 1).astype(np.intp)
        iv = np.clip(np.floor(v), 0, r - 1).astype(np.intp)
        vals = np.where(inb, log_data[chan, iv, iu], log_floor)
        acc = np.zeros(quats.shape[0], dtype=np.float64)
        for k in range(n):  # fixed summation order, same as native
            acc = acc + vals[:, k]
        any_behind = behind.any(axis=1)
        out[:, j] = np.where(any_behind, n * log_floor, acc)
        behind_total += int(np.sum(any_behind))
    return behind_total


def evaluate(
    log_data: np.ndarray,
    keypoints: np.ndarray,
    quats: np.ndarray,
    translations: np.ndarray,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    ox: float,
    oy: float,
    scale: float,
    log_floor: float,
    workers: int = 1,
) -> tuple[np.ndarray, int]:
    """Per-pose summed log-likelihoods, shape (M, T), plus behind-camera count."""
    log_data = np.ascontiguousarray(log_data, dtype=np.float64)
    keypoints = np.ascontiguousarray(keypoints, dtype=np.float64)
    quats = np.ascontiguousarray(quats, dtype=np.float64)
    translations = np.ascontiguousarray(translations, dtype=np.float64)
    m, t = quats.shape[0], translations.shape[0]
    logs = np.empty((m, t), dtype=np.float64)
    spans = [(a, min(a + BLOCK, m)) for a in range(0, m, BLOCK)]

    def run(span):
        a, b = span
        return _eval_block(
            logs[a:b], quats[a:b], keypoints, translations, log_data,
            fx, fy, cx, cy, ox, oy, scale, log_floor,
        )

    if workers <= 1 or len(spans) == 1:
        behind = sum(run(s) for s in spans)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            behind = sum(pool.map(run, spans))
    return logs, behind
