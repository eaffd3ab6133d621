# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of numpy_engine.evaluate.

Same arithmetic in the same order (build flags disable FMA contraction), so
results are bit-identical to the fallback. Rotations are distributed over
OpenMP threads; every (rotation, translation) cell is computed independently
and written to a disjoint slot, which makes the output identical for any
worker count.
"""
import numpy as np

cimport numpy as cnp
from cython.parallel cimport parallel, prange, threadid


def evaluate(
    double[:, :, ::1] log_data not None,
    double[:, ::1] keypoints not None,
    double[:, ::1] quats not None,
    double[:, ::1] translations not None,
    double fx, double fy, double cx, double cy,
    double ox, double oy, double scale, double log_floor,
    int workers=1,
):
    """Per-pose summed log-likelihoods, shape (M, T), plus behind-camera count."""
    cdef Py_ssize_t m = quats.shape[0]
    cdef Py_ssize_t t = translations.shape[0]
    cdef Py_ssize_t n = keypoints.shape[0]
    cdef Py_ssize_t r = log_data.shape[1]
    cdef double rr = <double> r

    if workers < 1:
        workers = 1
    out_arr = np.empty((m, t), dtype=np.float64)
    scratch_arr = np.empty((workers, n, 3), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, :, ::1] rk = scratch_arr

    cdef Py_ssize_t i, j, k, tid, iu, iv
    cdef double w, x, y, z
    cdef double r00, r01, r02, r10, r11, r12, r20, r21, r22
    cdef double kx, ky, kz, px, py, pz, u, v, s
    cdef long behind = 0
    cdef bint ok

    with nogil:
        for i in prange(m, num_threads=workers, schedule="static"):
            tid = threadid()
            w = quats[i, 0]
            x = quats[i, 1]
            y = quats[i, 2]
            z = quats[i, 3]
            r00 = 1.0 - 2.0 * (y * y + z * z)
            r01 = 2.0 * (x * y - w * z)
            r02 = 2.0 * (x * z + w * y)
            r10 = 2.0 * (x * y + w * z)
            r11 = 1.0 - 2.0 * (x * x + z * z)
            r12 = 2.0 * (y * z - w * x)
            r20 = 2.0 * (x * z - w * y)
            r21 = 2.0 * (y * z + w * x)
            r22 = 1.0 - 2.0 * (x * x + y * y)
            for k in range(n):
                kx = keypoints[k, 0]
                ky = keypoints[k, 1]
                kz = keypoints[k, 2]
                rk[tid, k, 0] = r00 * kx + r01 * ky + r02 * kz
                rk[tid, k, 1] = r10 * kx + r11 * ky + r12 * kz
                rk[tid, k, 2] = r20 * kx + r21 * ky + r22 * kz
            for j in range(t):
                s = 0.0
                ok = True
                for k in range(n):
                    pz = rk[tid, k, 2] + translations[j, 2]
                    if pz <= 0.0:
                        ok = False
                        break
                    px = rk[tid, k, 0] + translations[j, 0]
                    py = rk[tid, k, 1] + translations[j, 1]
                    u = scale * ((fx * px / pz + cx) - ox)
                    v = scale * ((fy * py / pz + cy) - oy)
                    if u >= 0.0 and u < rr and v >= 0.0 and v < rr:
                        iu = <Py_ssize_t> u
                        iv = <Py_ssize_t> v
                        s = s + log_data[k, iv, iu]
                    else:
                        s = s + log_floor
                if not ok:
                    s = n * log_floor
                    behind += 1
                out[i, j] = s

    return out_arr, int(behind)
