"""Rotation-distribution visualization.

Each rotation is parameterized by where it sends the object's canonical
x-axis (longitude a, latitude b of that direction in the camera frame) and
by the tilt c about that direction. The zero-tilt reference at a direction d
is the camera z-axis projected off d; the tracked vector is the rotated
object z-axis. With these conventions the identity rotation maps to
(a, b, c) = (0, 0, 0).

Points are drawn with a Mollweide projection; tilt becomes hue and the
per-cell probability mass becomes opacity, alpha_i = mass_i / max(mass).
"""
from __future__ import annotations

import numpy as np

from . import so3

SQRT2 = np.sqrt(2.0)

# recorded alongside exports so downstream tooling knows the conventions
CONVENTIONS = {
    "canonical_axis": "object x-axis direction in the camera frame",
    "longitude": "atan2(d_y, d_x)",
    "latitude": "asin(d_z)",
    "zero_tilt_reference": "camera z-axis projected orthogonal to the axis direction",
    "tilt_tracked_vector": "rotated object z-axis",
    "alpha": "cell mass / max cell mass",
}


def axis_tilt_coords(quats: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(longitude a, latitude b, tilt c) for each rotation, all in radians.

    a in (-pi, pi], b in [-pi/2, pi/2], c in (-pi, pi].
    """
    m = so3.to_matrix(np.atleast_2d(np.asarray(quats, dtype=np.float64)))
    d = m[:, :, 0]  # rotated x-axis
    v = m[:, :, 2]  # rotated z-axis, tracks tilt
    a = np.arctan2(d[:, 1], d[:, 0])
    b = np.arcsin(np.clip(d[:, 2], -1.0, 1.0))

    # reference direction: camera z projected off d (or y near the poles)
    ez = np.array([0.0, 0.0, 1.0])
    ref = ez - d * d[:, 2:3]
    degenerate = np.linalg.norm(ref, axis=1) < 1e-9
    if np.any(degenerate):
        ey = np.array([0.0, 1.0, 0.0])
        alt = ey - d[degenerate] * d[degenerate, 1:2]
        ref[degenerate] = alt
    ref /= np.linalg.norm(ref, axis=1, keepdims=True)

    cross = np.cross(ref, v)
    c = np.arctan2(np.sum(cross * d, axis=1), np.sum(ref * v, axis=1))
    return a, b, c


def mollweide(lon: np.ndarray, lat: np.ndarray, tol: float = 1e-10):
    """Forward Mollweide projection of (longitude, latitude) in radians.

    Solves 2t + sin 2t = pi sin(lat) by Newton iteration to `tol`, then
    x = (2 sqrt2 / pi) lon cos t, y = sqrt2 sin t. x spans [-2sqrt2, 2sqrt2],
    y spans [-sqrt2, sqrt2].
    """
    lon = np.atleast_1d(np.asarray(lon, dtype=np.float64))
    lat = np.atleast_1d(np.asarray(lat, dtype=np.float64))
    target = np.pi * np.sin(lat)
    t = np.array(lat, dtype=np.float64)
    polar = np.abs(np.sin(lat)) > 1.0 - 1e-12
    t[polar] = np.sign(lat[polar]) * np.pi / 2
    active = ~polar
    for _ in range(100):
        if not np.any(active):
            break
        resid = 2.0 * t[active] + np.sin(2.0 * t[active]) - target[active]
        deriv = 2.0 + 2.0 * np.cos(2.0 * t[active])
        step = resid / np.maximum(deriv, 1e-15)
        t[active] -= step
        conv = np.abs(resid) <= tol
        idx = np.nonzero(active)[0]
        active[idx[conv]] = False
    x = (2.0 * SQRT2 / np.pi) * lon * np.cos(t)
    y = SQRT2 * np.sin(t)
    return x, y


def viz_records(quats: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Structured array of per-rotation visualization records."""
    masses = np.asarray(masses, dtype=np.float64)
    a, b, c = axis_tilt_coords(quats)
    alpha = masses / masses.max()
    x, y = mollweide(a, b)
    rec = np.zeros(
        len(masses),
        dtype=[
            ("index", np.int64),
            ("a", np.float64),
            ("b", np.float64),
            ("c", np.float64),
            ("alpha", np.float64),
            ("mx", np.float64),
            ("my", np.float64),
        ],
    )
    rec["index"] = np.arange(len(masses))
    rec["a"], rec["b"], rec["c"] = a, b, c
    rec["alpha"], rec["mx"], rec["my"] = alpha, x, y
    return rec


def write_viz_csv(records: np.ndarray, path) -> None:
    with open(path, "w") as f:
        f.write("index,a,b,c,alpha,mollweide_x,mollweide_y\n")
        for r in records:
            f.write(
                f"{r['index']},{r['a']:.17g},{r['b']:.17g},{r['c']:.17g},"
                f"{r['alpha']:.17g},{r['mx']:.17g},{r['my']:.17g}\n"
            )


def _hsv_to_rgb(h: np.ndarray, s: float, v: float) -> np.ndarray:
    """Vectorized HSV -> RGB, h in [0, 1)."""
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    vv = np.full_like(f, v)
    pp = np.full_like(f, p)
    sector = [i == k for k in range(6)]
    rgb = np.select(
        [s[..., None] for s in sector],
        [
            np.stack([vv, t, pp], -1),
            np.stack([q, vv, pp], -1),
            np.stack([pp, vv, t], -1),
            np.stack([pp, q, vv], -1),
            np.stack([t, pp, vv], -1),
            np.stack([vv, pp, q], -1),
        ],
    )
    return rgb


def render_mollweide_ppm(
    records: np.ndarray,
    path,
    width: int = 800,
    gt_rotation: np.ndarray | None = None,
    point_px: int = 2,
) -> None:
    """Rasterize records to a binary PPM (P6): tilt as hue, alpha over white.

    The ground-truth rotation, when given, is marked with a black x.
    """
    height = width // 2
    margin = 10
    img = np.ones((height + 2 * margin, width + 2 * margin, 3), dtype=np.float64)

    def to_px(x, y):
        col = margin + (x + 2.0 * SQRT2) / (4.0 * SQRT2) * (width - 1)
        row = margin + (1.0 - (y + SQRT2) / (2.0 * SQRT2)) * (height - 1)
        return np.round(col).astype(int), np.round(row).astype(int)

    order = np.argsort(records["alpha"], kind="stable")
    rec = records[order]
    cols, rows = to_px(rec["mx"], rec["my"])
    colors = _hsv_to_rgb((rec["c"] + np.pi) / (2.0 * np.pi), 0.95, 0.85)
    alpha = rec["alpha"]
    for k in range(len(rec)):
        a = alpha[k]
        if a < 1e-3:
            continue
        r0, c0 = rows[k], cols[k]
        sl = np.s_[
            max(r0 - point_px + 1, 0) : r0 + point_px,
            max(c0 - point_px + 1, 0) : c0 + point_px,
        ]
        img[sl] = (1.0 - a) * img[sl] + a * colors[k]

    if gt_rotation is not None:
        a, b, _ = axis_tilt_coords(np.atleast_2d(gt_rotation))
        gx, gy = mollweide(a, b)
        cc, rr = to_px(gx[0], gy[0])
        arm = 6
        for d in range(-arm, arm + 1):
            for r0, c0 in ((rr + d, cc + d), (rr + d, cc - d)):
                if 0 <= r0 < img.shape[0] and 0 <= c0 < img.shape[1]:
                    img[r0, c0] = 0.0

    payload = (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (payload.shape[1], payload.shape[0]))
        f.write(payload.tobytes())
