"""Equivolumetric sampling of SO(3).

A rotation is split into the direction of a frame axis (a point on S^2,
sampled with HEALPix) and a tilt angle about it (sampled uniformly on the
circle). Lifting the product grid through the Hopf fibration gives
M = 72 * 8^s unit quaternions at recursion s whose cells all have Haar
volume pi^2 / M.

Grid ordering is sphere-major: sample index = pixel * m + tilt, where
m = 6 * 2^s is the tilt count.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import so3
from .errors import ValidationError
from .healpix import SphereGrid, ang2pix, healpix_centers


def hopf_to_quat(z: np.ndarray, phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Lift Hopf coordinates to quaternions.

    z = cos(theta) is the axis-direction latitude, phi its longitude and
    psi in [0, 2pi) the tilt. Half-angle terms come from z directly:
    cos(theta/2) = sqrt((1+z)/2), which is exact at the poles.
    """
    ct = np.sqrt((1.0 + z) / 2.0)
    st = np.sqrt((1.0 - z) / 2.0)
    q = np.stack(
        [
            ct * np.cos(psi / 2),
            ct * np.sin(psi / 2),
            st * np.cos(phi + psi / 2),
            st * np.sin(phi + psi / 2),
        ],
        axis=-1,
    )
    return so3.canonicalize(q)


def quat_to_hopf(q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of hopf_to_quat up to the q == -q identification.

    Returns (z, phi, psi) with z in [-1, 1], phi and psi in [0, 2pi).
    """
    q = np.asarray(q, dtype=np.float64)
    w, x, y, zz = (q[..., i] for i in range(4))
    # the raw half-angle phase, not (psi mod 2pi)/2: the two differ by pi
    # whenever the quaternion sign was flipped, which would shift phi by pi
    half = np.arctan2(x, w)
    psi = np.mod(2.0 * half, 2.0 * np.pi)
    z = (w * w + x * x) - (y * y + zz * zz)  # cos(theta)
    phi = np.mod(np.arctan2(zz, y) - half, 2.0 * np.pi)
    return np.clip(z, -1.0, 1.0), phi, psi


@dataclass(frozen=True)
class RotationGrid:
    """M = 72 * 8^s rotations with per-cell Haar volume pi^2 / M."""

    recursion: int
    sphere: SphereGrid
    tilt_count: int
    quats: np.ndarray  # (M, 4), canonical sign
    cell_volume: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "cell_volume", np.pi**2 / len(self))

    def __len__(self) -> int:
        return self.quats.shape[0]

    @property
    def rotations(self) -> np.ndarray:
        return self.quats

    def cell_index(self, q: np.ndarray) -> np.ndarray:
        """Index of the grid cell containing each rotation.

        Containment in the product cell (HEALPix pixel x tilt interval);
        this is the exact equivolumetric assignment, so uniform rotations
        land in each cell with probability exactly 1/M.
        """
        z, phi, psi = quat_to_hopf(q)
        pix = ang2pix(self.sphere.nside, z, phi)
        m = self.tilt_count
        tilt = np.minimum((psi * (m / (2.0 * np.pi))).astype(np.int64), m - 1)
        return pix * m + tilt


def build_rotation_grid(recursion: int) -> RotationGrid:
    """Equivolumetric SO(3) grid at the given recursion depth (s >= 0)."""
    if recursion < 0:
        raise ValidationError(f"recursion must be >= 0, got {recursion}")
    sphere = healpix_centers(2**recursion)
    m = 6 * 2**recursion
    psi = 2.0 * np.pi * (np.arange(m) + 0.5) / m
    np_pix = len(sphere)
    z = np.repeat(sphere.z, m)
    phi = np.repeat(sphere.phi, m)
    quats = hopf_to_quat(z, phi, np.tile(psi, np_pix))
    return RotationGrid(recursion=recursion, sphere=sphere, tilt_count=m, quats=quats)


def nearest_sample(grid: RotationGrid, query: np.ndarray) -> tuple[int, float]:
    """Grid index minimizing geodesic distance to `query`, with the distance.

    Exhaustive scan; ties resolve to the lowest index.
    """
    query = np.asarray(query, dtype=np.float64)
    dots = np.abs(grid.quats @ query)
    idx = int(np.argmax(dots))
    cos = np.clip(2.0 * dots[idx] * dots[idx] - 1.0, -1.0, 1.0)
    return idx, float(np.arccos(cos))


def nearest_samples(grid: RotationGrid, queries: np.ndarray, budget: int = 1 << 24):
    """Vectorized nearest_sample over (n, 4) queries -> (indices, distances).

    Queries are processed in chunks sized so the dot-product matrix stays
    within `budget` elements regardless of grid size.
    """
    queries = np.asarray(queries, dtype=np.float64)
    n = queries.shape[0]
    chunk = max(1, budget // len(grid))
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for a in range(0, n, chunk):
        b = min(a + chunk, n)
        dots = np.abs(queries[a:b] @ grid.quats.T)
        ii = np.argmax(dots, axis=1)
        best = dots[np.arange(b - a), ii]
        idx[a:b] = ii
        dist[a:b] = np.arccos(np.clip(2.0 * best * best - 1.0, -1.0, 1.0))
    return idx, dist


def estimate_covering_radius(
    grid: RotationGrid, samples: int = 20000, seed: int = 0
) -> float:
    """Monte-Carlo lower bound on max_q d(q, nearest grid sample)."""
    rng = np.random.default_rng(seed)
    q = so3.random_rotations(samples, rng)
    _, dist = nearest_samples(grid, q)
    return float(dist.max())


def write_grid_csv(grid: RotationGrid, path) -> None:
    """One row per sample: index,w,x,y,z with 17 significant digits."""
    with open(path, "w") as f:
        f.write("index,w,x,y,z\n")
        for i, q in enumerate(grid.quats):
            f.write(f"{i},{q[0]:.17g},{q[1]:.17g},{q[2]:.17g},{q[3]:.17g}\n")


def read_grid_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1:5]
