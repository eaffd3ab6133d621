"""Ring-scheme HEALPix pixelization of the unit sphere.

Self-contained implementation of the equal-area iso-latitude pixelization:
closed-form pixel centers plus the point-in-pixel query. A resolution
`nside` (power of two) divides the sphere into 12 * nside^2 pixels of
exactly equal area, arranged on 4*nside - 1 iso-latitude rings.

Ring layout, counted from the north pole (ring index i):
  * north cap,  i in [1, nside):        4i pixels, z = 1 - i^2/(3 nside^2),
                                        phi = (pi/2i) (j + 1/2), j 0-based
  * belt,       i in [nside, 3 nside]:  4 nside pixels, z = 4/3 - 2i/(3 nside),
                                        phi = (pi/2 nside) (j + off), where the
                                        half-pixel phase `off` alternates 1/2, 0,
                                        1/2, ... starting at ring nside
  * south cap mirrors the north cap.

Pixel indices are assigned ring by ring, phi increasing within each ring.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


def npix(nside: int) -> int:
    return 12 * nside * nside


def _check_nside(nside: int) -> None:
    if nside < 1 or (nside & (nside - 1)) != 0:
        raise ValidationError(f"nside must be a positive power of two, got {nside}")


def ring_layout(nside: int):
    """Per-ring (z, phase offset, pixel count) triples in north-to-south order."""
    rings = []
    n = nside
    for i in range(1, n):  # north cap
        rings.append((1.0 - i * i / (3.0 * n * n), 0.5, 4 * i))
    for i in range(n, 3 * n + 1):  # equatorial belt
        off = 0.5 if (i - n) % 2 == 0 else 0.0
        rings.append((4.0 / 3.0 - 2.0 * i / (3.0 * n), off, 4 * n))
    for i in range(n - 1, 0, -1):  # south cap
        rings.append((-(1.0 - i * i / (3.0 * n * n)), 0.5, 4 * i))
    return rings


def ring_zphi(nside: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel centers (z, phi) for all 12*nside^2 pixels in ring order."""
    _check_nside(nside)
    zs, phis = [], []
    for z, off, count in ring_layout(nside):
        j = np.arange(count, dtype=np.float64)
        step = 2.0 * np.pi / count
        zs.append(np.full(count, z))
        phis.append(step * (j + off))
    return np.concatenate(zs), np.concatenate(phis)


def zphi_to_vec(z: np.ndarray, phi: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


def ang2pix(nside: int, z: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Ring-scheme index of the pixel containing each direction (z, phi).

    This is the exact equal-area assignment (pixel boundaries, not nearest
    centers): counts of uniform sphere samples per pixel are Binomial(n, 1/npix).
    """
    _check_nside(nside)
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    if z.shape != phi.shape:
        raise ValueError("z and phi must have matching shapes")
    tt = np.mod(phi, 2.0 * np.pi) * (2.0 / np.pi)  # in [0, 4)
    pix = np.empty(z.shape, dtype=np.int64)
    total = npix(nside)
    ncap = 2 * nside * (nside - 1)

    eq = np.abs(z) <= 2.0 / 3.0
    if np.any(eq):
        temp1 = nside * (0.5 + tt[eq])
        temp2 = nside * z[eq] * 0.75
        jp = np.floor(temp1 - temp2).astype(np.int64)  # ascending edge line
        jm = np.floor(temp1 + temp2).astype(np.int64)  # descending edge line
        ir = nside + 1 + jp - jm  # ring counted from z = 2/3, in [1, 2 nside + 1]
        kshift = 1 - (ir & 1)
        ip = np.mod((jp + jm - nside + kshift + 1) >> 1, 4 * nside)
        pix[eq] = ncap + (ir - 1) * 4 * nside + ip

    cap = ~eq
    if np.any(cap):
        tc = tt[cap]
        tp = tc - np.floor(tc)
        tmp = nside * np.sqrt(3.0 * (1.0 - np.abs(z[cap])))
        jp = np.floor(tp * tmp).astype(np.int64)
        jm = np.floor((1.0 - tp) * tmp).astype(np.int64)
        ir = jp + jm + 1  # ring counted from the pole
        ip = np.mod(np.floor(tc * ir).astype(np.int64), 4 * ir)
        north = z[cap] > 0
        pix[cap] = np.where(
            north, 2 * ir * (ir - 1) + ip, total - 2 * ir * (ir + 1) + ip
        )
    return pix


def vec2pix(nside: int, vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    return ang2pix(nside, vec[..., 2], np.arctan2(vec[..., 1], vec[..., 0]))


@dataclass(frozen=True)
class SphereGrid:
    """The 12*nside^2 ring-ordered pixel centers at resolution nside."""

    nside: int
    z: np.ndarray
    phi: np.ndarray
    centers: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "centers", zphi_to_vec(self.z, self.phi))

    def __len__(self) -> int:
        return self.centers.shape[0]

    def pixel_of(self, vec: np.ndarray) -> np.ndarray:
        """Containing pixel for each unit vector."""
        return vec2pix(self.nside, vec)


def healpix_centers(nside: int) -> SphereGrid:
    """Build the sphere grid; nside must be a power of two."""
    z, phi = ring_zphi(nside)
    return SphereGrid(nside=nside, z=z, phi=phi)
