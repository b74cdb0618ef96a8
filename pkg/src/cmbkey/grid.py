"""Iso-latitude Gauss-Legendre sphere pixelization, Legendre tables, sky masks.

The grid places ``lmax + 1`` rings at the Gauss-Legendre nodes in cos(theta)
and ``2 * lmax + 1`` equally spaced longitudes per ring.  With the matching
quadrature weights, integrals of band-limited functions over the sphere are
exact, which makes the harmonic round trip a hard test rather than an
approximation.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

__all__ = ["GaussLegendreGrid", "SkyMask", "full_sky_mask", "band_mask",
           "legendre_table", "get_grid"]

FOUR_PI = 4.0 * np.pi


def legendre_table(lmax: int, cos_theta: np.ndarray) -> np.ndarray:
    """Normalized associated Legendre values lam[i, l, m] at each node.

    lam is the colatitude part of the spherical harmonic (Condon-Shortley
    phase included), so Y_lm(theta, phi) = lam[l, m](theta) * exp(i m phi).
    Computed with the standard stable three-term recurrence, diagonal first.

    Parameters
    ----------
    lmax : int
        Highest degree and order of the table.
    cos_theta : ndarray
        Ring nodes; values in [-1, 1].

    Returns
    -------
    ndarray of shape (len(cos_theta), lmax+1, lmax+1); entries with m > l are 0.
    """
    x = np.asarray(cos_theta, dtype=np.float64)
    s = np.sqrt(1.0 - x * x)
    lam = np.zeros((x.size, lmax + 1, lmax + 1))
    lam[:, 0, 0] = 1.0 / np.sqrt(FOUR_PI)
    for m in range(lmax):
        # diagonal l = m+1, m+1 (carries the Condon-Shortley sign)
        lam[:, m + 1, m + 1] = -np.sqrt((2.0 * m + 3.0) / (2.0 * m + 2.0)) * s * lam[:, m, m]
    for m in range(lmax):
        lam[:, m + 1, m] = np.sqrt(2.0 * m + 3.0) * x * lam[:, m, m]
    for m in range(lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            lam[:, l, m] = a * (x * lam[:, l - 1, m] - b * lam[:, l - 2, m])
    return lam


@dataclass
class GaussLegendreGrid:
    """Grid descriptor: ring nodes, weights, and cached Legendre tables.

    Rings are ordered north to south (cos_theta descending); pixels within a
    ring run east from phi = 0.  ``band_limit`` is the highest multipole the
    quadrature resolves exactly.
    """

    band_limit: int
    cos_theta: np.ndarray = field(repr=False, default=None)
    weights: np.ndarray = field(repr=False, default=None)
    _legendre_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.band_limit < 0:
            raise ValueError("band limit must be non-negative")
        if self.cos_theta is None:
            x, w = np.polynomial.legendre.leggauss(self.band_limit + 1)
            order = np.argsort(-x)  # north first
            self.cos_theta = x[order]
            self.weights = w[order]

    @property
    def n_theta(self) -> int:
        return self.band_limit + 1

    @property
    def n_phi(self) -> int:
        return 2 * self.band_limit + 1

    @property
    def n_pixels(self) -> int:
        return self.n_theta * self.n_phi

    @property
    def sin_theta(self) -> np.ndarray:
        return np.sqrt(1.0 - self.cos_theta**2)

    @property
    def phi(self) -> np.ndarray:
        """Longitudes of the pixel centers (radians)."""
        return 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi

    def pixel_weights(self) -> np.ndarray:
        """Per-pixel quadrature weights (n_theta, n_phi); they sum to 4 pi."""
        return np.repeat(self.weights[:, None], self.n_phi, axis=1) * (2.0 * np.pi / self.n_phi)

    def legendre(self, lmax: int) -> np.ndarray:
        """Legendre table up to ``lmax`` at this grid's nodes (cached)."""
        if lmax > self.band_limit:
            raise ValueError(
                f"requested lmax={lmax} exceeds grid band limit {self.band_limit}"
            )
        if lmax not in self._legendre_cache:
            self._legendre_cache[lmax] = legendre_table(lmax, self.cos_theta)
        return self._legendre_cache[lmax]

    def same_geometry(self, other: "GaussLegendreGrid") -> bool:
        return self.band_limit == other.band_limit


@functools.lru_cache(maxsize=32)
def get_grid(band_limit: int) -> GaussLegendreGrid:
    """Shared grid instance per band limit; keeps Legendre tables warm."""
    return GaussLegendreGrid(band_limit)


@dataclass
class SkyMask:
    """Per-pixel sky mask; 0/1 or apodized values in [0, 1].

    ``f_sky`` is the quadrature-weighted retained fraction of the sphere.
    """

    grid: GaussLegendreGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = (self.grid.n_theta, self.grid.n_phi)
        if self.values.shape != expected:
            raise ValueError(f"mask shape {self.values.shape} does not match grid {expected}")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("mask values must lie in [0, 1]")

    @property
    def f_sky(self) -> float:
        return float(np.sum(self.values * self.grid.pixel_weights()) / FOUR_PI)


def full_sky_mask(grid: GaussLegendreGrid) -> SkyMask:
    return SkyMask(grid, np.ones((grid.n_theta, grid.n_phi)))


def band_mask(grid: GaussLegendreGrid, cos_limit: float) -> SkyMask:
    """Equatorial band mask keeping |cos(theta)| <= cos_limit.

    Each ring owns the slice of [-1, 1] spanned by its cumulative quadrature
    weight; boundary rings get the fractional overlap of their slice with
    the band.  The retained fraction then equals the analytic band area
    (f_sky = cos_limit) to machine precision instead of drifting by a ring
    width.
    """
    if not 0.0 <= cos_limit <= 1.0:
        raise ValueError("cos_limit must lie in [0, 1]")
    # grid stores rings north to south: cumulate in ascending cos(theta)
    w_ascending = grid.weights[::-1]
    edges = np.concatenate([[-1.0], -1.0 + np.cumsum(w_ascending)])
    edges[-1] = 1.0  # guard against cumsum rounding
    lo, hi = edges[:-1], edges[1:]
    overlap = np.clip(np.minimum(hi, cos_limit) - np.maximum(lo, -cos_limit), 0.0, None)
    ring_values = np.clip(overlap / w_ascending, 0.0, 1.0)[::-1]  # back to north-first order
    values = np.repeat(ring_values[:, None], grid.n_phi, axis=1)
    return SkyMask(grid, values)
