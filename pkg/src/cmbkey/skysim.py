"""Band-limited Gaussian sky realizations with per-detector noise and masks.

A fiducial angular spectrum (toy damped model or one loaded from file) is
drawn into harmonic coefficients, synthesized onto the Gauss-Legendre grid,
and optionally degraded with white per-pixel noise and a sky mask.  All
operations are pure functions of their inputs and seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GaussLegendreGrid, SkyMask
from .harmonics import HarmonicCoeffs
from .rng import MixingGenerator

__all__ = [
    "AngularSpectrum",
    "ToyModelParams",
    "SkyMap",
    "fiducial_spectrum",
    "synthesize_alm",
    "synthesize_map",
    "add_noise",
    "apply_mask",
]


@dataclass
class AngularSpectrum:
    """Angular power spectrum values (uK^2) indexed by multipole 0..lmax."""

    lmax: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.lmax + 1,):
            raise ValueError(f"spectrum length {self.values.size} != lmax+1 = {self.lmax + 1}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectrum values must be finite")
        if np.any(self.values < 0.0):
            raise ValueError("spectrum values must be non-negative")


@dataclass(frozen=True)
class ToyModelParams:
    """Parameters of the damped toy spectrum: amplitude (uK^2), damping scale."""

    amplitude: float
    damping_scale: float

    def __post_init__(self):
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be non-negative")
        if self.damping_scale <= 0.0:
            raise ValueError("damping scale must be positive")


@dataclass
class SkyMap:
    """Temperature map (uK) on a Gauss-Legendre grid, one row per ring."""

    grid: GaussLegendreGrid
    pixels: np.ndarray
    detector_id: str = ""
    masked: bool = False

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        expected = (self.grid.n_theta, self.grid.n_phi)
        if self.pixels.shape != expected:
            raise ValueError(f"pixel array {self.pixels.shape} does not match grid {expected}")


def fiducial_spectrum(params: ToyModelParams, lmax: int) -> AngularSpectrum:
    """Toy fiducial spectrum A * exp(-(l / l_damp)^2) / (l (l+1)) for l >= 2.

    Monopole and dipole are zero.  The pipeline is model-agnostic; this is
    just a smooth stand-in with a tunable amplitude and damping tail.
    """
    if lmax < 2:
        raise ValueError("lmax must be at least 2")
    ell = np.arange(lmax + 1, dtype=np.float64)
    values = np.zeros(lmax + 1)
    high = ell >= 2
    values[high] = (
        params.amplitude
        * np.exp(-((ell[high] / params.damping_scale) ** 2))
        / (ell[high] * (ell[high] + 1.0))
    )
    return AngularSpectrum(lmax, values)


def synthesize_alm(spectrum: AngularSpectrum, seed: int) -> HarmonicCoeffs:
    """Draw Gaussian harmonic coefficients with variance set by the spectrum.

    a_l0 is real ~ N(0, C_l); for m > 0 the real and imaginary parts are
    each N(0, C_l / 2).  Only m >= 0 is stored; the m < 0 half is implied by
    the reality of the map.  Deterministic for a fixed seed: the draw order
    is one normal for each a_l0, then the real and imaginary blocks for
    m = 1..l, in increasing l.
    """
    lmax = spectrum.lmax
    gen = MixingGenerator(seed)
    z = gen.normal((lmax + 1) ** 2)
    values = np.zeros((lmax + 1, lmax + 1), dtype=np.complex128)
    pos = 0
    for l in range(lmax + 1):
        cl = spectrum.values[l]
        values[l, 0] = z[pos] * np.sqrt(cl)
        pos += 1
        if l > 0:
            half = np.sqrt(cl / 2.0)
            re = z[pos : pos + l]
            im = z[pos + l : pos + 2 * l]
            values[l, 1 : l + 1] = half * (re + 1j * im)
            pos += 2 * l
    return HarmonicCoeffs(lmax=lmax, values=values, detector_id="")


def synthesize_map(alm: HarmonicCoeffs, grid: GaussLegendreGrid) -> SkyMap:
    """Evaluate T(theta, phi) = sum a_lm Y_lm on the grid.

    The colatitude part uses the recurrence-built Legendre table; the
    longitude sum is an inverse real FFT per ring.  Summation order is fixed,
    so results do not depend on any parallel schedule.
    """
    if grid.band_limit < alm.lmax:
        raise ValueError(
            f"grid band limit {grid.band_limit} too coarse for alm lmax {alm.lmax}"
        )
    lam = grid.legendre(alm.lmax)
    # F[i, m] = sum_l a_lm lam[i, l, m]; m<0 implied by irfft of a real map
    fm = np.einsum("ilm,lm->im", lam, alm.values)
    if alm.lmax < grid.band_limit:
        pad = np.zeros((grid.n_theta, grid.band_limit + 1), dtype=np.complex128)
        pad[:, : alm.lmax + 1] = fm
        fm = pad
    pixels = np.fft.irfft(fm, n=grid.n_phi, axis=1) * grid.n_phi
    return SkyMap(grid=grid, pixels=pixels, detector_id=alm.detector_id)


def add_noise(sky: SkyMap, sigma_pix: float, seed: int) -> SkyMap:
    """Add independent N(0, sigma_pix^2) noise to every pixel.

    Distinct detectors must be given distinct seeds; the draw is a pure
    function of (map shape, seed).
    """
    if sigma_pix < 0.0:
        raise ValueError("noise sigma must be non-negative")
    if sigma_pix == 0.0:
        return SkyMap(sky.grid, sky.pixels.copy(), sky.detector_id, sky.masked)
    gen = MixingGenerator(seed)
    noise = gen.normal(sky.pixels.size, sigma=sigma_pix).reshape(sky.pixels.shape)
    return SkyMap(sky.grid, sky.pixels + noise, sky.detector_id, sky.masked)


def apply_mask(sky: SkyMap, mask: SkyMask) -> SkyMap:
    """Pixelwise product of map and mask; the result is flagged as masked."""
    if not sky.grid.same_geometry(mask.grid):
        raise ValueError(
            f"mask grid (band limit {mask.grid.band_limit}) does not match "
            f"map grid (band limit {sky.grid.band_limit})"
        )
    return SkyMap(sky.grid, sky.pixels * mask.values, sky.detector_id, masked=True)
