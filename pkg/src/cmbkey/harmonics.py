"""Forward harmonic analysis, pseudo cross-spectra, spectral binning.

The forward transform is exact on the Gauss-Legendre grid for band-limited
maps.  Cross-spectra between detector pairs fold the negative orders into
m >= 0 through the reality condition.  Binning windows weight multipoles by
l (l+1) (2l+1) inside each bin and normalize to unit sum; the effective
number of Gaussian modes per bin scales with the retained sky fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GaussLegendreGrid

__all__ = [
    "HarmonicCoeffs",
    "PseudoSpectrum",
    "CrossSpectrumSet",
    "BinningScheme",
    "BinnedSpectrum",
    "analyze_map",
    "pseudo_cross_spectrum",
    "cross_spectrum_set",
    "make_binning",
    "bin_spectrum",
    "effective_modes",
    "make_binned_spectrum",
]


@dataclass
class HarmonicCoeffs:
    """Complex coefficients a_lm for 0 <= m <= l <= lmax, one detector.

    values[l, m] holds the coefficient; entries with m > l are zero.  For a
    real map the m = 0 column is real.
    """

    lmax: int
    values: np.ndarray
    detector_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        n = self.lmax + 1
        if self.values.shape != (n, n):
            raise ValueError(f"coefficient array must be ({n}, {n}), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("coefficients must be finite")
        if np.max(np.abs(self.values[:, 0].imag), initial=0.0) > 1e-12:
            raise ValueError("a_l0 must be real for a real map")
        if np.any(np.triu(self.values, k=1) != 0):
            raise ValueError("entries with m > l must be zero")


@dataclass
class PseudoSpectrum:
    """Pseudo cross-spectrum of one detector pair, values indexed l = 0..lmax."""

    values: np.ndarray
    detectors: tuple[str, str] = ("", "")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def lmax(self) -> int:
        return self.values.size - 1


@dataclass
class CrossSpectrumSet:
    """All auto- and cross-spectra of a detector set, keyed by (i, j), i <= j."""

    n_detectors: int
    lmax: int
    spectra: dict = field(default_factory=dict)

    def auto(self, i: int) -> np.ndarray:
        return self.spectra[(i, i)]

    def cross_pairs(self):
        return [(i, j) for i in range(self.n_detectors) for j in range(i + 1, self.n_detectors)]


def analyze_map(sky, lmax: int) -> HarmonicCoeffs:
    """Forward transform: a_lm = sum_pixels T Y*_lm * quadrature weight.

    Exact for maps band-limited at or below the grid band limit.  The
    longitude sum is a real FFT per ring; the colatitude sum contracts the
    cached Legendre table against the weighted ring harmonics in a fixed
    order.
    """
    grid: GaussLegendreGrid = sky.grid
    if lmax > grid.band_limit:
        raise ValueError(f"lmax {lmax} exceeds grid band limit {grid.band_limit}")
    lam = grid.legendre(lmax)
    ring_ft = np.fft.rfft(sky.pixels, axis=1)[:, : lmax + 1]
    weighted = ring_ft * (grid.weights * 2.0 * np.pi / grid.n_phi)[:, None]
    values = np.einsum("ilm,im->lm", lam, weighted)
    values = np.tril(values)  # m > l entries are meaningless; zero them
    values[:, 0] = values[:, 0].real
    return HarmonicCoeffs(lmax=lmax, values=values, detector_id=sky.detector_id)


def pseudo_cross_spectrum(a: HarmonicCoeffs, b: HarmonicCoeffs) -> PseudoSpectrum:
    """Cross-spectrum of two coefficient sets, averaged over 2l+1 orders.

    Negative orders are folded into m > 0 via the reality condition, so each
    value is Re[a_l0 b*_l0 + 2 sum_{m>=1} a_lm b*_lm] / (2l+1).
    """
    if a.lmax != b.lmax:
        raise ValueError(f"lmax mismatch: {a.lmax} vs {b.lmax}")
    prod = (a.values * np.conj(b.values)).real
    ell = np.arange(a.lmax + 1)
    # m > l entries are zero by construction, so the row sums stop at m = l
    values = (prod[:, 0] + 2.0 * prod[:, 1:].sum(axis=1)) / (2 * ell + 1)
    return PseudoSpectrum(values=values, detectors=(a.detector_id, b.detector_id))


def cross_spectrum_set(alms) -> CrossSpectrumSet:
    """Pseudo-spectra of every detector pair (i <= j) from a list of alm sets."""
    if not alms:
        raise ValueError("need at least one detector")
    lmax = alms[0].lmax
    out = CrossSpectrumSet(n_detectors=len(alms), lmax=lmax)
    for i in range(len(alms)):
        for j in range(i, len(alms)):
            out.spectra[(i, j)] = pseudo_cross_spectrum(alms[i], alms[j]).values
    return out


@dataclass
class BinningScheme:
    """Spectral bins [l_min, l_max] with window weights normalized per bin."""

    ranges: list
    weights: list = field(repr=False, default=None)

    @property
    def n_bins(self) -> int:
        return len(self.ranges)

    @property
    def max_ell(self) -> int:
        return self.ranges[-1][1]

    def window(self, r: int, lmax: int) -> np.ndarray:
        """Weights of bin ``r`` expanded to a full array over l = 0..lmax."""
        lo, hi = self.ranges[r]
        if lmax < hi:
            raise ValueError(f"bin {r} extends to l={hi}, beyond lmax={lmax}")
        full = np.zeros(lmax + 1)
        full[lo : hi + 1] = self.weights[r]
        return full


def make_binning(ranges) -> BinningScheme:
    """Build a binning scheme from (l_min, l_max) pairs.

    Bins must be ascending and non-overlapping with l_min >= 2.  Inside each
    bin the window weight is l (l+1) (2l+1) normalized to unit sum.
    """
    ranges = [(int(lo), int(hi)) for lo, hi in ranges]
    if not ranges:
        raise ValueError("at least one bin is required")
    prev_hi = None
    for lo, hi in ranges:
        if lo < 2:
            raise ValueError(f"bin lower edge {lo} below l=2")
        if hi < lo:
            raise ValueError(f"descending bin ({lo}, {hi})")
        if prev_hi is not None and lo <= prev_hi:
            raise ValueError(f"bin ({lo}, {hi}) overlaps or is out of order")
        prev_hi = hi
    weights = []
    for lo, hi in ranges:
        ell = np.arange(lo, hi + 1, dtype=np.float64)
        raw = ell * (ell + 1.0) * (2.0 * ell + 1.0)
        weights.append(raw / raw.sum())
    return BinningScheme(ranges=ranges, weights=weights)


def _spectrum_values(spectrum) -> np.ndarray:
    if hasattr(spectrum, "values"):
        return np.asarray(spectrum.values, dtype=np.float64)
    return np.asarray(spectrum, dtype=np.float64)


def bin_spectrum(spectrum, scheme: BinningScheme) -> np.ndarray:
    """Window-weighted bin averages of a spectrum (empirical or model alike)."""
    values = _spectrum_values(spectrum)
    if scheme.max_ell > values.size - 1:
        raise ValueError(
            f"binning extends to l={scheme.max_ell} but spectrum stops at {values.size - 1}"
        )
    out = np.empty(scheme.n_bins)
    for r, (lo, hi) in enumerate(scheme.ranges):
        out[r] = np.dot(scheme.weights[r], values[lo : hi + 1])
    return out


def effective_modes(scheme: BinningScheme, f_sky: float) -> np.ndarray:
    """Effective number of Gaussian modes per bin, scaled by sky fraction.

    n_r = f_sky * (sum_l (2l+1) w_r(l))^2 / sum_l (2l+1) w_r(l)^2, which
    reduces to the exact full-sky count f_sky * (2l+1) for a single-l bin.
    """
    if not 0.0 < f_sky <= 1.0:
        raise ValueError(f"f_sky must lie in (0, 1], got {f_sky}")
    out = np.empty(scheme.n_bins)
    for r, (lo, hi) in enumerate(scheme.ranges):
        g = 2.0 * np.arange(lo, hi + 1) + 1.0
        w = scheme.weights[r]
        out[r] = f_sky * np.dot(g, w) ** 2 / np.dot(g, w * w)
    return out


@dataclass
class BinnedSpectrum:
    """Binned band powers with their bin ranges, mode counts and sky fraction."""

    scheme: BinningScheme
    values: np.ndarray
    n_modes: np.ndarray
    f_sky: float = 1.0
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.n_modes = np.asarray(self.n_modes, dtype=np.float64)
        if self.values.size != self.scheme.n_bins or self.n_modes.size != self.scheme.n_bins:
            raise ValueError("values and n_modes must have one entry per bin")
        if np.any(self.n_modes <= 0.0):
            raise ValueError("every bin must carry a positive mode count")


def make_binned_spectrum(spectrum, scheme: BinningScheme, f_sky: float,
                         label: str = "") -> BinnedSpectrum:
    """Bin a spectrum and attach the effective mode counts for ``f_sky``."""
    return BinnedSpectrum(
        scheme=scheme,
        values=bin_spectrum(spectrum, scheme),
        n_modes=effective_modes(scheme, f_sky),
        f_sky=f_sky,
        label=label,
    )
