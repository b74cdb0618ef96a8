"""Gaussian divergence likelihoods and two-step noise / signal separation.

The dissimilarity between an empirical and a model covariance is the
divergence between zero-mean Gaussians,

    kappa(Chat, C) = [tr(Chat C^-1) - log det(Chat C^-1) - n] / 2,

which is non-negative and vanishes only when the covariances agree.  The
exact full-sky negative log-likelihood weights kappa per multipole by
2l + 1; the binned form weights per bin by the effective mode count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .harmonics import BinnedSpectrum, CrossSpectrumSet

__all__ = [
    "kullback",
    "exact_loglike",
    "binned_loglike",
    "estimate_noise_and_signal",
    "NoiseEstimate",
]

_SYM_TOL = 1e-12


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"covariance must be square, got shape {a.shape}")
    return a


def _check_symmetric(a: np.ndarray, name: str):
    scale = max(np.max(np.abs(a)), 1.0)
    if np.max(np.abs(a - a.T)) > _SYM_TOL * scale:
        raise ValueError(f"{name} covariance is not symmetric")


def kullback(chat, c) -> float:
    """Divergence between zero-mean Gaussians with the given covariances (nats).

    Parameters
    ----------
    chat : scalar or (n, n) array
        Empirical covariance; must be symmetric positive semi-definite.
        A semi-definite (singular) ``chat`` returns +inf since the log-det
        term diverges.
    c : scalar or (n, n) array
        Model covariance; must be symmetric positive definite.
    """
    chat = _as_matrix(chat)
    c = _as_matrix(c)
    if chat.shape != c.shape:
        raise ValueError(f"dimension mismatch: {chat.shape} vs {c.shape}")
    _check_symmetric(chat, "empirical")
    _check_symmetric(c, "model")
    n = c.shape[0]
    try:
        np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        raise ValueError("model covariance must be positive definite") from None
    eig = np.linalg.eigvalsh(chat)
    scale = max(abs(eig[-1]), 1.0)
    if eig[0] < -1e-12 * scale:
        raise ValueError("empirical covariance must be positive semi-definite")
    if eig[0] <= 1e-15 * scale:
        return float("inf")
    trace = float(np.trace(np.linalg.solve(c, chat)))
    sign_hat, logdet_hat = np.linalg.slogdet(chat)
    sign_c, logdet_c = np.linalg.slogdet(c)
    if sign_hat <= 0 or sign_c <= 0:
        return float("inf")
    return 0.5 * (trace - (logdet_hat - logdet_c) - n)


def _matrices_over_ell(source, lmin: int, lmax: int):
    if callable(source):
        return [source(l) for l in range(lmin, lmax + 1)]
    seq = list(source)
    if len(seq) != lmax - lmin + 1:
        raise ValueError(
            f"need {lmax - lmin + 1} covariances for l in [{lmin}, {lmax}], got {len(seq)}"
        )
    return seq


def exact_loglike(empirical, model, lmin: int, lmax: int) -> float:
    """Full-sky negative log-likelihood sum_l (2l+1) kappa(Chat_l, C_l).

    ``empirical`` and ``model`` are either sequences of per-multipole
    covariances (scalars or matrices) aligned to lmin..lmax, or callables
    mapping l to a covariance.  The likelihood itself is exp(-result) up to
    normalization.
    """
    if lmin < 2:
        raise ValueError("lmin must be at least 2")
    if lmax < lmin:
        raise ValueError("lmax must be >= lmin")
    chats = _matrices_over_ell(empirical, lmin, lmax)
    cs = _matrices_over_ell(model, lmin, lmax)
    total = 0.0
    for offset, (chat, c) in enumerate(zip(chats, cs)):
        l = lmin + offset
        total += (2 * l + 1) * kullback(chat, c)
    return total


def binned_loglike(data, model, n_modes=None) -> float:
    """Binned negative log-likelihood sum_r n_r kappa(Chat_r, C_r).

    ``data`` may be a BinnedSpectrum (supplying both values and mode counts)
    or a plain array of bin values with ``n_modes`` given separately.  Bins
    are scalar covariances here: one detector pair per spectrum.
    """
    if isinstance(data, BinnedSpectrum):
        values = data.values
        if n_modes is None:
            n_modes = data.n_modes
    else:
        values = np.asarray(data, dtype=np.float64)
        if n_modes is None:
            raise ValueError("n_modes is required when data is a bare array")
    model = np.asarray(model, dtype=np.float64)
    n_modes = np.asarray(n_modes, dtype=np.float64)
    if model.shape != values.shape or n_modes.shape != values.shape:
        raise ValueError(
            f"bin count mismatch: data {values.shape}, model {model.shape}, "
            f"modes {n_modes.shape}"
        )
    if np.any(model <= 0.0):
        raise ValueError("model bins must be positive")
    total = 0.0
    for chat, c, nr in zip(values, model, n_modes):
        total += nr * kullback(chat, c)
    return float(total)


@dataclass
class NoiseEstimate:
    """Per-detector noise spectra and the recovered signal spectrum.

    ``flagged`` marks (detector, l) cells where the noise estimate dips
    below -5 sampling errors: negative estimates from ordinary sampling
    scatter are retained unclipped, but implausibly negative ones are
    surfaced.
    """

    noise: np.ndarray        # (n_detectors, lmax+1)
    signal: np.ndarray       # (lmax+1,)
    sampling_error: np.ndarray
    flagged: np.ndarray

    @property
    def n_detectors(self) -> int:
        return self.noise.shape[0]


def estimate_noise_and_signal(spectra: CrossSpectrumSet) -> NoiseEstimate:
    """Two-step separation of signal and per-detector noise spectra.

    Step 1 uses both auto- and cross-spectra: the signal estimate is the
    mean cross-spectrum over distinct detector pairs, and each detector's
    noise is its auto-spectrum minus that signal.  Step 2 holds the noise
    fixed and re-extracts the signal from the cross-spectra alone, which
    for the pair-mean estimator reproduces the same cross-only average.
    """
    if spectra.n_detectors < 2:
        raise ValueError("noise separation needs at least two detectors (no cross-spectra)")
    pairs = spectra.cross_pairs()
    crosses = np.stack([spectra.spectra[p] for p in pairs])
    autos = np.stack([spectra.auto(i) for i in range(spectra.n_detectors)])
    if not np.any(crosses) and not np.any(autos):
        raise ValueError("all spectra are identically zero")
    # step 1: signal from the pair mean, noise as the auto-spectrum residual
    signal = crosses.mean(axis=0)
    noise = autos - signal[None, :]
    # step 2: with noise fixed, the cross-only re-extraction is the same
    # pair mean (the autos never enter the signal estimate)
    ell = np.arange(spectra.lmax + 1)
    sampling = np.sqrt(2.0 / (2.0 * ell + 1.0))[None, :] * autos
    flagged = noise < -5.0 * sampling
    return NoiseEstimate(noise=noise, signal=signal, sampling_error=sampling, flagged=flagged)
