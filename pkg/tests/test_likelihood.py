import math

import numpy as np
import pytest

from cmbkey.grid import GaussLegendreGrid
from cmbkey.harmonics import (
    CrossSpectrumSet,
    analyze_map,
    bin_spectrum,
    cross_spectrum_set,
    effective_modes,
    make_binned_spectrum,
    make_binning,
)
from cmbkey.likelihood import (
    binned_loglike,
    estimate_noise_and_signal,
    exact_loglike,
    kullback,
)
from cmbkey.rng import MixingGenerator, derive_seed
from cmbkey.skysim import ToyModelParams, add_noise, fiducial_spectrum, synthesize_alm, synthesize_map


def random_spd(gen: MixingGenerator, dim: int) -> np.ndarray:
    a = gen.normal(dim * dim).reshape(dim, dim)
    return a @ a.T + dim * np.eye(dim)


# ------------------------------------------------------------------ kullback

def test_kullback_identity_is_zero():
    gen = MixingGenerator(101)
    for dim in (1, 2, 3, 4):
        c = random_spd(gen, dim)
        assert abs(kullback(c, c)) <= 1e-12


def test_kullback_scalar_case():
    expected = 0.5 * (2.0 - math.log(2.0) - 1.0)
    assert expected == pytest.approx(0.1534264, abs=1e-7)
    assert kullback(2.0, 1.0) == pytest.approx(expected, abs=1e-12)


def test_kullback_diagonal_case():
    expected = 0.5 * (5.0 - math.log(6.0) - 2.0)
    assert expected == pytest.approx(0.6041, abs=5e-5)
    assert kullback(np.diag([2.0, 3.0]), np.eye(2)) == pytest.approx(expected, abs=1e-12)


def test_kullback_non_negative_on_random_pairs():
    gen = MixingGenerator(202)
    for _ in range(200):
        dim = 1 + gen.integer_below(4)
        chat, c = random_spd(gen, dim), random_spd(gen, dim)
        assert kullback(chat, c) >= -1e-12


def test_kullback_positive_when_different():
    assert kullback(2.0, 1.0) > 1e-3
    assert kullback(np.diag([1.0, 4.0]), np.eye(2)) > 1e-2


def test_kullback_congruence_invariance():
    # kappa depends only on Chat C^-1 up to similarity: joint congruence by
    # any invertible A leaves it unchanged
    gen = MixingGenerator(303)
    for _ in range(50):
        dim = 1 + gen.integer_below(4)
        chat, c = random_spd(gen, dim), random_spd(gen, dim)
        a = gen.normal(dim * dim).reshape(dim, dim) + 2.0 * np.eye(dim)
        before = kullback(chat, c)
        after = kullback(a @ chat @ a.T, a @ c @ a.T)
        assert after == pytest.approx(before, abs=1e-9, rel=1e-9)


def test_kullback_rejects_bad_inputs():
    with pytest.raises(ValueError, match="symmetric"):
        kullback(np.array([[1.0, 0.5], [0.0, 1.0]]), np.eye(2))
    with pytest.raises(ValueError, match="positive definite"):
        kullback(np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(ValueError, match="semi-definite"):
        kullback(np.diag([1.0, -0.5]), np.eye(2))
    with pytest.raises(ValueError, match="dimension"):
        kullback(np.eye(2), np.eye(3))


def test_kullback_singular_empirical_is_infinite():
    assert kullback(np.diag([1.0, 0.0]), np.eye(2)) == math.inf


# ------------------------------------------------------------ exact loglike

def test_exact_loglike_zero_at_truth():
    model = [np.diag([2.0, 1.0]) for _ in range(5)]
    assert exact_loglike(model, model, 2, 6) == pytest.approx(0.0, abs=1e-12)


def test_exact_loglike_single_multipole_scalar():
    expected = 5.0 * 0.5 * (2.0 - math.log(2.0) - 1.0)
    assert expected == pytest.approx(0.7671, abs=5e-5)
    assert exact_loglike([2.0], [1.0], 2, 2) == pytest.approx(expected, abs=1e-12)


def test_exact_loglike_additive_over_ranges():
    gen = MixingGenerator(404)
    chats = 1.0 + gen.uniform(9)
    cs = 1.0 + gen.uniform(9)
    whole = exact_loglike(chats, cs, 2, 10)
    left = exact_loglike(chats[:4], cs[:4], 2, 5)
    right = exact_loglike(chats[4:], cs[4:], 6, 10)
    assert whole == pytest.approx(left + right, rel=1e-14)


def test_exact_loglike_increases_when_model_scales_away():
    truth = [1.0 + 0.1 * l for l in range(2, 12)]
    at_truth = exact_loglike(truth, truth, 2, 11)
    doubled = exact_loglike(truth, [2.0 * c for c in truth], 2, 11)
    quadrupled = exact_loglike(truth, [4.0 * c for c in truth], 2, 11)
    assert at_truth == pytest.approx(0.0, abs=1e-12)
    assert doubled > at_truth
    assert quadrupled > doubled


def test_exact_loglike_callable_model():
    value = exact_loglike(lambda l: 2.0, lambda l: 1.0, 2, 2)
    assert value == pytest.approx(5.0 * kullback(2.0, 1.0), rel=1e-14)


def test_exact_loglike_input_validation():
    with pytest.raises(ValueError, match="lmin"):
        exact_loglike([1.0], [1.0], 1, 1)
    with pytest.raises(ValueError, match="need 3"):
        exact_loglike([1.0, 1.0], [1.0, 1.0, 1.0], 2, 4)


# ------------------------------------------------------------ binned loglike

def test_binned_loglike_zero_at_truth():
    data = np.array([1.0, 2.0, 3.0])
    assert binned_loglike(data, data, np.array([5.0, 7.0, 9.0])) == pytest.approx(0.0, abs=1e-12)


def test_binned_loglike_scalar_scaling():
    expected = 10.0 * 0.5 * (2.0 - math.log(2.0) - 1.0)
    assert expected == pytest.approx(1.534264, abs=5e-6)
    value = binned_loglike(np.array([2.0]), np.array([1.0]), np.array([10.0]))
    assert value == pytest.approx(expected, abs=1e-12)


def test_binned_loglike_joint_rescaling_invariance():
    gen = MixingGenerator(505)
    data = 1.0 + gen.uniform(6)
    model = 1.0 + gen.uniform(6)
    modes = 5.0 + gen.uniform(6) * 20.0
    base = binned_loglike(data, model, modes)
    scaled = binned_loglike(3.7 * data, 3.7 * model, modes)
    assert scaled == pytest.approx(base, rel=1e-12)


def test_binned_loglike_accepts_binned_spectrum():
    scheme = make_binning([(2, 3), (4, 6)])
    data = make_binned_spectrum(np.arange(1.0, 8.0), scheme, 1.0)
    model = data.values.copy()
    assert binned_loglike(data, model) == pytest.approx(0.0, abs=1e-12)


def test_binned_loglike_validation():
    with pytest.raises(ValueError, match="mismatch"):
        binned_loglike(np.ones(3), np.ones(2), np.ones(3))
    with pytest.raises(ValueError, match="positive"):
        binned_loglike(np.ones(2), np.array([1.0, 0.0]), np.ones(2))
    with pytest.raises(ValueError, match="n_modes"):
        binned_loglike(np.ones(2), np.ones(2))


def test_binned_matches_exact_for_single_multipole_bins():
    # single-l bins with full-sky mode counts reproduce the exact form
    lmin, lmax = 2, 12
    gen = MixingGenerator(606)
    chats = 1.0 + gen.uniform(lmax - lmin + 1)
    cs = 1.0 + gen.uniform(lmax - lmin + 1)
    scheme = make_binning([(l, l) for l in range(lmin, lmax + 1)])
    modes = effective_modes(scheme, 1.0)
    exact = exact_loglike(chats, cs, lmin, lmax)
    binned = binned_loglike(chats, cs, modes)
    assert abs(binned - exact) < 1e-10


# ----------------------------------------------------- noise/signal two-step

def simulate_pair_spectra(lmax, sigma, n_detectors, seed, realization):
    """Noisy multi-detector observation of one sky, as a cross-spectrum set."""
    grid = GaussLegendreGrid(lmax)
    spec = fiducial_spectrum(ToyModelParams(5000.0, 30.0), lmax)
    signal = synthesize_map(synthesize_alm(spec, derive_seed(seed, 1, realization)), grid)
    alms = []
    for det in range(n_detectors):
        noisy = add_noise(signal, sigma, derive_seed(seed, 2, realization, det))
        alms.append(analyze_map(noisy, lmax))
    return cross_spectrum_set(alms)


def white_noise_spectrum_level(grid: GaussLegendreGrid, sigma: float) -> float:
    """Expected pseudo-spectrum of white pixel noise: flat across l.

    E|n_lm|^2 = sigma^2 * sum_p w_p^2 * |Y_lm(p)|^2 summed over pixels; by
    the addition theorem the m-average is sigma^2 * sum_p w_p^2 / (4 pi).
    """
    w = grid.pixel_weights()
    return sigma**2 * float(np.sum(w**2)) / (4.0 * np.pi)


def test_noiseless_observation_gives_zero_noise():
    spectra = simulate_pair_spectra(16, 0.0, 3, seed=808, realization=0)
    estimate = estimate_noise_and_signal(spectra)
    # identical maps: the noise estimate vanishes up to float rounding
    assert np.max(np.abs(estimate.noise)) < 1e-9
    inside = slice(2, None)
    assert np.all(
        np.abs(estimate.noise[:, inside]) < 5.0 * estimate.sampling_error[:, inside] + 1e-30
    )
    assert not estimate.flagged.any()


def test_injected_noise_recovered():
    lmax, sigma = 32, 40.0
    level = white_noise_spectrum_level(GaussLegendreGrid(lmax), sigma)
    recovered = []
    for realization in range(20):
        spectra = simulate_pair_spectra(lmax, sigma, 2, seed=909, realization=realization)
        estimate = estimate_noise_and_signal(spectra)
        recovered.append(estimate.noise[:, 10:].mean())
    assert np.mean(recovered) == pytest.approx(level, rel=0.25)


def test_signal_recovery_unbiased():
    lmax = 16
    spec = fiducial_spectrum(ToyModelParams(5000.0, 30.0), lmax)
    signals = []
    for realization in range(200):
        spectra = simulate_pair_spectra(lmax, 30.0, 2, seed=111, realization=realization)
        signals.append(estimate_noise_and_signal(spectra).signal)
    signals = np.array(signals)
    mean = signals.mean(axis=0)
    stderr = signals.std(axis=0, ddof=1) / np.sqrt(signals.shape[0])
    inside = slice(2, lmax + 1)
    assert np.all(np.abs(mean[inside] - spec.values[inside]) < 5.0 * stderr[inside])


def test_negative_noise_is_flagged_not_clipped():
    spectra = CrossSpectrumSet(n_detectors=2, lmax=4)
    auto = np.full(5, 1.0)
    cross = np.full(5, 50.0)  # absurd: signal estimate far above the autos
    spectra.spectra = {(0, 0): auto, (1, 1): auto, (0, 1): cross}
    estimate = estimate_noise_and_signal(spectra)
    assert np.all(estimate.noise < 0.0)  # retained, not clipped
    assert estimate.flagged.any()


def test_two_step_validation_errors():
    single = CrossSpectrumSet(n_detectors=1, lmax=4, spectra={(0, 0): np.ones(5)})
    with pytest.raises(ValueError, match="two detectors"):
        estimate_noise_and_signal(single)
    zeros = CrossSpectrumSet(
        n_detectors=2, lmax=4,
        spectra={(0, 0): np.zeros(5), (1, 1): np.zeros(5), (0, 1): np.zeros(5)},
    )
    with pytest.raises(ValueError, match="zero"):
        estimate_noise_and_signal(zeros)
