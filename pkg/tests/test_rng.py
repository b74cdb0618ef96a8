import numpy as np
import pytest

from cmbkey.rng import GOLDEN_GAMMA, MixingGenerator, derive_seed, mix64

# first outputs of the splitmix64 stream for seed 0 (cross-implementation anchor)
SEED0_OUTPUTS = [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_known_outputs_for_seed_zero():
    gen = MixingGenerator(0)
    assert [int(x) for x in gen.raw64(3)] == SEED0_OUTPUTS


def test_scalar_mixer_matches_vectorized_stream():
    gen = MixingGenerator(987654321)
    vec = [int(x) for x in gen.raw64(10)]
    scalar = [mix64((987654321 + (i + 1) * GOLDEN_GAMMA) % 2**64) for i in range(10)]
    assert vec == scalar


def test_counter_continuation():
    one_call = MixingGenerator(7).raw64(10)
    gen = MixingGenerator(7)
    split = np.concatenate([gen.raw64(3), gen.raw64(7)])
    assert np.array_equal(one_call, split)


def test_uniform_range_and_determinism():
    u1 = MixingGenerator(11).uniform(10000)
    u2 = MixingGenerator(11).uniform(10000)
    assert np.array_equal(u1, u2)
    assert np.all(u1 >= 0.0) and np.all(u1 < 1.0)
    assert abs(u1.mean() - 0.5) < 0.02


def test_normal_moments():
    z = MixingGenerator(13).normal(200000)
    assert abs(z.mean()) < 5.0 / np.sqrt(z.size)
    assert abs(z.var() - 1.0) < 5.0 * np.sqrt(2.0 / z.size)


def test_normal_sigma_and_odd_draws():
    base = MixingGenerator(5).normal(7)
    scaled = MixingGenerator(5).normal(7, sigma=2.5)
    assert np.allclose(scaled, 2.5 * base)
    assert base.size == 7


def test_bits_are_msb_first_words():
    bits = MixingGenerator(0).bits(64)
    expected = [int(c) for c in format(SEED0_OUTPUTS[0], "064b")]
    assert bits.tolist() == expected


def test_integer_below_range_and_distribution():
    gen = MixingGenerator(17)
    draws = [gen.integer_below(6) for _ in range(6000)]
    assert min(draws) == 0 and max(draws) == 5
    counts = np.bincount(draws, minlength=6)
    # 5 sigma around the binomial expectation of 1000 per cell
    assert np.all(np.abs(counts - 1000) < 5 * np.sqrt(1000 * 5 / 6))


def test_integer_below_rejects_bad_bound():
    with pytest.raises(ValueError):
        MixingGenerator(1).integer_below(0)


def test_derive_seed_stability_and_separation():
    a = derive_seed(42, 1, 0)
    assert a == derive_seed(42, 1, 0)
    others = {derive_seed(42, 1, 1), derive_seed(42, 2, 0), derive_seed(43, 1, 0)}
    assert a not in others
    assert len(others) == 3
