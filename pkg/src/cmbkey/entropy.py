"""Bit harvesting from binned band powers, key combination, FIPS health tests.

Bits are taken from fluctuations of measured band powers strictly below the
per-bin noise scale: each bin is quantized at sigma_r / 2**(k + g) and the k
low-order bits of the quantized value are emitted.  Keys combine two
independent streams by XOR.  The four FIPS 140-2 power-up tests (monobit,
poker, runs, long run) gate a 20,000-bit sample with the published
thresholds, compiled in below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .harmonics import BinnedSpectrum
from .rng import MixingGenerator

__all__ = [
    "BitStream",
    "ExtractionPolicy",
    "harvest_bits",
    "combine_keys",
    "von_neumann",
    "generator_stream",
    "fips_monobit",
    "fips_poker",
    "fips_runs",
    "fips_longrun",
    "fips_all",
    "fips_report",
    "agreement_fraction",
    "FIPS_SAMPLE_BITS",
    "MONOBIT_BOUNDS",
    "POKER_BOUNDS",
    "RUNS_BOUNDS",
    "LONGRUN_LIMIT",
]

# FIPS 140-2 power-up test constants (20,000-bit sample)
FIPS_SAMPLE_BITS = 20000
MONOBIT_BOUNDS = (9725, 10275)          # open interval on the ones count
POKER_BOUNDS = (2.16, 46.17)            # open interval on the poker statistic
RUNS_BOUNDS = (                          # closed intervals per run length 1..5, 6+
    (2315, 2685),
    (1114, 1386),
    (527, 723),
    (240, 384),
    (103, 209),
    (103, 209),
)
LONGRUN_LIMIT = 26                       # fail on any run of this length or more


@dataclass
class BitStream:
    """Ordered bits with provenance metadata.

    ``provenance`` records where the bits came from (source label, policy,
    seed lineage); harvested streams always carry a non-empty label so that
    independence checks in key combination have something to compare.
    """

    bits: np.ndarray
    provenance: str = ""
    degenerate: bool = False

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 1:
            raise ValueError("bits must be a flat sequence")
        if self.bits.size and self.bits.max() > 1:
            raise ValueError("bits must be 0 or 1")

    def __len__(self) -> int:
        return int(self.bits.size)

    def to_bytes(self) -> bytes:
        """Pack most-significant-bit first, final byte zero-padded."""
        return np.packbits(self.bits).tobytes()


@dataclass(frozen=True)
class ExtractionPolicy:
    """How band-power digits become bits.

    ``bits_per_bin`` low-order bits are kept per bin; the quantum sits
    2**guard_factor below the per-bin noise scale, so every harvested bit
    lies under the noise floor.  Optional von Neumann whitening debiases
    the concatenated stream.
    """

    bits_per_bin: int = 4
    guard_factor: int = 4
    whitening: str = "none"

    def __post_init__(self):
        if not 1 <= self.bits_per_bin <= 16:
            raise ValueError("bits_per_bin must lie in [1, 16]")
        if self.guard_factor < 2:
            raise ValueError("guard_factor must be at least 2")
        if self.whitening not in ("none", "von-neumann"):
            raise ValueError(f"unknown whitening '{self.whitening}'")


def harvest_bits(data: BinnedSpectrum, model, policy: ExtractionPolicy) -> BitStream:
    """Extract sub-noise bits from measured band powers.

    Per bin r: the noise scale is sigma_r = C_r * sqrt(2 / n_r) from the
    model band power and the effective mode count; the quantum is
    q_r = sigma_r / 2**(k+g); the k low-order bits of floor(Chat_r / q_r)
    are emitted most-significant first (two's complement for negative
    fluctuations).  Bins concatenate in bin order; whitening applies last.
    """
    model = np.asarray(model, dtype=np.float64)
    if model.shape != data.values.shape:
        raise ValueError(f"model bins {model.shape} do not match data bins {data.values.shape}")
    if data.values.size == 0:
        raise ValueError("empty binning scheme")
    if np.any(model <= 0.0):
        raise ValueError("model bins must be positive to set the noise scale")
    k = policy.bits_per_bin
    shift = 2 ** (k + policy.guard_factor)
    sigma = model * np.sqrt(2.0 / data.n_modes)
    quantum = sigma / shift
    bits = np.empty(data.values.size * k, dtype=np.uint8)
    for r, (value, q) in enumerate(zip(data.values, quantum)):
        level = math.floor(value / q) % (1 << k)
        for j in range(k):
            bits[r * k + j] = (level >> (k - 1 - j)) & 1
    if policy.whitening == "von-neumann":
        bits = von_neumann(bits)
    provenance = (
        f"harvest[{data.label or 'binned'}]"
        f" k={k} g={policy.guard_factor} whitening={policy.whitening}"
    )
    degenerate = bits.size > 0 and not bits.any()
    return BitStream(bits=bits, provenance=provenance, degenerate=degenerate)


def von_neumann(bits: np.ndarray) -> np.ndarray:
    """Von Neumann debiasing: keep the first bit of each discordant pair."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.size - bits.size % 2
    first, second = bits[0:n:2], bits[1:n:2]
    return first[first != second]


def generator_stream(seed: int, n_bits: int) -> BitStream:
    """Reference mixing-generator bit stream (the locally seeded source for V)."""
    gen = MixingGenerator(seed)
    return BitStream(bits=gen.bits(n_bits), provenance=f"mixgen[seed={seed}]")


def combine_keys(v: BitStream, w: BitStream) -> BitStream:
    """Key construction K = V xor W from independent equal-length streams.

    Independence is enforced through provenance: combining two streams with
    the same label is rejected, since XORing a stream with itself (or a
    sibling) destroys the entropy guarantee.
    """
    if len(v) != len(w):
        raise ValueError(f"length mismatch: V has {len(v)} bits, W has {len(w)}")
    if not v.provenance or not w.provenance:
        raise ValueError("both streams must carry provenance")
    if v.provenance == w.provenance:
        raise ValueError("independence violation: V and W share provenance "
                         f"'{v.provenance}'")
    return BitStream(
        bits=np.bitwise_xor(v.bits, w.bits),
        provenance=f"xor({v.provenance}, {w.provenance})",
    )


def _require_sample(stream) -> np.ndarray:
    bits = stream.bits if isinstance(stream, BitStream) else np.asarray(stream, dtype=np.uint8)
    if bits.size != FIPS_SAMPLE_BITS:
        raise ValueError(f"FIPS tests need exactly {FIPS_SAMPLE_BITS} bits, got {bits.size}")
    return bits


def fips_monobit(stream):
    """Ones count must fall strictly inside (9725, 10275)."""
    bits = _require_sample(stream)
    ones = int(bits.sum())
    lo, hi = MONOBIT_BOUNDS
    return lo < ones < hi, ones


def fips_poker(stream):
    """Chi-square-like statistic over 5000 non-overlapping 4-bit segments."""
    bits = _require_sample(stream)
    nibbles = bits.reshape(-1, 4).astype(np.int64) @ np.array([8, 4, 2, 1])
    counts = np.bincount(nibbles, minlength=16).astype(np.float64)
    x = (16.0 / 5000.0) * float(np.dot(counts, counts)) - 5000.0
    lo, hi = POKER_BOUNDS
    return lo < x < hi, x


def _run_lengths(bits: np.ndarray):
    """(value, length) for each maximal run."""
    if bits.size == 0:
        return []
    change = np.flatnonzero(np.diff(bits)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [bits.size]])
    return [(int(bits[s]), int(e - s)) for s, e in zip(starts, ends)]


def fips_runs(stream):
    """Counts of runs of each length 1..5 and 6+, for zeros and ones separately.

    Passes when all twelve counts land inside the corresponding closed
    interval.  Returns the counts as {0: [...], 1: [...]}.
    """
    bits = _require_sample(stream)
    counts = {0: [0] * 6, 1: [0] * 6}
    for value, length in _run_lengths(bits):
        counts[value][min(length, 6) - 1] += 1
    passed = all(
        lo <= counts[gender][i] <= hi
        for gender in (0, 1)
        for i, (lo, hi) in enumerate(RUNS_BOUNDS)
    )
    return passed, counts


def fips_longrun(stream):
    """No run of either bit may reach 26."""
    bits = _require_sample(stream)
    longest = max((length for _, length in _run_lengths(bits)), default=0)
    return longest < LONGRUN_LIMIT, longest


def fips_all(stream) -> dict:
    """All four power-up tests; values are (passed, statistic) pairs."""
    return {
        "monobit": fips_monobit(stream),
        "poker": fips_poker(stream),
        "runs": fips_runs(stream),
        "longrun": fips_longrun(stream),
    }


def fips_report(stream) -> tuple[str, bool]:
    """Plain-text report, one '<name> <statistic> <pass|fail>' line per test."""
    results = fips_all(stream)
    lines = []
    all_pass = True
    for name, (passed, stat) in results.items():
        if name == "runs":
            stat_text = "|".join(",".join(str(c) for c in stat[g]) for g in (0, 1))
        elif isinstance(stat, float):
            stat_text = f"{stat:.4f}"
        else:
            stat_text = str(stat)
        lines.append(f"{name} {stat_text} {'pass' if passed else 'fail'}")
        all_pass &= passed
    return "\n".join(lines) + "\n", all_pass


def agreement_fraction(a: BitStream, b: BitStream) -> float:
    """Fraction of positions where two equal-length streams agree."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("streams must be non-empty")
    return float(np.mean(a.bits == b.bits))
