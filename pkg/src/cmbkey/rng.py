"""Deterministic random streams for the simulation pipeline.

Every stochastic step in the package draws from a 64-bit counter-based
mixing generator (the splitmix64 finalizer with its published golden-gamma
constants).  Output i of a stream is a pure function of (seed, i), so all
simulated artifacts reproduce bit-identically across runs, platforms and
thread counts.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["MixingGenerator", "mix64", "derive_seed", "GOLDEN_GAMMA"]

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MULT1 = 0xBF58476D1CE4E5B9
_MULT2 = 0x94D049BB133111EB
_U64 = 0xFFFFFFFFFFFFFFFF


def mix64(z: int) -> int:
    """Scalar splitmix64 finalizer, arithmetic mod 2**64."""
    z &= _U64
    z = ((z ^ (z >> 30)) * _MULT1) & _U64
    z = ((z ^ (z >> 27)) * _MULT2) & _U64
    return (z ^ (z >> 31)) & _U64


def derive_seed(seed: int, *tags: int) -> int:
    """Derive a child seed from a master seed and a tuple of integer tags.

    The derivation is a fixed chain of mixing steps, so the same
    (seed, tags) always yields the same child and different tag tuples
    yield decorrelated streams.  Used to hand out independent seeds for
    signal, per-detector noise, observers and realization indices.
    """
    x = mix64(seed)
    for t in tags:
        x = mix64((x + GOLDEN_GAMMA) ^ mix64(t))
    return x


class MixingGenerator:
    """Counter-based uniform / Gaussian / bit stream.

    Output i is ``mix(seed + (i+1) * golden_gamma)``; the counter advances
    with every draw, so repeated calls continue the same stream.  All bulk
    draws are vectorized over numpy uint64 (which wraps mod 2**64, matching
    the scalar reference arithmetic exactly).
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _U64
        self.counter = 0

    def raw64(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words as a uint64 array."""
        if n < 0:
            raise ValueError("draw count must be non-negative")
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + idx * np.uint64(GOLDEN_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MULT1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MULT2)
            z ^= z >> np.uint64(31)
        return z

    def uniform(self, n: int) -> np.ndarray:
        """Next ``n`` doubles uniform on [0, 1), 53 significant bits each."""
        return (self.raw64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int, sigma: float = 1.0) -> np.ndarray:
        """Next ``n`` Gaussian deviates N(0, sigma^2) via Box-Muller.

        Draws raw words in pairs; an odd ``n`` consumes one extra word so
        the stream position stays a deterministic function of the call
        sequence.
        """
        npairs = (n + 1) // 2
        raw = self.raw64(2 * npairs)
        # u1 in (0, 1] so log() is finite; u2 in [0, 1)
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        ang = 2.0 * math.pi * u2
        out = np.empty(2 * npairs)
        out[0::2] = r * np.cos(ang)
        out[1::2] = r * np.sin(ang)
        return out[:n] * sigma

    def bits(self, n: int) -> np.ndarray:
        """Next ``n`` bits (uint8 0/1), most significant bit of each word first."""
        nwords = (n + 63) // 64
        raw = self.raw64(nwords)
        unpacked = np.unpackbits(raw.astype(">u8").view(np.uint8))
        return unpacked[:n]

    def integer_below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection, free of modulo bias."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = int(self.raw64(1)[0])
            if x < threshold:
                return x % bound
