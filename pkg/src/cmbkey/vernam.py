"""One-time-pad cipher, key sums, and the n x n random key matrix.

The key sum folds character codes into an integer with a base that shrinks
as the key grows (base = 18 - length for lengths 1..16).  A key matrix is a
random permutation of the n^2 symbol codes; byte substitution routes data
through a 16 x 16 matrix and back.  Pad consumption is tracked in a ledger
so no pad bit is ever used twice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entropy import BitStream
from .rng import MixingGenerator

__all__ = [
    "base_for_length",
    "key_sum",
    "KeyMatrix",
    "generate_key_matrix",
    "substitute",
    "inverse_substitute",
    "PadLedger",
    "PadExhaustedError",
    "LedgerConflictError",
    "vernam_encrypt",
    "vernam_decrypt",
]

MIN_KEY_LENGTH = 1
MAX_KEY_LENGTH = 16


class PadExhaustedError(RuntimeError):
    """Raised when an operation needs more pad bits than remain."""


class LedgerConflictError(RuntimeError):
    """Raised when an operation would reuse already-consumed pad bits."""


def base_for_length(n: int) -> int:
    """Base paired with a key of length n: 18 - n for n in [1, 16]."""
    if not MIN_KEY_LENGTH <= n <= MAX_KEY_LENGTH:
        raise ValueError(f"key length {n} outside [{MIN_KEY_LENGTH}, {MAX_KEY_LENGTH}]")
    return 18 - n


def _codes(key) -> list[int]:
    if isinstance(key, str):
        codes = [ord(ch) for ch in key]
    elif isinstance(key, (bytes, bytearray)):
        codes = list(key)
    else:
        codes = [int(c) for c in key]
    for c in codes:
        if not 0 <= c <= 255:
            raise ValueError(f"character code {c} outside [0, 255]")
    return codes


def key_sum(key, n: int) -> int:
    """Key sum S = sum_{i=1..n} C_i * b**i with b = 18 - n.

    The exponent starts at 1, so the first character is multiplied by b,
    not 1.  Fits comfortably in 64 bits for every valid length.
    """
    b = base_for_length(n)
    codes = _codes(key)
    if len(codes) != n:
        raise ValueError(f"key has {len(codes)} characters but n = {n}")
    return sum(c * b ** (i + 1) for i, c in enumerate(codes))


@dataclass
class KeyMatrix:
    """n x n arrangement of the symbol codes 0 .. n^2 - 1."""

    n: int
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.int64)
        if self.entries.shape != (self.n, self.n):
            raise ValueError(f"matrix must be {self.n} x {self.n}, got {self.entries.shape}")

    @property
    def is_bijection(self) -> bool:
        """True when every symbol 0..n^2-1 appears exactly once."""
        flat = np.sort(self.entries.ravel())
        return bool(np.array_equal(flat, np.arange(self.n * self.n)))

    def flat(self) -> np.ndarray:
        """Row-major symbol order (the substitution table)."""
        return self.entries.ravel()


class _BitDrawSource:
    """Unbiased bounded draws from a bit stream via rejection sampling."""

    def __init__(self, stream: BitStream):
        self.bits = stream.bits
        self.pos = 0

    def integer_below(self, bound: int) -> int:
        width = max((bound - 1).bit_length(), 1)
        while True:
            if self.pos + width > self.bits.size:
                raise PadExhaustedError(
                    f"bit stream exhausted after {self.pos} of {self.bits.size} bits; "
                    f"at least {self.pos + width - self.bits.size} more needed"
                )
            chunk = self.bits[self.pos : self.pos + width]
            self.pos += width
            value = 0
            for b in chunk:
                value = (value << 1) | int(b)
            if value < bound:
                return value


def generate_key_matrix(source, n: int) -> KeyMatrix:
    """Fisher-Yates shuffle of the n^2 symbols, driven by a key sum or bit stream.

    An integer source seeds the mixing generator; a BitStream source is
    consumed directly, with rejection sampling so draws stay unbiased.
    Either way the matrix is a deterministic function of the source.
    """
    if n < 2:
        raise ValueError("matrix dimension must be at least 2")
    if isinstance(source, BitStream):
        draws = _BitDrawSource(source)
    else:
        draws = MixingGenerator(int(source))
    symbols = np.arange(n * n, dtype=np.int64)
    for i in range(n * n - 1, 0, -1):
        j = draws.integer_below(i + 1)
        symbols[i], symbols[j] = symbols[j], symbols[i]
    return KeyMatrix(n=n, entries=symbols.reshape(n, n))


def _substitution_table(matrix: KeyMatrix) -> np.ndarray:
    if matrix.n * matrix.n != 256:
        raise ValueError(
            f"byte substitution needs a 16 x 16 matrix covering all 256 codes, "
            f"got {matrix.n} x {matrix.n}"
        )
    if not matrix.is_bijection:
        raise ValueError("matrix is not a bijection over the symbol alphabet")
    return matrix.flat().astype(np.uint8)


def substitute(data: bytes, matrix: KeyMatrix) -> bytes:
    """Map each byte through the matrix read in row-major order."""
    table = _substitution_table(matrix)
    return table[np.frombuffer(data, dtype=np.uint8)].tobytes()


def inverse_substitute(data: bytes, matrix: KeyMatrix) -> bytes:
    """Inverse of :func:`substitute`."""
    table = _substitution_table(matrix)
    inverse = np.empty(256, dtype=np.uint8)
    inverse[table] = np.arange(256, dtype=np.uint8)
    return inverse[np.frombuffer(data, dtype=np.uint8)].tobytes()


@dataclass
class PadLedger:
    """Monotone record of consumed pad bits; enforces the one-time property."""

    pad_id: str
    total_bits: int
    consumed_bits: int = 0

    def __post_init__(self):
        if not 0 <= self.consumed_bits <= self.total_bits:
            raise ValueError("consumed bits must lie in [0, total_bits]")


def _pad_xor(data: bytes, pad: BitStream, ledger: PadLedger, offset) -> tuple[bytes, int]:
    if offset is None:
        offset = ledger.consumed_bits
    if offset < ledger.consumed_bits:
        raise LedgerConflictError(
            f"pad offset {offset} already consumed (ledger at {ledger.consumed_bits})"
        )
    need = 8 * len(data)
    available = min(ledger.total_bits, len(pad))
    if offset + need > available:
        raise PadExhaustedError(
            f"need {need} pad bits at offset {offset} but only "
            f"{max(available - offset, 0)} remain (short by {offset + need - available})"
        )
    pad_bytes = np.packbits(pad.bits[offset : offset + need])
    out = np.bitwise_xor(np.frombuffer(data, dtype=np.uint8), pad_bytes).tobytes()
    # commit only after the XOR succeeded
    ledger.consumed_bits = offset + need
    return out, offset


def vernam_encrypt(plaintext: bytes, pad: BitStream, ledger: PadLedger,
                   offset: int | None = None) -> bytes:
    """XOR the plaintext with the next unconsumed pad bytes.

    The ledger advances atomically; an explicit ``offset`` below the ledger
    position is a reuse attempt and raises LedgerConflictError.
    """
    out, _ = _pad_xor(plaintext, pad, ledger, offset)
    return out


def vernam_decrypt(ciphertext: bytes, pad: BitStream, ledger: PadLedger,
                   offset: int | None = None) -> bytes:
    """Same XOR applied at the same pad offset recovers the plaintext."""
    out, _ = _pad_xor(ciphertext, pad, ledger, offset)
    return out
