import numpy as np
import pytest
from scipy.stats import chi2

from cmbkey.entropy import BitStream
from cmbkey.rng import MixingGenerator
from cmbkey.vernam import (
    KeyMatrix,
    LedgerConflictError,
    PadExhaustedError,
    PadLedger,
    base_for_length,
    generate_key_matrix,
    inverse_substitute,
    key_sum,
    substitute,
    vernam_decrypt,
    vernam_encrypt,
)


def bitstream(bit_string, provenance="pad"):
    return BitStream(bits=np.array([int(b) for b in bit_string], dtype=np.uint8),
                     provenance=provenance)


def random_stream(seed, n, provenance="pad"):
    return BitStream(bits=MixingGenerator(seed).bits(n), provenance=provenance)


# ------------------------------------------------------------------ key sums

@pytest.mark.parametrize("n", range(1, 17))
def test_base_table(n):
    assert base_for_length(n) == 18 - n


@pytest.mark.parametrize("n", [0, 17, -3])
def test_base_table_rejects_out_of_range(n):
    with pytest.raises(ValueError):
        base_for_length(n)


def test_key_sum_single_character():
    # "A" = 65, n=1 -> base 17, S = 65 * 17
    assert key_sum("A", 1) == 1105


def test_key_sum_two_characters():
    # "AB" = (65, 66), n=2 -> base 16, S = 65*16 + 66*256
    assert key_sum("AB", 2) == 17936


def test_key_sum_input_forms():
    assert key_sum(b"AB", 2) == key_sum("AB", 2) == key_sum([65, 66], 2)


def test_key_sum_validation():
    with pytest.raises(ValueError, match="characters but n"):
        key_sum("ABC", 2)
    with pytest.raises(ValueError, match="outside"):
        key_sum([300], 1)
    with pytest.raises(ValueError):
        key_sum("A" * 17, 17)


def test_key_sum_fits_64_bits():
    for n in range(1, 17):
        assert key_sum([255] * n, n) < 2**63


# ---------------------------------------------------------------- key matrix

def test_matrix_from_key_sum_is_bijection():
    matrix = generate_key_matrix(key_sum("CMBKEY16CHARKEY!", 16), 16)
    assert matrix.n == 16
    assert matrix.is_bijection
    assert sorted(matrix.flat().tolist()) == list(range(256))


def test_matrix_deterministic_per_source():
    a = generate_key_matrix(1105, 8)
    b = generate_key_matrix(1105, 8)
    c = generate_key_matrix(1106, 8)
    assert np.array_equal(a.entries, b.entries)
    assert not np.array_equal(a.entries, c.entries)


def test_matrix_from_stream_hand_trace():
    # n=2, symbols [0 1 2 3]; widths: i=3 needs 2 bits, i=2 needs 2 bits
    # (3 rejected), i=1 needs 1 bit.
    # bits 10|11|01|1: draw 2 -> swap(3,2); reject 3; draw 1 -> swap(2,1);
    # draw 1 -> swap(1,1). Result row-major: [[0, 3], [1, 2]].
    matrix = generate_key_matrix(bitstream("1011011"), 2)
    assert matrix.entries.tolist() == [[0, 3], [1, 2]]


def test_matrix_stream_single_bit_flip_changes_output():
    differing = 0
    for trial in range(100):
        bits = MixingGenerator(trial).bits(400)
        flipped = bits.copy()
        flipped[trial % 400] ^= 1
        a = generate_key_matrix(BitStream(bits, "a"), 4)
        b = generate_key_matrix(BitStream(flipped, "b"), 4)
        if not np.array_equal(a.entries, b.entries):
            differing += 1
    assert differing >= 99


def test_matrix_stream_exhaustion_reports_shortfall():
    with pytest.raises(PadExhaustedError, match="more needed"):
        generate_key_matrix(bitstream("1010"), 4)


def test_matrix_validation():
    with pytest.raises(ValueError, match="at least 2"):
        generate_key_matrix(123, 1)
    with pytest.raises(ValueError, match="must be"):
        KeyMatrix(2, np.zeros((3, 3), dtype=int))


# -------------------------------------------------------------- substitution

def identity_matrix():
    return KeyMatrix(16, np.arange(256).reshape(16, 16))


def test_substitute_identity():
    data = bytes(range(256))
    assert substitute(data, identity_matrix()) == data


def test_substitute_round_trip():
    matrix = generate_key_matrix(271828, 16)
    data = MixingGenerator(1).raw64(128).tobytes()
    assert inverse_substitute(substitute(data, matrix), matrix) == data


def test_substitute_known_mapping():
    matrix = generate_key_matrix(314159, 16)
    table = matrix.flat()
    data = bytes([0, 17, 255])
    out = substitute(data, matrix)
    assert list(out) == [table[0], table[17], table[255]]


def test_substitute_rejects_non_byte_alphabet():
    small = KeyMatrix(4, np.arange(16).reshape(4, 4))
    with pytest.raises(ValueError, match="16 x 16"):
        substitute(b"ab", small)


def test_substitute_rejects_non_bijection():
    entries = np.arange(256).reshape(16, 16).copy()
    entries[0, 0] = 5  # duplicate
    with pytest.raises(ValueError, match="bijection"):
        substitute(b"ab", KeyMatrix(16, entries))


# -------------------------------------------------------------------- cipher

def test_encrypt_truth_table():
    pad = bitstream("10101010" * 2)
    ledger = PadLedger("t", total_bits=16)
    out = vernam_encrypt(b"\x00\xff", pad, ledger)
    assert out == b"\xaa\x55"
    assert ledger.consumed_bits == 16


def test_zero_pad_is_identity():
    pad = bitstream("0" * 64)
    ledger = PadLedger("t", total_bits=64)
    assert vernam_encrypt(b"hello!", pad, ledger) == b"hello!"
    assert ledger.consumed_bits == 48


def test_encrypt_decrypt_round_trip():
    pad = random_stream(42, 4096)
    for trial in range(20):
        data = MixingGenerator(trial).raw64(4).tobytes()[: 3 + trial]
        enc_ledger = PadLedger("alice", total_bits=4096)
        dec_ledger = PadLedger("bob", total_bits=4096)
        ciphertext = vernam_encrypt(data, pad, enc_ledger)
        assert ciphertext != data
        assert vernam_decrypt(ciphertext, pad, dec_ledger) == data


def test_sequential_encryptions_never_overlap():
    pad = random_stream(7, 256)
    ledger = PadLedger("t", total_bits=256)
    first = vernam_encrypt(b"aaaa", pad, ledger)
    offset_after_first = ledger.consumed_bits
    second = vernam_encrypt(b"aaaa", pad, ledger)
    assert offset_after_first == 32 and ledger.consumed_bits == 64
    # same plaintext, disjoint pad segments: ciphertexts differ
    assert first != second


def test_reuse_attempt_errors():
    pad = random_stream(8, 256)
    ledger = PadLedger("t", total_bits=256)
    vernam_encrypt(b"abc", pad, ledger)
    with pytest.raises(LedgerConflictError, match="already consumed"):
        vernam_encrypt(b"xyz", pad, ledger, offset=0)
    # the failed attempt must not advance the ledger
    assert ledger.consumed_bits == 24


def test_explicit_offset_skips_forward():
    pad = random_stream(9, 256)
    enc = PadLedger("a", total_bits=256)
    dec = PadLedger("b", total_bits=256)
    ciphertext = vernam_encrypt(b"zz", pad, enc, offset=100)
    assert enc.consumed_bits == 116
    assert vernam_decrypt(ciphertext, pad, dec, offset=100) == b"zz"


def test_pad_exhaustion_reports_shortfall():
    pad = random_stream(10, 40)
    ledger = PadLedger("t", total_bits=40)
    with pytest.raises(PadExhaustedError, match="short by 8"):
        vernam_encrypt(b"abcdef", pad, ledger)
    assert ledger.consumed_bits == 0


def test_ledger_validation():
    with pytest.raises(ValueError):
        PadLedger("t", total_bits=10, consumed_bits=11)


def test_ciphertext_bytes_uniform_with_uniform_pad():
    # perfect-secrecy smoke test: a fixed plaintext XORed with a uniform pad
    # gives a uniform byte histogram (chi-square at the 0.001 level)
    n = 10**6
    pad = BitStream(MixingGenerator(123).bits(8 * n), "pad")
    plaintext = (b"attack at dawn! " * (n // 16 + 1))[:n]
    ledger = PadLedger("t", total_bits=8 * n)
    ciphertext = vernam_encrypt(plaintext, pad, ledger)
    counts = np.bincount(np.frombuffer(ciphertext, dtype=np.uint8), minlength=256)
    statistic = float(np.sum((counts - n / 256.0) ** 2) / (n / 256.0))
    assert statistic < chi2.ppf(0.999, 255)
