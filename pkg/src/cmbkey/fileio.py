"""On-disk formats for every pipeline handoff.

Text formats (spectra, binned spectra, matrices, config) are plain UTF-8
with '#' comments.  Binary formats are little-endian with an 8-byte magic:
maps ("CMBMAP01"), bit streams ("CMBBIT01") and pad stores ("CMBPAD01").
The pad store doubles as the persistent ledger; updates rewrite only the
consumed-bits field under an exclusive lock.
"""

from __future__ import annotations

import fcntl
import struct
from pathlib import Path

import numpy as np

from .entropy import BitStream
from .grid import GaussLegendreGrid
from .harmonics import BinnedSpectrum, make_binning
from .skysim import AngularSpectrum, SkyMap
from .vernam import KeyMatrix, PadLedger

__all__ = [
    "read_spectrum_values",
    "read_model_spectrum",
    "write_spectrum",
    "read_map",
    "write_map",
    "read_binned",
    "write_binned",
    "read_bitstream",
    "write_bitstream",
    "read_matrix",
    "write_matrix",
    "read_config",
    "PadStore",
    "create_pad_store",
]

MAP_MAGIC = b"CMBMAP01"
BITS_MAGIC = b"CMBBIT01"
PAD_MAGIC = b"CMBPAD01"


def _data_lines(path: Path):
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def _check_magic(path: Path, got: bytes, expected: bytes):
    if got != expected:
        raise ValueError(
            f"{path}: bad magic {got!r}, expected {expected!r} (corrupt or wrong format)"
        )


# ---------------------------------------------------------------- spectra

def read_spectrum_values(path) -> np.ndarray:
    """Read 'l value' lines; l must be strictly increasing, gaps read as 0."""
    path = Path(path)
    ells, values = [], []
    for line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: expected 'l value' per line, got '{line}'")
        l, v = int(parts[0]), float(parts[1])
        if l < 0:
            raise ValueError(f"{path}: negative multipole {l}")
        if ells and l <= ells[-1]:
            raise ValueError(f"{path}: multipoles must be strictly increasing at l={l}")
        ells.append(l)
        values.append(v)
    if not ells:
        raise ValueError(f"{path}: no spectrum rows found")
    out = np.zeros(ells[-1] + 1)
    out[np.array(ells)] = values
    return out


def read_model_spectrum(path) -> AngularSpectrum:
    """Read a model spectrum file (values must be valid as a model: >= 0)."""
    values = read_spectrum_values(path)
    return AngularSpectrum(lmax=values.size - 1, values=values)


def write_spectrum(path, values, comments: list[str] | None = None):
    path = Path(path)
    lines = [f"# {c}" for c in (comments or [])]
    lines += [f"{l} {v!r}" for l, v in enumerate(np.asarray(values, dtype=np.float64))]
    path.write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------------- maps

def write_map(path, sky: SkyMap):
    path = Path(path)
    grid = sky.grid
    header = MAP_MAGIC + struct.pack("<III", grid.band_limit, grid.n_theta, grid.n_phi)
    body = sky.pixels.astype("<f8").tobytes()
    path.write_bytes(header + body)


def read_map(path, detector_id: str | None = None) -> SkyMap:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 20:
        raise ValueError(f"{path}: truncated map file ({len(blob)} bytes)")
    _check_magic(path, blob[:8], MAP_MAGIC)
    lmax, n_theta, n_phi = struct.unpack("<III", blob[8:20])
    grid = GaussLegendreGrid(lmax)
    if (n_theta, n_phi) != (grid.n_theta, grid.n_phi):
        raise ValueError(
            f"{path}: grid dims ({n_theta}, {n_phi}) inconsistent with lmax={lmax}"
        )
    expected = 20 + 8 * n_theta * n_phi
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(blob)}")
    pixels = np.frombuffer(blob[20:], dtype="<f8").reshape(n_theta, n_phi).copy()
    if detector_id is None:
        detector_id = path.stem
    return SkyMap(grid=grid, pixels=pixels, detector_id=detector_id)


# ---------------------------------------------------------- binned spectra

def write_binned(path, binned: BinnedSpectrum):
    """Lines 'r l_min l_max value n_r'; f_sky and label ride along as comments."""
    path = Path(path)
    lines = [f"# f_sky = {binned.f_sky!r}"]
    if binned.label:
        lines.append(f"# label = {binned.label}")
    for r, (lo, hi) in enumerate(binned.scheme.ranges):
        lines.append(f"{r} {lo} {hi} {binned.values[r]!r} {binned.n_modes[r]!r}")
    path.write_text("\n".join(lines) + "\n")


def read_binned(path) -> BinnedSpectrum:
    path = Path(path)
    f_sky, label = 1.0, ""
    for raw in path.read_text().splitlines():
        stripped = raw.strip()
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if body.startswith("f_sky"):
                f_sky = float(body.split("=", 1)[1])
            elif body.startswith("label"):
                label = body.split("=", 1)[1].strip()
    ranges, values, modes = [], [], []
    expected_r = 0
    for line in _data_lines(path):
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}: expected 'r l_min l_max value n_r', got '{line}'")
        r, lo, hi = int(parts[0]), int(parts[1]), int(parts[2])
        if r != expected_r:
            raise ValueError(f"{path}: bin indices must run 0,1,... (got {r})")
        expected_r += 1
        ranges.append((lo, hi))
        values.append(float(parts[3]))
        modes.append(float(parts[4]))
    if not ranges:
        raise ValueError(f"{path}: no bins found")
    return BinnedSpectrum(
        scheme=make_binning(ranges),
        values=np.array(values),
        n_modes=np.array(modes),
        f_sky=f_sky,
        label=label,
    )


# ------------------------------------------------------------- bit streams

def write_bitstream(path, stream: BitStream):
    path = Path(path)
    prov = stream.provenance.encode("utf-8")
    header = BITS_MAGIC + struct.pack("<IQI", 1, len(stream), len(prov))
    path.write_bytes(header + prov + stream.to_bytes())


def read_bitstream(path) -> BitStream:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 24:
        raise ValueError(f"{path}: truncated bit stream file ({len(blob)} bytes)")
    _check_magic(path, blob[:8], BITS_MAGIC)
    version, bit_count, prov_len = struct.unpack("<IQI", blob[8:24])
    if version != 1:
        raise ValueError(f"{path}: unsupported bit stream version {version}")
    prov_end = 24 + prov_len
    n_bytes = (bit_count + 7) // 8
    if len(blob) != prov_end + n_bytes:
        raise ValueError(f"{path}: expected {prov_end + n_bytes} bytes, found {len(blob)}")
    provenance = blob[24:prov_end].decode("utf-8")
    packed = np.frombuffer(blob[prov_end:], dtype=np.uint8)
    bits = np.unpackbits(packed)[:bit_count]
    return BitStream(bits=bits, provenance=provenance)


# --------------------------------------------------------------- pad store

def create_pad_store(path, stream: BitStream):
    """Initialize a pad store from a bit stream with nothing consumed yet."""
    path = Path(path)
    header = PAD_MAGIC + struct.pack("<IQQ", 1, len(stream), 0)
    path.write_bytes(header + stream.to_bytes())


class PadStore:
    """Persistent pad with its consumption ledger.

    Opened exclusively (flock) for the duration of the context; ``commit``
    rewrites only the consumed-bits field, leaving the pad bits untouched.
    """

    _CONSUMED_OFFSET = 20  # magic(8) + version(4) + total_bits(8)

    def __init__(self, path):
        self.path = Path(path)
        self._fh = None
        self.pad: BitStream | None = None
        self.ledger: PadLedger | None = None

    def __enter__(self) -> "PadStore":
        self._fh = open(self.path, "r+b")
        fcntl.flock(self._fh.fileno(), fcntl.LOCK_EX)
        blob = self._fh.read()
        if len(blob) < 28:
            raise ValueError(f"{self.path}: truncated pad store ({len(blob)} bytes)")
        _check_magic(self.path, blob[:8], PAD_MAGIC)
        version, total_bits, consumed = struct.unpack("<IQQ", blob[8:28])
        if version != 1:
            raise ValueError(f"{self.path}: unsupported pad store version {version}")
        n_bytes = (total_bits + 7) // 8
        if len(blob) != 28 + n_bytes:
            raise ValueError(f"{self.path}: expected {28 + n_bytes} bytes, found {len(blob)}")
        bits = np.unpackbits(np.frombuffer(blob[28:], dtype=np.uint8))[:total_bits]
        self.pad = BitStream(bits=bits, provenance=f"pad[{self.path.name}]")
        self.ledger = PadLedger(pad_id=self.path.name, total_bits=total_bits,
                                consumed_bits=consumed)
        return self

    def commit(self):
        """Persist the ledger position (only the consumed-bits field changes)."""
        self._fh.seek(self._CONSUMED_OFFSET)
        self._fh.write(struct.pack("<Q", self.ledger.consumed_bits))
        self._fh.flush()

    def __exit__(self, exc_type, exc, tb):
        if self._fh is not None:
            fcntl.flock(self._fh.fileno(), fcntl.LOCK_UN)
            self._fh.close()
            self._fh = None
        return False


# ----------------------------------------------------------------- matrix

def write_matrix(path, matrix: KeyMatrix):
    path = Path(path)
    rows = [" ".join(str(c) for c in row) for row in matrix.entries]
    path.write_text(f"{matrix.n}\n" + "\n".join(rows) + "\n")


def read_matrix(path) -> KeyMatrix:
    path = Path(path)
    lines = list(_data_lines(path))
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    n = int(lines[0])
    if len(lines) != n + 1:
        raise ValueError(f"{path}: expected {n} rows, found {len(lines) - 1}")
    entries = [[int(tok) for tok in line.split()] for line in lines[1:]]
    for row in entries:
        if len(row) != n:
            raise ValueError(f"{path}: ragged matrix row (expected {n} entries)")
    return KeyMatrix(n=n, entries=np.array(entries))


# ----------------------------------------------------------------- config

def read_config(path) -> dict[str, str]:
    """Parse 'key = value' lines; later keys override earlier ones."""
    path = Path(path)
    out: dict[str, str] = {}
    for line in _data_lines(path):
        if "=" not in line:
            raise ValueError(f"{path}: expected 'key = value', got '{line}'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
