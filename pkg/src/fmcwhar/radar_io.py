"""Reading and writing raw FMCW radar recordings.

Two codecs are supported, selected by file extension:

- ``.dat``  ASCII, one entry per line. Lines 1-4 hold the real-valued
  header (carrier frequency, chirp duration, samples per chirp,
  bandwidth); every following line is one complex echo sample written
  as ``re+imi`` (Matlab-style trailing ``i``; ``j`` is accepted too).
- ``.datb`` binary, little-endian: magic ``FMCW``, u32 version=1,
  4 x f64 header, u64 payload count, then interleaved (re, im) f64
  pairs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

_DATB_MAGIC = b"FMCW"
_DATB_VERSION = 1
_DATB_HEADER = struct.Struct("<4sI4dQ")


class RadarIoError(ValueError):
    """Base class for recording parse/write failures."""


class TruncatedHeader(RadarIoError):
    """Stream ended before the four header entries."""


class NonPositiveParam(RadarIoError):
    """A header parameter was zero or negative."""


class EmptyPayload(RadarIoError):
    """Stream contains no complete chirp."""


class ShapeMismatch(RadarIoError):
    """Echo matrix does not agree with its parameter block."""


@dataclass(frozen=True)
class RadarParams:
    """FMCW system parameters; every downstream resolution derives from these."""

    carrier_freq_hz: float
    chirp_duration_s: float
    samples_per_chirp: int
    bandwidth_hz: float

    def __post_init__(self):
        for name in ("carrier_freq_hz", "chirp_duration_s", "samples_per_chirp", "bandwidth_hz"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise NonPositiveParam(f"{name} must be finite and > 0, got {value!r}")
        if int(self.samples_per_chirp) != self.samples_per_chirp:
            raise NonPositiveParam(
                f"samples_per_chirp must be an integer, got {self.samples_per_chirp!r}"
            )
        object.__setattr__(self, "samples_per_chirp", int(self.samples_per_chirp))

    @property
    def sample_rate_hz(self) -> float:
        return self.samples_per_chirp / self.chirp_duration_s

    @property
    def chirp_slope_hz_per_s(self) -> float:
        return self.bandwidth_hz / self.chirp_duration_s

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def chirp_rate_hz(self) -> float:
        """Chirp repetition frequency (slow-time sampling rate)."""
        return 1.0 / self.chirp_duration_s

    @property
    def range_bin_m(self) -> float:
        """Range extent of one fast-time DFT bin: c / (2 B)."""
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)


@dataclass(frozen=True)
class EchoMatrix:
    """Complex slow-time x fast-time sample grid, one row per chirp."""

    params: RadarParams
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 2:
            raise ShapeMismatch(f"echo data must be 2-D, got ndim={data.ndim}")
        if data.shape[0] < 1:
            raise ShapeMismatch("echo must hold at least one chirp")
        if data.shape[1] != self.params.samples_per_chirp:
            raise ShapeMismatch(
                f"echo has {data.shape[1]} samples per chirp, "
                f"params say {self.params.samples_per_chirp}"
            )
        object.__setattr__(self, "data", data)

    @property
    def n_chirps(self) -> int:
        return self.data.shape[0]


class ParsedRecording(NamedTuple):
    params: RadarParams
    echo: EchoMatrix
    discarded_entries: int


def _parse_complex_token(token: str, lineno: int) -> complex:
    s = "".join(token.split())
    if not s:
        raise RadarIoError(f"line {lineno}: empty entry")
    # Matlab files use a trailing 'i'; don't touch 'inf'/'nan' spellings.
    if s[-1] in "iI":
        s = s[:-1] + "j"
    try:
        return complex(s)
    except ValueError as exc:
        raise RadarIoError(f"line {lineno}: cannot parse entry {token!r}") from exc


def _format_complex(value: complex) -> str:
    re, im = float(value.real), float(value.imag)
    sign = "+" if (im >= 0 or np.isnan(im)) else ""
    return f"{re!r}{sign}{im!r}i"


def _entries_from_ascii(raw: bytes) -> list[complex]:
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise RadarIoError(f"not an ASCII recording: {exc}") from exc
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            entries.append(_parse_complex_token(line, lineno))
    return entries


def _entries_from_binary(raw: bytes) -> list[complex]:
    if len(raw) < _DATB_HEADER.size:
        raise TruncatedHeader(
            f"binary stream holds {len(raw)} bytes, header needs {_DATB_HEADER.size}"
        )
    magic, version, f0, tc, ns, bw, count = _DATB_HEADER.unpack_from(raw)
    if magic != _DATB_MAGIC:
        raise RadarIoError(f"bad magic {magic!r}, expected {_DATB_MAGIC!r}")
    if version != _DATB_VERSION:
        raise RadarIoError(f"unsupported version {version}")
    expected = _DATB_HEADER.size + 16 * count
    if len(raw) < expected:
        raise RadarIoError(
            f"payload truncated: header declares {count} entries "
            f"({expected} bytes), stream holds {len(raw)}"
        )
    flat = np.frombuffer(raw, dtype="<f8", count=2 * count, offset=_DATB_HEADER.size)
    payload = flat[0::2] + 1j * flat[1::2]
    return [complex(f0), complex(tc), complex(ns), complex(bw)] + payload.tolist()


def parse_dat(raw: bytes, codec: str = "ascii") -> ParsedRecording:
    """Parse a raw recording into (params, echo, discarded entry count).

    The first four entries populate the parameter block in the order
    carrier frequency, chirp duration, samples per chirp, bandwidth.
    Remaining entries are reshaped row-major into (n_chirps, N_s); a
    trailing partial chirp is dropped and reported, never zero-padded.
    """
    if codec == "ascii":
        entries = _entries_from_ascii(raw)
    elif codec == "binary":
        entries = _entries_from_binary(raw)
    else:
        raise ValueError(f"unknown codec {codec!r}")

    if len(entries) < 4:
        raise TruncatedHeader(f"stream holds {len(entries)} entries, header needs 4")

    header = entries[:4]
    for i, value in enumerate(header):
        if value.imag != 0.0:
            raise RadarIoError(f"header entry {i + 1} is not real-valued: {value}")
    params = RadarParams(
        carrier_freq_hz=header[0].real,
        chirp_duration_s=header[1].real,
        samples_per_chirp=header[2].real,
        bandwidth_hz=header[3].real,
    )

    payload = np.asarray(entries[4:], dtype=np.complex128)
    n_s = params.samples_per_chirp
    n_chirps = payload.size // n_s
    discarded = payload.size - n_chirps * n_s
    if n_chirps == 0:
        raise EmptyPayload(
            f"payload holds {payload.size} entries, fewer than one chirp ({n_s})"
        )
    echo = EchoMatrix(params=params, data=payload[: n_chirps * n_s].reshape(n_chirps, n_s))
    return ParsedRecording(params, echo, discarded)


def write_dat(params: RadarParams, echo: EchoMatrix, codec: str = "ascii") -> bytes:
    """Serialize a recording; parse_dat(write_dat(p, e)) reproduces both values."""
    if echo.params != params:
        raise ShapeMismatch("echo parameter block differs from the one being written")
    flat = echo.data.reshape(-1)

    if codec == "ascii":
        lines = [
            repr(float(params.carrier_freq_hz)),
            repr(float(params.chirp_duration_s)),
            repr(float(params.samples_per_chirp)),
            repr(float(params.bandwidth_hz)),
        ]
        lines.extend(_format_complex(v) for v in flat)
        return ("\n".join(lines) + "\n").encode("ascii")

    if codec == "binary":
        head = _DATB_HEADER.pack(
            _DATB_MAGIC,
            _DATB_VERSION,
            float(params.carrier_freq_hz),
            float(params.chirp_duration_s),
            float(params.samples_per_chirp),
            float(params.bandwidth_hz),
            flat.size,
        )
        interleaved = np.empty(2 * flat.size, dtype="<f8")
        interleaved[0::2] = flat.real
        interleaved[1::2] = flat.imag
        return head + interleaved.tobytes()

    raise ValueError(f"unknown codec {codec!r}")


def codec_for_path(path) -> str:
    return "binary" if str(path).endswith(".datb") else "ascii"


def load_recording(path) -> ParsedRecording:
    """Read a .dat (ASCII) or .datb (binary) recording from disk."""
    with open(path, "rb") as fh:
        raw = fh.read()
    return parse_dat(raw, codec=codec_for_path(path))


def save_recording(path, params: RadarParams, echo: EchoMatrix) -> None:
    with open(path, "wb") as fh:
        fh.write(write_dat(params, echo, codec=codec_for_path(path)))
