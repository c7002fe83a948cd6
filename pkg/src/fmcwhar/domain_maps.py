"""Range-Time, Doppler-Time and Range-Doppler spectrograms from echo matrices.

Pipeline per domain:

- RTM: fast-time DFT per chirp -> magnitude -> optional slow-time MTI
  high-pass (order 4, cutoff 0.0075 of Nyquist) on each range bin's
  magnitude sequence -> log magnitude. Rows are slow time, columns range.
- DTM: fast-time DFT -> complex MTI along slow time -> per range bin in
  [r1, r2], a short-time transform whose Gaussian window is re-selected
  at every frame by minimizing the spectral concentration factor ->
  magnitudes summed over range bins -> log magnitude. Rows are Doppler
  (zero-centered), columns time frames.
- RDM: fast-time DFT -> complex MTI -> slow-time DFT per range bin ->
  FFT-shift -> log magnitude. Rows are range bins, columns Doppler.

The MTI filter for the DTM/RDM paths runs on the complex range profiles
(real and imaginary parts independently); Doppler extraction needs the
phase, which magnitude-only filtering would destroy.

All map values are stored in dB so every domain shares one value scale.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from enum import Enum

import numpy as np

from . import dsp
from .radar_io import EchoMatrix, RadarParams

LOG_FLOOR_EPS = 1e-12

MTI_ORDER = 4
MTI_CUTOFF_NORM = 0.0075

# Defaults for the adaptive short-time transform: 8 Gaussian windows from
# wide to narrow effective width, 128-chirp frames, hop of 16 chirps, and
# a range interval covering typical indoor activity extents.
DEFAULT_ASTFT_ALPHAS = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
DEFAULT_ASTFT_LENGTH = 128
DEFAULT_ASTFT_HOP = 16
DEFAULT_RANGE_INTERVAL_M = (0.5, 5.0)


class DomainMapError(ValueError):
    pass


class BankEmpty(DomainMapError):
    pass


class RangeIntervalOutOfBounds(DomainMapError):
    pass


class Domain(Enum):
    RANGE_TIME = "rt"
    DOPPLER_TIME = "dt"
    RANGE_DOPPLER = "rd"


@dataclass(frozen=True)
class Axis:
    name: str
    unit: str
    start: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise DomainMapError(f"axis step must be > 0, got {self.step}")

    def centers(self, n: int) -> np.ndarray:
        return self.start + self.step * np.arange(n)


@dataclass(frozen=True)
class SpectroMap:
    """Real-valued 2-D map (dB) with domain tag and axis metadata."""

    domain: Domain
    values: np.ndarray
    row_axis: Axis
    col_axis: Axis
    params: RadarParams

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise DomainMapError("map values must form a non-empty 2-D matrix")
        if not np.all(np.isfinite(values)):
            raise DomainMapError("map values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class AstftConfig:
    """Window bank and frame layout for the adaptive short-time transform."""

    window_bank: tuple[dsp.WindowSpec, ...]
    hop: int
    range_bin_lo: int
    range_bin_hi: int

    def __post_init__(self):
        bank = tuple(self.window_bank)
        if not bank:
            raise BankEmpty("window bank must hold at least one window")
        lengths = {w.length for w in bank}
        if len(lengths) != 1:
            raise DomainMapError(f"bank windows must share one length, got {sorted(lengths)}")
        alphas = [w.alpha for w in bank if w.kind is dsp.WindowKind.GAUSSIAN]
        if len(alphas) == len(bank) and any(
            a >= b for a, b in zip(alphas, alphas[1:])
        ):
            raise DomainMapError("bank alpha values must be strictly increasing")
        if self.hop < 1:
            raise DomainMapError(f"hop must be >= 1, got {self.hop}")
        if not 0 <= self.range_bin_lo <= self.range_bin_hi:
            raise RangeIntervalOutOfBounds(
                f"need 0 <= r1 <= r2, got [{self.range_bin_lo}, {self.range_bin_hi}]"
            )
        object.__setattr__(self, "window_bank", bank)

    @property
    def window_length(self) -> int:
        return self.window_bank[0].length

    @classmethod
    def default_for(cls, params: RadarParams, n_chirps: int) -> "AstftConfig":
        length = min(DEFAULT_ASTFT_LENGTH, n_chirps)
        bank = tuple(dsp.WindowSpec.gaussian(length, a) for a in DEFAULT_ASTFT_ALPHAS)
        lo_m, hi_m = DEFAULT_RANGE_INTERVAL_M
        r1 = max(0, int(np.ceil(lo_m / params.range_bin_m)))
        r2 = min(params.samples_per_chirp - 1, int(np.floor(hi_m / params.range_bin_m)))
        r2 = max(r2, r1)
        return cls(window_bank=bank, hop=DEFAULT_ASTFT_HOP, range_bin_lo=r1, range_bin_hi=r2)

    def validate_against(self, echo: EchoMatrix) -> None:
        if self.window_length > echo.n_chirps:
            raise DomainMapError(
                f"window length {self.window_length} exceeds chirp count {echo.n_chirps}"
            )
        if self.range_bin_hi >= echo.params.samples_per_chirp:
            raise RangeIntervalOutOfBounds(
                f"r2 = {self.range_bin_hi} outside the {echo.params.samples_per_chirp} range bins"
            )


def range_profiles(echo: EchoMatrix) -> np.ndarray:
    """Complex range profiles: rectangular-window fast-time DFT per chirp."""
    return np.fft.fft(echo.data, axis=1)


def _mti_coeffs() -> dsp.IirCoeffs:
    return dsp.butterworth_highpass(order=MTI_ORDER, cutoff_norm=MTI_CUTOFF_NORM)


def mti_filter_complex(profiles: np.ndarray) -> np.ndarray:
    """Slow-time MTI high-pass on complex profiles (per quadrature)."""
    return dsp.iir_filter(_mti_coeffs(), profiles, axis=0)


def range_time_map(echo: EchoMatrix, mti: bool = True) -> SpectroMap:
    """Range-Time map; MTI filters the magnitude sequence at each range bin."""
    mags = np.abs(range_profiles(echo))
    if mti:
        mags = dsp.iir_filter(_mti_coeffs(), mags, axis=0)
    values = dsp.log_magnitude(mags, LOG_FLOOR_EPS)
    params = echo.params
    return SpectroMap(
        domain=Domain.RANGE_TIME,
        values=values,
        row_axis=Axis("slow time", "s", 0.0, params.chirp_duration_s),
        col_axis=Axis("range", "m", 0.0, params.range_bin_m),
        params=params,
    )


def _frame_segments(signal: np.ndarray, length: int, hop: int) -> np.ndarray:
    """(n_frames, length) matrix of window-length segments centered at
    multiples of ``hop``; positions outside the signal are zero."""
    n = signal.shape[0]
    centers = np.arange(0, n, hop)
    offsets = centers[:, None] + (np.arange(length) - length // 2)[None, :]
    valid = (offsets >= 0) & (offsets < n)
    return np.where(valid, signal[np.clip(offsets, 0, n - 1)], 0.0)


def doppler_time_map(
    echo: EchoMatrix,
    cfg: AstftConfig | None = None,
    return_selection: bool = False,
):
    """Doppler-Time map via the adaptive short-time transform.

    At every frame and range bin the Gaussian window minimizing the
    spectral concentration factor is selected (ties break to the lowest
    bank index); the chosen magnitude spectra are summed over the range
    interval. With ``return_selection`` the (n_bins, n_frames) matrix of
    selected bank indices is returned alongside the map.
    """
    params = echo.params
    if cfg is None:
        cfg = AstftConfig.default_for(params, echo.n_chirps)
    cfg.validate_against(echo)

    profiles = mti_filter_complex(range_profiles(echo))
    length = cfg.window_length
    windows = np.stack([w.values() for w in cfg.window_bank])  # (n_alpha, L)

    bins = range(cfg.range_bin_lo, cfg.range_bin_hi + 1)
    accum = None
    selections = []
    for r in bins:
        segments = _frame_segments(profiles[:, r], length, cfg.hop)  # (n_frames, L)
        spectra = np.fft.fft(segments[None, :, :] * windows[:, None, :], axis=2)
        mags = np.abs(spectra)  # (n_alpha, n_frames, L)
        s1 = mags.sum(axis=2)
        s2 = np.square(mags).sum(axis=2)
        conc = s1 * s1 / (s2 + 1e-12)
        chosen = np.argmin(conc, axis=0)  # first minimum wins ties
        selected = mags[chosen, np.arange(mags.shape[1]), :]  # (n_frames, L)
        accum = selected if accum is None else accum + selected
        selections.append(chosen)

    doppler_by_frame = np.fft.fftshift(accum, axes=1)  # center zero Doppler
    values = dsp.log_magnitude(doppler_by_frame.T, LOG_FLOOR_EPS)

    prf = params.chirp_rate_hz
    doppler_step = prf / length
    result = SpectroMap(
        domain=Domain.DOPPLER_TIME,
        values=values,
        row_axis=Axis("Doppler", "Hz", -doppler_step * (length // 2), doppler_step),
        col_axis=Axis("time", "s", 0.0, cfg.hop * params.chirp_duration_s),
        params=params,
    )
    if return_selection:
        return result, np.stack(selections)
    return result


def range_doppler_map(echo: EchoMatrix) -> SpectroMap:
    """Range-Doppler map: slow-time DFT of the MTI-filtered range profiles."""
    params = echo.params
    filtered = mti_filter_complex(range_profiles(echo))
    doppler = np.fft.fftshift(np.fft.fft(filtered, axis=0), axes=0)  # (n_doppler, n_range)
    values = dsp.log_magnitude(doppler.T, LOG_FLOOR_EPS)  # rows range, cols Doppler

    n_c = echo.n_chirps
    prf = params.chirp_rate_hz
    doppler_step = prf / n_c
    return SpectroMap(
        domain=Domain.RANGE_DOPPLER,
        values=values,
        row_axis=Axis("range", "m", 0.0, params.range_bin_m),
        col_axis=Axis("Doppler", "Hz", -doppler_step * (n_c // 2), doppler_step),
        params=params,
    )


def resize_bilinear(spectro: SpectroMap, out_h: int, out_w: int) -> SpectroMap:
    """Bilinear resize with half-pixel sample centers (corner alignment off)."""
    if out_h < 1 or out_w < 1:
        raise DomainMapError(f"output shape must be positive, got {out_h}x{out_w}")
    values = _resize_bilinear_array(spectro.values, out_h, out_w)

    def rescaled(axis: Axis, n_in: int, n_out: int) -> Axis:
        scale = n_in / n_out
        return Axis(axis.name, axis.unit, axis.start + (0.5 * scale - 0.5) * axis.step,
                    axis.step * scale)

    in_h, in_w = spectro.shape
    return replace(
        spectro,
        values=values,
        row_axis=rescaled(spectro.row_axis, in_h, out_h),
        col_axis=rescaled(spectro.col_axis, in_w, out_w),
    )


def _resize_bilinear_array(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = values.shape

    def sample_coords(n_in, n_out):
        coords = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        coords = np.clip(coords, 0.0, n_in - 1.0)
        lo = np.floor(coords).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = coords - lo
        return lo, hi, frac

    r_lo, r_hi, r_f = sample_coords(in_h, out_h)
    c_lo, c_hi, c_f = sample_coords(in_w, out_w)
    top = values[r_lo][:, c_lo] * (1 - c_f) + values[r_lo][:, c_hi] * c_f
    bot = values[r_hi][:, c_lo] * (1 - c_f) + values[r_hi][:, c_hi] * c_f
    return top * (1 - r_f[:, None]) + bot * r_f[:, None]


# ---------------------------------------------------------------------------
# File formats: .smap (f32 little-endian, row-major) + JSON sidecar, and an
# 8-bit min-max normalized PGM for eyeballing.

def _sidecar_path(path) -> str:
    base = str(path)
    return (base[: -len(".smap")] if base.endswith(".smap") else base) + ".json"


def save_spectro_map(spectro: SpectroMap, path) -> None:
    meta = {
        "domain": spectro.domain.value,
        "shape": list(spectro.shape),
        "row_axis": asdict(spectro.row_axis),
        "col_axis": asdict(spectro.col_axis),
        "params": {
            "carrier_freq_hz": spectro.params.carrier_freq_hz,
            "chirp_duration_s": spectro.params.chirp_duration_s,
            "samples_per_chirp": spectro.params.samples_per_chirp,
            "bandwidth_hz": spectro.params.bandwidth_hz,
        },
    }
    with open(_sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)
    spectro.values.astype("<f4").tofile(path)


def load_spectro_map(path) -> SpectroMap:
    with open(_sidecar_path(path)) as fh:
        meta = json.load(fh)
    shape = tuple(meta["shape"])
    values = np.fromfile(path, dtype="<f4")
    if values.size != shape[0] * shape[1]:
        raise DomainMapError(
            f"{path}: payload holds {values.size} values, sidecar says {shape}"
        )
    def axis(d):
        return Axis(d["name"], d["unit"], d["start"], d["step"])
    return SpectroMap(
        domain=Domain(meta["domain"]),
        values=values.astype(np.float64).reshape(shape),
        row_axis=axis(meta["row_axis"]),
        col_axis=axis(meta["col_axis"]),
        params=RadarParams(**meta["params"]),
    )


def write_pgm(spectro: SpectroMap, path) -> None:
    """8-bit binary PGM, min-max normalized."""
    values = spectro.values
    lo, hi = float(values.min()), float(values.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pixels = np.round((values - lo) * scale).astype(np.uint8)
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pixels.tobytes())
