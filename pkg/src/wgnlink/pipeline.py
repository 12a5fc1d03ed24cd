"""Receive-side processing: alignment, EDC, FDE-LMS equalization, phase recovery.

The chain is fully data-aided: the transmitted WGN capture is known in its
entirety, so the whole sequence serves as the equalizer reference and no
training/payload split exists.  Multiple passes over the same capture
replace the usual training phase.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import BinaryIO, Optional

import numpy as np

from .channel import LinkConfig, _apply_dispersion
from .errors import AlignmentError, DivergenceError
from .signals import ComplexSignal, MimoSignal, gaussian_filter, resample


@dataclass(frozen=True)
class AlignmentResult:
    lag: int            # samples by which f_out trails f_in
    phase: float        # radians, complex correlation phase at the peak
    peak_ratio: float   # peak magnitude over off-peak RMS


@dataclass
class EqualizerState:
    """Converged frequency-domain tap matrices and adaptation metadata."""

    taps: np.ndarray          # (block_size, M, M) complex, FFT ordering
    block_size: int
    overlap: int
    step_size: float
    error_trace: list = field(default_factory=list)  # per-block NMSE, dB

    def __post_init__(self):
        if self.block_size & (self.block_size - 1):
            raise ValueError("block_size must be a power of two")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


def write_equalizer_state(f: BinaryIO, state: EqualizerState) -> None:
    """JSON descriptor line followed by the raw little-endian tap payload."""
    header = {
        "block_size": state.block_size,
        "overlap": state.overlap,
        "step_size": state.step_size,
        "n_modes": state.taps.shape[1],
        "error_trace": list(state.error_trace),
    }
    f.write((json.dumps(header) + "\n").encode())
    f.write(state.taps.astype("<c16").tobytes())


def read_equalizer_state(f: BinaryIO) -> EqualizerState:
    header = json.loads(f.readline().decode())
    nb, m = header["block_size"], header["n_modes"]
    taps = np.frombuffer(f.read(nb * m * m * 16), dtype="<c16")
    if taps.size != nb * m * m:
        raise ValueError("truncated equalizer tap payload")
    return EqualizerState(taps=taps.reshape(nb, m, m).copy(),
                          block_size=nb, overlap=header["overlap"],
                          step_size=header["step_size"],
                          error_trace=list(header["error_trace"]))


@dataclass(frozen=True)
class PipelineConfig:
    target_rate: float = 60e9
    filter_bw: Optional[float] = 15e9   # None disables the Gaussian filter
    filter_order: int = 4
    oversampling: int = 2               # samples/symbol of the assumed baud rate
    phase_window: int = 200
    lms_step: float = 0.05
    lms_passes: int = 3
    block_size: int = 4096
    align_max_lag: int = 50_000
    align_threshold: float = 10.0

    def __post_init__(self):
        if self.oversampling < 1:
            raise ValueError("oversampling must be >= 1")

    @property
    def assumed_baud(self) -> float:
        return self.target_rate / self.oversampling


@dataclass(frozen=True)
class PipelineResult:
    f_in: MimoSignal      # trimmed reference, target rate
    f_eq: MimoSignal      # equalized + phase-recovered field
    state: EqualizerState
    alignment: AlignmentResult
    trim_start_in: int    # offset of f_in[0] in the resampled input timeline


def align_by_crosscorrelation(f_in: MimoSignal, f_out: MimoSignal,
                              max_lag: int,
                              threshold: float = 10.0) -> AlignmentResult:
    """Locate the delay of f_out relative to f_in by FFT cross-correlation.

    The complex per-tributary correlations are summed (common-LO phase), the
    winning lag maximizes the summed magnitude over ``[-max_lag, max_lag]``,
    and ties break toward the smallest |lag|.  A peak-to-RMS ratio below
    `threshold` raises :class:`AlignmentError`.
    """
    if f_in.sample_rate != f_out.sample_rate:
        raise ValueError("signals must share a sample rate")
    n = min(len(f_in), len(f_out))
    if n < 2 * max_lag:
        raise ValueError("signals shorter than 2 * max_lag")
    corr = np.zeros(n, dtype=complex)
    for a, b in zip(f_in.tributaries, f_out.tributaries):
        fa = np.fft.fft(a.samples[:n])
        fb = np.fft.fft(b.samples[:n])
        corr += np.fft.ifft(fb * np.conj(fa))
    lags = np.concatenate([np.arange(-max_lag, 0), np.arange(0, max_lag + 1)])
    mags = np.abs(corr[lags])
    order = np.lexsort((np.abs(lags), -mags))  # smallest |lag| wins ties
    best = order[0]
    peak = mags[best]
    rest = np.delete(mags, best)
    rms = np.sqrt(np.mean(rest ** 2)) if rest.size else 0.0
    ratio = peak / rms if rms > 0 else np.inf
    if ratio < threshold:
        raise AlignmentError(
            f"correlation peak ratio {ratio:.2f} below threshold {threshold}; "
            "captures do not share a noise instantiation")
    lag = int(lags[best])
    return AlignmentResult(lag=lag, phase=float(np.angle(corr[lag])),
                           peak_ratio=float(ratio))


def trim_aligned(f_in: MimoSignal, f_out: MimoSignal,
                 lag: int) -> tuple[MimoSignal, MimoSignal, int]:
    """Cut both signals to their overlapping region given f_out's lag.

    Returns the trimmed pair and the offset of the trimmed reference inside
    the original f_in timeline.
    """
    a = f_in.as_array()
    b = f_out.as_array()
    if lag >= 0:
        b = b[:, lag:]
        start_in = 0
    else:
        a = a[:, -lag:]
        start_in = -lag
    n = min(a.shape[1], b.shape[1])
    return (MimoSignal.from_array(a[:, :n], f_in.sample_rate),
            MimoSignal.from_array(b[:, :n], f_out.sample_rate),
            start_in)


def apply_edc(signal: MimoSignal, dispersion_coeff: float, length_km: float,
              wavelength_nm: float) -> MimoSignal:
    """Electronic dispersion compensation: exact inverse of
    :func:`wgnlink.channel.apply_chromatic_dispersion`."""
    return _apply_dispersion(signal, dispersion_coeff, length_km,
                             wavelength_nm, sign=-1.0)


def fde_lms_equalize(f_in: MimoSignal, f_out: MimoSignal,
                     cfg: PipelineConfig) -> tuple[MimoSignal, EqualizerState]:
    """Data-aided frequency-domain LMS MIMO equalizer (overlap-save).

    Per block and per frequency bin k the taps follow the normalized rule
    W[k] += mu / P[k] * E[k] X[k]^H with E the reference-minus-output error
    and P[k] a running estimate of the per-bin input power.  The step is
    halved on each pass so late passes approach the Wiener solution.  The
    equalized field is produced by a final frozen-tap overlap-save pass.
    """
    if f_in.n_tributaries != f_out.n_tributaries:
        raise ValueError("tributary count mismatch")
    if len(f_in) != len(f_out):
        raise ValueError("signals must be equal length (align first)")
    m = f_in.n_tributaries
    n = len(f_in)
    block = cfg.block_size
    hop = block // 2
    if n < block:
        raise ValueError("signal shorter than one equalizer block")

    x = f_out.as_array()
    d = f_in.as_array()
    n_blocks = -(-n // hop)
    padded = n_blocks * hop + hop
    xp = np.zeros((m, padded), dtype=complex)
    dp = np.zeros((m, padded), dtype=complex)
    xp[:, hop:hop + n] = x
    dp[:, hop:hop + n] = d

    taps = np.zeros((block, m, m), dtype=complex)
    taps[:] = np.eye(m)
    power: np.ndarray | None = None
    trace: list[float] = []

    for p in range(cfg.lms_passes):
        mu = cfg.lms_step * 0.5 ** p
        for b in range(n_blocks):
            i = b * hop
            spec_x = np.fft.fft(xp[:, i:i + block], axis=1).T  # (block, M)
            spec_d = np.fft.fft(dp[:, i:i + block], axis=1).T
            y = np.einsum("kij,kj->ki", taps, spec_x)
            err = spec_d - y
            pw = np.sum(np.abs(spec_x) ** 2, axis=1)
            power = pw if power is None else 0.9 * power + 0.1 * pw
            taps += (mu / (power[:, None, None] + 1e-12)) * np.einsum(
                "ki,kj->kij", err, np.conj(spec_x))
            e_t = np.fft.ifft(err.T, axis=1)[:, hop:]
            d_t = dp[:, i + hop:i + block]
            den = np.sum(np.abs(d_t) ** 2)
            nmse = np.sum(np.abs(e_t) ** 2) / den if den > 0 else 0.0
            trace.append(10 * np.log10(max(nmse, 1e-30)))
            _check_divergence(trace, cfg.lms_step)

    out = np.zeros((m, padded), dtype=complex)
    for b in range(n_blocks):
        i = b * hop
        spec_x = np.fft.fft(xp[:, i:i + block], axis=1).T
        y = np.einsum("kij,kj->ki", taps, spec_x)
        out[:, i + hop:i + block] = np.fft.ifft(y.T, axis=1)[:, hop:]

    state = EqualizerState(taps=taps, block_size=block, overlap=hop,
                           step_size=cfg.lms_step, error_trace=trace)
    f_eq = MimoSignal.from_array(out[:, hop:hop + n], f_in.sample_rate)
    return f_eq, state


def _check_divergence(trace: list[float], step: float,
                      span: int = 10, rise_db: float = 3.0) -> None:
    if len(trace) <= span:
        return
    recent = trace[-(span + 1):]
    if all(b > a for a, b in zip(recent, recent[1:])) and \
            recent[-1] - recent[0] > rise_db:
        raise DivergenceError(
            f"equalizer error rose {recent[-1] - recent[0]:.1f} dB over "
            f"{span} blocks; step size {step} is too large")


def phase_recovery(f_in: MimoSignal, f_eq: MimoSignal,
                   window: int = 200) -> MimoSignal:
    """Data-aided common-LO phase recovery.

    The phase estimate at sample n is the argument of the centered
    moving-window sum of sum_m f_eq,m(n) * conj(f_in,m(n)); edges use
    truncated windows.  Returns f_eq rotated by the negated estimate.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(f_in) != len(f_eq):
        raise ValueError("signals must be equal length")
    cross = np.sum(f_eq.as_array() * np.conj(f_in.as_array()), axis=0)
    summed = _centered_moving_sum(cross, window)
    phi = np.angle(summed)
    data = f_eq.as_array() * np.exp(-1j * phi)[None, :]
    return MimoSignal.from_array(data, f_eq.sample_rate)


def _centered_moving_sum(x: np.ndarray, window: int) -> np.ndarray:
    n = len(x)
    csum = np.concatenate([[0.0 + 0.0j], np.cumsum(x)])
    half_lo = (window - 1) // 2
    half_hi = window - 1 - half_lo
    idx = np.arange(n)
    lo = np.clip(idx - half_lo, 0, n)
    hi = np.clip(idx + half_hi + 1, 0, n)
    return csum[hi] - csum[lo]


def run_pipeline(f_in_raw: MimoSignal, f_out_raw: MimoSignal,
                 link: LinkConfig, cfg: PipelineConfig,
                 n_recirculations: int = 1) -> PipelineResult:
    """Full receive chain: resample, filter, EDC, align, FDE-LMS, phase recovery.

    EDC compensates ``n_recirculations * span_length`` of dispersion on the
    transmitted capture only.  Returns the co-trimmed reference and the
    equalized field.
    """
    if f_in_raw.n_tributaries != f_out_raw.n_tributaries:
        raise ValueError("capture tributary counts differ")

    def prep(sig: MimoSignal) -> MimoSignal:
        out = sig.map(lambda t: resample(t, cfg.target_rate))
        if cfg.filter_bw is not None:
            out = out.map(lambda t: gaussian_filter(t, cfg.filter_bw,
                                                    cfg.filter_order))
        return out

    f_in = prep(f_in_raw)
    f_out = prep(f_out_raw)
    f_out = apply_edc(f_out, link.dispersion_coeff,
                      link.span_length * n_recirculations,
                      link.center_wavelength)
    max_lag = min(cfg.align_max_lag, len(f_in) // 2 - 1)
    alignment = align_by_crosscorrelation(f_in, f_out, max_lag,
                                          cfg.align_threshold)
    f_in_t, f_out_t, start_in = trim_aligned(f_in, f_out, alignment.lag)
    f_eq, state = fde_lms_equalize(f_in_t, f_out_t, cfg)
    f_eq = phase_recovery(f_in_t, f_eq, cfg.phase_window)
    return PipelineResult(f_in=f_in_t, f_eq=f_eq, state=state,
                          alignment=alignment, trim_start_in=start_in)
