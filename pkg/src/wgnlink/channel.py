"""Linear MIMO fiber-channel synthesis and application.

The channel model is deliberately phenomenological: chromatic dispersion is
an exact all-pass quadratic phase, mode coupling is a seeded multi-section
unitary/delay cascade with a frequency-flat singular-value (MDL) profile,
amplifier noise is additive Gaussian per span, and nonlinear interference
is a cubic-in-power additive Gaussian term.  A split-step solver is out of
scope by design.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import BinaryIO, Optional

import numpy as np

from .signals import ComplexSignal, MimoSignal

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class MimoChannel:
    """Per-frequency-bin MxM transfer matrices plus a scalar dispersion phase.

    Frequencies follow FFT ordering: bin k sits at ``fftfreq(n_bins) * n_bins
    * bin_spacing``.  Both synthesized and estimated channels use this type.
    """

    matrices: np.ndarray       # (n_bins, M, M) complex
    bin_spacing: float         # Hz
    common_phase: np.ndarray | None = None  # (n_bins,) radians

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=np.complex128)
        object.__setattr__(self, "matrices", m)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError("matrices must have shape (n_bins, M, M)")
        if not np.all(np.isfinite(m)):
            raise ValueError("channel matrices must be finite")
        if self.bin_spacing <= 0:
            raise ValueError("bin_spacing must be positive")
        phase = self.common_phase
        if phase is None:
            phase = np.zeros(m.shape[0])
        phase = np.asarray(phase, dtype=float)
        if phase.shape != (m.shape[0],):
            raise ValueError("common_phase must have one entry per bin")
        object.__setattr__(self, "common_phase", phase)

    @property
    def n_bins(self) -> int:
        return self.matrices.shape[0]

    @property
    def n_modes(self) -> int:
        return self.matrices.shape[1]

    @property
    def frequencies(self) -> np.ndarray:
        """Baseband frequency of each bin, FFT ordering."""
        return np.fft.fftfreq(self.n_bins, d=1.0 / (self.n_bins * self.bin_spacing))

    def full_matrices(self) -> np.ndarray:
        """Matrices with the common dispersion phase folded in."""
        return self.matrices * np.exp(1j * self.common_phase)[:, None, None]

    def is_unitary(self, tol: float = 1e-9) -> bool:
        sv = np.linalg.svd(self.matrices, compute_uv=False)
        return bool(np.all(np.abs(sv - 1.0) < tol))


@dataclass(frozen=True)
class LinkConfig:
    """Recirculating-loop span parameters.

    ``span_snr_db`` is the per-recirculation SNR contribution at 0 dBm launch
    power; ``nlin_coeff`` scales the additive nonlinear-interference noise
    power, eta * P^3 (P in mW).  The default pair places the MI-vs-power
    peak near 0 dBm.
    """

    span_length: float = 78.0            # km
    dispersion_coeff: float = 17.0       # ps/(nm km)
    center_wavelength: float = 1550.0    # nm
    n_modes: int = 2
    mdl_per_span: float = 0.0            # dB
    dgd_per_span: float = 0.0            # s
    span_snr_db: float = 22.0            # dB per recirculation at 0 dBm
    lo_linewidth: float = 0.0            # Hz
    frequency_offset: float = 0.0        # Hz
    launch_power_dbm: float = 0.0        # dBm, 30 GHz reference bandwidth
    nlin_coeff: float = 0.00315          # mW^-2
    n_sections: int = 8                  # coupling sections per span

    def __post_init__(self):
        if self.span_length < 0:
            raise ValueError("span_length must be >= 0")
        if self.n_modes < 2 or self.n_modes % 2:
            raise ValueError("n_modes must be even and >= 2")
        if self.mdl_per_span < 0:
            raise ValueError("mdl_per_span must be >= 0")


def dispersion_phase(freqs: np.ndarray, dispersion_coeff: float,
                     length_km: float, wavelength_nm: float) -> np.ndarray:
    """Quadratic dispersion phase pi * lambda0^2 * D * L * f^2 / c (radians)."""
    d_si = dispersion_coeff * 1e-6          # ps/(nm km) -> s/m^2
    lam = wavelength_nm * 1e-9
    return (np.pi * lam * lam * d_si * (length_km * 1e3)
            * np.asarray(freqs) ** 2 / SPEED_OF_LIGHT)


def apply_chromatic_dispersion(signal: MimoSignal, dispersion_coeff: float,
                               length_km: float,
                               wavelength_nm: float) -> MimoSignal:
    """Forward dispersion operator (+j phase); :func:`wgnlink.pipeline.apply_edc`
    with the same arguments is its exact inverse."""
    return _apply_dispersion(signal, dispersion_coeff, length_km,
                             wavelength_nm, sign=+1.0)


def _apply_dispersion(signal: MimoSignal, dispersion_coeff: float,
                      length_km: float, wavelength_nm: float,
                      sign: float) -> MimoSignal:
    if wavelength_nm <= 0:
        raise ValueError("wavelength must be positive")
    n = len(signal)
    f = np.fft.fftfreq(n, d=1.0 / signal.sample_rate)
    rot = np.exp(sign * 1j * dispersion_phase(f, dispersion_coeff, length_km,
                                              wavelength_nm))
    data = np.fft.ifft(np.fft.fft(signal.as_array(), axis=1) * rot, axis=1)
    return MimoSignal.from_array(data, signal.sample_rate)


class MultiSectionModel:
    """Seeded cascade of random unitaries and diagonal delay elements.

    H(f) = U_1 D_1(f) ... U_S D_S(f) * diag(sigma) * Q with U_s, Q fixed
    random unitaries, D_s(f) = diag(exp(-2j pi f tau_i / S)) carrying the
    differential group delay, and sigma the frequency-flat singular values.
    Per-bin singular values equal sigma exactly at every frequency.
    """

    def __init__(self, n_modes: int, mdl_db: float, dgd: float, seed,
                 n_sections: int = 8):
        if n_modes < 2 or n_modes % 2:
            raise ValueError("n_modes must be even and >= 2")
        if mdl_db < 0:
            raise ValueError("mdl_db must be >= 0")
        rng = np.random.default_rng(seed)
        self.n_modes = n_modes
        self.n_sections = n_sections
        self.unitaries = [_random_unitary(n_modes, rng)
                          for _ in range(n_sections)]
        self.output_unitary = _random_unitary(n_modes, rng)
        # per-section mode delays; extremes accumulate to +-dgd/2
        self.delays = np.linspace(-dgd / 2, dgd / 2, n_modes) / n_sections
        ratio = 10.0 ** (mdl_db / 20.0)
        exponents = np.linspace(0.5, -0.5, n_modes)
        sigma = ratio ** exponents
        self.sigma = sigma / np.sqrt(np.mean(sigma ** 2))

    def apply_spectrum(self, spectrum: np.ndarray,
                       freqs: np.ndarray) -> np.ndarray:
        """Apply H(f) to an (M, N) frequency-domain field without
        materializing per-bin matrices."""
        out = self.output_unitary @ spectrum
        out = self.sigma[:, None] * out
        rot = np.exp(-2j * np.pi * freqs[None, :] * self.delays[:, None])
        for u in reversed(self.unitaries):
            out = u @ (rot * out)
        return out

    def sample(self, n_bins: int, bin_spacing: float) -> MimoChannel:
        """Materialize per-bin matrices on an FFT-ordered grid."""
        freqs = np.fft.fftfreq(n_bins, d=1.0 / (n_bins * bin_spacing))
        m = self.n_modes
        h = np.broadcast_to(self.output_unitary * self.sigma[:, None],
                            (n_bins, m, m)).copy()
        rot = np.exp(-2j * np.pi * freqs[:, None] * self.delays[None, :])
        for u in reversed(self.unitaries):
            h = np.einsum("ij,kjl->kil", u, rot[:, :, None] * h)
        return MimoChannel(h, bin_spacing)


def _random_unitary(m: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diagonal(r))  # fix the QR phase ambiguity


def synthesize_mimo_channel(n_modes: int, mdl_db: float, dgd: float,
                            n_bins: int, bin_spacing: float, seed: int,
                            n_sections: int = 8) -> MimoChannel:
    """Seeded test channel with exact flat MDL and multi-peak impulse response."""
    model = MultiSectionModel(n_modes, mdl_db, dgd, seed, n_sections)
    return model.sample(n_bins, bin_spacing)


def apply_channel(signal: MimoSignal, channel: MimoChannel) -> MimoSignal:
    """Per-bin matrix-vector product plus common dispersion phase.

    The channel response is interpolated onto the signal's FFT grid when the
    grids differ.
    """
    if signal.n_tributaries != channel.n_modes:
        raise ValueError("signal and channel mode counts differ")
    n = len(signal)
    freqs = np.fft.fftfreq(n, d=1.0 / signal.sample_rate)
    mats, phase = _channel_on_grid(channel, freqs)
    spec = np.fft.fft(signal.as_array(), axis=1)
    out = np.einsum("kij,jk->ik", mats, spec) * np.exp(1j * phase)[None, :]
    return MimoSignal.from_array(np.fft.ifft(out, axis=1), signal.sample_rate)


def _channel_on_grid(channel: MimoChannel, freqs: np.ndarray):
    """Channel matrices and common phase evaluated at arbitrary frequencies."""
    cf = channel.frequencies
    if len(cf) == len(freqs) and np.allclose(cf, freqs):
        return channel.matrices, channel.common_phase
    order = np.argsort(cf)
    cf_s = cf[order]
    m = channel.n_modes
    mats = np.empty((len(freqs), m, m), dtype=complex)
    for i in range(m):
        for j in range(m):
            col = channel.matrices[order, i, j]
            mats[:, i, j] = (np.interp(freqs, cf_s, col.real)
                             + 1j * np.interp(freqs, cf_s, col.imag))
    phase = np.interp(freqs, cf_s, channel.common_phase[order])
    return mats, phase


def add_awgn(signal: MimoSignal, snr_db: float, seed: int) -> MimoSignal:
    """Additive independent complex Gaussian noise per tributary.

    Noise power is the tributary-averaged signal power divided by the linear
    SNR, measured over the full captured band.  ``snr_db = inf`` returns the
    signal unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return signal
    data = signal.as_array()
    sig_power = float(np.mean(np.abs(data) ** 2))
    if sig_power <= 0:
        raise ValueError("signal power must be positive to set an SNR")
    noise_power = sig_power / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(seed)
    noise = np.sqrt(noise_power / 2.0) * (
        rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape))
    return MimoSignal.from_array(data + noise, signal.sample_rate)


def apply_phase_noise(signal: MimoSignal, linewidth: float,
                      seed: int) -> MimoSignal:
    """Common-LO Wiener phase noise: increments have variance
    2 pi * linewidth / sample_rate; the same trajectory multiplies every
    tributary."""
    if linewidth < 0:
        raise ValueError("linewidth must be >= 0")
    if linewidth == 0:
        return signal
    n = len(signal)
    rng = np.random.default_rng(seed)
    std = np.sqrt(2.0 * np.pi * linewidth / signal.sample_rate)
    phase = np.cumsum(std * rng.standard_normal(n))
    data = signal.as_array() * np.exp(1j * phase)[None, :]
    return MimoSignal.from_array(data, signal.sample_rate)


def apply_frequency_offset(signal: MimoSignal, offset: float) -> MimoSignal:
    """Multiply all tributaries by exp(j 2 pi offset n / sample_rate)."""
    if abs(offset) >= signal.sample_rate / 2:
        raise ValueError("frequency offset beyond Nyquist")
    if offset == 0:
        return signal
    n = np.arange(len(signal))
    rot = np.exp(2j * np.pi * offset * n / signal.sample_rate)
    return MimoSignal.from_array(signal.as_array() * rot[None, :],
                                 signal.sample_rate)


def span_noise_power_ratio(cfg: LinkConfig) -> float:
    """Per-span (ASE + NLIN) noise power relative to the signal power.

    ASE noise is fixed in absolute terms (span_snr_db referenced to 0 dBm);
    NLIN grows as nlin_coeff * P^3, so the per-span SNR is P / (N_ase +
    eta P^3) and peaks at P = (N_ase / 2 eta)^(1/4).
    """
    p_mw = 10.0 ** (cfg.launch_power_dbm / 10.0)
    n_ase = 0.0 if math.isinf(cfg.span_snr_db) else 10.0 ** (-cfg.span_snr_db / 10.0)
    n_nl = cfg.nlin_coeff * p_mw ** 3
    return (n_ase + n_nl) / p_mw


def run_link(signal: MimoSignal, cfg: LinkConfig, n_recirculations: int,
             seed: int) -> MimoSignal:
    """Propagate through `n_recirculations` passes of the loop span.

    Each span applies, in order: chromatic dispersion over the span length,
    the span's mode-coupling section (identity when both MDL and DGD are
    zero), and the combined ASE + nonlinear-interference noise.  LO phase
    noise and frequency offset are applied once at the receiver.
    """
    if n_recirculations < 1:
        raise ValueError("n_recirculations must be >= 1")
    if signal.n_tributaries != cfg.n_modes:
        raise ValueError("signal tributary count does not match n_modes")
    root = np.random.SeedSequence(seed)
    model_seed, noise_seed, lo_seed = root.spawn(3)
    model: Optional[MultiSectionModel] = None
    if cfg.mdl_per_span > 0 or cfg.dgd_per_span > 0:
        model = MultiSectionModel(cfg.n_modes, cfg.mdl_per_span,
                                  cfg.dgd_per_span, model_seed,
                                  cfg.n_sections)
    noise_ratio = span_noise_power_ratio(cfg)
    noise_rng = np.random.default_rng(noise_seed)

    data = signal.as_array()
    n = data.shape[1]
    freqs = np.fft.fftfreq(n, d=1.0 / signal.sample_rate)
    disp_rot = np.exp(1j * dispersion_phase(freqs, cfg.dispersion_coeff,
                                            cfg.span_length,
                                            cfg.center_wavelength))
    for _ in range(n_recirculations):
        spec = np.fft.fft(data, axis=1) * disp_rot[None, :]
        if model is not None:
            spec = model.apply_spectrum(spec, freqs)
        data = np.fft.ifft(spec, axis=1)
        if noise_ratio > 0:
            power = np.mean(np.abs(data) ** 2)
            scale = np.sqrt(power * noise_ratio / 2.0)
            data = data + scale * (noise_rng.standard_normal(data.shape)
                                   + 1j * noise_rng.standard_normal(data.shape))
    out = MimoSignal.from_array(data, signal.sample_rate)
    out = apply_phase_noise(out, cfg.lo_linewidth, lo_seed)
    out = apply_frequency_offset(out, cfg.frequency_offset)
    return out


def write_channel(f: BinaryIO, channel: MimoChannel) -> None:
    """JSON descriptor line followed by raw little-endian complex payload."""
    header = {
        "n_bins": channel.n_bins,
        "n_modes": channel.n_modes,
        "bin_spacing": channel.bin_spacing,
    }
    f.write((json.dumps(header) + "\n").encode())
    f.write(channel.matrices.astype("<c16").tobytes())
    f.write(channel.common_phase.astype("<f8").tobytes())


def read_channel(f: BinaryIO) -> MimoChannel:
    header = json.loads(f.readline().decode())
    nb, m = header["n_bins"], header["n_modes"]
    mats = np.frombuffer(f.read(nb * m * m * 16), dtype="<c16").reshape(nb, m, m)
    phase = np.frombuffer(f.read(nb * 8), dtype="<f8")
    return MimoChannel(mats.copy(), header["bin_spacing"], phase.copy())
