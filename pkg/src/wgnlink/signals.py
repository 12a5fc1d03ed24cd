"""Complex baseband signal containers, WGN generation, resampling and filtering.

Everything downstream works on :class:`ComplexSignal` (one tributary) or
:class:`MimoSignal` (M co-timed tributaries).  All operations are pure:
they return new objects and never mutate their inputs.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np
from scipy.signal import resample as _fft_resample

_MAGIC = b"WGNC"
_VERSION = 1
_HEADER = struct.Struct("<4sIIQd")  # magic, version, M, Ns, sample_rate


@dataclass(frozen=True)
class ComplexSignal:
    """Uniformly sampled complex baseband waveform."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class MimoSignal:
    """Ordered set of co-timed tributaries sharing one sample rate."""

    tributaries: Sequence[ComplexSignal]

    def __post_init__(self):
        tribs = tuple(self.tributaries)
        object.__setattr__(self, "tributaries", tribs)
        if len(tribs) < 1:
            raise ValueError("need at least one tributary")
        n = len(tribs[0])
        rate = tribs[0].sample_rate
        for t in tribs[1:]:
            if len(t) != n or t.sample_rate != rate:
                raise ValueError("tributaries must share length and sample_rate")

    @property
    def n_tributaries(self) -> int:
        return len(self.tributaries)

    @property
    def sample_rate(self) -> float:
        return self.tributaries[0].sample_rate

    def __len__(self) -> int:
        return len(self.tributaries[0])

    def as_array(self) -> np.ndarray:
        """Stack tributaries into an (M, N) array."""
        return np.stack([t.samples for t in self.tributaries])

    @classmethod
    def from_array(cls, data: np.ndarray, sample_rate: float) -> "MimoSignal":
        data = np.atleast_2d(data)
        return cls([ComplexSignal(row, sample_rate) for row in data])

    def map(self, fn) -> "MimoSignal":
        """Apply a per-tributary function, keeping rates consistent."""
        return MimoSignal([fn(t) for t in self.tributaries])


def generate_wgn(n_samples: int, sample_rate: float, mean_power: float,
                 seed: int) -> ComplexSignal:
    """Circularly-symmetric complex Gaussian samples, deterministic per seed.

    Real and imaginary parts are i.i.d. with variance ``mean_power / 2`` each.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if mean_power <= 0:
        raise ValueError("mean_power must be positive")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(mean_power / 2.0)
    samples = scale * (rng.standard_normal(n_samples)
                       + 1j * rng.standard_normal(n_samples))
    return ComplexSignal(samples, sample_rate)


def generate_wgn_mimo(n_tributaries: int, n_samples: int, sample_rate: float,
                      mean_power: float, seed: int) -> MimoSignal:
    """Independent WGN per tributary; tributary m uses a sub-seed of `seed`."""
    seq = np.random.SeedSequence(seed).spawn(n_tributaries)
    tribs = []
    for sub in seq:
        rng = np.random.default_rng(sub)
        scale = np.sqrt(mean_power / 2.0)
        s = scale * (rng.standard_normal(n_samples)
                     + 1j * rng.standard_normal(n_samples))
        tribs.append(ComplexSignal(s, sample_rate))
    if n_samples < 1 or mean_power <= 0:
        raise ValueError("n_samples must be >= 1 and mean_power positive")
    return MimoSignal(tribs)


def resample(signal: ComplexSignal, new_rate: float) -> ComplexSignal:
    """FFT-based (exact band-limited) rate conversion to an arbitrary rate.

    Output length is ``round(len * new_rate / old_rate)``; spectral content
    below the smaller Nyquist frequency is preserved.
    """
    if new_rate <= 0:
        raise ValueError("new_rate must be positive")
    n = len(signal)
    if n == 0:
        return ComplexSignal(np.empty(0, dtype=complex), new_rate)
    n_out = int(round(n * new_rate / signal.sample_rate))
    if n_out == n:
        return ComplexSignal(signal.samples.copy(), new_rate)
    out = _fft_resample(signal.samples, n_out)
    return ComplexSignal(out, new_rate)


def gaussian_filter(signal: ComplexSignal, bandwidth_3db: float,
                    order: int = 4) -> ComplexSignal:
    """Zero-phase frequency-domain Gaussian filter.

    |H(f)| = exp(-ln2/2 * (|f|/B)^(2k)) with B the single-sided 3-dB
    cutoff and k the order; H(0) = 1 exactly.
    """
    if bandwidth_3db <= 0:
        raise ValueError("bandwidth_3db must be positive")
    if order < 1:
        raise ValueError("order must be >= 1")
    if bandwidth_3db > signal.sample_rate / 2:
        warnings.warn("filter bandwidth exceeds Nyquist; applying as-is",
                      stacklevel=2)
    n = len(signal)
    if n == 0:
        return signal
    f = np.fft.fftfreq(n, d=1.0 / signal.sample_rate)
    h = np.exp(-0.5 * np.log(2.0) * (np.abs(f) / bandwidth_3db) ** (2 * order))
    out = np.fft.ifft(np.fft.fft(signal.samples) * h)
    return ComplexSignal(out, signal.sample_rate)


def measure_power(signal: ComplexSignal) -> float:
    """Mean of |sample|^2."""
    if len(signal) == 0:
        raise ValueError("cannot measure power of an empty signal")
    return float(np.mean(np.abs(signal.samples) ** 2))


def write_signal(f: BinaryIO, signal: MimoSignal) -> None:
    """Write the flat binary capture format (see module docs / README)."""
    data = signal.as_array()
    m, ns = data.shape
    f.write(_HEADER.pack(_MAGIC, _VERSION, m, ns, signal.sample_rate))
    inter = np.empty((m, ns, 2), dtype="<f8")
    inter[:, :, 0] = data.real
    inter[:, :, 1] = data.imag
    f.write(inter.tobytes())


def read_signal(f: BinaryIO) -> MimoSignal:
    """Read the flat binary capture format written by :func:`write_signal`."""
    raw = f.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ValueError("truncated signal file header")
    magic, version, m, ns, rate = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise ValueError("not a wgnlink capture file")
    if version != _VERSION:
        raise ValueError(f"unsupported capture version {version}")
    payload = np.frombuffer(f.read(m * ns * 2 * 8), dtype="<f8")
    if payload.size != m * ns * 2:
        raise ValueError("truncated signal payload")
    inter = payload.reshape(m, ns, 2)
    return MimoSignal.from_array(inter[:, :, 0] + 1j * inter[:, :, 1], rate)
