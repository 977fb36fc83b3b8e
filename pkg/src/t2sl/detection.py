"""Homodyne/heterodyne quadratures and periodogram estimates.

Normalisation: for a trace x_j sampled every dt,

    P(omega_k) = dt / N * |sum_j x_j exp(-i omega_k t_j)|^2,

so a white sequence of variance s^2 has a flat two-sided density s^2 dt and
sum_k P_k * (1 / (N dt)) equals the mean square of the trace (Parseval).
Frequencies are angular, two-sided, in ascending order (numpy.fft.fftshift);
the lowest bin is the unpaired Nyquist frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

RAW = "raw"
SNU = "shot-noise-unit"


@dataclass(frozen=True)
class DetectionConfig:
    theta: float = 0.0
    omega_het: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.theta < 2 * math.pi):
            raise ValueError("theta must lie in [0, 2 pi)")
        if self.omega_het < 0:
            raise ValueError("omega_het must be >= 0")

    def check_grid(self, dt: float):
        if self.omega_het > 0 and self.omega_het >= math.pi / dt:
            raise ValueError("heterodyne frequency not resolvable on the coarse grid")


@dataclass(frozen=True)
class FilterSpec:
    kind: str = "none"  # none | r-heterodyne
    demod_phase: float = 0.0
    lowpass_cutoff: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "r-heterodyne"):
            raise ValueError(f"unknown filter kind {self.kind!r}")


@dataclass
class Spectrum:
    freqs: np.ndarray
    values: np.ndarray
    n_avg: int
    norm: str = RAW
    stderr: Optional[np.ndarray] = None

    @property
    def bin_width(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def band(self, lo: float, hi: float) -> np.ndarray:
        return (self.freqs >= lo) & (self.freqs <= hi)

    def index_of(self, omega: float) -> int:
        return int(np.argmin(np.abs(self.freqs - omega)))

    def scaled(self, factor: float, norm: Optional[str] = None) -> "Spectrum":
        se = None if self.stderr is None else self.stderr * factor
        return replace(self, values=self.values * factor, stderr=se, norm=norm or self.norm)

    def rebin(self, k: int) -> "Spectrum":
        """Average k adjacent bins; errors combined as independent bins."""
        if k <= 1:
            return self
        n = len(self.freqs) // k * k
        f = self.freqs[:n].reshape(-1, k).mean(axis=1)
        v = self.values[:n].reshape(-1, k).mean(axis=1)
        se = None
        if self.stderr is not None:
            se = np.sqrt((self.stderr[:n].reshape(-1, k) ** 2).sum(axis=1)) / k
        return Spectrum(f, v, self.n_avg, self.norm, se)

    def mirrored(self) -> "Spectrum":
        """Values at -omega aligned with +omega (Nyquist bin dropped)."""
        n = len(self.freqs)
        idx = np.arange(1 - n % 2, n)
        partner = n - idx - n % 2
        se = None if self.stderr is None else self.stderr[partner]
        return Spectrum(self.freqs[idx], self.values[partner], self.n_avg, self.norm, se)

    def trimmed(self) -> "Spectrum":
        """Drop the unpaired Nyquist bin so the grid is symmetric about 0."""
        if len(self.freqs) % 2:
            return self
        se = None if self.stderr is None else self.stderr[1:]
        return Spectrum(self.freqs[1:], self.values[1:], self.n_avg, self.norm, se)


def frequencies(n: int, dt: float) -> np.ndarray:
    return np.fft.fftshift(np.fft.fftfreq(n, dt)) * 2 * math.pi


def _window(kind, n: int) -> Optional[np.ndarray]:
    if kind is None or kind == "none":
        return None
    if kind == "hann":
        w = np.hanning(n)
        return w / np.sqrt(np.mean(w ** 2))
    raise ValueError(f"unknown window {kind!r}")


def _segments(x: np.ndarray, segments: int) -> np.ndarray:
    n = x.shape[-1] // segments
    if n < 2:
        raise ValueError("too many segments for trace length")
    x = x[..., : n * segments]
    return x.reshape(x.shape[:-1] + (segments, n)).reshape(-1, n)


def _stack(traces) -> np.ndarray:
    if isinstance(traces, np.ndarray):
        arr = traces
    else:
        traces = list(traces)
        lengths = {len(t) for t in traces}
        if len(lengths) != 1:
            raise ValueError(f"traces have mismatched lengths {sorted(lengths)}")
        arr = np.asarray(traces)
    if arr.ndim == 1:
        arr = arr[None]
    if arr.shape[-1] < 2:
        raise ValueError("traces need at least two samples")
    return arr


def fourier(traces, dt: float, window=None, segments: int = 1) -> np.ndarray:
    """Scaled, fftshifted transforms sqrt(dt/N) * FFT(x), one row per trace/segment."""
    x = _stack(traces)
    if segments > 1:
        x = _segments(x, segments)
    n = x.shape[-1]
    w = _window(window, n)
    if w is not None:
        x = x * w
    return np.fft.fftshift(np.fft.fft(x, axis=-1), axes=-1) * math.sqrt(dt / n)


def reversed_bins(F: np.ndarray) -> np.ndarray:
    """F(-omega) on the fftshifted grid (for even n the Nyquist bin maps onto itself)."""
    n = F.shape[-1]
    i = np.arange(n)
    idx = (n - i) % n if n % 2 == 0 else n - 1 - i
    return F[..., idx]


def quadrature_trace(a_out, t, det: DetectionConfig) -> np.ndarray:
    """X_theta(t_j) = a_out e^{-i(Omega t_j + theta)} + c.c."""
    a_out = np.asarray(a_out)
    phase = np.exp(-1j * (det.omega_het * np.asarray(t) + det.theta))
    return 2.0 * np.real(a_out * phase)


def record_quadrature(record, det: DetectionConfig) -> np.ndarray:
    return quadrature_trace(record.a_out, record.t, det)


def periodograms(traces, dt: float, window=None, segments: int = 1) -> np.ndarray:
    return np.abs(fourier(traces, dt, window, segments)) ** 2


def _summarise(P: np.ndarray, dt: float, n: int, norm: str, floor: Optional[float]) -> Spectrum:
    m = P.shape[0]
    mean = P.mean(axis=0)
    se = P.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.full_like(mean, np.nan)
    spec = Spectrum(frequencies(n, dt), mean, m, RAW, se)
    return normalise(spec, norm, floor)


def normalise(spec: Spectrum, norm: str, floor: Optional[float]) -> Spectrum:
    if norm == RAW:
        return spec
    if norm == SNU:
        if floor is None or floor <= 0:
            raise ValueError("shot-noise units need a positive analytic floor")
        return spec.scaled(1.0 / floor, SNU)
    raise ValueError(f"unknown normalisation {norm!r}")


def psd(traces, dt: float, norm: str = RAW, floor: Optional[float] = None, window=None,
        segments: int = 1) -> Spectrum:
    """Trajectory- (and optionally segment-) averaged periodogram."""
    P = periodograms(traces, dt, window, segments)
    return _summarise(P, dt, P.shape[-1], norm, floor)


@dataclass
class ComponentSpectra:
    freqs: np.ndarray
    S_aadag: np.ndarray
    S_aa: np.ndarray
    n_avg: int

    @property
    def S_adaga(self) -> np.ndarray:
        return reversed_bins(self.S_aadag)

    @property
    def S_adagadag(self) -> np.ndarray:
        return np.conj(self.S_aa)

    def quadrature(self, theta: float) -> np.ndarray:
        return self.S_aadag + self.S_adaga + 2.0 * np.real(self.S_aa * np.exp(-2j * theta))


def psd_components(traces, dt: float, window=None, segments: int = 1) -> ComponentSpectra:
    F = fourier(traces, dt, window, segments)
    Fr = reversed_bins(F)
    n = F.shape[-1]
    return ComponentSpectra(frequencies(n, dt), np.mean(np.abs(F) ** 2, axis=0),
                            np.mean(F * Fr, axis=0), F.shape[0])


def shot_noise_floor(n_p: float, kind: str = "quadrature") -> float:
    """Analytic white level: n_p + 1/2 for the field, twice that for a quadrature."""
    return (n_p + 0.5) * (2.0 if kind == "quadrature" else 1.0)


def r_heterodyne_filter(trace, t, omega_het: float, filt: FilterSpec, dt: Optional[float] = None) -> np.ndarray:
    """Demodulate a real heterodyne trace to a complex baseband trace.

    z = lowpass[e^{i Omega t} y] with a brick-wall cutoff in frequency, so a
    heterodyne record of a constant field a recovers z = a e^{-i theta}.
    The homodyne-like quadrature is 2 Re(z e^{-i demod_phase})
    (see ``rheterodyne_quadrature``).
    """
    if omega_het <= 0:
        raise ValueError("r-heterodyne needs omega_het > 0")
    if not (0 < filt.lowpass_cutoff < omega_het):
        raise ValueError("low-pass cutoff must lie in (0, omega_het) to reject the carrier")
    y = np.asarray(trace, float)
    t = np.asarray(t, float)
    if dt is None:
        dt = float(t[1] - t[0])
    z = np.exp(1j * omega_het * t) * y
    Z = np.fft.fft(z, axis=-1)
    w = np.fft.fftfreq(z.shape[-1], dt) * 2 * math.pi
    Z[..., np.abs(w) >= filt.lowpass_cutoff] = 0.0
    return np.fft.ifft(Z, axis=-1)


def rheterodyne_quadrature(z, demod_phase: float = 0.0) -> np.ndarray:
    return 2.0 * np.real(np.asarray(z) * np.exp(-1j * demod_phase))
