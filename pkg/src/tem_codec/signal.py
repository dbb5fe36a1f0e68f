"""
Bandlimited test signals, WAV ingestion and the distortion metric.

Signals are represented by an analytic evaluator (a finite sinc series)
together with amplitude and energy metadata measured on a dense grid.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
import scipy.signal

__all__ = [
    "ParameterError",
    "AudioError",
    "BandlimitedSignal",
    "SampledTrace",
    "sinc_series",
    "grid_interpolator",
    "synth_sinc_signal",
    "load_audio",
    "mse_db",
    "dense_grid",
]

# Working-grid samples kept beyond each end of an audio excerpt.
AUDIO_PAD = 64

# Safety factor applied to grid maxima so that b > c_max holds strictly.
C_MAX_SAFETY = 1.01

# Dense-grid oversampling (relative to the Nyquist rate) for quadrature.
QUAD_OVERSAMPLING = 64

# Lower clamp for mse_db when the error vanishes.
MSE_FLOOR_DB = -200.0


class ParameterError(ValueError):
    """Invalid argument to a signal operation."""


class AudioError(ValueError):
    """WAV file cannot be ingested."""


@dataclass(frozen=True)
class BandlimitedSignal:
    """Continuous-time signal observed on ``[start, start + duration]``.

    ``evaluator`` maps an array of times to amplitudes. ``c_max`` bounds
    ``|x(t)|`` on the window and ``energy`` is the window energy.
    """

    omega: float
    duration: float
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    c_max: float
    energy: float
    start: float = 0.0
    origin: str = "synthetic"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def stop(self):
        return self.start + self.duration

    @property
    def nyquist_rate(self):
        """Nyquist rate in Hz (twice the band edge)."""
        return self.omega / np.pi

    def __call__(self, t):
        return self.evaluator(np.asarray(t, dtype=float))

    def grid(self, rate):
        """Evaluate on a uniform grid of ``rate`` Hz covering the window.

        Returns ``(t, x)``; results are cached per rate.
        """
        key = ("grid", float(rate))
        if key not in self._cache:
            t = dense_grid(self.start, self.duration, rate)
            self._cache[key] = (t, self(t))
        return self._cache[key]


@dataclass(frozen=True)
class SampledTrace:
    """Uniformly sampled signal, e.g. a reconstruction output."""

    sample_rate: float
    samples: np.ndarray
    start: float = 0.0
    origin: str = "synthetic"

    @property
    def times(self):
        return self.start + np.arange(len(self.samples)) / self.sample_rate


def dense_grid(start, duration, rate):
    """Uniform grid from ``start`` to ``start + duration`` inclusive."""
    n = max(int(np.ceil(duration * rate)), 1)
    return np.linspace(start, start + duration, n + 1)


def sinc_series(centers, coeffs, omega):
    """Return ``t -> sum_k coeffs[k] * sinc(omega * (t - centers[k]))``.

    ``sinc(u) = sin(u)/u``. Evaluation is chunked to bound memory.
    """
    centers = np.asarray(centers, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)

    def evaluate(t):
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        out = np.empty_like(flat)
        chunk = max(1, 2_000_000 // max(len(centers), 1))
        for i in range(0, len(flat), chunk):
            u = (flat[i:i + chunk, None] - centers[None, :]) * (omega / np.pi)
            out[i:i + chunk] = np.sinc(u) @ coeffs
        return out.reshape(t.shape)

    return evaluate


def grid_interpolator(t0, rate, samples, half_width=48, kaiser_beta=14.0):
    """Kaiser-windowed sinc interpolation of a uniform grid.

    The kernel spans ``half_width`` samples on each side and passes through
    every grid sample. For a grid oversampling its content well, images and
    truncation stay far below the signal, unlike a truncated ideal sinc
    whose tails decay only as ``1/t``.
    """
    samples = np.asarray(samples, dtype=float)
    offsets = np.arange(-half_width + 1, half_width + 1)

    def evaluate(t):
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        out = np.empty_like(flat)
        chunk = max(1, 500_000 // len(offsets))
        for i in range(0, len(flat), chunk):
            u = (flat[i:i + chunk] - t0) * rate
            idx = np.floor(u).astype(np.int64)[:, None] + offsets[None, :]
            d = u[:, None] - idx
            r = np.clip(1.0 - (d / half_width) ** 2, 0.0, None)
            w = np.sinc(d) * np.i0(kaiser_beta * np.sqrt(r)) / np.i0(kaiser_beta)
            valid = (idx >= 0) & (idx < len(samples))
            vals = samples[np.clip(idx, 0, len(samples) - 1)]
            out[i:i + chunk] = np.sum(np.where(valid, w * vals, 0.0), axis=1)
        return out.reshape(t.shape)

    return evaluate


def _measure(evaluator, start, duration, omega):
    rate = max(QUAD_OVERSAMPLING * omega / np.pi, 10_000 / duration)
    t = dense_grid(start, duration, rate)
    x = evaluator(t)
    peak = float(np.max(np.abs(x))) if len(x) else 0.0
    energy = float(np.trapezoid(x * x, t))
    return peak, energy


def synth_sinc_signal(omega, half_terms=2, coeffs=None, duration=1.0, seed=0,
                      start=None):
    """Random bandlimited sinc sum.

    ``x(t) = sum_{n=-M}^{M} a_n sinc(omega (t - n pi / omega))``, observed
    on a window of length ``duration`` centred on zero unless ``start`` is
    given. Missing coefficients are drawn uniformly from ``[-1, 1]`` with
    a generator seeded by ``seed``.
    """
    if omega <= 0 or duration <= 0:
        raise ParameterError("omega and duration must be positive")
    if half_terms < 0:
        raise ParameterError("half_terms must be non-negative")
    n = np.arange(-half_terms, half_terms + 1)
    if coeffs is None:
        rng = np.random.default_rng(seed)
        coeffs = rng.uniform(-1.0, 1.0, size=len(n))
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != n.shape:
        raise ParameterError(f"expected {len(n)} coefficients, got {coeffs.size}")
    if start is None:
        start = -duration / 2
    evaluator = sinc_series(n * np.pi / omega, coeffs, omega)
    peak, energy = _measure(evaluator, start, duration, omega)
    return BandlimitedSignal(omega=float(omega), duration=float(duration),
                             evaluator=evaluator, c_max=C_MAX_SAFETY * peak,
                             energy=energy, start=float(start))


def _read_wav(path):
    try:
        with wave.open(str(path), "rb") as w:
            if w.getcomptype() != "NONE":
                raise AudioError(f"{path}: compressed WAV not supported")
            if w.getsampwidth() != 2:
                raise AudioError(f"{path}: expected 16-bit PCM, got "
                                 f"{8 * w.getsampwidth()}-bit")
            rate = w.getframerate()
            channels = w.getnchannels()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise AudioError(f"{path}: {exc}") from exc
    data = np.frombuffer(raw, dtype="<i2").astype(float)
    if data.size == 0 or data.size < channels:
        raise AudioError(f"{path}: empty payload")
    data = data[: (data.size // channels) * channels].reshape(-1, channels)
    return rate, data.mean(axis=1)


def lowpass(samples, rate, band_hz, attenuation_db=100.0):
    """Zero-phase Kaiser windowed-sinc low-pass.

    The passband ends at 0.8 ``band_hz`` and the stopband starts at
    ``band_hz``.
    """
    nyq = rate / 2
    width = 0.2 * band_hz / nyq
    numtaps, beta = scipy.signal.kaiserord(attenuation_db, width)
    numtaps |= 1
    taps = scipy.signal.firwin(numtaps, 0.9 * band_hz, window=("kaiser", beta),
                               fs=rate)
    return np.convolve(samples, taps, mode="same")


def load_audio(path, target_omega, time_scale=1.0, offset=0.0, duration=None,
               oversampling=16):
    """Ingest a mono (or downmixed) PCM-16 WAV file as a bandlimited signal.

    Parameters
    ----------
    path : str or Path
        WAV file.
    target_omega : float
        Band edge (rad/s) in the scaled time axis.
    time_scale : float
        Factor by which file time is stretched before filtering, so that an
        audio band of ``time_scale * target_omega`` maps onto ``target_omega``.
    offset, duration : float
        Excerpt in scaled seconds; ``duration=None`` keeps the remainder.
    oversampling : int
        Working grid rate relative to the Nyquist rate of ``target_omega``.

    Returns
    -------
    BandlimitedSignal
        Evaluator interpolates the filtered working grid with sinc kernels;
        ``c_max`` and ``energy`` are measured from that grid.
    """
    if target_omega <= 0 or time_scale <= 0:
        raise ParameterError("target_omega and time_scale must be positive")
    rate, x = _read_wav(path)
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x / peak
    rate = rate / time_scale
    band = target_omega / (2 * np.pi)
    work_rate = oversampling * 2 * band
    ratio = Fraction(work_rate / rate).limit_denominator(1000)
    x = scipy.signal.resample_poly(x, ratio.numerator, ratio.denominator)
    work_rate = rate * ratio.numerator / ratio.denominator
    x = lowpass(x, work_rate, band)

    first = int(round(offset * work_rate))
    last = len(x) if duration is None else first + int(round(duration * work_rate)) + 1
    excerpt = x[first:last]
    if len(excerpt) < 2:
        raise AudioError(f"{path}: excerpt is empty")
    t0 = first / work_rate
    grid = t0 + np.arange(len(excerpt)) / work_rate
    # Neighbouring samples outside the excerpt feed the interpolator so the
    # signal stays bandlimited up to the excerpt edges.
    lo = max(first - AUDIO_PAD, 0)
    evaluator = grid_interpolator(lo / work_rate, work_rate, x[lo:last + AUDIO_PAD])
    span = (len(excerpt) - 1) / work_rate
    return BandlimitedSignal(omega=float(target_omega), duration=span,
                             evaluator=evaluator,
                             c_max=C_MAX_SAFETY * float(np.max(np.abs(excerpt))),
                             energy=float(np.trapezoid(excerpt * excerpt, grid)),
                             start=t0, origin="audio-file")


def mse_db(x, xhat, guard=0.05):
    """Interior reconstruction error in dB.

    ``20 log10(||x - xhat||_2 / sqrt(T'))`` over the trace window with a
    fraction ``guard`` removed from each end; clamped at -200 dB.
    """
    samples = np.asarray(xhat.samples, dtype=float)
    if samples.size < 2:
        raise ParameterError("empty trace")
    if not 0 <= guard < 0.5:
        raise ParameterError("guard must lie in [0, 0.5)")
    t = xhat.times
    span = t[-1] - t[0]
    keep = (t >= t[0] + guard * span) & (t <= t[-1] - guard * span)
    t, err = t[keep], x(t[keep]) - samples[keep]
    if t.size < 2:
        raise ParameterError("guard leaves fewer than two samples")
    ms = np.trapezoid(err * err, t) / (t[-1] - t[0])
    if ms <= 0:
        return MSE_FLOOR_DB
    return max(MSE_FLOOR_DB, 10 * np.log10(ms))
