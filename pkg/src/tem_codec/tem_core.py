"""
Integrate-and-fire time encoding with fixed and adaptive bias.

The integrator runs on a dense uniform grid of the input signal. Between
grid points the signal is taken to be linear, so the running integral is
piecewise quadratic and each firing time is found in closed form inside
the grid cell where the threshold is crossed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "ConfigurationError",
    "CodecParams",
    "FiringEvent",
    "FiringSequence",
    "Welford",
    "MaxAmplitudePredictor",
    "Integrator",
    "quantize_bias",
    "encode_fixed",
    "encode_adaptive",
    "measurements_from_times",
    "firing_bounds",
    "windowed_max",
    "check_firing_bounds",
    "recovery_violations",
    "MACHINES",
    "DEFAULT_GRID_RATE",
]

MACHINES = ("IF", "AIF", "CIF", "ACIF")

# Integration grid (Hz). Linear interpolation error at this rate is far
# below kappa * delta for signals bandlimited to a few tens of Hz.
DEFAULT_GRID_RATE = 100_000.0

# Bias grid step floor, relative to c_max.
BIAS_STEP_FLOOR = 2.0 ** -10


class ConfigurationError(ValueError):
    """Sampler parameters are inconsistent with the signal."""


@dataclass(frozen=True)
class CodecParams:
    """Sampler, quantizer and estimator constants shared by all machines."""

    kappa: float = 0.24
    delta: float = 0.0156
    beta: float = 0.5
    b_if: float = 3.4166
    b_min: Optional[float] = None
    b_max: Optional[float] = None
    K: int = 256
    M_var: int = 32
    w_map: int = 16
    alpha1: float = 0.98
    alpha2: float = 0.6
    aif_bias_bits: int = 3
    tdc_mode: str = "full_resolution"

    def __post_init__(self):
        # b_min = beta and b_max = b_if unless overridden.
        if self.b_min is None:
            object.__setattr__(self, "b_min", self.beta)
        if self.b_max is None:
            object.__setattr__(self, "b_max", self.b_if)
        if self.kappa <= 0 or self.delta <= 0 or self.beta <= 0:
            raise ConfigurationError("kappa, delta and beta must be positive")
        if self.K < 4 or self.K & (self.K - 1):
            raise ConfigurationError(f"K must be a power of two >= 4, got {self.K}")
        if self.b_min < self.beta:
            raise ConfigurationError("b_min must be >= beta")
        if self.b_max < self.b_min:
            raise ConfigurationError("b_max must be >= b_min")
        if self.M_var < 2 or self.w_map < 1:
            raise ConfigurationError("M_var must be >= 2 and w_map >= 1")
        if not (0 < self.alpha1 <= 1) or self.alpha2 < 0:
            raise ConfigurationError("alpha1 must lie in (0, 1], alpha2 >= 0")
        if self.aif_bias_bits < 1:
            raise ConfigurationError("aif_bias_bits must be >= 1")
        if self.tdc_mode not in ("full_resolution", "paper_literal"):
            raise ConfigurationError(f"unknown tdc_mode {self.tdc_mode!r}")

    @property
    def kd(self):
        """Integration threshold ``kappa * delta``."""
        return self.kappa * self.delta

    @property
    def log2K(self):
        return self.K.bit_length() - 1

    def with_(self, **changes):
        """Copy with ``changes``; bias limits still tied to their defaults
        follow a new ``beta`` or ``b_if``."""
        if "beta" in changes and "b_min" not in changes and self.b_min == self.beta:
            changes["b_min"] = None
        if "b_if" in changes and "b_max" not in changes and self.b_max == self.b_if:
            changes["b_max"] = None
        return replace(self, **changes)

    def check_signal(self, c_max):
        if self.b_if <= c_max:
            raise ConfigurationError(
                f"fixed bias b_if={self.b_if} must exceed c_max={c_max:.6g}")


class FiringEvent(NamedTuple):
    t_n: float
    T_n: float
    b_n: float
    c_hat_n: float


@dataclass(frozen=True)
class FiringSequence:
    """Firing times with per-interval bias; arrays are aligned by event."""

    times: np.ndarray
    biases: np.ndarray
    c_hat: np.ndarray
    params: CodecParams
    machine: str
    start: float = 0.0
    map_failures: int = 0

    def __len__(self):
        return len(self.times)

    @property
    def intervals(self):
        return np.diff(self.times, prepend=self.start)

    @property
    def events(self):
        return [FiringEvent(*row) for row in
                zip(self.times, self.intervals, self.biases, self.c_hat)]


class Welford:
    """Running mean and variance (Welford's update)."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self):
        self.reset()

    def reset(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x):
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    @property
    def variance(self):
        # Sample variance; zero until two values are seen.
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std(self):
        return math.sqrt(self.variance)


class MaxAmplitudePredictor:
    """Recursive estimate of the local signal amplitude from intervals.

    Each interval gives ``z = |kappa delta / T - b|``, the magnitude of the
    signal mean over that interval. The estimate is smoothed with
    ``alpha1`` and the prediction adds ``alpha2`` times the running standard
    deviation of the estimate. A second accumulator, reset every ``M_var``
    updates by the caller, provides the windowed statistics used for
    segment planning.
    """

    def __init__(self, params, c_max):
        self.params = params
        self.c_hat = float(c_max)
        self.running = Welford()
        self.window = Welford()

    def update(self, T, b):
        p = self.params
        z = abs(p.kd / T - b)
        self.c_hat = p.alpha1 * z + (1 - p.alpha1) * self.c_hat
        self.running.push(self.c_hat)
        self.window.push(self.c_hat)
        return self.c_hat

    @property
    def s_n(self):
        return self.running.std

    def predicted(self):
        return self.c_hat + self.params.alpha2 * self.s_n

    def bias_target(self):
        return self.predicted() + self.params.beta


def quantize_bias(b_raw, step, b_min, b_max, max_code=None):
    """Round ``b_raw`` up onto the grid ``b_min + k * step``.

    The result is clamped to ``b_max`` (and to ``max_code`` when given) and
    returned as ``(b_q, k)``. A non-positive ``step`` is replaced by a tiny
    floor.
    """
    if not step > 0:
        step = BIAS_STEP_FLOOR * max(b_max - b_min, 1.0)
    top = int(math.floor((b_max - b_min) / step + 1e-9))
    if max_code is not None:
        top = min(top, max_code)
    k = math.ceil((b_raw - b_min) / step - 1e-9)
    k = min(max(k, 0), top)
    return min(b_min + k * step, b_max), k


class Integrator:
    """Threshold-crossing search over a dense grid of one signal."""

    def __init__(self, signal, threshold, grid_rate=DEFAULT_GRID_RATE):
        self.signal = signal
        self.threshold = threshold
        self.t, self.x = signal.grid(grid_rate)
        self.h = self.t[1] - self.t[0]
        cum = np.concatenate(([0.0], np.cumsum(0.5 * self.h * (self.x[1:] + self.x[:-1]))))
        self.cum = cum

    def _integral_to(self, t):
        """Integral of x from the window start to ``t`` and the cell index."""
        i = min(int((t - self.t[0]) / self.h), len(self.t) - 2)
        tau = t - self.t[i]
        slope = (self.x[i + 1] - self.x[i]) / self.h
        return self.cum[i] + self.x[i] * tau + 0.5 * slope * tau * tau, i

    def next_firing(self, t_prev, b):
        """First time after ``t_prev`` where the integral of ``x + b`` reaches
        the threshold, or ``None`` if the window ends first."""
        base, i0 = self._integral_to(t_prev)
        n = len(self.t)
        lo = i0 + 1
        span = 1024
        while lo < n:
            hi = min(lo + span, n)
            acc = self.cum[lo:hi] - base + b * (self.t[lo:hi] - t_prev)
            hit = np.flatnonzero(acc >= self.threshold)
            if hit.size:
                j = lo + hit[0]
                break
            lo, span = hi, span * 2
        else:
            return None
        # Solve inside cell [j-1, j], starting at t_prev if it lies there.
        if j - 1 == i0:
            left, acc_left = t_prev, 0.0
        else:
            left = self.t[j - 1]
            acc_left = self.cum[j - 1] - base + b * (left - t_prev)
        xl = self.x[j - 1] + (self.x[j] - self.x[j - 1]) * (left - self.t[j - 1]) / self.h
        m = (self.x[j] - self.x[j - 1]) / self.h
        a = xl + b
        r = self.threshold - acc_left
        disc = max(a * a + 2 * m * r, 0.0)
        denom = a + math.sqrt(disc)
        tau = 2 * r / denom if denom > 0 else self.t[j] - left
        return min(max(left + tau, left), self.t[j])


def windowed_max(signal, times, w, start, grid_rate=DEFAULT_GRID_RATE):
    """Max of ``|x|`` over the grid cells spanned by the previous ``w``
    firing intervals (including the current one), per event."""
    t, x = signal.grid(grid_rate)
    h = t[1] - t[0]
    ax = np.abs(x)
    edges = np.concatenate(([start], np.asarray(times, dtype=float)))
    lo_idx = np.floor((edges - t[0]) / h).astype(int).clip(0, len(t) - 1)
    hi_idx = np.ceil((edges - t[0]) / h).astype(int).clip(0, len(t) - 1)
    out = np.empty(len(times))
    for n in range(len(times)):
        a = lo_idx[max(n + 1 - w, 0)]
        out[n] = ax[a:hi_idx[n + 1] + 1].max()
    return out


def firing_bounds(kd, b, c):
    """Interval bounds for bias ``b`` and local amplitude ``c``.

    The upper bound is infinite when ``b <= c``.
    """
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    lower = kd / (b + c)
    with np.errstate(divide="ignore"):
        upper = np.where(b > c, kd / np.where(b > c, b - c, 1.0), np.inf)
    return lower, upper


def check_firing_bounds(seq, signal, grid_rate=DEFAULT_GRID_RATE, rtol=1e-9):
    """Boolean mask: each interval lies within its firing bounds."""
    if len(seq) == 0:
        return np.zeros(0, dtype=bool)
    c = windowed_max(signal, seq.times, seq.params.w_map, seq.start, grid_rate)
    lower, upper = firing_bounds(seq.params.kd, seq.biases, c)
    T = seq.intervals
    return (T >= lower * (1 - rtol)) & (T <= upper * (1 + rtol))


def recovery_violations(seq, omega, c_max=None):
    """Indices of events whose worst-case interval reaches ``pi / omega``.

    Uses the fixed-bias bound with ``c_max`` for fixed machines and the
    adaptive ``kappa delta / beta`` bound otherwise.
    """
    p = seq.params
    if seq.machine in ("IF", "CIF"):
        c = seq.params.b_if if c_max is None else c_max
        worst = np.full(len(seq), p.kd / (p.b_if - c) if p.b_if > c else np.inf)
    else:
        worst = np.full(len(seq), p.kd / p.beta)
    return np.flatnonzero(worst >= np.pi / omega)


def encode_fixed(signal, params, grid_rate=DEFAULT_GRID_RATE, machine="IF"):
    """Fixed-bias integrate-and-fire encoding with exact firing times."""
    params.check_signal(signal.c_max)
    integ = Integrator(signal, params.kd, grid_rate)
    times = []
    t = signal.start
    while True:
        t = integ.next_firing(t, params.b_if)
        if t is None:
            break
        times.append(t)
    n = len(times)
    return FiringSequence(times=np.array(times), biases=np.full(n, params.b_if),
                          c_hat=np.full(n, signal.c_max), params=params,
                          machine=machine, start=signal.start)


def _interval_max(integ, t0, t1):
    h = integ.h
    a = max(int(math.floor((t0 - integ.t[0]) / h)), 0)
    b = min(int(math.ceil((t1 - integ.t[0]) / h)), len(integ.t) - 1)
    return float(np.abs(integ.x[a:b + 1]).max())


def encode_adaptive(signal, params, grid_rate=DEFAULT_GRID_RATE, machine="AIF"):
    """Adaptive-bias encoding with exact firing times.

    The bias grid step is the windowed standard deviation of the amplitude
    estimate, refreshed every ``M_var`` events. The amplitude estimate is
    seeded with ``c_max`` so the first interval is valid.
    """
    p = params
    integ = Integrator(signal, p.kd, grid_rate)
    mapper = MaxAmplitudePredictor(p, signal.c_max)
    floor = BIAS_STEP_FLOOR * signal.c_max
    step = max(signal.c_max / 4, floor)
    b, _ = quantize_bias(min(signal.c_max + p.beta, p.b_max), step, p.b_min, p.b_max)
    times, biases, chats = [], [], []
    failures = 0
    t = signal.start
    while True:
        t_next = integ.next_firing(t, b)
        if t_next is None:
            break
        if b < _interval_max(integ, t, t_next):
            failures += 1
        c_hat = mapper.update(t_next - t, b)
        times.append(t_next)
        biases.append(b)
        chats.append(c_hat)
        t = t_next
        if len(times) % p.M_var == 0:
            step = max(mapper.window.std, floor)
            mapper.window.reset()
        b, _ = quantize_bias(mapper.bias_target(), step, p.b_min, p.b_max)
    return FiringSequence(times=np.array(times), biases=np.array(biases),
                          c_hat=np.array(chats), params=p, machine=machine,
                          start=signal.start, map_failures=failures)


def measurements_from_times(seq):
    """Integrals of the input over each firing interval:
    ``kappa delta - b_n T_n``."""
    return seq.params.kd - np.asarray(seq.biases) * seq.intervals
