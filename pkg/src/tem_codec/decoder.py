"""
Stream replay and bandlimited reconstruction.

The reconstruction represents the signal as a sum of sinc kernels centred
on interval midpoints and fits the kernel weights to the measured
integrals ``y_n = kappa delta - b_n T_n`` with a truncated-SVD
pseudo-inverse.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import sici

from .codec import StreamError, make_state
from .signal import ParameterError, SampledTrace

__all__ = [
    "ReconstructionError",
    "DecodedSequence",
    "ReconstructionConfig",
    "mirror_decode",
    "from_firing",
    "frame_matrix",
    "reconstruct",
]

log = logging.getLogger(__name__)


class ReconstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecodedSequence:
    times: np.ndarray
    intervals: np.ndarray
    biases: np.ndarray
    measurements: np.ndarray
    start: float
    duration: float
    omega: float
    dt_max: float = 0.0
    plans: tuple = ()

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class ReconstructionConfig:
    """``tol`` drops singular values below ``tol * s_max``; ``rate`` is the
    output grid rate in Hz (defaults to 50x Nyquist, at least 8x)."""

    omega: float
    tol: float = 1e-8
    rate: float = None

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ParameterError("tol must lie in (0, 1)")
        if self.rate is None:
            object.__setattr__(self, "rate", 50 * self.omega / np.pi)
        if self.rate < 8 * self.omega / np.pi:
            raise ParameterError("output rate must be at least 8x Nyquist")


def from_firing(seq, omega, duration):
    """Decoded view of exact (unquantized) firing times."""
    T = seq.intervals
    return DecodedSequence(times=np.asarray(seq.times), intervals=T,
                           biases=np.asarray(seq.biases),
                           measurements=seq.params.kd - seq.biases * T,
                           start=seq.start, duration=duration, omega=omega,
                           dt_max=float(T.max()) if len(T) else 0.0)


def mirror_decode(stream):
    """Replay the encoder state over ``stream.records``.

    Raises :class:`StreamError` if a transmitted bias disagrees with the
    mirrored one, if a segment index is missing, or if the epoch-plan
    checksum differs from the header.
    """
    h = stream.header
    if len(stream.records) != h.n_events:
        raise StreamError(f"expected {h.n_events} records, got {len(stream.records)}")
    state = make_state(h.machine, h.params, h.c_max)
    T_hat = np.empty(h.n_events)
    biases = np.empty(h.n_events)
    plans = []
    f = None
    for n, rec in enumerate(stream.records):
        plans.append(state.plan)
        if state.adaptive and rec.bias_code != state.bias_code:
            raise StreamError(f"record {n}: bias code {rec.bias_code} != mirrored "
                              f"{state.bias_code}")
        if state.compressed:
            if rec.flag:
                f = rec.segment
            if f is None:
                raise StreamError(f"record {n}: no segment index in force")
        else:
            f = 0
        biases[n] = state.bias
        ext = 0
        if state.config.is_edge(f, rec.residual):
            if rec.extension is None:
                raise StreamError(f"record {n}: edge cell without extension")
            ext = rec.extension
        T_hat[n] = state.advance(f, rec.residual, ext)
    if state.checksum() != h.plan_checksum:
        raise StreamError("epoch plan checksum mismatch")
    times = h.start + np.cumsum(T_hat)
    return DecodedSequence(times=times, intervals=T_hat, biases=biases,
                           measurements=h.params.kd - biases * T_hat,
                           start=h.start, duration=h.duration, omega=h.omega,
                           dt_max=float(T_hat.max()) if h.n_events else 0.0,
                           plans=tuple(plans))


def _si(x):
    return sici(x)[0]


def frame_matrix(edges, centers, omega):
    """``A[n, k]`` = integral over ``[edges[n], edges[n+1]]`` of
    ``sinc(omega (t - centers[k]))``, via the sine integral."""
    u = omega * (np.asarray(edges)[:, None] - np.asarray(centers)[None, :])
    S = _si(u)
    return (S[1:] - S[:-1]) / omega


def reconstruct(seq, cfg=None):
    """Recover ``x`` on a uniform grid over the stream window."""
    if cfg is None:
        cfg = ReconstructionConfig(omega=seq.omega)
    omega = cfg.omega
    grid = seq.start + np.arange(int(np.floor(seq.duration * cfg.rate)) + 1) / cfg.rate
    if len(seq) < 2:
        raise ReconstructionError("need at least two measurements")
    if seq.dt_max >= np.pi / omega:
        log.warning("largest interval %.3g s exceeds pi/omega; recovery not guaranteed",
                    seq.dt_max)
    edges = np.concatenate(([seq.start], seq.times))
    centers = 0.5 * (edges[1:] + edges[:-1])
    A = frame_matrix(edges, centers, omega)
    y = np.asarray(seq.measurements, dtype=float)
    if not np.any(y):
        return SampledTrace(sample_rate=cfg.rate, samples=np.zeros(len(grid)),
                            start=seq.start)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > cfg.tol * s[0]
    if not keep.any():
        raise ReconstructionError("frame matrix has numerical rank 0")
    d = Vt[keep].T @ ((U[:, keep].T @ y) / s[keep])
    E = np.sinc((grid[:, None] - centers[None, :]) * (omega / np.pi))
    return SampledTrace(sample_rate=cfg.rate, samples=E @ d, start=seq.start)
