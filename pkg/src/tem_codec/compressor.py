"""
Segment planning and two-step pulse-shrinking TDC model.

A TDC configuration splits the admissible interval range into ``F`` coarse
cells of width ``dT1``; each coarse cell holds ``G`` fine cells of width
``dT2``. A measurement returns the coarse index ``f`` (the compression
segment) and the fine index ``g`` (the residual).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

__all__ = [
    "SegmentPlan",
    "TdcConfig",
    "TdcReading",
    "pow2_floor",
    "fixed_range",
    "plan_segments_cif",
    "plan_segments_acif",
    "adaptive_range",
    "tdc_configure",
    "uniform_config",
    "tdc_measure",
    "tdc_dequantize",
    "extension_words",
    "extension_from_words",
]

# Floors on the variance estimates, relative to the quantity they divide.
SIGMA_FLOOR = 2.0 ** -10


@dataclass(frozen=True)
class SegmentPlan:
    """Compression segmentation in force for one epoch.

    ``L`` segments (a power of two), ``eta = log2 L`` segment bits, ``rho``
    bias bits per sample (0 for fixed-bias machines) and ``phi`` the ratio
    linking bias levels to segments (1 for the fixed-bias rule).
    """

    L: int
    eta: int
    phi: float = 1.0
    rho: int = 0
    epoch: int = 0
    L_b: int = 0


class TdcReading(NamedTuple):
    """Coarse index ``f``, fine index ``g`` and quantization error ``q_e``.

    ``ext`` counts fine cells beyond the range: positive past the top cell,
    negative below the bottom cell.
    """

    f: int
    g: int
    q_e: float
    ext: int = 0

    @property
    def overflow(self):
        return self.ext > 0

    @property
    def underflow(self):
        return self.ext < 0


@dataclass(frozen=True)
class TdcConfig:
    F: int
    G: int
    dT1: float
    dT2: float
    range_offset: float
    D_n: float

    def lower(self, f, g, ext=0):
        """Lower edge of fine cell ``(f, g)``, shifted by ``ext`` cells."""
        return self.range_offset + f * self.dT1 + g * self.dT2 + ext * self.dT2

    def upper(self, f, g):
        """Upper edge of fine cell ``(f, g)``: the lower edge of the next
        cell, so that adjacent cells share one floating-point boundary."""
        if g < self.G - 1 or f == self.F - 1:
            return self.lower(f, g + 1)
        return self.lower(f + 1, 0)

    def is_edge(self, f, g):
        """True for the bottom and top cells, which carry an extension."""
        return (f == 0 and g == 0) or (f == self.F - 1 and g == self.G - 1)


def pow2_floor(x):
    """Largest power of two not exceeding ``x`` (at least 1)."""
    if x < 1:
        return 1
    return 1 << (int(math.floor(x)).bit_length() - 1)


def fixed_range(kd, b, c_max):
    """Interval range of a fixed-bias sampler: ``(dt_min, dt_max, D)``."""
    lo = kd / (b + c_max)
    hi = kd / (b - c_max)
    return lo, hi, hi - lo


def plan_segments_cif(sigma_T, D_fixed, K, epoch=0):
    """Segment count from the interval spread: ``ceil(D / (2 sigma))``,
    floored to a power of two and clamped to ``[2, K/2]``."""
    sigma_T = max(sigma_T, D_fixed * SIGMA_FLOOR)
    raw = math.ceil(D_fixed / (2 * sigma_T))
    L = min(max(pow2_floor(raw), 2), K // 2)
    return SegmentPlan(L=L, eta=L.bit_length() - 1, epoch=epoch)


def plan_segments_acif(sigma_c, mean_c, c_max, beta, K, epoch=0):
    """Bias-linked segment count.

    ``L_b = ceil(c_max / sigma_c)`` bias levels and
    ``phi = (2 E[c] + beta)^2 / (2 beta (2 c_max + beta))`` give
    ``L_AC = min(phi L_b, K/2)``, floored to a power of two >= 2. The bias
    word has ``rho = max(1, ceil(log2 L_AC - log2 phi))`` bits.
    """
    sigma_c = max(sigma_c, c_max * SIGMA_FLOOR)
    L_b = math.ceil(c_max / sigma_c) if c_max > 0 else 1
    phi = (2 * mean_c + beta) ** 2 / (2 * beta * (2 * c_max + beta))
    L = max(pow2_floor(min(phi * L_b, K / 2)), 2)
    eta = L.bit_length() - 1
    rho = max(1, math.ceil(eta - math.log2(phi) - 1e-12))
    return SegmentPlan(L=L, eta=eta, phi=phi, rho=rho, epoch=epoch, L_b=L_b)


def adaptive_range(b_n, beta, kappa, delta):
    """Interval range implied by bias ``b_n`` when ``c_hat = b_n - beta``."""
    if b_n < beta:
        raise ValueError(f"bias {b_n} below beta {beta}")
    kd = kappa * delta
    dt_min = kd / (2 * b_n - beta)
    dt_max = kd / beta
    return dt_min, dt_max, dt_max - dt_min


def tdc_configure(plan, rng, K, mode="full_resolution", floor=0.0):
    """Stage counts and shrink steps for ``plan`` over range ``rng``.

    ``full_resolution`` uses ``G = K / L`` fine stages so the residual fills
    ``log2 K - eta`` bits; ``paper_literal`` uses ``G = log2(K / L)``.
    ``D_n`` below ``floor`` is raised to it.
    """
    dt_min, _, D = rng
    D = max(D, floor)
    F = plan.L
    if mode == "full_resolution":
        G = K // F
    elif mode == "paper_literal":
        G = max((K // F).bit_length() - 1, 1)
    else:
        raise ValueError(f"unknown TDC mode {mode!r}")
    dT1 = D / F
    return TdcConfig(F=F, G=G, dT1=dT1, dT2=dT1 / G, range_offset=dt_min, D_n=D)


def uniform_config(rng, K):
    """Single coarse stage with ``K`` fine cells: a plain K-level quantizer."""
    dt_min, _, D = rng
    return TdcConfig(F=1, G=K, dT1=D, dT2=D / K, range_offset=dt_min, D_n=D)


def tdc_measure(T, cfg):
    """Coarse then fine pulse shrinking of an interval ``T``.

    Intervals outside the range land in the bottom or top cell and the
    number of further ``dT2`` cells is returned in ``ext``.
    """
    F, G = cfg.F, cfg.G
    r = T - cfg.range_offset
    if r < 0:
        ext = -int(math.ceil(-r / cfg.dT2))
        while cfg.lower(0, 0, ext) > T:
            ext -= 1
        while cfg.lower(0, 0, ext + 1) <= T and ext < 0:
            ext += 1
        return TdcReading(0, 0, T - cfg.lower(0, 0, ext), ext)
    top = cfg.lower(F - 1, G - 1)
    if T >= cfg.upper(F - 1, G - 1):
        ext = int((T - top) / cfg.dT2)
        while cfg.lower(F - 1, G - 1, ext) > T:
            ext -= 1
        while cfg.lower(F - 1, G - 1, ext + 1) <= T:
            ext += 1
        return TdcReading(F - 1, G - 1, T - cfg.lower(F - 1, G - 1, ext), ext)
    f = min(int(r / cfg.dT1), F - 1)
    g = min(int((r - f * cfg.dT1) / cfg.dT2), G - 1)
    # Reconcile with the exact cell edges used by the dequantizer.
    for _ in range(4):
        lo = cfg.lower(f, g)
        if lo > T:
            f, g = (f, g - 1) if g > 0 else (f - 1, G - 1)
        elif cfg.upper(f, g) <= T:
            f, g = (f, g + 1) if g < G - 1 else (f + 1, 0)
        else:
            break
    f = min(max(f, 0), F - 1)
    return TdcReading(f, g, T - cfg.lower(f, g))


def tdc_dequantize(f, g, cfg, ext=0):
    """Midpoint of fine cell ``(f, g)`` shifted by ``ext`` cells, kept
    positive."""
    return max(cfg.lower(f, g, ext) + 0.5 * cfg.dT2, 0.5 * cfg.dT2)


def extension_words(ext, K):
    """Escape words for an extension of ``|ext|`` cells.

    Each word holds ``log2 K`` bits; the value ``K - 1`` means "add
    ``K - 1`` cells and read another word".
    """
    q, r = divmod(abs(int(ext)), K - 1)
    return [K - 1] * q + [r]


def extension_from_words(words, K):
    """Inverse of :func:`extension_words` (magnitude only)."""
    return sum(words)
