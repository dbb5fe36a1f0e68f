"""
Closed-loop encoders for the four machines.

Encoder and decoder drive the same ``LoopState``: every state transition
uses only dequantized intervals and transmitted bias values, so a decoder
replaying the records reproduces the encoder's bias, segment plan and TDC
configuration sample by sample.

========  ============  ==================  ==========================
machine   bias          interval range      per-sample record
========  ============  ==================  ==========================
IF        fixed b_if    fixed               log2 K residual bits
CIF       fixed b_if    fixed, segmented    flag, segment on change,
                                            log2 K - eta residual bits
AIF       adaptive      fixed (at b_max)    log2 K bits + fixed bias word
ACIF      adaptive      adaptive (per b_n)  flag, segment on change,
                                            log2 K - eta bits, rho bias bits
========  ============  ==================  ==========================
"""

from __future__ import annotations

import logging
import struct
import zlib
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .compressor import (SegmentPlan, adaptive_range, extension_words, fixed_range,
                         plan_segments_acif, plan_segments_cif, tdc_configure,
                         tdc_dequantize, tdc_measure, uniform_config)
from .tem_core import (BIAS_STEP_FLOOR, DEFAULT_GRID_RATE, MACHINES, CodecParams,
                       ConfigurationError, FiringSequence, Integrator, MaxAmplitudePredictor,
                       Welford, _interval_max, quantize_bias)

__all__ = [
    "StreamError",
    "SampleRecord",
    "StreamHeader",
    "EncodedStream",
    "LoopState",
    "make_state",
    "encode",
]

log = logging.getLogger(__name__)

# Minimum dynamic range, relative to kappa*delta/beta (adaptive) or
# kappa*delta/b_if (fixed). Only binds for a near-silent signal or a bias
# sitting at beta.
RANGE_FLOOR = 1.0 / 64


class StreamError(ValueError):
    """Malformed, truncated or inconsistent stream."""


@dataclass(frozen=True)
class SampleRecord:
    """One encoded firing interval.

    ``flag`` marks an emitted segment index; it is always set on the first
    record of a compressed stream and never set for IF/AIF. ``extension``
    is present only when the reading is the bottom or top TDC cell and
    counts the further cells beyond it (negative below the range).
    """

    residual: int
    residual_bits: int
    flag: bool = False
    segment: Optional[int] = None
    segment_bits: int = 0
    bias_code: Optional[int] = None
    bias_bits: int = 0
    extension: Optional[int] = None
    extension_bits: int = 0


@dataclass(frozen=True)
class StreamHeader:
    machine: str
    params: CodecParams
    c_max: float
    omega: float
    start: float
    duration: float
    n_events: int
    plan_checksum: int = 0


@dataclass
class EncodedStream:
    header: StreamHeader
    records: List[SampleRecord]
    diagnostics: dict = field(default_factory=dict, compare=False)
    trace: Optional[FiringSequence] = field(default=None, compare=False)

    def __eq__(self, other):
        return (isinstance(other, EncodedStream) and self.header == other.header
                and self.records == other.records)


def plan_checksum(plans):
    """CRC-32 over the epoch plans and bias steps."""
    crc = 0
    for plan, step in plans:
        crc = zlib.crc32(struct.pack("<IIIId", plan.epoch, plan.L, plan.eta,
                                     plan.rho, step), crc)
    return crc


class LoopState:
    """Shared encoder/decoder state for one machine.

    Attributes ``bias``, ``bias_code``, ``config`` and ``plan`` describe the
    next interval; ``advance`` consumes its quantized reading.
    """

    def __init__(self, machine, params, c_max):
        if machine not in MACHINES:
            raise ConfigurationError(f"unknown machine {machine!r}")
        self.machine = machine
        self.params = p = params
        self.c_max = float(c_max)
        self.adaptive = machine in ("AIF", "ACIF")
        self.compressed = machine in ("CIF", "ACIF")
        self.n = 0
        self.plans = []
        self.plan = None
        self.bias_code = None
        self.bias_bits = 0
        self.range_floor_hits = 0

        if not self.adaptive:
            self.bias = p.b_if
            lo, hi, D = fixed_range(p.kd, p.b_if, self.c_max)
            floor = RANGE_FLOOR * p.kd / p.b_if
            if D < floor:
                log.debug("fixed range %.3g s raised to floor %.3g s", D, floor)
                D = floor
            self.rng = (lo, lo + D, D)
            if self.compressed:
                self.t_window = Welford()
                self._set_plan(plan_segments_cif(self.rng[2] / 4, self.rng[2], p.K), 0.0)
            self.config = self._config()
            return

        self.mapper = MaxAmplitudePredictor(p, self.c_max)
        self.bias_floor = BIAS_STEP_FLOOR * self.c_max
        if machine == "AIF":
            self.bias_bits = p.aif_bias_bits
            self.max_code = (1 << p.aif_bias_bits) - 1
            self.bias_step = (p.b_max - p.b_min) / self.max_code
            self.rng = adaptive_range(p.b_max, p.beta, p.kappa, p.delta)
        else:
            self._set_plan(plan_segments_acif(self.c_max / 2, self.c_max / 2,
                                              self.c_max, p.beta, p.K), None)
        self._set_bias(min(self.c_max + p.beta, p.b_max))

    # -- plan / bias bookkeeping ------------------------------------------------

    def _set_plan(self, plan, step):
        if self.machine == "ACIF":
            sigma = max(self.c_max / plan.L_b, self.bias_floor)
            self.bias_bits = plan.rho
            self.max_code = (1 << plan.rho) - 1
            # Widen the grid when rho bits cannot span [b_min, b_max].
            span = self.params.b_max - self.params.b_min
            step = max(sigma, span / self.max_code) if span > 0 else sigma
            self.bias_step = step
        self.plan = plan
        self.plans.append((plan, step))

    def _set_bias(self, target):
        p = self.params
        self.bias, self.bias_code = quantize_bias(target, self.bias_step, p.b_min,
                                                  p.b_max, self.max_code)
        self.config = self._config()

    def _config(self):
        p = self.params
        if self.machine == "ACIF":
            rng = adaptive_range(self.bias, p.beta, p.kappa, p.delta)
            floor = RANGE_FLOOR * p.kd / p.beta
            if rng[2] < floor:
                self.range_floor_hits += 1
                log.debug("dynamic range %.3g s raised to floor %.3g s", rng[2], floor)
            return tdc_configure(self.plan, rng, p.K, p.tdc_mode, floor)
        if self.machine == "CIF":
            return tdc_configure(self.plan, self.rng, p.K, p.tdc_mode)
        return uniform_config(self.rng, p.K)

    # -- record layout -----------------------------------------------------------

    @property
    def segment_bits(self):
        return self.plan.eta if self.compressed else 0

    @property
    def residual_bits(self):
        return self.params.log2K - self.segment_bits

    # -- transitions -------------------------------------------------------------

    def dequantize(self, f, g, ext=0):
        return tdc_dequantize(f, g, self.config, ext)

    def advance(self, f, g, ext=0):
        """Consume reading ``(f, g, ext)`` for the current interval; return
        the dequantized interval."""
        p = self.params
        T_hat = self.dequantize(f, g, ext or 0)
        self.n += 1
        epoch_end = self.n % p.M_var == 0
        if not self.adaptive:
            if self.compressed:
                self.t_window.push(T_hat)
                if epoch_end:
                    self._set_plan(plan_segments_cif(self.t_window.std, self.rng[2],
                                                     p.K, self.n // p.M_var), 0.0)
                    self.t_window.reset()
                    self.config = self._config()
            return T_hat

        self.mapper.update(T_hat, self.bias)
        if epoch_end and self.machine == "ACIF":
            w = self.mapper.window
            self._set_plan(plan_segments_acif(w.std, w.mean, self.c_max, p.beta,
                                              p.K, self.n // p.M_var), None)
        if epoch_end:
            self.mapper.window.reset()
        self._set_bias(self.mapper.bias_target())
        return T_hat

    def checksum(self):
        return plan_checksum(self.plans) if self.compressed else 0


def make_state(machine, params, c_max):
    return LoopState(machine, params, c_max)


def encode(signal, params, machine="ACIF", grid_rate=DEFAULT_GRID_RATE):
    """Sample ``signal`` with ``machine`` and quantize every interval.

    Each interval is measured from the decoder's reconstruction of the
    previous firing time rather than the true one, so quantization errors
    do not accumulate along the time axis.

    Returns an :class:`EncodedStream` whose ``trace`` holds the exact firing
    times and ``diagnostics`` counts TDC saturations and bias failures.
    """
    params.check_signal(signal.c_max)
    state = make_state(machine, params, signal.c_max)
    integ = Integrator(signal, params.kd, grid_rate)
    records = []
    times, biases, chats = [], [], []
    prev_f = None
    overflow = underflow = failures = 0
    t = t_hat = signal.start
    while True:
        b = state.bias
        t_next = integ.next_firing(t, b)
        if t_next is None:
            break
        cfg = state.config
        reading = tdc_measure(t_next - t_hat, cfg)
        overflow += reading.overflow
        underflow += reading.underflow
        if state.adaptive and b < _interval_max(integ, t, t_next):
            failures += 1
        ext, ext_bits = None, 0
        if cfg.is_edge(reading.f, reading.g):
            ext = reading.ext
            ext_bits = len(extension_words(ext, params.K)) * params.log2K
        flag = state.compressed and reading.f != prev_f
        records.append(SampleRecord(
            residual=reading.g, residual_bits=state.residual_bits, flag=flag,
            segment=reading.f if flag else None,
            segment_bits=state.segment_bits if state.compressed else 0,
            bias_code=state.bias_code, bias_bits=state.bias_bits,
            extension=ext, extension_bits=ext_bits))
        prev_f = reading.f
        times.append(t_next)
        biases.append(b)
        t_hat += state.advance(reading.f, reading.g, reading.ext)
        chats.append(state.mapper.c_hat if state.adaptive else signal.c_max)
        t = t_next

    header = StreamHeader(machine=machine, params=params, c_max=signal.c_max,
                          omega=signal.omega, start=signal.start,
                          duration=signal.duration, n_events=len(records),
                          plan_checksum=state.checksum())
    trace = FiringSequence(times=np.array(times), biases=np.array(biases),
                           c_hat=np.array(chats), params=params, machine=machine,
                           start=signal.start, map_failures=failures)
    diagnostics = {"overflow": overflow, "underflow": underflow,
                   "map_failures": failures, "range_floor": state.range_floor_hits,
                   "epochs": len(state.plans),
                   "mean_phi": float(np.mean([pl.phi for pl, _ in state.plans]))
                   if state.plans else 1.0}
    return EncodedStream(header=header, records=records, diagnostics=diagnostics,
                         trace=trace)
