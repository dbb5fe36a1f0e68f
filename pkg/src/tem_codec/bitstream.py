"""
Bit-exact ``.tem`` stream format and bit accounting.

A stream is a little-endian fixed header followed by bit-packed records
(most significant bit first), padded with zero bits to a whole byte at the
end only. Record field widths are not stored: the reader replays the shared
encoder state to learn them, exactly as the decoder does. See FORMAT.md.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from .codec import EncodedStream, SampleRecord, StreamError, StreamHeader, make_state
from .compressor import extension_words
from .decoder import mirror_decode
from .tem_core import MACHINES, CodecParams

__all__ = [
    "MAGIC",
    "VERSION",
    "BitWriter",
    "BitReader",
    "BitAccount",
    "serialize",
    "deserialize",
    "count_bits_empirical",
    "paper_count",
    "analytic_bit_count",
    "substituted_bit_count",
    "measured_statistics",
    "break_even",
    "normal_cdf",
    "gaussian_bit_bound",
]

MAGIC = b"TEM1"
VERSION = 1
TDC_MODES = ("full_resolution", "paper_literal")

_HEAD = struct.Struct("<4sBBBB")
_PARAMS = struct.Struct("<6dIIIdd")
_SIGNAL = struct.Struct("<4dIIQ")
HEADER_SIZE = _HEAD.size + _PARAMS.size + _SIGNAL.size


class BitWriter:
    """Append-only MSB-first bit buffer."""

    def __init__(self):
        self._acc = 0
        self.nbits = 0

    def write(self, value, width):
        if width == 0:
            if value:
                raise AssertionError(f"value {value} in a zero-width field")
            return
        if not 0 <= value < (1 << width):
            raise AssertionError(f"value {value} does not fit in {width} bits")
        self._acc = (self._acc << width) | value
        self.nbits += width

    def getvalue(self):
        """Bytes with the tail zero-padded to a byte boundary."""
        pad = -self.nbits % 8
        return (self._acc << pad).to_bytes((self.nbits + pad) // 8, "big")


class BitReader:
    """MSB-first reader over ``nbits`` bits of ``data``."""

    def __init__(self, data, nbits=None):
        self.nbits = len(data) * 8 if nbits is None else nbits
        if self.nbits > len(data) * 8:
            raise StreamError("stream truncated")
        self._acc = int.from_bytes(data, "big") >> (len(data) * 8 - self.nbits)
        self.pos = 0

    def read(self, width):
        if width == 0:
            return 0
        if self.pos + width > self.nbits:
            raise StreamError(f"stream truncated at bit {self.pos}")
        self.pos += width
        return (self._acc >> (self.nbits - self.pos)) & ((1 << width) - 1)


def _pack_header(h, payload_bits):
    p = h.params
    return (_HEAD.pack(MAGIC, VERSION, MACHINES.index(h.machine),
                       TDC_MODES.index(p.tdc_mode), p.aif_bias_bits)
            + _PARAMS.pack(p.kappa, p.delta, p.beta, p.b_if, p.b_min, p.b_max,
                           p.K, p.M_var, p.w_map, p.alpha1, p.alpha2)
            + _SIGNAL.pack(h.c_max, h.omega, h.start, h.duration, h.n_events,
                           h.plan_checksum, payload_bits))


def _unpack_header(data):
    if len(data) < HEADER_SIZE:
        raise StreamError("stream shorter than its header")
    magic, version, machine, mode, rb = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise StreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StreamError(f"unsupported version {version}")
    if machine >= len(MACHINES) or mode >= len(TDC_MODES):
        raise StreamError("bad machine or TDC mode id")
    kappa, delta, beta, b_if, b_min, b_max, K, M_var, w_map, a1, a2 = \
        _PARAMS.unpack_from(data, _HEAD.size)
    c_max, omega, start, duration, n, crc, nbits = \
        _SIGNAL.unpack_from(data, _HEAD.size + _PARAMS.size)
    try:
        params = CodecParams(kappa=kappa, delta=delta, beta=beta, b_if=b_if,
                             b_min=b_min, b_max=b_max, K=K, M_var=M_var, w_map=w_map,
                             alpha1=a1, alpha2=a2, aif_bias_bits=rb,
                             tdc_mode=TDC_MODES[mode])
    except ValueError as exc:
        raise StreamError(f"invalid parameters in header: {exc}") from exc
    header = StreamHeader(machine=MACHINES[machine], params=params, c_max=c_max,
                          omega=omega, start=start, duration=duration, n_events=n,
                          plan_checksum=crc)
    return header, nbits


def serialize(stream):
    """Encode ``stream`` as bytes.

    Compressed machines spend one flag bit per record; the segment index
    follows only when the flag is set. Records in the bottom or top TDC cell
    are followed by their extension words.
    """
    h = stream.header
    K, log2K = h.params.K, h.params.log2K
    w = BitWriter()
    compressed = h.machine in ("CIF", "ACIF")
    for n, rec in enumerate(stream.records):
        if compressed:
            if n == 0 and not rec.flag:
                raise AssertionError("first record of a compressed stream has no segment")
            w.write(int(rec.flag), 1)
            if rec.flag:
                w.write(rec.segment, rec.segment_bits)
        w.write(rec.residual, rec.residual_bits)
        if rec.bias_bits:
            w.write(rec.bias_code, rec.bias_bits)
        if rec.extension is not None:
            for word in extension_words(rec.extension, K):
                w.write(word, log2K)
    return _pack_header(h, w.nbits) + w.getvalue()


def _read_extension(r, K, log2K, sign):
    total = 0
    while True:
        word = r.read(log2K)
        total += word
        if word != K - 1:
            return sign * total


def deserialize(data):
    """Inverse of :func:`serialize`.

    Raises :class:`StreamError` on a bad header, a truncated payload or a
    record that the replayed state cannot accept.
    """
    data = bytes(data)
    h, nbits = _unpack_header(data)
    payload = data[HEADER_SIZE:]
    if len(payload) != (nbits + 7) // 8:
        raise StreamError(f"payload has {len(payload)} bytes, header declares "
                          f"{(nbits + 7) // 8}")
    r = BitReader(payload, nbits)
    p = h.params
    state = make_state(h.machine, p, h.c_max)
    records = []
    f = None
    for n in range(h.n_events):
        flag, segment = False, None
        if state.compressed:
            flag = bool(r.read(1))
            if flag:
                segment = f = r.read(state.segment_bits)
            elif f is None:
                raise StreamError(f"record {n}: no segment index in force")
            if f >= state.config.F:
                raise StreamError(f"record {n}: segment {f} out of range")
        else:
            f = 0
        g = r.read(state.residual_bits)
        if g >= state.config.G:
            raise StreamError(f"record {n}: residual {g} out of range")
        code = r.read(state.bias_bits) if state.bias_bits else None
        if state.adaptive and code != state.bias_code:
            raise StreamError(f"record {n}: bias code {code} != mirrored "
                              f"{state.bias_code}")
        ext, ext_bits = None, 0
        if state.config.is_edge(f, g):
            sign = -1 if (f == 0 and g == 0) else 1
            start = r.pos
            ext = _read_extension(r, p.K, p.log2K, sign)
            ext_bits = r.pos - start
        records.append(SampleRecord(
            residual=g, residual_bits=state.residual_bits, flag=flag, segment=segment,
            segment_bits=state.segment_bits if state.compressed else 0,
            bias_code=code, bias_bits=state.bias_bits, extension=ext,
            extension_bits=ext_bits))
        state.advance(f, g, ext or 0)
    if r.pos != nbits:
        raise StreamError(f"{nbits - r.pos} trailing payload bits")
    if state.checksum() != h.plan_checksum:
        raise StreamError("epoch plan checksum mismatch")
    return EncodedStream(header=h, records=records)


@dataclass(frozen=True)
class BitAccount:
    """Bit usage of one stream.

    ``total_paper_count`` sums segment, residual, bias and extension bits;
    ``total_self_delimiting`` adds the per-record change flags.
    ``n_switches`` counts segment changes after the initial segment.
    """

    n_samples: int
    n_switches: int
    bits_segments: int
    bits_residuals: int
    bits_bias: int
    bits_flags: int
    bits_extension: int
    total_self_delimiting: int
    total_paper_count: int

    @property
    def switch_rate(self):
        return self.n_switches / self.n_samples if self.n_samples > 1 else 0.0

    @property
    def bits_per_sample(self):
        return self.total_paper_count / self.n_samples if self.n_samples else 0.0


def count_bits_empirical(stream):
    """Account every field of ``stream`` as laid out by :func:`serialize`."""
    recs = stream.records
    compressed = stream.header.machine in ("CIF", "ACIF")
    seg = sum(r.segment_bits for r in recs if r.flag)
    res = sum(r.residual_bits for r in recs)
    bias = sum(r.bias_bits for r in recs)
    ext = sum(r.extension_bits for r in recs)
    flags = len(recs) if compressed else 0
    switches = max(sum(r.flag for r in recs) - 1, 0)
    total = seg + res + bias + ext
    return BitAccount(n_samples=len(recs), n_switches=switches, bits_segments=seg,
                      bits_residuals=res, bits_bias=bias, bits_flags=flags,
                      bits_extension=ext, total_self_delimiting=total + flags,
                      total_paper_count=total)


def paper_count(n_samples, K, eta, rho, switches):
    """``eta M + N (log2 K - eta) + N rho`` for constant widths."""
    return eta * switches + n_samples * (math.log2(K) - eta) + n_samples * rho


def analytic_bit_count(n_samples, K, L, P_M, phi):
    """Closed-form total ``N (log2 K + log2 L (P_M - log2 phi - 1))``."""
    if not 0 <= P_M <= 1:
        raise ValueError("P_M must lie in [0, 1]")
    if phi <= 0:
        raise ValueError("phi must be positive")
    return n_samples * (math.log2(K) + math.log2(L) * (P_M - math.log2(phi) - 1))


def substituted_bit_count(n_samples, K, L, P_M, phi):
    """``paper_count`` with ``M = P_M N``, ``eta = log2 L`` and the real-valued
    ``rho = log2 L - log2 phi``: ``N (log2 K + P_M log2 L - log2 phi)``."""
    if not 0 <= P_M <= 1:
        raise ValueError("P_M must lie in [0, 1]")
    if phi <= 0:
        raise ValueError("phi must be positive")
    return n_samples * (math.log2(K) + P_M * math.log2(L) - math.log2(phi))


def measured_statistics(stream):
    """``(P_M, L, phi)`` measured on a compressed stream.

    ``L`` and ``phi`` are geometric means over records of the plan in force,
    so that ``log2 L`` and ``log2 phi`` are the per-record averages.
    """
    if stream.header.machine not in ("CIF", "ACIF"):
        raise ValueError("statistics need a compressed stream")
    plans = mirror_decode(stream).plans
    acct = count_bits_empirical(stream)
    log_L = sum(pl.eta for pl in plans) / len(plans)
    log_phi = sum(math.log2(pl.phi) for pl in plans) / len(plans)
    return acct.switch_rate, 2.0 ** log_L, 2.0 ** log_phi


def break_even(P_M, K, L, nu, phi):
    """True when the compressed adaptive stream needs fewer bits than a
    fixed-bias stream with ``nu`` times as many samples at the same ``K``."""
    return P_M < math.log2(K) * (nu - 1) / math.log2(L) + 1 + math.log2(phi)


def normal_cdf(x):
    """Standard normal CDF."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def gaussian_bit_bound(mu, sigma, n, n_tilde, n_samples, K, beta, kappa, delta, c_max):
    """Upper bound on the total for a Gaussian amplitude ``N(mu, sigma^2)``.

    Switches occur outside ``mu +- n sigma`` (``P_M = 1 - (Phi(n) -
    Phi(-n))``), the segment count is ``mu / sigma + n_tilde`` and
    ``phi = log2((2 (mu + sigma) + beta)^2 / (kappa delta beta (c_max + beta)))``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    P_M = 1.0 - (normal_cdf(n) - normal_cdf(-n))
    phi = math.log2((2 * (mu + sigma) + beta) ** 2 / (kappa * delta * beta * (c_max + beta)))
    return n_samples * (math.log2(K) + math.log2(mu / sigma + n_tilde) * (P_M - math.log2(phi)))
