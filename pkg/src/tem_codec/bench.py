"""
Rate-distortion sweeps over the four machines.

A sweep encodes every ensemble signal with every machine at every quantizer
size ``K``, decodes, reconstructs and records one :class:`ResultRow` per
point. Summaries compare machines at equal bit budgets and at equal MSE.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bitstream import count_bits_empirical
from .codec import encode
from .decoder import mirror_decode, reconstruct
from .signal import load_audio, mse_db, synth_sinc_signal
from .tem_core import MACHINES, CodecParams

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "parse_config",
    "build_signal",
    "run_point",
    "sweep",
    "write_csv",
    "read_csv",
    "curves",
    "bits_at_mse",
    "mse_at_bits",
    "compression",
    "budget_comparison",
    "DEFAULT_AUDIO",
]

DEFAULT_KS = (16, 32, 64, 128, 256, 512)
DEFAULT_AUDIO = Path(__file__).parent / "data" / "pluck.wav"

PARAM_FIELDS = {f.name for f in dataclasses.fields(CodecParams)}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep depends on.

    ``source`` is ``"sinc"`` for the seeded ensemble or a WAV path. Audio
    runs use ``seeds`` excerpts of ``duration`` seconds starting at
    ``audio_offset + i * audio_stride`` on the scaled time axis.
    """

    machines: Tuple[str, ...] = MACHINES
    source: str = "sinc"
    seeds: int = 20
    seed0: int = 0
    omega: float = 2 * math.pi * 10
    half_terms: int = 2
    duration: float = 1.0
    time_scale: float = 1.0
    audio_offset: float = 0.0
    audio_stride: float = 15.0
    Ks: Tuple[int, ...] = DEFAULT_KS
    targets: Tuple[float, ...] = ()
    params: CodecParams = field(default_factory=CodecParams)
    workers: int = 1

    def __post_init__(self):
        bad = [m for m in self.machines if m not in MACHINES]
        if bad:
            raise ValueError(f"unknown machines {bad}")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")

    def resolved(self):
        """Flat ``key -> str`` view of the configuration."""
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "params":
                for pf in dataclasses.fields(v):
                    out[pf.name] = str(getattr(v, pf.name))
            elif isinstance(v, tuple):
                out[f.name] = ",".join(str(x) for x in v)
            else:
                out[f.name] = str(v)
        return out


_TUPLES = {"machines": str, "Ks": int, "targets": float}


def _coerce(value, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def parse_config(text, base=None, **overrides):
    """Build a config from ``key = value`` lines layered over ``base``.

    Keys are :class:`ExperimentConfig` fields or :class:`CodecParams`
    fields. List fields take comma-separated values. Blank lines and ``#``
    comments are ignored. Keyword ``overrides`` apply before the text.
    """
    base = base or ExperimentConfig()
    items = dict(overrides)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        items[key] = value
    cfg_changes, param_changes = {}, {}
    defaults = CodecParams()
    for key, value in items.items():
        if value is None:
            continue
        if key in _TUPLES:
            if isinstance(value, str):
                value = tuple(_TUPLES[key](v.strip()) for v in value.split(",") if v.strip())
            cfg_changes[key] = tuple(value)
        elif key in PARAM_FIELDS:
            like = getattr(defaults, key)
            if like is None:
                like = 0.0
            param_changes[key] = _coerce(value, like) if isinstance(value, str) else value
        elif key in {f.name for f in dataclasses.fields(ExperimentConfig)} and key != "params":
            like = getattr(base, key)
            cfg_changes[key] = _coerce(value, like) if isinstance(value, str) else value
        else:
            raise ValueError(f"unknown configuration key {key!r}")
    params = base.params.with_(**param_changes) if param_changes else base.params
    return dataclasses.replace(base, params=params, **cfg_changes)


@dataclass(frozen=True)
class ResultRow:
    machine: str
    seed: int
    K: int
    n_events: int
    bits_paper: int
    bits_self_delimiting: int
    mse_db: float
    switch_rate: float
    mean_phi: float
    saturations: int


ROW_FIELDS = [f.name for f in dataclasses.fields(ResultRow)]


def build_signal(cfg, seed):
    """Ensemble member ``seed`` (an absolute seed or excerpt index)."""
    if cfg.source == "sinc":
        return synth_sinc_signal(cfg.omega, cfg.half_terms, duration=cfg.duration,
                                 seed=seed)
    index = seed - cfg.seed0
    return load_audio(cfg.source, cfg.omega, time_scale=cfg.time_scale,
                      offset=cfg.audio_offset + index * cfg.audio_stride,
                      duration=cfg.duration)


def run_point(cfg, machine, seed, K, signal=None):
    """Encode, decode and reconstruct one ensemble member."""
    if signal is None:
        signal = build_signal(cfg, seed)
    params = cfg.params.with_(K=K)
    stream = encode(signal, params, machine)
    trace = reconstruct(mirror_decode(stream))
    acct = count_bits_empirical(stream)
    return ResultRow(machine=machine, seed=seed, K=K, n_events=acct.n_samples,
                     bits_paper=acct.total_paper_count,
                     bits_self_delimiting=acct.total_self_delimiting,
                     mse_db=round(float(mse_db(signal, trace)), 6),
                     switch_rate=round(acct.switch_rate, 6),
                     mean_phi=round(stream.diagnostics.get("mean_phi", 1.0), 6),
                     saturations=stream.diagnostics["overflow"]
                     + stream.diagnostics["underflow"])


def _run_seed(args):
    cfg, seed = args
    signal = build_signal(cfg, seed)
    return [run_point(cfg, m, seed, K, signal) for m in cfg.machines for K in cfg.Ks]


def sweep(cfg):
    """All ``(machine, seed, K)`` rows, sorted deterministically."""
    jobs = [(cfg, cfg.seed0 + i) for i in range(cfg.seeds)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(_run_seed, jobs))
    else:
        chunks = [_run_seed(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    order = {m: i for i, m in enumerate(MACHINES)}
    rows.sort(key=lambda r: (order[r.machine], r.K, r.seed))
    return rows


def write_csv(rows, path=None, cfg=None):
    """Write rows as CSV preceded by ``# key=value`` config lines.

    Returns the text; writes it to ``path`` when given.
    """
    buf = io.StringIO()
    if cfg is not None:
        for k, v in cfg.resolved().items():
            buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        w.writerow([getattr(r, f) for f in ROW_FIELDS])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path):
    """Rows and the embedded config lines of a sweep CSV."""
    lines = Path(path).read_text().splitlines()
    meta = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        elif line.strip():
            body.append(line)
    rows = []
    for rec in csv.DictReader(body):
        rows.append(ResultRow(
            machine=rec["machine"], seed=int(rec["seed"]), K=int(rec["K"]),
            n_events=int(rec["n_events"]), bits_paper=int(rec["bits_paper"]),
            bits_self_delimiting=int(rec["bits_self_delimiting"]),
            mse_db=float(rec["mse_db"]), switch_rate=float(rec["switch_rate"]),
            mean_phi=float(rec["mean_phi"]), saturations=int(rec["saturations"])))
    return rows, meta


def curves(rows, accounting="paper"):
    """Per machine: arrays ``K``, mean bits, mean MSE, MSE std, sorted by K."""
    key = "bits_paper" if accounting == "paper" else "bits_self_delimiting"
    out = {}
    for m in sorted({r.machine for r in rows}, key=MACHINES.index):
        Ks = sorted({r.K for r in rows if r.machine == m})
        bits, mse, sd = [], [], []
        for K in Ks:
            sel = [r for r in rows if r.machine == m and r.K == K]
            bits.append(np.mean([getattr(r, key) for r in sel]))
            vals = [r.mse_db for r in sel]
            mse.append(np.mean(vals))
            sd.append(np.std(vals))
        out[m] = {"K": np.array(Ks), "bits": np.array(bits), "mse": np.array(mse),
                  "mse_std": np.array(sd)}
    return out


def bits_at_mse(curve, target):
    """Mean bits needed to reach ``target`` dB, or ``None`` if unreachable.

    Finds the first pair of adjacent ``K`` whose mean MSE brackets the
    target and interpolates bits linearly in MSE.
    """
    mse, bits = curve["mse"], curve["bits"]
    for i in range(len(mse) - 1):
        a, b = mse[i], mse[i + 1]
        if (a - target) * (b - target) <= 0 and a != b:
            w = (target - a) / (b - a)
            return float(bits[i] + w * (bits[i + 1] - bits[i]))
        if a == target:
            return float(bits[i])
    if len(mse) and mse[-1] == target:
        return float(bits[-1])
    return None


def mse_at_bits(curve, budget):
    """Mean MSE at ``budget`` bits, interpolated in ``log2(bits)``; ``None``
    outside the swept range."""
    lb = np.log2(curve["bits"])
    x = math.log2(budget)
    if x < lb.min() - 1e-12 or x > lb.max() + 1e-12:
        return None
    order = np.argsort(lb)
    return float(np.interp(x, lb[order], curve["mse"][order]))


def common_targets(cv, machines, n=6):
    """``n`` MSE targets inside every machine's reachable range."""
    hi = min(cv[m]["mse"].max() for m in machines)
    lo = max(cv[m]["mse"].min() for m in machines)
    if lo >= hi:
        return []
    return list(np.linspace(hi, lo, n + 2)[1:-1])


def compression(rows, baseline, machine="ACIF", targets=None, accounting="paper"):
    """Mean of ``1 - bits(machine) / bits(baseline)`` over MSE targets.

    Returns ``(mean_fraction, [(target, bits_machine, bits_baseline), ...])``.
    Targets default to evenly spaced points in the common MSE range.
    """
    cv = curves(rows, accounting)
    if machine not in cv or baseline not in cv:
        raise KeyError(f"rows lack {machine} or {baseline}")
    if not targets:
        targets = common_targets(cv, (machine, baseline))
    detail = []
    for t in targets:
        a, b = bits_at_mse(cv[machine], t), bits_at_mse(cv[baseline], t)
        detail.append((t, a, b))
    fracs = [1 - a / b for _, a, b in detail if a is not None and b is not None]
    return (float(np.mean(fracs)) if fracs else float("nan")), detail


def budget_comparison(rows, machine="ACIF", accounting="paper"):
    """MSE of every machine at each of ``machine``'s swept bit budgets.

    Returns a list of ``(budget, {machine: mse or None})``.
    """
    cv = curves(rows, accounting)
    out = []
    for budget in cv[machine]["bits"]:
        out.append((float(budget), {m: mse_at_bits(c, budget) for m, c in cv.items()}))
    return out
