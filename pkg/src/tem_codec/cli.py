"""
Command-line front end: ``tem-codec {encode,decode,sweep,compare}``.

Flags mirror :class:`~tem_codec.bench.ExperimentConfig`; a ``--config``
file of ``key = value`` lines is applied after the flags and wins. Output
files go to ``--out-dir``, else ``$TEM_CODEC_OUT``, else the working
directory.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import scipy.io.wavfile

from . import bench
from .bitstream import count_bits_empirical, deserialize, serialize
from .codec import StreamError, encode
from .decoder import ReconstructionError, mirror_decode, reconstruct
from .signal import AudioError, ParameterError, mse_db
from .tem_core import MACHINES, ConfigurationError

OUT_ENV = "TEM_CODEC_OUT"

EXIT_CONFIG = 3
EXIT_STREAM = 4


def _out_dir(args):
    d = Path(args.out_dir or os.environ.get(OUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _config(args):
    flags = {}
    for key in ("source", "seeds", "seed0", "duration", "time_scale", "audio_offset",
                "audio_stride", "workers", "beta", "M_var", "tdc_mode"):
        val = getattr(args, key, None)
        if val is not None:
            flags[key] = val
    if getattr(args, "machines", None):
        flags["machines"] = tuple(args.machines.split(","))
    if getattr(args, "Ks", None):
        flags["Ks"] = tuple(int(k) for k in args.Ks.split(","))
    if getattr(args, "targets", None):
        flags["targets"] = tuple(float(t) for t in args.targets.split(","))
    if getattr(args, "K", None) is not None:
        flags["K"] = args.K
    if getattr(args, "b_if", None) is not None:
        flags["b_if"] = args.b_if
    text = Path(args.config).read_text() if args.config else ""
    return bench.parse_config(text, **flags)


def _add_common(p):
    p.add_argument("--config", help="key = value file; overrides flags")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("--source", help="'sinc' or a WAV path")
    p.add_argument("--duration", type=float)
    p.add_argument("--time-scale", dest="time_scale", type=float)
    p.add_argument("--audio-offset", dest="audio_offset", type=float)
    p.add_argument("--audio-stride", dest="audio_stride", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--b-if", dest="b_if", type=float)
    p.add_argument("--M-var", dest="M_var", type=int)
    p.add_argument("--tdc-mode", dest="tdc_mode", choices=("full_resolution", "paper_literal"))
    p.add_argument("-v", "--verbose", action="store_true")


def cmd_encode(args):
    cfg = _config(args)
    signal = bench.build_signal(cfg, args.seed)
    params = cfg.params.with_(K=args.K) if args.K else cfg.params
    stream = encode(signal, params, args.machine)
    out = Path(args.output) if args.output else _out_dir(args) / f"{args.machine}_{args.seed}.tem"
    out.write_bytes(serialize(stream))
    acct = count_bits_empirical(stream)
    print(f"{out}: machine={args.machine} seed={args.seed} K={params.K} "
          f"events={acct.n_samples} bits_paper={acct.total_paper_count} "
          f"bits_self_delimiting={acct.total_self_delimiting}")
    return 0


def _write_wav(path, trace):
    """PCM-16 at the trace rate, scaled down only if the peak exceeds 1."""
    x = np.asarray(trace.samples)
    peak = max(1.0, float(np.max(np.abs(x))) if len(x) else 1.0)
    pcm = np.round(x / peak * 32767).astype(np.int16)
    scipy.io.wavfile.write(path, int(round(trace.sample_rate)), pcm)


def cmd_decode(args):
    stream = deserialize(Path(args.stream).read_bytes())
    seq = mirror_decode(stream)
    trace = reconstruct(seq)
    stem = Path(args.stream).with_suffix("").name
    out = Path(args.output) if args.output else _out_dir(args) / f"{stem}.csv"
    if out.suffix.lower() == ".wav":
        _write_wav(out, trace)
    else:
        with open(out, "w") as fh:
            fh.write("t,x\n")
            for t, x in zip(trace.times, trace.samples):
                fh.write(f"{t:.9g},{x:.9g}\n")
    msg = f"{out}: events={len(seq)}"
    if args.seed is not None:
        cfg = _config(args)
        signal = bench.build_signal(cfg, args.seed)
        msg += f" mse_db={round(float(mse_db(signal, trace)), 6)}"
    print(msg)
    return 0


def cmd_sweep(args):
    cfg = _config(args)
    rows = bench.sweep(cfg)
    out = Path(args.output) if args.output else _out_dir(args) / "sweep.csv"
    bench.write_csv(rows, out, cfg)
    print(f"{out}: {len(rows)} rows")
    cv = bench.curves(rows)
    for m, c in cv.items():
        for K, b, e, s in zip(c["K"], c["bits"], c["mse"], c["mse_std"]):
            print(f"{m:5s} K={K:4d} bits={b:9.1f} mse={e:7.2f} +- {s:5.2f} dB")
    for t in cfg.targets:
        line = [f"target {t:.1f} dB:"]
        for m, c in cv.items():
            bits = bench.bits_at_mse(c, t)
            line.append(f"{m}={'unreachable' if bits is None else f'{bits:.0f}'}")
        print(" ".join(line))
    return 0


def cmd_compare(args):
    rows, meta = bench.read_csv(args.csv)
    machines = {r.machine for r in rows}
    if args.machine not in machines:
        raise KeyError(f"{args.csv} has no {args.machine} rows")
    baselines = [b for b in ("AIF", "IF", "CIF") if b in machines]
    if not baselines:
        raise KeyError(f"{args.csv} has no baseline machine rows")
    targets = [float(t) for t in args.targets.split(",")] if args.targets else None
    print(f"source={meta.get('source', '?')}")
    for base in baselines:
        frac, detail = bench.compression(rows, base, args.machine, targets)
        if np.isnan(frac):
            print(f"{args.machine} vs {base}: no target reachable by both")
        else:
            print(f"{args.machine} vs {base}: {100 * frac:.1f}% fewer bits at fixed MSE")
        for t, a, b in detail:
            fa = "unreachable" if a is None else f"{a:.0f}"
            fb = "unreachable" if b is None else f"{b:.0f}"
            print(f"  {t:7.2f} dB  {args.machine}={fa}  {base}={fb}")
    out = _out_dir(args)
    stem = Path(args.csv).with_suffix("").name
    cv = bench.curves(rows)
    for m, c in cv.items():
        path = out / f"{stem}_{m}.dat"
        with open(path, "w") as fh:
            fh.write("# K mean_bits mean_mse_db std_mse_db\n")
            for row in zip(c["K"], c["bits"], c["mse"], c["mse_std"]):
                fh.write("%d %.3f %.4f %.4f\n" % row)
    print(f"gnuplot data written to {out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="tem-codec", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode one signal to a .tem stream")
    _add_common(p)
    p.add_argument("--machine", choices=MACHINES, default="ACIF")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--K", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a .tem stream to a CSV or WAV trace")
    _add_common(p)
    p.add_argument("stream")
    p.add_argument("--seed", type=int, help="rebuild this ensemble member and print the MSE")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", help="rate-distortion sweep to CSV")
    _add_common(p)
    p.add_argument("--machines")
    p.add_argument("--seeds", type=int)
    p.add_argument("--seed0", type=int)
    p.add_argument("--Ks")
    p.add_argument("--targets", help="comma-separated MSE targets in dB")
    p.add_argument("--workers", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="compression percentages from a sweep CSV")
    p.add_argument("csv")
    p.add_argument("--machine", default="ACIF")
    p.add_argument("--targets")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False)
                        else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (StreamError, ReconstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STREAM
    except (ConfigurationError, ParameterError, AudioError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
