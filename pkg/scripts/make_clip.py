"""Regenerate the bundled plucked-string clip (src/tem_codec/data/pluck.wav).

Karplus-Strong synthesis of a short arpeggio; the output is deterministic
for a given seed and is released to the public domain (CC0).
"""

import argparse
import wave
from pathlib import Path

import numpy as np

RATE = 16_000
NOTES_HZ = (220.0, 261.63, 329.63, 440.0, 329.63, 261.63)
NOTE_SECONDS = 0.5


def pluck(freq, seconds, rng, decay=0.996):
    period = int(round(RATE / freq))
    buf = rng.uniform(-1.0, 1.0, period)
    out = np.empty(int(seconds * RATE))
    for i in range(len(out)):
        j = i % period
        out[i] = buf[j]
        buf[j] = decay * 0.5 * (buf[j] + buf[(j + 1) % period])
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", type=Path,
                    default=Path(__file__).resolve().parents[1] / "src" / "tem_codec" / "data" / "pluck.wav")
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    x = np.concatenate([pluck(f, NOTE_SECONDS, rng) for f in NOTES_HZ])
    x = x / np.max(np.abs(x))
    pcm = np.round(0.9 * 32767 * x).astype("<i2")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(args.out), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(RATE)
        w.writeframes(pcm.tobytes())
    print(f"wrote {args.out} ({len(pcm) / RATE:.2f} s)")


if __name__ == "__main__":
    main()
