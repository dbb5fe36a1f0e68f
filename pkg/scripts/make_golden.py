"""Capture the golden ``.tem`` streams used by the bitstream tests.

Run once from the repository root; the tests compare fresh encodings
byte-for-byte against these files.
"""

import math
from pathlib import Path

from tem_codec.bitstream import serialize
from tem_codec.codec import encode
from tem_codec.signal import synth_sinc_signal
from tem_codec.tem_core import MACHINES, CodecParams

OUT = Path(__file__).resolve().parent.parent / "tests" / "data"
SEED = 3
K = 64


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    x = synth_sinc_signal(2 * math.pi * 10, 2, duration=1.0, seed=SEED)
    params = CodecParams(K=K)
    for machine in MACHINES:
        path = OUT / f"golden_{machine.lower()}_seed{SEED}_K{K}.tem"
        path.write_bytes(serialize(encode(x, params, machine)))
        print(path, path.stat().st_size)


if __name__ == "__main__":
    main()
