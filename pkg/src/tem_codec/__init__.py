"""Integrate-and-fire time encoding codecs with segment compression."""

from .bitstream import BitAccount, count_bits_empirical, deserialize, serialize
from .codec import EncodedStream, StreamError, encode
from .decoder import ReconstructionConfig, mirror_decode, reconstruct
from .signal import BandlimitedSignal, load_audio, mse_db, synth_sinc_signal
from .tem_core import MACHINES, CodecParams, ConfigurationError

__all__ = [
    "BandlimitedSignal",
    "BitAccount",
    "CodecParams",
    "ConfigurationError",
    "EncodedStream",
    "MACHINES",
    "ReconstructionConfig",
    "StreamError",
    "count_bits_empirical",
    "deserialize",
    "encode",
    "load_audio",
    "mirror_decode",
    "mse_db",
    "reconstruct",
    "serialize",
    "synth_sinc_signal",
]

__version__ = "0.1.0"
