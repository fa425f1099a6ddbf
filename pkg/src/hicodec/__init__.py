"""Hierarchical lossless image codec.

Compresses 8-bit RGB images with a hierarchy of quantized auxiliary
representations whose distributions are predicted by small CNNs and coded
with an integer range coder under discretized logistic mixtures.
"""

from .codec import (
    ChecksumError,
    CodecError,
    ContainerFormatError,
    bpsp,
    decode_image,
    encode_image,
    inspect_container,
    sample_image,
)
from .coder import Bitstream, IntegerCdf, RangeDecoder, RangeEncoder, quantize_pmf
from .model import CodecModel, build_baseline, random_model
from .network import (
    MODE_LEARNED,
    MODE_RGB,
    MODE_RGB_SHARED,
    ModelWeights,
    NetworkSpec,
    load_weights,
    random_weights,
    save_weights,
)
from .quantizer import LevelGrid, quantize_hard, quantize_soft

__version__ = "0.1.0"
