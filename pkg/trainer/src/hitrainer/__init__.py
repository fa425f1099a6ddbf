"""Training side of the hicodec codec: loss, optimization, gradient
verification and golden-vector export. Talks to the codec only through its
portable weight and container formats."""

from .gradcheck import grad_check, max_relative_error
from .golden import export_golden, load_golden, reproduce_container, save_golden
from .model import CodecNet, conv2d_same, quantize_soft, quantize_st
from .train import TrainConfig, TrainError, eval_bpsp, load_corpus, make_toy_corpus, train

__version__ = "0.1.0"

__all__ = [
    "CodecNet", "TrainConfig", "TrainError", "conv2d_same", "eval_bpsp",
    "export_golden", "grad_check", "load_corpus", "load_golden",
    "make_toy_corpus", "max_relative_error", "quantize_soft", "quantize_st",
    "reproduce_container", "save_golden", "train",
]
