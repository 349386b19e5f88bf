"""2D convolution on OPUs, noise-injected layers and the toy CNN."""

from .conv2d import conv2d_via_opus, correlate2d_valid, decompose_conv2d
from .layers import LayerSpec, NoiseInjector, layer_forward, noisy_quantize
from .model import Dataset, ToyCNNClassifier, evaluate_classifier, train_toy_cnn

__all__ = [
    "Dataset",
    "LayerSpec",
    "NoiseInjector",
    "ToyCNNClassifier",
    "conv2d_via_opus",
    "correlate2d_valid",
    "decompose_conv2d",
    "evaluate_classifier",
    "layer_forward",
    "noisy_quantize",
    "train_toy_cnn",
]
