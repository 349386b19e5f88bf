"""Convolution layers with three execution back-ends: exact float math, float
plus bit-level Gaussian noise, and the simulated OPU pipeline."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .._validation import InvalidParameterError, ShapeError, check_int
from .conv2d import conv2d_via_opus, correlate2d_valid

__all__ = [
    "MAX_NOISE_BITS",
    "LayerSpec",
    "noisy_quantize",
    "avg_pool",
    "layer_forward",
    "forward",
    "NoiseInjector",
]

MAX_NOISE_BITS = 30


@dataclass(frozen=True)
class LayerSpec:
    """Valid-mode convolution layer.

    ``weights`` has shape (out_channels, in_channels, K, K).  A dense layer
    is a layer whose K equals the input's spatial size.  ``pool`` is an
    average-pooling factor applied after the activation.
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "none"
    normalize: bool = False
    pool: int = 1

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        b = np.array(self.bias, dtype=float).reshape(-1)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeError(f"weights must be (out, in, K, K), got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"bias must have {w.shape[0]} entries, got {b.shape}")
        if self.activation not in ("none", "relu"):
            raise InvalidParameterError(f"unknown activation {self.activation!r}")
        check_int(self.pool, "pool", minimum=1)
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def kernel_size(self):
        return self.weights.shape[2]


def noisy_quantize(activations, bits, seed=None, sample_axis=None):
    """Add Gaussian noise of std ``full_scale * 2**-bits``.

    ``full_scale`` is ``max - min`` of the tensor, or of each slice along
    ``sample_axis`` when given.  ``bits`` above ``MAX_NOISE_BITS`` is capped.
    """
    bits = check_int(bits, "bits", minimum=1)
    bits = min(bits, MAX_NOISE_BITS)
    x = np.asarray(activations, dtype=float)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if sample_axis is None:
        full_scale = np.ptp(x) if x.size else 0.0
    else:
        axes = tuple(a for a in range(x.ndim) if a != sample_axis % x.ndim)
        full_scale = np.ptp(x, axis=axes, keepdims=True)
    noise = rng.standard_normal(x.shape)
    return x + noise * full_scale * 2.0 ** (-bits)


def avg_pool(x, factor):
    if factor == 1:
        return x
    h, w = x.shape[-2] // factor, x.shape[-1] // factor
    trimmed = x[..., : h * factor, : w * factor]
    return trimmed.reshape(*x.shape[:-2], h, factor, w, factor).mean(axis=(-3, -1))


def _normalize(z):
    mean = z.mean(axis=(-2, -1), keepdims=True)
    std = z.std(axis=(-2, -1), keepdims=True)
    return (z - mean) / np.where(std > 0, std, 1.0)


def layer_forward(layer, x, execution="float", bits=None, opus=None, seed=None, job_id=0):
    """Apply one layer to a (C, H, W) tensor or an (n, C, H, W) batch.

    ``execution`` is ``"float"``, ``"noise"`` (float plus ``noisy_quantize``
    at ``bits`` after the convolution and after normalization, before the
    activation) or ``"opu"`` (correlations on the pool ``opus``; inputs must
    lie in ``[0, 1]``).
    """
    x = np.asarray(x, dtype=float)
    batched = x.ndim == 4
    xb = x if batched else x[None]
    if xb.ndim != 4 or xb.shape[1] != layer.in_channels:
        raise ShapeError(
            f"layer expects {layer.in_channels} input channels, got input of shape {x.shape}"
        )
    k = layer.kernel_size
    if k > min(xb.shape[2:]):
        raise ShapeError(f"{k}x{k} kernel does not fit a {xb.shape[2]}x{xb.shape[3]} input")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    if execution in ("float", "noise"):
        z = np.einsum("ncijkl,ockl->noij", _windows(xb, k), layer.weights)
    elif execution == "opu":
        if opus is None:
            raise InvalidParameterError("opu execution needs an OPU pool")
        z = np.zeros((xb.shape[0], layer.out_channels, xb.shape[2] - k + 1, xb.shape[3] - k + 1))
        for o in range(layer.out_channels):
            for c in range(layer.in_channels):
                if np.any(layer.weights[o, c]):
                    z[:, o] += conv2d_via_opus(
                        opus, xb[:, c], layer.weights[o, c],
                        job_id=(*np.atleast_1d(job_id).tolist(), o, c),
                    )
    else:
        raise InvalidParameterError(f"unknown execution mode {execution!r}")
    z = z + layer.bias[None, :, None, None]

    if execution == "noise":
        z = noisy_quantize(z, bits, rng, sample_axis=0)
    if layer.normalize:
        z = _normalize(z)
        if execution == "noise":
            z = noisy_quantize(z, bits, rng, sample_axis=0)
    if layer.activation == "relu":
        z = np.maximum(z, 0.0)
    z = avg_pool(z, layer.pool)
    return z if batched else z[0]


def _windows(xb, k):
    from numpy.lib.stride_tricks import sliding_window_view

    return sliding_window_view(xb, (k, k), axis=(2, 3))


def forward(layers, x, execution="float", bits=None, opus=None, seed=None):
    """Run a layer stack; in ``"opu"`` mode only the first layer uses the OPUs.

    Later layers then run as ``"noise"`` when ``bits`` is given, else float.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for i, layer in enumerate(layers):
        mode = execution
        if execution == "opu" and i > 0:
            mode = "noise" if bits is not None else "float"
        # OPU noise streams are keyed by job id; draw one so batches differ
        job = (int(rng.integers(2**31)), i) if mode == "opu" else i
        x = layer_forward(layer, x, mode, bits=bits, opus=opus, seed=rng, job_id=job)
    return x


class NoiseInjector(BaseEstimator, TransformerMixin):
    """Stateless transformer adding ``bits``-level Gaussian noise to each sample."""

    def __init__(self, bits=8, seed=0):
        self.bits = bits
        self.seed = seed

    def fit(self, X, y=None):
        check_int(self.bits, "bits", minimum=1)
        self.n_features_in_ = np.asarray(X).shape[1] if np.ndim(X) > 1 else 1
        return self

    def transform(self, X):
        return noisy_quantize(X, self.bits, self.seed, sample_axis=0)
