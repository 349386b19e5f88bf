"""A single AWGR-based optical processing unit (OPU).

The OPU evaluates ``E_q = sum_p x(p) * w((p - q) mod N)``: every input port
carries the same weight-shaped comb modulated by one input value, the AWGR
sends residue ``m`` of port ``p`` to port ``q = p - m``, and each output port
collects exactly the teeth needed for one correlation tap.  Positive and
negative kernel parts ride on two different free spectral ranges (FSRs); a
microring separates them and a balanced detector subtracts.

Orientation: this is a cross-correlation, not a flipped convolution.  Output
``q`` uses ``x[q], x[q+1], ..., x[q+k-1]`` against ``w[0], ..., w[k-1]``.
For ``q = 0 .. len(x) - k`` the result equals
``numpy.correlate(x, w, mode="valid")``.

Noise is expressed relative to the output full scale ``sum(|w|)`` of the
(normalized) kernel, so the same model yields the same effective number of
bits for every elementary operation.
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    InvalidParameterError,
    OptiCloudError,
    RangeError,
    ShapeError,
    check_int,
    check_intensities,
    check_positive,
    check_vector,
)
from .photonics import (
    BLOCKED,
    AwgrSpec,
    CombSpectrum,
    MzmModel,
    PhotodetectorModel,
    WaveshaperProfile,
    apply_waveshaper,
    balanced_detect,
    equalize_comb,
    generate_comb,
    routing_tensor,
)

__all__ = [
    "DegenerateKernelError",
    "KernelTooLongError",
    "InsufficientCombError",
    "NormalizationError",
    "SplitKernel",
    "WavelengthPlan",
    "NoiseModel",
    "OpuConfig",
    "split_kernel",
    "normalize_kernel",
    "plan_wavelengths",
    "load_weights",
    "read_weights",
    "opu_convolve",
    "ideal_cyclic_correlation",
    "valid_slice",
    "elementary_op",
    "elementary_errors",
    "measure_enob",
    "noise_sigma",
    "peak_tops",
    "quantize_midrise",
    "calibrated_alpha",
    "OpticalConvolver",
    "ELEMENTARY_OPS",
]

ELEMENTARY_OPS = ("multiply", "add", "subtract", "mac")

#: Gaussian error std measured over 4096 two-operand additions, in operand levels.
ADDITION_ERROR_STD_LEVELS = 0.0984
#: Output span of the addition of two 0..7 level operands.
ADDITION_FULL_SCALE_LEVELS = 14.0


class DegenerateKernelError(OptiCloudError):
    pass


class KernelTooLongError(OptiCloudError):
    pass


class InsufficientCombError(OptiCloudError):
    pass


class NormalizationError(OptiCloudError):
    pass


# --------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class SplitKernel:
    positive_part: np.ndarray
    negative_part: np.ndarray

    @property
    def weights(self):
        return self.positive_part - self.negative_part

    def __len__(self):
        return len(self.positive_part)


def split_kernel(kernel):
    w = check_vector(kernel, "kernel")
    return SplitKernel(np.maximum(w, 0.0), np.maximum(-w, 0.0))


def normalize_kernel(kernel):
    """Scale a kernel so that ``max |w| == 1``; returns ``(kernel / scale, scale)``."""
    w = check_vector(kernel, "kernel")
    scale = float(np.max(np.abs(w)))
    if scale == 0.0:
        raise DegenerateKernelError("cannot normalize an all-zero kernel")
    return w / scale, scale


# --------------------------------------------------------------------------
# wavelength plan


@dataclass(frozen=True)
class WavelengthPlan:
    """Assignment of comb teeth to weight taps and signal channels for one FSR pair.

    ``weight_tooth_map[fsr][residue] = d`` means the tooth of that residue in
    that FSR carries tap ``d`` of the kernel part belonging to the FSR.
    ``negative_port_shift`` is the output-port offset at which the negative
    band is collected for each balanced detector.
    """

    port_count: int
    kernel_length: int
    positive_fsr_index: int
    negative_fsr_index: int
    center_alignment: int
    weight_tooth_map: dict
    signal_tooth_set: frozenset
    layout: str = "leading"
    negative_port_shift: int = 0

    def __post_init__(self):
        if self.positive_fsr_index == self.negative_fsr_index:
            raise InvalidParameterError("positive and negative weights need distinct FSRs")

    def tooth(self, fsr, residue):
        return self.center_alignment + fsr * self.port_count + residue

    def weight_teeth(self, fsr):
        """Comb tooth indices of one FSR's weight taps, ordered by tap ``d``."""
        taps = sorted(self.weight_tooth_map[fsr].items(), key=lambda item: item[1])
        return np.array([self.tooth(fsr, residue) for residue, _ in taps], dtype=int)

    @property
    def positive_teeth(self):
        return self.weight_teeth(self.positive_fsr_index)

    @property
    def negative_teeth(self):
        return self.weight_teeth(self.negative_fsr_index)

    @property
    def cycle_teeth(self):
        lo = self.center_alignment + min(self.positive_fsr_index, self.negative_fsr_index) * self.port_count
        return np.arange(lo, lo + 2 * self.port_count)

    @property
    def weight_tooth_set(self):
        return frozenset(self.positive_teeth.tolist()) | frozenset(self.negative_teeth.tolist())


def plan_wavelengths(awgr, k, comb_teeth, layout="leading"):
    """Place a length-``k`` kernel on two FSRs of ``awgr``.

    ``layout="leading"`` puts tap ``d`` on residue ``d`` in both FSRs.
    ``layout="edges"`` keeps the positive taps on the first ``k`` residues
    and moves the negative taps to the last ``k`` residues of their FSR; the
    balanced detectors then pair port ``q`` with port ``q + k`` so the
    result is unchanged.
    """
    n = awgr.port_count
    k = check_int(k, "k", minimum=1)
    comb_teeth = check_int(comb_teeth, "comb_teeth", minimum=1)
    if k > n:
        raise KernelTooLongError(f"kernel length {k} exceeds the {n} AWGR ports")
    a = awgr.center_alignment
    if comb_teeth < 2 * n or a < 0 or a + 2 * n > comb_teeth:
        raise InsufficientCombError(
            f"need teeth {a}..{a + 2 * n - 1} (two FSRs of {n}) but the comb has {comb_teeth}"
        )
    if layout == "leading":
        pos_map = {d: d for d in range(k)}
        neg_map = dict(pos_map)
        shift = 0
    elif layout == "edges":
        pos_map = {d: d for d in range(k)}
        neg_map = {(n - k + d) % n: d for d in range(k)}
        shift = k % n
    else:
        raise InvalidParameterError(f"unknown layout {layout!r}")
    weight_map = {0: pos_map, 1: neg_map}
    weight_teeth = {a + r for r in pos_map} | {a + n + r for r in neg_map}
    signal = frozenset(t for t in range(a, a + 2 * n) if t not in weight_teeth)
    return WavelengthPlan(
        port_count=n,
        kernel_length=k,
        positive_fsr_index=0,
        negative_fsr_index=1,
        center_alignment=a,
        weight_tooth_map=weight_map,
        signal_tooth_set=signal,
        layout=layout,
        negative_port_shift=shift,
    )


def load_weights(plan, split, comb):
    """Waveshaper attenuations that imprint ``split`` onto ``comb``.

    The comb is equalized to its weakest lit tooth first, so a tooth's power
    relative to that reference equals its weight.  Signal teeth pass at
    0 dB; teeth outside the two-FSR cycle are blocked.
    """
    pos = np.asarray(split.positive_part, dtype=float)
    neg = np.asarray(split.negative_part, dtype=float)
    if len(pos) != plan.kernel_length:
        raise ShapeError(f"kernel has {len(pos)} taps, plan expects {plan.kernel_length}")
    if max(pos.max(initial=0.0), neg.max(initial=0.0)) > 1.0 + 1e-12:
        raise NormalizationError("weights above 1 cannot be loaded as attenuations; normalize first")
    equalize = equalize_comb(comb).attenuation_per_tooth
    att = np.full(comb.grid.tooth_count, BLOCKED)
    for teeth, part in ((plan.positive_teeth, pos), (plan.negative_teeth, neg)):
        if teeth.max() >= att.size:
            raise InsufficientCombError("plan refers to teeth beyond the comb")
        with np.errstate(divide="ignore"):
            att[teeth] = equalize[teeth] - 10.0 * np.log10(np.minimum(part, 1.0))
    signal = np.array(sorted(plan.signal_tooth_set), dtype=int)
    att[signal] = 0.0
    return WaveshaperProfile(att)


def read_weights(plan, shaped, reference_power):
    """Recover the split kernel from a shaped comb (inverse of ``load_weights``)."""
    power = shaped.power_per_tooth
    return SplitKernel(
        power[plan.positive_teeth] / reference_power,
        power[plan.negative_teeth] / reference_power,
    )


# --------------------------------------------------------------------------
# noise


def calibrated_alpha(enob_drop=1.5, baud_ratio=5.0):
    """Power-law exponent giving ``enob_drop`` bits lost over ``baud_ratio`` x baud."""
    return math.log(2.0 ** enob_drop) / math.log(baud_ratio)


@dataclass(frozen=True)
class NoiseModel:
    """RMS output error as a fraction of output full scale, growing as a power of baud."""

    sigma_ref: float = ADDITION_ERROR_STD_LEVELS / ADDITION_FULL_SCALE_LEVELS
    reference_baud: float = 10.0
    alpha: float = field(default_factory=calibrated_alpha)
    seed: int = 0

    def __post_init__(self):
        check_positive(self.sigma_ref, "sigma_ref", strict=False)
        check_positive(self.reference_baud, "reference_baud")
        if not np.isfinite(self.alpha):
            raise InvalidParameterError("alpha must be finite")

    @classmethod
    def calibrated(cls, seed=0):
        """Anchored to 7 bits at 10 GBd and 1.5 bits less at 50 GBd."""
        return cls(seed=seed)

    def sigma(self, baud):
        return noise_sigma(self, baud)


def noise_sigma(model, baud):
    check_positive(baud, "baud")
    return model.sigma_ref * (baud / model.reference_baud) ** model.alpha


def measure_enob(errors, full_scale):
    """``log2(full_scale / rms(errors))``; ``inf`` when the errors are all zero."""
    check_positive(full_scale, "full_scale")
    errors = np.asarray(errors, dtype=float).ravel()
    if errors.size < 2:
        raise InvalidParameterError("need at least two error samples")
    rms = float(np.sqrt(np.mean(errors ** 2)))
    if rms == 0.0:
        return math.inf
    return math.log2(full_scale / rms)


def quantize_midrise(values, bits, lo, hi):
    """Uniform mid-rise quantizer with ``2**bits`` levels spanning ``[lo, hi]``."""
    levels = 2 ** int(bits)
    step = (hi - lo) / levels
    idx = np.clip(np.floor((np.asarray(values, dtype=float) - lo) / step), 0, levels - 1)
    return lo + (idx + 0.5) * step


# --------------------------------------------------------------------------
# configuration and pipeline


@dataclass(frozen=True)
class OpuConfig:
    awgr: AwgrSpec = field(default_factory=lambda: AwgrSpec(8, 84.0))
    mzm_array: tuple = ()
    pd: PhotodetectorModel = field(default_factory=PhotodetectorModel)
    dac_bits: int = 8
    adc_bits: int = 12
    adc_headroom: float = 0.125
    baud: float = 10.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    used_input_ports: tuple = ()
    mode: str = "ideal"
    used_output_ports: tuple = ()
    layout: str = "leading"
    comb: Optional[CombSpectrum] = None

    def __post_init__(self):
        n = self.awgr.port_count
        ports = tuple(int(p) for p in (self.used_input_ports or range(n)))
        if len(set(ports)) != len(ports) or any(not 0 <= p < n for p in ports):
            raise InvalidParameterError(f"used_input_ports must be distinct ports in 0..{n - 1}")
        object.__setattr__(self, "used_input_ports", ports)
        outs = tuple(int(q) for q in (self.used_output_ports or range(n)))
        if any(not 0 <= q < n for q in outs):
            raise InvalidParameterError(f"used_output_ports must lie in 0..{n - 1}")
        object.__setattr__(self, "used_output_ports", outs)
        mzms = tuple(self.mzm_array) or (MzmModel.quadrature(),)
        if len(mzms) == 1 and len(ports) > 1:
            mzms = mzms * len(ports)
        if len(mzms) != len(ports):
            raise InvalidParameterError(
                f"mzm_array has {len(mzms)} models for {len(ports)} used input ports"
            )
        object.__setattr__(self, "mzm_array", mzms)
        check_int(self.dac_bits, "dac_bits", minimum=1)
        check_int(self.adc_bits, "adc_bits", minimum=1)
        check_positive(self.adc_headroom, "adc_headroom", strict=False)
        check_positive(self.baud, "baud")
        if self.mode not in ("ideal", "noisy"):
            raise InvalidParameterError(f"mode must be 'ideal' or 'noisy', got {self.mode!r}")
        if self.comb is not None and not math.isclose(
            self.comb.grid.spacing, self.awgr.channel_spacing, rel_tol=1e-9
        ):
            raise InvalidParameterError("comb spacing must equal the AWGR channel spacing")

    @property
    def n_inputs(self):
        return len(self.used_input_ports)

    def with_inputs(self, count):
        """Same unit driving only the first ``count`` input ports."""
        count = check_int(count, "count", minimum=1, maximum=self.awgr.port_count)
        return replace(
            self,
            used_input_ports=tuple(range(count)),
            mzm_array=self.mzm_array[:count] if len(self.mzm_array) >= count else self.mzm_array[:1] * count,
        )

    def source_comb(self):
        if self.comb is not None:
            return self.comb
        n = self.awgr.port_count
        return generate_comb(self.awgr.center_alignment + 2 * n, self.awgr.channel_spacing)

    @property
    def sigma(self):
        return noise_sigma(self.noise, self.baud)


@lru_cache(maxsize=64)
def _cached_routing(awgr, tooth_count):
    tensor = routing_tensor(awgr, tooth_count)
    tensor.setflags(write=False)
    return tensor


def ideal_cyclic_correlation(x_full, kernel):
    """Reference ``y[q] = sum_p x[p] w[(p - q) mod N]`` by direct summation."""
    x_full = np.asarray(x_full, dtype=float)
    w = np.asarray(kernel, dtype=float)
    n = x_full.shape[-1]
    w_full = np.zeros(n)
    w_full[: len(w)] = w
    y = np.zeros_like(x_full)
    for q in range(n):
        for p in range(n):
            y[..., q] += x_full[..., p] * w_full[(p - q) % n]
    return y


def valid_slice(config, kernel_length):
    """Output positions where the kernel fully overlaps the driven ports."""
    first = config.used_input_ports[0]
    return slice(first, first + config.n_inputs - kernel_length + 1)


def _job_rng(seed, job_id):
    key = [int(seed)]
    key.extend(int(j) for j in np.atleast_1d(job_id))
    return np.random.default_rng(key)


def opu_convolve(config, kernel, x, job_id=0, mode=None):
    """Run input vector(s) ``x`` through the OPU against ``kernel``.

    ``x`` has one value per used input port, or a batch of such rows.  The
    result has one value per used output port (same batch layout).  ``mode``
    overrides ``config.mode``.
    """
    mode = mode or config.mode
    w = check_vector(kernel, "kernel")
    x = check_intensities(x, "x")
    single = x.ndim == 1
    batch = np.atleast_2d(x)
    n = config.awgr.port_count
    if batch.shape[1] != config.n_inputs:
        raise ShapeError(f"x has {batch.shape[1]} values, the OPU drives {config.n_inputs} ports")
    if len(w) > config.n_inputs:
        raise ShapeError(f"kernel length {len(w)} exceeds the {config.n_inputs} input values")
    if len(w) > n:
        raise KernelTooLongError(f"kernel length {len(w)} exceeds the {n} AWGR ports")

    w_norm, scale = normalize_kernel(w)
    split = split_kernel(w_norm)
    comb = config.source_comb()
    plan = plan_wavelengths(config.awgr, len(w), comb.grid.tooth_count, config.layout)
    shaped = apply_waveshaper(comb, load_weights(plan, split, comb))
    lit = comb.power_per_tooth[comb.power_per_tooth > 0]
    reference_power = float(lit.min())
    # the OPU-side filter passes weight teeth only; signal teeth go to the communication receiver
    tooth_power = np.zeros(comb.grid.tooth_count)
    weight_teeth = np.array(sorted(plan.weight_tooth_set), dtype=int)
    tooth_power[weight_teeth] = shaped.power_per_tooth[weight_teeth]

    rng = _job_rng(config.noise.seed, job_id) if mode == "noisy" else None
    drive = batch
    if mode == "noisy":
        drive = quantize_midrise(batch, config.dac_bits, 0.0, 1.0)
        nominal = config.mzm_array[0]
        volts = nominal.drive_for(drive)
        full_scale_t = float(nominal.transmission(nominal.drive_for(1.0)))
        drive = np.column_stack(
            [m.transmission(volts[:, i]) for i, m in enumerate(config.mzm_array)]
        ) / full_scale_t

    x_full = np.zeros((batch.shape[0], n))
    x_full[:, list(config.used_input_ports)] = drive
    port_power = x_full[:, :, None] * tooth_power[None, None, :]  # (B, P, T)
    routed = np.einsum("bpt,pqt->bqt", port_power, _cached_routing(config.awgr, comb.grid.tooth_count))
    plus = routed[:, :, plan.positive_teeth].sum(axis=2)
    minus = routed[:, :, plan.negative_teeth].sum(axis=2)
    minus = np.roll(minus, -plan.negative_port_shift, axis=1)

    if mode == "noisy":
        current = balanced_detect(config.pd, plus, minus, seed=rng)
    else:
        current = config.pd.responsivity * (plus - minus)
    y = current / (config.pd.responsivity * reference_power)

    if mode == "noisy":
        full_scale = float(split.positive_part.sum() + split.negative_part.sum())
        y = y + rng.normal(0.0, config.sigma * full_scale, size=y.shape)
        margin = config.adc_headroom * full_scale
        y = quantize_midrise(
            y,
            config.adc_bits,
            -float(split.negative_part.sum()) - margin,
            float(split.positive_part.sum()) + margin,
        )
    y = y[:, list(config.used_output_ports)] * scale
    return y[0] if single else y


# --------------------------------------------------------------------------
# elementary operations and precision


def _op_kernel_and_input(op_mode, a, b):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if op_mode == "multiply":
        return b[:1], a[:1]
    if op_mode == "add":
        return np.array([1.0, 1.0]), np.array([a[0], b[0]])
    if op_mode == "subtract":
        return np.array([1.0, -1.0]), np.array([a[0], b[0]])
    if op_mode == "mac":
        if a.shape != b.shape:
            raise ShapeError("mac operands must have equal length")
        return b, a
    raise InvalidParameterError(f"unknown elementary op {op_mode!r}; choose from {ELEMENTARY_OPS}")


def elementary_op(config, op_mode, a, b, job_id=0):
    """One multiply / add / subtract / MAC executed as a tiny correlation on the OPU.

    ``multiply(a, b)`` loads ``b`` as a one-tap kernel, ``add`` and
    ``subtract`` use kernels ``(1, 1)`` and ``(1, -1)`` on inputs ``(a, b)``,
    and ``mac`` is the dot product of input vector ``a`` with weights ``b``.
    """
    kernel, x = _op_kernel_and_input(op_mode, a, b)
    cfg = config.with_inputs(len(x))
    out = opu_convolve(cfg, kernel, x, job_id=job_id)
    return float(out[valid_slice(cfg, len(kernel))][0])


def elementary_errors(config, op_mode, trials=4096, levels=8, mac_length=3, seed=0):
    """Monte-Carlo error of one elementary op, normalized by each trial's output span.

    Operands are drawn from ``levels`` equally spaced values in ``[0, 1]``;
    weights for ``multiply`` avoid zero, ``mac`` weights are signed.  Returns
    ``(normalized_errors, raw_errors, spans)``.
    """
    rng = np.random.default_rng(seed)
    grid = np.arange(levels) / (levels - 1)
    n_in = {"multiply": 1, "add": 2, "subtract": 2, "mac": mac_length}[op_mode]
    cfg = config.with_inputs(n_in)
    x = rng.choice(grid, size=(trials, n_in))
    if op_mode == "multiply":
        kernels = rng.choice(grid[1:], size=(trials, 1))
    elif op_mode == "mac":
        kernels = rng.choice(np.concatenate([-grid[1:], grid[1:]]), size=(trials, mac_length))
    else:
        kernels = np.tile(_op_kernel_and_input(op_mode, 0.0, 0.0)[0], (trials, 1))

    measured = np.empty(trials)
    uniq, inverse = np.unique(kernels, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    for g, kernel in enumerate(uniq):
        rows = np.flatnonzero(inverse == g)
        out = opu_convolve(cfg, kernel, x[rows], job_id=(seed, g))
        measured[rows] = out[:, valid_slice(cfg, len(kernel))][:, 0]
    expected = np.einsum("ij,ij->i", x, kernels)
    spans = np.abs(kernels).sum(axis=1)
    raw = measured - expected
    return raw / spans, raw, spans


# --------------------------------------------------------------------------
# throughput


def peak_tops(ports, k, baud):
    """Peak rate in TOPS: valid outputs x 2k ops x two signed FSR paths x baud (GHz)."""
    ports = check_int(ports, "ports", minimum=1)
    k = check_int(k, "k", minimum=1)
    check_positive(baud, "baud")
    if k > ports:
        raise KernelTooLongError(f"kernel length {k} exceeds {ports} ports")
    return (ports - k + 1) * (2 * k) * 2 * baud / 1000.0


# --------------------------------------------------------------------------
# estimator front-end


class OpticalConvolver(BaseEstimator, TransformerMixin):
    """Correlate input vectors with a fixed kernel on a simulated OPU.

    ``fit`` loads the kernel (normalization, sign split, wavelength plan and
    waveshaper table); ``transform`` streams rows of ``X`` (one value per
    AWGR input port, in ``[0, 1]``) through the unit and returns the valid
    correlation outputs, or every output port when ``output="ports"``.

    Parameters
    ----------
    kernel : array-like of shape (k,)
    port_count : int, default=8
    baud : float, default=10.0
        Symbol rate in GBd; sets the noise level in ``"noisy"`` mode.
    mode : {"ideal", "noisy"}, default="ideal"
    layout : {"leading", "edges"}, default="leading"
    output : {"valid", "ports"}, default="valid"
    seed : int, default=0
    """

    def __init__(self, kernel=(1.0,), port_count=8, baud=10.0, mode="ideal",
                 layout="leading", output="valid", seed=0):
        self.kernel = kernel
        self.port_count = port_count
        self.baud = baud
        self.mode = mode
        self.layout = layout
        self.output = output
        self.seed = seed

    def fit(self, X=None, y=None):
        k = len(check_vector(self.kernel, "kernel"))
        if self.output not in ("valid", "ports"):
            raise InvalidParameterError(f"output must be 'valid' or 'ports', got {self.output!r}")
        n_inputs = self.port_count
        if X is not None:
            n_inputs = check_intensities(X, "X", ensure_2d=True).shape[1]
        self.config_ = OpuConfig(
            awgr=AwgrSpec(self.port_count, 84.0),
            baud=self.baud,
            mode=self.mode,
            layout=self.layout,
            noise=NoiseModel.calibrated(seed=self.seed),
            used_input_ports=tuple(range(n_inputs)),
        )
        w_norm, self.scale_ = normalize_kernel(self.kernel)
        self.split_ = split_kernel(w_norm)
        comb = self.config_.source_comb()
        self.plan_ = plan_wavelengths(self.config_.awgr, k, comb.grid.tooth_count, self.layout)
        self.profile_ = load_weights(self.plan_, self.split_, comb)
        self.n_features_in_ = n_inputs
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        X = check_intensities(X, "X", ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"X has {X.shape[1]} features, convolver was fitted with {self.n_features_in_}")
        out = opu_convolve(self.config_, self.kernel, X)
        if self.output == "ports":
            return out
        return out[:, valid_slice(self.config_, len(self.split_))]
