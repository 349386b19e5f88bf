"""MZM array nulling calibration and bandwidth pre-distortion."""

import math
from dataclasses import dataclass, replace

import numpy as np

from ._validation import OptiCloudError, check_int, check_positive
from .photonics import mzm_modulate, single_pole_lowpass

__all__ = [
    "CalibrationError",
    "MzmCorrection",
    "CalibrationReport",
    "test_waveform",
    "golden_section",
    "nulling_residual",
    "calibrate_mzm_array",
    "predistort",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class CalibrationError(OptiCloudError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e} of signal RMS)")
        self.residual = residual


@dataclass(frozen=True)
class MzmCorrection:
    """Adjustment applied on the driver side: added bias (V), amplitude gain, added delay (ps)."""

    bias: float = 0.0
    gain: float = 1.0
    delay: float = 0.0

    def as_dict(self):
        return {"bias": self.bias, "gain": self.gain, "delay": self.delay}


@dataclass(frozen=True)
class CalibrationReport:
    corrections: tuple
    residuals: tuple
    sweeps: tuple

    def as_dict(self):
        return {
            "corrections": [c.as_dict() for c in self.corrections],
            "residuals": list(self.residuals),
            "sweeps": list(self.sweeps),
        }


def test_waveform(symbols=64, oversample=8, seed=0):
    """Periodic band-limited random pattern normalized to a peak of 0.5."""
    rng = np.random.default_rng(seed)
    levels = rng.uniform(-1.0, 1.0, symbols)
    spectrum = np.fft.rfft(np.repeat(levels, oversample))
    cutoff = symbols // 2  # bins below half the symbol rate
    spectrum[cutoff + 1:] = 0.0
    spectrum[0] = 0.0
    wave = np.fft.irfft(spectrum, n=symbols * oversample)
    return 0.5 * wave / np.max(np.abs(wave))


def golden_section(func, lo, hi, tol):
    """Minimize a unimodal ``func`` on ``[lo, hi]`` to interval width ``tol``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = func(d)
    return (c, fc) if fc <= fd else (d, fd)


def _emitted(model, waveform, sign, correction, sample_rate):
    tuned = replace(
        model,
        bias_voltage=model.bias_voltage + correction.bias,
        delay=model.delay + correction.delay,
    )
    drive = sign * correction.gain * model.v_pp * waveform
    return mzm_modulate(tuned, 1.0, drive, sample_rate=sample_rate)


def nulling_residual(reference, model, correction, waveform, sample_rate):
    """AC residual of reference + inverted MZM, relative to the reference signal RMS."""
    ref = _emitted(reference, waveform, 1.0, MzmCorrection(), sample_rate)
    other = _emitted(model, waveform, -1.0, correction, sample_rate)
    total = ref + other
    signal_rms = np.sqrt(np.mean((ref - ref.mean()) ** 2))
    return float(np.sqrt(np.mean((total - total.mean()) ** 2)) / signal_rms)


def calibrate_mzm_array(mzms, baud=10.0, oversample=8, tolerance=1e-4, max_sweeps=100,
                        waveform=None, seed=0):
    """Null every MZM against the first one by coordinate descent.

    Each MZM ``j > 0`` is driven with the inverted test pattern while the
    reference carries the pattern itself; its bias, drive gain and delay
    corrections are tuned one at a time with a golden-section search until
    the summed output has no AC content left (below ``tolerance`` of the
    reference signal RMS).

    Raises ``CalibrationError`` when an MZM does not converge within
    ``max_sweeps``.
    """
    check_positive(baud, "baud")
    check_int(max_sweeps, "max_sweeps", minimum=1)
    oversample = check_int(oversample, "oversample", minimum=2)
    sample_rate = baud * oversample
    if waveform is None:
        waveform = test_waveform(oversample=oversample, seed=seed)
    reference = mzms[0]
    symbol_ps = 1e3 / baud
    corrections, residuals, sweeps_used = [MzmCorrection()], [0.0], [0]
    for model in mzms[1:]:
        spans = {"bias": 0.3 * reference.v_pi, "gain": 0.5, "delay": 0.5 * symbol_ps}
        current = MzmCorrection()

        def cost(corr):
            return nulling_residual(reference, model, corr, waveform, sample_rate)

        residual = cost(current)
        sweep = 0
        while residual > tolerance and sweep < max_sweeps:
            sweep += 1
            shrink = 0.6 ** (sweep - 1)
            for name, span in spans.items():
                centre = getattr(current, name)
                half = max(span * shrink, span * 1e-9)
                best, value = golden_section(
                    lambda v: cost(replace(current, **{name: v})),
                    centre - half,
                    centre + half,
                    tol=half * 1e-4,
                )
                if value < residual:
                    current = replace(current, **{name: best})
                    residual = value
        if residual > tolerance:
            raise CalibrationError(f"MZM {len(corrections)} did not converge in {max_sweeps} sweeps", residual)
        corrections.append(current)
        residuals.append(residual)
        sweeps_used.append(sweep)
    return CalibrationReport(tuple(corrections), tuple(residuals), tuple(sweeps_used))


def predistort(drive_samples, response_cutoff, sample_rate, max_gain=20.0):
    """Invert a single-pole low-pass of ``response_cutoff`` GHz on sampled drive data.

    The exact inverse of the discrete pole is followed by a second pole at
    ``max_gain * response_cutoff`` so the high-frequency boost stays bounded.
    """
    check_positive(response_cutoff, "response_cutoff")
    check_positive(sample_rate, "sample_rate")
    s = np.asarray(drive_samples, dtype=float)
    alpha = 1.0 - math.exp(-2.0 * math.pi * response_cutoff / sample_rate)
    previous = np.concatenate([s[:1], s[:-1]])
    inverse = (s - (1.0 - alpha) * previous) / alpha
    return single_pole_lowpass(inverse, max_gain * response_cutoff, sample_rate)
