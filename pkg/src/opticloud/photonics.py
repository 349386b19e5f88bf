"""Device-level optical models acting on intensity spectra and drive waveforms.

Everything here works in the intensity domain: a spectrum is a vector of
per-tooth optical powers (mW) on a uniform frequency grid.  Phase, coherence
and polarization are not modelled.

Port and tooth conventions
--------------------------
AWGR ports are numbered ``0 .. N-1``.  A comb tooth ``t`` has the signed
offset ``t - center_alignment`` from the tooth aligned with the ``p == q``
resonance; reducing it mod ``N`` gives its residue ``m``.  Light on input
port ``p`` at residue ``m`` leaves on output port ``q = (p - m) mod N``.
Teeth ``N`` apart route identically (one free spectral range).
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import lfilter, lfilter_zi

from ._validation import (
    ConfigurationError,
    InvalidParameterError,
    OptiCloudError,
    ShapeError,
    check_int,
    check_positive,
)

__all__ = [
    "BLOCKED",
    "EmptyCombError",
    "InvalidPortError",
    "FrequencyGrid",
    "CombSpectrum",
    "WaveshaperProfile",
    "AwgrSpec",
    "MzmModel",
    "PhotodetectorModel",
    "generate_comb",
    "decimate_comb",
    "apply_waveshaper",
    "equalize_comb",
    "awgr_output_port",
    "routing_tensor",
    "route_spectra",
    "mzm_modulate",
    "single_pole_lowpass",
    "fractional_delay",
    "microring_split",
    "balanced_detect",
    "write_spectrum_csv",
    "db_to_linear",
    "linear_to_db",
]

#: Attenuation value that fully suppresses a tooth.
BLOCKED = math.inf


class EmptyCombError(OptiCloudError):
    pass


class InvalidPortError(OptiCloudError):
    pass


def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def db_to_linear(db):
    return np.power(10.0, np.asarray(db, dtype=float) / 10.0)


def linear_to_db(ratio):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(ratio, dtype=float))


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform comb grid: ``center_frequency`` in THz, ``spacing`` in GHz."""

    center_frequency: float
    spacing: float
    tooth_count: int

    def __post_init__(self):
        check_positive(self.spacing, "spacing")
        check_int(self.tooth_count, "tooth_count", minimum=1)

    def frequency(self, index):
        """Tooth frequency in THz."""
        index = np.asarray(index, dtype=float)
        return self.center_frequency + (index - self.tooth_count / 2.0) * self.spacing * 1e-3

    def frequencies_ghz(self):
        return self.frequency(np.arange(self.tooth_count)) * 1e3

    def offset(self, index):
        """Signed tooth offset from the grid center, in teeth."""
        return np.asarray(index, dtype=float) - self.tooth_count / 2.0

    @property
    def span(self):
        """First-to-last tooth separation in GHz."""
        return (self.tooth_count - 1) * self.spacing


@dataclass(frozen=True)
class CombSpectrum:
    grid: FrequencyGrid
    power_per_tooth: np.ndarray

    def __post_init__(self):
        power = _frozen_array(self.power_per_tooth)
        if power.shape != (self.grid.tooth_count,):
            raise ShapeError(
                f"power_per_tooth has shape {power.shape}, grid expects ({self.grid.tooth_count},)"
            )
        if not np.all(np.isfinite(power)) or np.any(power < 0):
            raise InvalidParameterError("tooth powers must be finite and >= 0")
        object.__setattr__(self, "power_per_tooth", power)

    @property
    def total_power(self):
        return float(self.power_per_tooth.sum())

    def with_power(self, power):
        return CombSpectrum(self.grid, power)

    def __add__(self, other):
        if other.grid != self.grid:
            raise ConfigurationError("cannot add spectra on different grids")
        return CombSpectrum(self.grid, self.power_per_tooth + other.power_per_tooth)


@dataclass(frozen=True)
class WaveshaperProfile:
    """Per-tooth attenuation in dB; ``BLOCKED`` (inf) removes a tooth."""

    attenuation_per_tooth: np.ndarray

    def __post_init__(self):
        att = _frozen_array(self.attenuation_per_tooth)
        if att.ndim != 1:
            raise ShapeError("attenuation_per_tooth must be one-dimensional")
        if np.any(np.isnan(att)) or np.any(att < 0):
            raise InvalidParameterError("attenuations must be >= 0 dB (or BLOCKED)")
        object.__setattr__(self, "attenuation_per_tooth", att)

    @classmethod
    def flat(cls, tooth_count, attenuation=0.0):
        return cls(np.full(tooth_count, float(attenuation)))

    @property
    def transmission(self):
        return db_to_linear(-self.attenuation_per_tooth)

    def __add__(self, other):
        """Cascade two shapers (attenuations add in dB)."""
        if other.attenuation_per_tooth.shape != self.attenuation_per_tooth.shape:
            raise ShapeError("profiles have different lengths")
        return WaveshaperProfile(self.attenuation_per_tooth + other.attenuation_per_tooth)


@dataclass(frozen=True)
class AwgrSpec:
    """N x N cyclic router.

    ``passband`` is ``"ideal"`` (impulse response, each tooth reaches exactly
    one port) or ``"gaussian"`` with full 3 dB width ``passband_width`` in GHz,
    in which case part of each tooth leaks into neighbouring ports.
    """

    port_count: int
    channel_spacing: float
    center_alignment: int = 0
    passband: str = "ideal"
    passband_width: Optional[float] = None

    def __post_init__(self):
        check_int(self.port_count, "port_count", minimum=1)
        check_positive(self.channel_spacing, "channel_spacing")
        check_int(self.center_alignment, "center_alignment")
        if self.passband not in ("ideal", "gaussian"):
            raise InvalidParameterError(f"unknown passband model {self.passband!r}")
        if self.passband == "gaussian":
            if self.passband_width is None:
                object.__setattr__(self, "passband_width", 0.5 * self.channel_spacing)
            check_positive(self.passband_width, "passband_width")

    @property
    def fsr(self):
        return self.port_count * self.channel_spacing

    def residue(self, tooth_index):
        return np.mod(np.asarray(tooth_index) - self.center_alignment, self.port_count)

    def fsr_index(self, tooth_index):
        return np.floor_divide(np.asarray(tooth_index) - self.center_alignment, self.port_count)

    def tooth(self, fsr_index, residue):
        return self.center_alignment + fsr_index * self.port_count + residue


@dataclass(frozen=True)
class MzmModel:
    """Intensity modulator.

    ``sinusoidal``: T(v) = sin^2(pi (v + bias) / (2 v_pi)).
    ``linear``:     T(v) = clip((v + bias) / v_pp, 0, 1).

    ``bandwidth`` (GHz) is a single-pole low-pass on the drive and ``delay``
    (ps) a time shift; both only act when a sample rate is supplied.
    """

    v_pi: float = 3.0
    bias_voltage: float = 1.5
    v_pp: float = 1.5
    bandwidth: float = math.inf
    delay: float = 0.0
    insertion_loss: float = 0.0
    transfer_mode: str = "sinusoidal"

    def __post_init__(self):
        check_positive(self.v_pi, "v_pi")
        check_positive(self.v_pp, "v_pp")
        if not self.bandwidth > 0:
            raise InvalidParameterError("bandwidth must be > 0")
        check_positive(self.insertion_loss, "insertion_loss", strict=False)
        if self.transfer_mode not in ("linear", "sinusoidal"):
            raise InvalidParameterError(f"unknown transfer_mode {self.transfer_mode!r}")

    @classmethod
    def quadrature(cls, v_pi=3.0, **kwargs):
        """Sinusoidal MZM biased at the -3 dB point."""
        return cls(v_pi=v_pi, bias_voltage=v_pi / 2.0, **kwargs)

    def transmission(self, volts):
        volts = np.asarray(volts, dtype=float)
        if self.transfer_mode == "sinusoidal":
            t = np.sin(np.pi * (volts + self.bias_voltage) / (2.0 * self.v_pi)) ** 2
        else:
            t = np.clip((volts + self.bias_voltage) / self.v_pp, 0.0, 1.0)
        return t * 10.0 ** (-self.insertion_loss / 10.0)

    def drive_for(self, transmission):
        """Drive voltage giving ``transmission`` (before insertion loss) on this model."""
        t = np.clip(np.asarray(transmission, dtype=float), 0.0, 1.0)
        if self.transfer_mode == "sinusoidal":
            return 2.0 * self.v_pi / np.pi * np.arcsin(np.sqrt(t)) - self.bias_voltage
        return t * self.v_pp - self.bias_voltage


@dataclass(frozen=True)
class PhotodetectorModel:
    responsivity: float = 0.65
    bias_voltage: float = 2.0
    noise_sigma: float = 0.0  # mA, same unit as the photocurrent

    def __post_init__(self):
        check_positive(self.responsivity, "responsivity")
        check_positive(self.noise_sigma, "noise_sigma", strict=False)


# --------------------------------------------------------------------------
# comb source and waveshaper


def generate_comb(line_count, spacing, center=193.4, flatness=0.0, peak_power=1.0):
    """Electro-optic comb whose tooth power rolls off ``flatness`` dB per line from center."""
    line_count = check_int(line_count, "line_count", minimum=1)
    check_positive(spacing, "spacing")
    check_positive(flatness, "flatness", strict=False)
    check_positive(peak_power, "peak_power")
    grid = FrequencyGrid(center, spacing, line_count)
    middle = (line_count - 1) / 2.0
    rolloff_db = flatness * np.abs(np.arange(line_count) - middle)
    return CombSpectrum(grid, peak_power * db_to_linear(-rolloff_db))


def decimate_comb(comb, keep_every, offset=0, target_spacing=None):
    """Keep every ``keep_every``-th tooth starting at ``offset``; drop the rest.

    The surviving teeth form a new grid whose spacing is ``keep_every`` times
    the source spacing.  ``target_spacing`` (GHz), when given, must match.
    """
    keep_every = check_int(keep_every, "keep_every", minimum=1)
    offset = check_int(offset, "offset", minimum=0)
    src = comb.grid
    if offset >= keep_every or offset >= src.tooth_count:
        raise InvalidParameterError("offset must be smaller than keep_every and the tooth count")
    new_spacing = src.spacing * keep_every
    if target_spacing is not None and not math.isclose(new_spacing, target_spacing, rel_tol=1e-9):
        raise InvalidParameterError(
            f"{src.spacing} GHz x {keep_every} = {new_spacing} GHz does not reach "
            f"the target spacing {target_spacing} GHz"
        )
    kept = np.arange(offset, src.tooth_count, keep_every)
    count = kept.size
    first = float(src.frequency(kept[0]))
    center = first + (count / 2.0) * new_spacing * 1e-3
    grid = FrequencyGrid(center, new_spacing, count)
    return CombSpectrum(grid, comb.power_per_tooth[kept])


def apply_waveshaper(comb, profile):
    att = profile.attenuation_per_tooth
    if att.shape != comb.power_per_tooth.shape:
        raise ShapeError(
            f"profile has {att.size} teeth, comb has {comb.power_per_tooth.size}"
        )
    return comb.with_power(comb.power_per_tooth * profile.transmission)


def equalize_comb(comb):
    """Attenuation table flattening every lit tooth to the weakest lit tooth."""
    power = comb.power_per_tooth
    lit = power > 0
    if not np.any(lit):
        raise EmptyCombError("comb has no tooth with nonzero power")
    floor = power[lit].min()
    att = np.full(power.shape, BLOCKED)
    att[lit] = 10.0 * np.log10(power[lit] / floor)
    return WaveshaperProfile(att)


# --------------------------------------------------------------------------
# AWGR


def awgr_output_port(spec, input_port, tooth_index):
    n = spec.port_count
    if isinstance(input_port, bool) or not isinstance(input_port, (int, np.integer)):
        raise InvalidPortError(f"input port must be an integer, got {input_port!r}")
    if not 0 <= input_port < n:
        raise InvalidPortError(f"input port {input_port} outside 0..{n - 1}")
    m = int(spec.residue(tooth_index))
    return (int(input_port) - m) % n


def routing_tensor(spec, tooth_count):
    """Power transfer ``R[p, q, t]`` from input ``p`` to output ``q`` for tooth ``t``."""
    n = spec.port_count
    teeth = np.arange(tooth_count)
    m = spec.residue(teeth)  # (T,)
    p = np.arange(n)[:, None, None]
    q = np.arange(n)[None, :, None]
    if spec.passband == "ideal":
        return ((p - m[None, None, :] - q) % n == 0).astype(float)
    # channels of detuning between the tooth and the passband peak of port q
    detune = (m[None, None, :] - (p - q) + n / 2.0) % n - n / 2.0
    ghz = detune * spec.channel_spacing
    g = np.exp(-4.0 * math.log(2.0) * (ghz / spec.passband_width) ** 2)
    return g / g.sum(axis=1, keepdims=True)


def route_spectra(spec, input_spectra):
    """Route one spectrum per input port; returns one spectrum per output port."""
    n = spec.port_count
    if len(input_spectra) != n:
        raise ConfigurationError(f"expected {n} input spectra, got {len(input_spectra)}")
    grid = input_spectra[0].grid
    for s in input_spectra:
        if s.grid != grid:
            raise ConfigurationError("all input spectra must share one grid")
    if not math.isclose(grid.spacing, spec.channel_spacing, rel_tol=1e-9):
        raise ConfigurationError(
            f"grid spacing {grid.spacing} GHz differs from AWGR channel spacing "
            f"{spec.channel_spacing} GHz"
        )
    power_in = np.stack([s.power_per_tooth for s in input_spectra])  # (P, T)
    tensor = routing_tensor(spec, grid.tooth_count)
    power_out = np.einsum("pt,pqt->qt", power_in, tensor)
    return [CombSpectrum(grid, row) for row in power_out]


# --------------------------------------------------------------------------
# modulator, filters, detection


def single_pole_lowpass(samples, cutoff, sample_rate):
    """First-order IIR low-pass (GHz units), started in steady state."""
    samples = np.asarray(samples, dtype=float)
    if not np.isfinite(cutoff):
        return samples.copy()
    alpha = 1.0 - math.exp(-2.0 * math.pi * cutoff / sample_rate)
    b, a = [alpha], [1.0, alpha - 1.0]
    out, _ = lfilter(b, a, samples, zi=lfilter_zi(b, a) * samples[0])
    return out


def fractional_delay(samples, delay_samples):
    """Delay a periodic waveform by a possibly fractional number of samples."""
    samples = np.asarray(samples, dtype=float)
    if delay_samples == 0:
        return samples.copy()
    freqs = np.fft.rfftfreq(samples.size)
    spectrum = np.fft.rfft(samples) * np.exp(-2j * np.pi * freqs * delay_samples)
    return np.fft.irfft(spectrum, n=samples.size)


def mzm_modulate(model, input_power, drive_samples, sample_rate=None):
    """Output optical power (mW) for each drive sample (V).

    ``sample_rate`` in GHz enables the bandwidth and delay terms of ``model``.
    """
    check_positive(input_power, "input_power", strict=False)
    drive = np.asarray(drive_samples, dtype=float)
    if sample_rate is not None and drive.ndim == 1 and drive.size > 1:
        drive = single_pole_lowpass(drive, model.bandwidth, sample_rate)
        if model.delay:
            drive = fractional_delay(drive, model.delay * 1e-3 * sample_rate)
    return input_power * model.transmission(drive)


def microring_split(spectrum, fsr_selector):
    """Drop the selected teeth to ``in_band``; everything else passes to ``out_band``."""
    mask = np.zeros(spectrum.grid.tooth_count, dtype=bool)
    idx = np.fromiter(fsr_selector, dtype=int)
    if idx.size:
        if idx.min() < 0 or idx.max() >= mask.size:
            raise InvalidParameterError("selector indices outside the grid")
        mask[idx] = True
    power = spectrum.power_per_tooth
    return spectrum.with_power(np.where(mask, power, 0.0)), spectrum.with_power(np.where(mask, 0.0, power))


def balanced_detect(pd, plus_power, minus_power, seed=None):
    """Photocurrent in mA for optical powers in mW.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    plus = np.asarray(plus_power, dtype=float)
    minus = np.asarray(minus_power, dtype=float)
    if np.any(plus < 0) or np.any(minus < 0):
        raise InvalidParameterError("optical powers must be >= 0")
    current = pd.responsivity * (plus - minus)
    if pd.noise_sigma > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        current = current + rng.normal(0.0, pd.noise_sigma, size=np.shape(current))
    return current


def write_spectrum_csv(comb, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tooth_index", "frequency_ghz", "power_mw"])
        for i, (f, p) in enumerate(zip(comb.grid.frequencies_ghz(), comb.power_per_tooth)):
            writer.writerow([i, repr(float(f)), repr(float(p))])
