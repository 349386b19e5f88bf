"""Edge-to-cloud fiber link: power budget, PAM bit error rate and a
threshold FEC abstraction for payload delivery."""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcinv

from ._validation import InvalidParameterError, check_int, check_positive

__all__ = [
    "LinkModel",
    "PamConfig",
    "FecConfig",
    "RopBerCurve",
    "TransmitStats",
    "received_power",
    "q_function",
    "pam_ber",
    "ber_from_rop",
    "calibrate_noise_floor",
    "transmit_payload",
    "attenuation_sweep",
    "write_sweep_csv",
]

DEFAULT_THRESHOLD = 2e-2
THRESHOLD_ROP = -21.5  # dBm where the BER curve meets the FEC threshold


@dataclass(frozen=True)
class LinkModel:
    """Launch power in dBm, fiber length in km, loss in dB/km, extra attenuation
    in dB and propagation delay in us/km."""

    launch_power: float = 1.0
    fiber_length: float = 80.0
    fiber_loss: float = 0.2
    extra_attenuation: float = 0.0
    propagation_delay: float = 5.0

    def __post_init__(self):
        for name in ("fiber_length", "fiber_loss", "extra_attenuation", "propagation_delay"):
            check_positive(getattr(self, name), name, strict=False)

    @property
    def one_way_delay_ns(self):
        return self.fiber_length * self.propagation_delay * 1e3

    def with_attenuation(self, extra):
        return LinkModel(self.launch_power, self.fiber_length, self.fiber_loss, extra,
                         self.propagation_delay)


@dataclass(frozen=True)
class PamConfig:
    levels: int = 4
    baud: float = 25.0

    def __post_init__(self):
        check_int(self.levels, "levels", minimum=2)
        if self.levels & (self.levels - 1):
            raise InvalidParameterError(f"PAM levels must be a power of two, got {self.levels}")
        check_positive(self.baud, "baud")

    @property
    def bits_per_symbol(self):
        return int(math.log2(self.levels))

    @property
    def gross_bitrate(self):
        """Gb/s."""
        return self.baud * self.bits_per_symbol


@dataclass(frozen=True)
class FecConfig:
    code_rate: float = 0.75
    pre_fec_ber_threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not 0.0 < self.code_rate <= 1.0:
            raise InvalidParameterError(f"code_rate must lie in (0, 1], got {self.code_rate}")
        if not 0.0 < self.pre_fec_ber_threshold < 0.5:
            raise InvalidParameterError("pre_fec_ber_threshold must lie in (0, 0.5)")

    def net_bitrate(self, pam):
        return pam.gross_bitrate * self.code_rate


def q_function(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def pam_ber(snr, levels):
    """Gray-coded L-PAM bit error rate for a linear symbol SNR."""
    snr = np.asarray(snr, dtype=float)
    factor = 2.0 * (levels - 1) / (levels * math.log2(levels))
    return factor * q_function(np.sqrt(snr) / (levels - 1))


def calibrate_noise_floor(levels=4, threshold=DEFAULT_THRESHOLD, rop=THRESHOLD_ROP):
    """Noise floor (dBm) that puts ``pam_ber`` at ``threshold`` exactly at ``rop``."""
    factor = 2.0 * (levels - 1) / (levels * math.log2(levels))
    q_arg = math.sqrt(2.0) * erfcinv(2.0 * threshold / factor)
    snr = (q_arg * (levels - 1)) ** 2
    return rop - 10.0 * math.log10(snr)


@dataclass(frozen=True)
class RopBerCurve:
    """ROP (dBm) to symbol SNR: ``SNR = 10**((rop - noise_floor) / 10)``."""

    noise_floor: float

    @classmethod
    def calibrated(cls, pam=None, fec=None):
        pam = pam or PamConfig()
        fec = fec or FecConfig()
        return cls(calibrate_noise_floor(pam.levels, fec.pre_fec_ber_threshold))

    def snr(self, rop):
        return 10.0 ** ((np.asarray(rop, dtype=float) - self.noise_floor) / 10.0)


def received_power(link):
    return link.launch_power - link.fiber_length * link.fiber_loss - link.extra_attenuation


def ber_from_rop(curve, rop, pam=None):
    pam = pam or PamConfig()
    return pam_ber(curve.snr(rop), pam.levels)


@dataclass(frozen=True)
class TransmitStats:
    pre_fec_ber: float
    bit_errors: int
    post_fec_errors: int
    decoded: bool
    rop: float
    coded_bits: int
    symbols: int

    def as_dict(self):
        return {
            "pre_fec_ber": self.pre_fec_ber,
            "bit_errors": self.bit_errors,
            "post_fec_errors": self.post_fec_errors,
            "decoded": self.decoded,
            "rop": self.rop,
            "coded_bits": self.coded_bits,
            "symbols": self.symbols,
        }


def _gray_tables(levels):
    index = np.arange(levels)
    gray = index ^ (index >> 1)
    inverse = np.empty(levels, dtype=np.int64)
    inverse[gray] = index
    return gray, inverse


def _bits_to_ints(bits, width):
    return bits.reshape(-1, width) @ (1 << np.arange(width - 1, -1, -1))


def _ints_to_bits(values, width):
    shifts = np.arange(width - 1, -1, -1)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def transmit_payload(payload, link=None, pam=None, fec=None, seed=0, curve=None):
    """Send ``payload`` bytes across the link.

    The coded stream (payload bits padded to ``ceil(bits / code_rate)``) is
    Gray-mapped onto PAM levels, disturbed by Gaussian noise at the link's
    symbol SNR and sliced with hard decisions.  The FEC delivers the payload
    unchanged when the measured pre-FEC BER is below the threshold;
    otherwise the raw payload bits with their channel errors come back and
    ``decoded`` is false.
    """
    data = bytes(payload)
    if not data:
        raise InvalidParameterError("payload must not be empty")
    link = link or LinkModel()
    pam = pam or PamConfig()
    fec = fec or FecConfig()
    curve = curve or RopBerCurve.calibrated(pam, fec)
    rng = np.random.default_rng(seed)

    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    width = pam.bits_per_symbol
    coded_bits = math.ceil(len(bits) / fec.code_rate)
    coded_bits += (-coded_bits) % width
    # parity bits are modelled as random filler; only their error count matters
    stream = np.concatenate([bits, rng.integers(0, 2, coded_bits - len(bits), dtype=np.uint8)])

    levels = pam.levels
    gray, inverse = _gray_tables(levels)
    index = inverse[_bits_to_ints(stream, width)]
    amplitude = 2.0 * index - (levels - 1)
    rop = received_power(link)
    snr = float(curve.snr(rop))
    if math.isfinite(snr) and snr > 0:
        received = amplitude + rng.standard_normal(len(amplitude)) * (levels - 1) / math.sqrt(snr)
    else:
        received = amplitude
    decided = np.clip(np.round((received + (levels - 1)) / 2.0), 0, levels - 1).astype(np.int64)
    rx_bits = _ints_to_bits(gray[decided], width)
    errors = rx_bits != stream
    bit_errors = int(errors.sum())
    pre_fec_ber = bit_errors / len(stream)
    decoded = pre_fec_ber < fec.pre_fec_ber_threshold
    if decoded:
        out, post = data, 0
    else:
        payload_bits = rx_bits[: len(bits)]
        out = np.packbits(payload_bits).tobytes()
        post = int(errors[: len(bits)].sum())
    stats = TransmitStats(pre_fec_ber, bit_errors, post, bool(decoded), rop, len(stream),
                          len(amplitude))
    return out, stats


def attenuation_sweep(payload, attenuations, link=None, pam=None, fec=None, seed=0):
    """One row per attenuation: (dB, ROP dBm, analytic BER, measured pre-FEC BER, decoded)."""
    link = link or LinkModel()
    pam = pam or PamConfig()
    fec = fec or FecConfig()
    curve = RopBerCurve.calibrated(pam, fec)
    rows = []
    for i, att in enumerate(attenuations):
        lk = link.with_attenuation(float(att))
        rop = received_power(lk)
        received, stats = transmit_payload(payload, lk, pam, fec, seed=[seed, i], curve=curve)
        rows.append({
            "attenuation_db": float(att),
            "rop_dbm": rop,
            "ber_model": float(ber_from_rop(curve, rop, pam)),
            "pre_fec_ber": stats.pre_fec_ber,
            "decoded": stats.decoded and received == bytes(payload),
        })
    return rows


def write_sweep_csv(path, rows):
    fields = ["attenuation_db", "rop_dbm", "ber_model", "pre_fec_ber", "decoded"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in fields})
