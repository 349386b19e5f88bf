"""Scenario files: a validated JSON description of one run.

Every section rejects unknown keys, so a typo fails loudly with the field
path instead of being ignored.
"""

import hashlib
import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ._validation import ConfigurationError

__all__ = [
    "DeviceFile",
    "load_device_file",
    "OpuSection",
    "SweepSection",
    "ConvolveSection",
    "ConvnetSection",
    "ClusterJobSpec",
    "JobGenerator",
    "ClusterSection",
    "LinkSection",
    "EnergySection",
    "ThroughputSection",
    "Scenario",
    "load_scenario",
    "scenario_hash",
    "format_validation_error",
]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AwgrFile(_Strict):
    port_count: int = Field(8, ge=1)
    channel_spacing: float = Field(84.0, gt=0)
    center_alignment: int = Field(0, ge=0)
    passband: Literal["ideal", "gaussian"] = "ideal"
    passband_width: Optional[float] = Field(None, gt=0)


class MzmFile(_Strict):
    v_pi: float = Field(3.0, gt=0)
    bias_voltage: float = 1.5
    v_pp: float = Field(1.5, gt=0)
    bandwidth: float = Field(float("inf"), gt=0)
    delay: float = 0.0
    insertion_loss: float = Field(0.0, ge=0)
    transfer_mode: Literal["linear", "sinusoidal"] = "sinusoidal"


class PhotodetectorFile(_Strict):
    responsivity: float = Field(0.65, gt=0)
    bias_voltage: float = 2.0
    noise_sigma: float = Field(0.0, ge=0)


class DeviceFile(_Strict):
    """Physical device parameters of one OPU (JSON)."""

    awgr: AwgrFile = Field(default_factory=AwgrFile)
    mzm: Union[MzmFile, List[MzmFile]] = Field(default_factory=MzmFile)
    photodetector: PhotodetectorFile = Field(default_factory=PhotodetectorFile)

    def parts(self):
        from .photonics import AwgrSpec, MzmModel, PhotodetectorModel

        mzms = self.mzm if isinstance(self.mzm, list) else [self.mzm]
        return (
            AwgrSpec(**self.awgr.model_dump()),
            tuple(MzmModel(**m.model_dump()) for m in mzms),
            PhotodetectorModel(**self.photodetector.model_dump()),
        )


def load_device_file(path):
    try:
        return DeviceFile.model_validate_json(Path(path).read_text())
    except ValidationError as exc:
        raise ConfigurationError(f"{path}: {format_validation_error(exc)}") from None


class OpuSection(_Strict):
    device_file: Optional[str] = None
    port_count: int = Field(8, ge=1)
    channel_spacing: float = Field(84.0, gt=0)
    baud: float = Field(10.0, gt=0)
    mode: Literal["ideal", "noisy"] = "noisy"
    layout: Literal["leading", "edges"] = "leading"
    dac_bits: int = Field(8, ge=1)
    adc_bits: int = Field(12, ge=1)
    adc_headroom: float = Field(0.125, ge=0)

    @model_validator(mode="after")
    def _no_overlap(self):
        clash = {"port_count", "channel_spacing"} & self.model_fields_set
        if self.device_file and clash:
            raise ValueError(f"{sorted(clash)} come from device_file; do not set them here")
        return self

    def build(self, seed=0):
        """``OpuConfig`` for this section; a device file supplies the AWGR, MZMs and detector."""
        from .opu import NoiseModel, OpuConfig
        from .photonics import AwgrSpec, MzmModel, PhotodetectorModel

        if self.device_file:
            awgr, mzms, pd = load_device_file(self.device_file).parts()
        else:
            awgr = AwgrSpec(self.port_count, self.channel_spacing)
            mzms, pd = (MzmModel.quadrature(),), PhotodetectorModel()
        return OpuConfig(
            awgr=awgr,
            mzm_array=mzms,
            pd=pd,
            dac_bits=self.dac_bits,
            adc_bits=self.adc_bits,
            adc_headroom=self.adc_headroom,
            baud=self.baud,
            noise=NoiseModel.calibrated(seed=seed),
            mode=self.mode,
            layout=self.layout,
        )


class SweepSection(_Strict):
    axis: Literal["baud", "rop", "bits"]
    values: List[float] = Field(min_length=1)
    trials: int = Field(4096, ge=2)


class ConvolveSection(_Strict):
    kernel: Optional[List[float]] = None
    input: Optional[List[float]] = None
    input_csv: Optional[str] = None
    kernel_set: Optional[str] = None
    image: Optional[str] = None
    image_size: int = Field(16, ge=1)
    trials: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.kernel is None) == (self.kernel_set is None):
            raise ValueError("give exactly one of 'kernel' or 'kernel_set'")
        if self.kernel is not None and self.input is None and self.input_csv is None:
            raise ValueError("a 1D 'kernel' needs 'input' or 'input_csv'")
        return self


class ConvnetSection(_Strict):
    epochs: int = Field(8, ge=0)
    learning_rate: float = Field(0.3, gt=0)
    lr_decay: float = Field(0.7, gt=0)
    batch_size: int = Field(32, ge=1)
    train_limit: Optional[int] = Field(None, ge=100)
    test_limit: int = Field(1000, ge=1)
    bits: Optional[List[int]] = None
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    opu_count: int = Field(1, ge=1)
    use_opu: bool = False
    fidelity_images: int = Field(20, ge=1)
    model: Optional[str] = None


class ClusterJobSpec(_Strict):
    id: Union[int, str]
    kind: Literal["conv1d", "conv2d"]
    kernel: Union[List[float], List[List[float]]]
    payload: Optional[Union[List[float], List[List[float]]]] = None
    payload_shape: Optional[Tuple[int, ...]] = None
    origin: int = 0
    seed: Optional[int] = None
    submit_time: float = Field(0.0, ge=0)


class JobGenerator(_Strict):
    """Random conv1d jobs with a shared kernel."""

    count: int = Field(100, ge=0)
    length: int = Field(32, ge=1)
    kernel: List[float] = Field(default_factory=lambda: [0.5, -1.0, 0.25])
    submit_interval: float = Field(0.0, ge=0)


class ClusterSection(_Strict):
    opu_count: int = Field(5, ge=1)
    reload_penalty: int = Field(0, ge=0)
    jobs: List[ClusterJobSpec] = Field(default_factory=list)
    generate: Optional[JobGenerator] = None
    parallel: int = Field(1, ge=1)


class LinkSection(_Strict):
    launch_power: float = 1.0
    fiber_length: float = Field(80.0, ge=0)
    fiber_loss: float = Field(0.2, ge=0)
    extra_attenuation: float = Field(0.0, ge=0)
    propagation_delay: float = Field(5.0, ge=0)
    pam_levels: int = Field(4, ge=2)
    pam_baud: float = Field(25.0, gt=0)
    code_rate: float = Field(0.75, gt=0, le=1)
    threshold: float = Field(2e-2, gt=0, lt=0.5)
    payload_bytes: int = Field(65536, ge=1)

    def build(self):
        from .link import FecConfig, LinkModel, PamConfig

        link = LinkModel(self.launch_power, self.fiber_length, self.fiber_loss,
                         self.extra_attenuation, self.propagation_delay)
        return link, PamConfig(self.pam_levels, self.pam_baud), FecConfig(self.code_rate, self.threshold)


class EnergySection(_Strict):
    power_table: Optional[str] = None
    bom: Optional[str] = None
    tops: float = Field(3.6, gt=0)


class ThroughputSection(_Strict):
    points: List[Tuple[int, int, float]] = Field(
        default_factory=lambda: [(8, 3, 10.0), (8, 3, 50.0)]
    )
    run_log: Optional[str] = None


class Scenario(_Strict):
    name: str
    experiment: Literal[
        "convolve", "precision", "addition", "kernels", "mnist", "first_layer",
        "link", "cluster", "power", "throughput",
    ]
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: Optional[str] = None
    opu: OpuSection = Field(default_factory=OpuSection)
    sweep: Optional[SweepSection] = None
    convolve: Optional[ConvolveSection] = None
    convnet: ConvnetSection = Field(default_factory=ConvnetSection)
    cluster: ClusterSection = Field(default_factory=ClusterSection)
    link: LinkSection = Field(default_factory=LinkSection)
    energy: EnergySection = Field(default_factory=EnergySection)
    throughput: ThroughputSection = Field(default_factory=ThroughputSection)

    @model_validator(mode="after")
    def _kernel_fits(self):
        if self.convolve and self.convolve.kernel is not None:
            if len(self.convolve.kernel) > self.opu.port_count:
                raise ValueError(
                    f"convolve.kernel has {len(self.convolve.kernel)} taps but "
                    f"opu.port_count is {self.opu.port_count}"
                )
        return self


def format_validation_error(exc):
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<scenario>"
        lines.append(f"{path}: {err['msg']}")
    return "; ".join(lines)


def scenario_dir():
    from .convnet.serialize import fixture_root

    return fixture_root() / "scenarios"


def resolve_scenario_path(ref):
    """A file path, or the name of a shipped scenario."""
    path = Path(ref)
    if path.exists():
        return path
    shipped = scenario_dir() / f"{ref}.json"
    if shipped.exists():
        return shipped
    raise ConfigurationError(f"scenario {ref!r} is neither a file nor a shipped scenario name")


def load_scenario(ref, seed=None):
    path = resolve_scenario_path(ref)
    try:
        data = json.loads(path.read_text())
    except ValueError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    if seed is not None:
        data["seed"] = seed
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"{path}: {format_validation_error(exc)}") from None


def scenario_hash(scenario):
    canonical = json.dumps(scenario.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
