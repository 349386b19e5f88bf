"""Simulator for cloud-hosted optical convolution: AWGR-based processing units,
the edge-to-cloud link, scheduling across a pool of units and the power budget."""

__version__ = "0.1.0"

from .opu import OpticalConvolver, OpuConfig, opu_convolve, peak_tops  # noqa: E402
from .photonics import AwgrSpec, awgr_output_port  # noqa: E402

__all__ = [
    "__version__",
    "AwgrSpec",
    "OpticalConvolver",
    "OpuConfig",
    "awgr_output_port",
    "opu_convolve",
    "peak_tops",
]
