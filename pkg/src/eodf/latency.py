"""Per-frame latency decomposition and deadline-miss (outage) accounting.

A frame's end-to-end time is the sum of four stages: optional on-vehicle
compression, uplink transfer, edge-side detection, and downlink of the
result payload.  Acquisition, queueing and deserialization are modeled
as zero.  A frame is an outage when its total exceeds one frame
interval (1/fps).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .channel import Decision, LinkConfig, throughput

__all__ = [
    "COMPRESSION_FPS_PI",
    "COMPRESSION_FPS_WORKSTATION",
    "DETECTION_FPS_PRESETS",
    "FrameOutcome",
    "LatencyParams",
    "frame_latency",
    "outage_probability",
]

# Measured compression throughput of the 64x64 saliency pipeline.
COMPRESSION_FPS_PI = 240.0  # Raspberry Pi class edge hardware
COMPRESSION_FPS_WORKSTATION = 2862.0  # single CPU core

# Detector frame rates by square input size.
DETECTION_FPS_PRESETS = {512: 59.0, 256: 91.0, 128: 125.0, 64: 200.0}


@dataclass(frozen=True)
class LatencyParams:
    """Processing-latency constants of the vehicle/edge pair."""

    compression_fps: float = COMPRESSION_FPS_PI
    detection_fps: float = DETECTION_FPS_PRESETS[512]
    result_bytes: int = 256

    def __post_init__(self):
        if self.compression_fps <= 0 or self.detection_fps <= 0:
            raise ValueError("compression_fps and detection_fps must be positive")
        if self.result_bytes < 0:
            raise ValueError("result_bytes must be >= 0")


@dataclass(frozen=True)
class FrameOutcome:
    """Everything the simulator records about one frame."""

    frame_id: int
    decision: Decision
    cqi: int
    bytes_on_wire: int
    t_compress: float
    t_uplink: float
    t_detect: float
    t_downlink: float
    t_total: float
    outage: bool


def frame_latency(
    decision: Decision,
    wire_bytes: int,
    cqi: int,
    cfg: LinkConfig,
    lat: LatencyParams,
    fps: float,
    frame_id: int = 0,
) -> FrameOutcome:
    """Decompose one frame's latency and test it against the 1/fps deadline.

    ``wire_bytes`` is the uplink request size actually put on the wire
    (the caller measures or models it); the downlink carries
    ``lat.result_bytes``.  Compression time is charged only on Compress
    frames.
    """
    if wire_bytes < 0:
        raise ValueError(f"wire_bytes must be >= 0, got {wire_bytes}")
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    rate = throughput(cqi, cfg)
    t_compress = 1.0 / lat.compression_fps if decision is Decision.COMPRESS else 0.0
    t_uplink = 8.0 * wire_bytes / rate
    t_detect = 1.0 / lat.detection_fps
    t_downlink = 8.0 * lat.result_bytes / rate
    t_total = t_compress + t_uplink + t_detect + t_downlink
    return FrameOutcome(
        frame_id=frame_id,
        decision=decision,
        cqi=cqi,
        bytes_on_wire=wire_bytes,
        t_compress=t_compress,
        t_uplink=t_uplink,
        t_detect=t_detect,
        t_downlink=t_downlink,
        t_total=t_total,
        outage=t_total > 1.0 / fps,
    )


def outage_probability(outcomes: Sequence[FrameOutcome]) -> float:
    """Fraction of frames that missed the deadline."""
    if len(outcomes) == 0:
        raise ValueError("outage_probability of an empty sequence is undefined")
    return sum(1 for o in outcomes if o.outage) / len(outcomes)
