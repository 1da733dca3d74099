"""5G NR link model: CQI traces, CQI-indexed throughput, and the offload decision.

The rate model is the standard approximate data rate for one NR carrier
aggregated over carriers and MIMO layers:

    rate = carriers * layers * scaling * bandwidth * eff(CQI) * (1 - overhead)

with ``eff`` the spectral-efficiency column of the 4-bit CQI table
(3GPP TS 38.214, Table 5.2.2.1-2).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover - type-only import, avoids a cycle
    from .latency import LatencyParams

__all__ = [
    "CQI_EFFICIENCY",
    "ChannelModel",
    "CqiTrace",
    "Decision",
    "LinkConfig",
    "decide",
    "sample_trace",
    "spectral_efficiency",
    "splitmix64",
    "throughput",
]

# Spectral efficiency (bits/s/Hz) for CQI index 1..15, modulation up to
# 64QAM.  Source: 3GPP TS 38.214 Table 5.2.2.1-2 (CQI table 1).
CQI_EFFICIENCY = (
    0.1523,  # CQI 1, QPSK
    0.2344,
    0.3770,
    0.6016,
    0.8770,
    1.1758,  # CQI 6, QPSK
    1.4766,  # CQI 7, 16QAM
    1.9141,
    2.4063,  # CQI 9, 16QAM
    2.7305,  # CQI 10, 64QAM
    3.3223,
    3.9023,
    4.5234,
    5.1152,
    5.5547,  # CQI 15, 64QAM
)

CQI_MIN = 1
CQI_MAX = 15


class Decision(enum.Enum):
    """What the vehicle does with a captured frame."""

    SEND_ORIGINAL = "SendOriginal"
    COMPRESS = "Compress"


@dataclass(frozen=True)
class LinkConfig:
    """Radio parameters of the serving cell."""

    bandwidth_hz: float = 20e6
    num_carriers: int = 2
    mimo_layers: int = 4
    scaling_factor: float = 1.0
    overhead: float = 0.14
    cqi_threshold: int = 7

    def __post_init__(self):
        if self.bandwidth_hz <= 0 or self.num_carriers <= 0 or self.mimo_layers <= 0:
            raise ValueError("bandwidth, carriers and layers must be positive")
        if self.scaling_factor <= 0:
            raise ValueError("scaling_factor must be positive")
        if not 0.0 <= self.overhead < 1.0:
            raise ValueError(f"overhead must be in [0, 1), got {self.overhead}")
        if not CQI_MIN <= self.cqi_threshold <= CQI_MAX:
            raise ValueError(f"cqi_threshold must be in [1, 15], got {self.cqi_threshold}")


@dataclass(frozen=True)
class ChannelModel:
    """Random CQI evolution.

    ``iid-uniform`` draws each frame independently and uniformly from
    [cqi_min, cqi_max].  ``markov`` starts uniform and then keeps the
    previous value with ``stay_probability``, otherwise steps +-1 with
    equal probability, clamped to the range (a clamped step at a boundary
    stays in place).  ``seed`` 0 is the conventional "derive from the
    simulation master seed" marker; :func:`sample_trace` treats whatever
    seed it is given as literal.
    """

    kind: str = "iid-uniform"
    cqi_min: int = CQI_MIN
    cqi_max: int = CQI_MAX
    stay_probability: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("iid-uniform", "markov"):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not CQI_MIN <= self.cqi_min <= self.cqi_max <= CQI_MAX:
            raise ValueError(
                f"need 1 <= cqi_min <= cqi_max <= 15, got [{self.cqi_min}, {self.cqi_max}]"
            )
        if not 0.0 <= self.stay_probability <= 1.0:
            raise ValueError(f"stay_probability must be in [0, 1], got {self.stay_probability}")


# One CQI value per frame.
CqiTrace = np.ndarray

_MASK64 = 0xFFFFFFFFFFFFFFFF
_SM64_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(seed: int, index: int = 0) -> int:
    """The ``index``-th output of the splitmix64 stream seeded with ``seed``.

    Splittable by construction: output i depends only on (seed, i), so
    per-frame values can be drawn in any order or in parallel.
    """
    z = (seed + (index + 1) * _SM64_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _splitmix64_block(seed: int, count: int) -> np.ndarray:
    """Vectorized splitmix64 outputs 0..count-1 (uint64, wrapping arithmetic)."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = (np.uint64(seed & _MASK64) + idx * np.uint64(_SM64_GAMMA))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def sample_trace(model: ChannelModel, num_frames: int) -> CqiTrace:
    """Draw a per-frame CQI trace; deterministic for a given model (incl. seed).

    iid-uniform values come from a per-frame splitmix64 mix of
    (seed, frame index), so they are independent of evaluation order.
    The markov walk is inherently sequential and is generated once from
    a generator seeded with the model seed.
    """
    if num_frames < 1:
        raise ValueError(f"num_frames must be >= 1, got {num_frames}")
    lo, hi = model.cqi_min, model.cqi_max
    span = hi - lo + 1
    if model.kind == "iid-uniform":
        draws = _splitmix64_block(model.seed, num_frames)
        return (lo + (draws % np.uint64(span)).astype(np.int64))
    # markov: lazy walk with +-1 steps, clamped at the range edges
    rng = np.random.default_rng(model.seed)
    moves = rng.random(num_frames) >= model.stay_probability
    steps = rng.integers(0, 2, size=num_frames, dtype=np.int64) * 2 - 1
    trace = np.empty(num_frames, dtype=np.int64)
    state = int(rng.integers(lo, hi + 1))
    for i in range(num_frames):
        if moves[i]:
            state = min(hi, max(lo, state + int(steps[i])))
        trace[i] = state
    return trace


def spectral_efficiency(cqi: int) -> float:
    """Table lookup, CQI 1..15."""
    if not CQI_MIN <= cqi <= CQI_MAX:
        raise ValueError(f"cqi must be in [1, 15], got {cqi}")
    return CQI_EFFICIENCY[cqi - 1]


def throughput(cqi: int, cfg: LinkConfig = LinkConfig()) -> float:
    """Achievable link rate in bits/s for a reported CQI."""
    return (
        cfg.num_carriers
        * cfg.mimo_layers
        * cfg.scaling_factor
        * cfg.bandwidth_hz
        * spectral_efficiency(cqi)
        * (1.0 - cfg.overhead)
    )


def decide(
    policy: str,
    cqi: int,
    frame_bytes: int,
    cfg: LinkConfig,
    lat: "LatencyParams",
    fps: float,
) -> Decision:
    """Choose between sending the raw frame and compressing it first.

    ``cqi-threshold`` sends the original whenever the reported CQI is at
    or above ``cfg.cqi_threshold`` (inclusive).  ``deadline-estimate``
    sends the original whenever the predicted end-to-end time of the
    *uncompressed* frame fits within one frame interval; the estimate
    mirrors the latency decomposition (uplink + detection + downlink,
    no compression step).
    """
    if not CQI_MIN <= cqi <= CQI_MAX:
        raise ValueError(f"cqi must be in [1, 15], got {cqi}")
    if policy == "cqi-threshold":
        return Decision.SEND_ORIGINAL if cqi >= cfg.cqi_threshold else Decision.COMPRESS
    if policy == "deadline-estimate":
        rate = throughput(cqi, cfg)
        estimate = (
            8.0 * frame_bytes / rate
            + 1.0 / lat.detection_fps
            + 8.0 * lat.result_bytes / rate
        )
        return Decision.SEND_ORIGINAL if estimate <= 1.0 / fps else Decision.COMPRESS
    raise ValueError(f"unknown policy {policy!r}")


def trace_frequencies(trace: Sequence[int]) -> dict[int, float]:
    """Empirical frequency of each CQI value in a trace (diagnostics)."""
    values, counts = np.unique(np.asarray(trace), return_counts=True)
    total = counts.sum()
    return {int(v): float(c) / total for v, c in zip(values, counts)}
