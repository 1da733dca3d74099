"""Monte Carlo offload simulation and accuracy-vs-ratio evaluation.

``run_sim`` replays a CQI trace against the latency model and reports
per-frame outcomes plus the outage probability.  ``sweep`` runs a grid
of (compression ratio, framework) cells over one shared trace so the
comparison is paired.  ``evaluate_accuracy`` compresses a corpus of
labeled frames at each ratio and scores the oracle detector's AP/mAP.

Determinism contract: everything is a pure function of the config
(including ``master_seed``); worker counts and evaluation order never
change any emitted byte.  Per-frame random values come from a
splitmix64 mix of (seed, frame index); the channel-trace seed is
derived from the master seed as ``splitmix64(master_seed)`` when the
channel model does not pin one.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, NamedTuple, Sequence

import numpy as np

from .channel import ChannelModel, Decision, LinkConfig, sample_trace, splitmix64, throughput
from .detector import (
    KITTI_CLASSES,
    Detection,
    GroundTruth,
    OracleParams,
    average_precision,
    load_kitti_labels,
    mean_average_precision,
    oracle_detect,
)
from .imageio import Image, Mask, read_image
from .latency import FrameOutcome, LatencyParams
from .protocol import masked_payload_size
from .saliency import DEFAULT_ANALYSIS_SIZE, MaskedImage, srvs_compress

log = logging.getLogger(__name__)

__all__ = [
    "AccuracyCell",
    "FRAMEWORKS",
    "SimConfig",
    "SweepRow",
    "evaluate_accuracy",
    "run_sim",
    "sweep",
    "write_accuracy_csv",
    "write_outcomes_csv",
    "write_sweep_csv",
]

FRAMEWORKS = ("EODF", "CONV")


@dataclass(frozen=True)
class SimConfig:
    """One simulation cell: a framework at one compression ratio."""

    frames: int = 10000
    fps: float = 30.0
    framework: str = "EODF"
    policy: str = "cqi-threshold"
    compression_ratio: float = 0.0
    frame_width: int = 1242
    frame_height: int = 375
    frame_channels: int = 3
    mask_layout: str = "contiguous"
    master_seed: int = 0
    workers: int = 1
    channel: ChannelModel = field(default_factory=ChannelModel)
    link: LinkConfig = field(default_factory=LinkConfig)
    latency: LatencyParams = field(default_factory=LatencyParams)

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1, got {self.frames}")
        if not 0.0 <= self.compression_ratio < 1.0:
            raise ValueError(f"compression_ratio must be in [0, 1), got {self.compression_ratio}")
        if self.framework not in FRAMEWORKS:
            raise ValueError(f"framework must be one of {FRAMEWORKS}, got {self.framework!r}")
        if self.policy not in ("cqi-threshold", "deadline-estimate"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.frame_width < 1 or self.frame_height < 1 or self.frame_channels not in (1, 3):
            raise ValueError("bad frame geometry")


class SweepRow(NamedTuple):
    compression_ratio: float
    framework: str
    outage_probability: float
    mean_latency_s: float
    mean_wire_bytes: float


@dataclass(frozen=True)
class AccuracyCell:
    """Per-(ratio, class) evaluation result; class "mAP" aggregates."""

    ratio: float
    class_name: str
    ap: float
    num_truths: int
    num_dets: int


def effective_channel(cfg: SimConfig) -> ChannelModel:
    """The channel model run_sim actually samples.

    A seed of 0 (the default) means "derive from the master seed"; an
    explicitly seeded model is used as-is.
    """
    if cfg.channel.seed != 0:
        return cfg.channel
    return replace(cfg.channel, seed=splitmix64(cfg.master_seed))


@dataclass(frozen=True)
class _FrameColumns:
    """Per-frame simulation results as parallel arrays."""

    cqi: np.ndarray
    compress: np.ndarray
    wire: np.ndarray
    t_compress: np.ndarray
    t_uplink: np.ndarray
    t_detect: np.ndarray
    t_downlink: np.ndarray
    t_total: np.ndarray
    outage: np.ndarray


def _simulate_chunk(cfg: SimConfig, trace: np.ndarray) -> _FrameColumns:
    """Vectorized per-frame computation; mirrors decide()/frame_latency()."""
    link, lat = cfg.link, cfg.latency
    rate_table = np.array([0.0] + [throughput(q, link) for q in range(1, 16)])
    rate = rate_table[trace]

    raw_bytes = cfg.frame_width * cfg.frame_height * cfg.frame_channels
    masked_bytes = masked_payload_size(
        cfg.frame_width, cfg.frame_height, cfg.frame_channels,
        cfg.compression_ratio, cfg.mask_layout,
    )
    if cfg.framework == "CONV":
        compress = np.zeros(trace.size, dtype=bool)
    elif cfg.policy == "cqi-threshold":
        compress = trace < link.cqi_threshold
    else:  # deadline-estimate: compress when the raw frame would miss
        estimate = (
            8.0 * raw_bytes / rate
            + 1.0 / lat.detection_fps
            + 8.0 * lat.result_bytes / rate
        )
        compress = ~(estimate <= 1.0 / cfg.fps)

    wire = np.where(compress, masked_bytes, raw_bytes).astype(np.int64)
    t_compress = np.where(compress, 1.0 / lat.compression_fps, 0.0)
    t_uplink = 8.0 * wire / rate
    t_detect = np.full(trace.size, 1.0 / lat.detection_fps)
    t_downlink = 8.0 * lat.result_bytes / rate
    t_total = t_compress + t_uplink + t_detect + t_downlink
    outage = t_total > 1.0 / cfg.fps
    return _FrameColumns(trace, compress, wire, t_compress, t_uplink,
                         t_detect, t_downlink, t_total, outage)


def _simulate_columns(cfg: SimConfig, trace: np.ndarray) -> _FrameColumns:
    """Chunk the frame axis across workers; results are chunk-invariant.

    Every column is elementwise in the trace, so splitting and
    concatenating in order reproduces the single-chunk arrays exactly;
    aggregation always happens afterwards over the full arrays.
    """
    if cfg.workers == 1 or trace.size < 2 * cfg.workers:
        return _simulate_chunk(cfg, trace)
    bounds = np.linspace(0, trace.size, cfg.workers + 1, dtype=int)
    chunks = [trace[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        parts = list(pool.map(lambda t: _simulate_chunk(cfg, t), chunks))
    merged = {
        name: np.concatenate([getattr(p, name) for p in parts])
        for name in _FrameColumns.__dataclass_fields__
    }
    return _FrameColumns(**merged)


def _columns_to_outcomes(cols: _FrameColumns) -> list[FrameOutcome]:
    outcomes = []
    for i in range(cols.cqi.size):
        outcomes.append(FrameOutcome(
            frame_id=i,
            decision=Decision.COMPRESS if cols.compress[i] else Decision.SEND_ORIGINAL,
            cqi=int(cols.cqi[i]),
            bytes_on_wire=int(cols.wire[i]),
            t_compress=float(cols.t_compress[i]),
            t_uplink=float(cols.t_uplink[i]),
            t_detect=float(cols.t_detect[i]),
            t_downlink=float(cols.t_downlink[i]),
            t_total=float(cols.t_total[i]),
            outage=bool(cols.outage[i]),
        ))
    return outcomes


def run_sim(cfg: SimConfig) -> tuple[float, list[FrameOutcome]]:
    """Simulate every frame of one cell; returns (outage probability, outcomes)."""
    channel = effective_channel(cfg)
    log.info("simulating %d frames: %s at ratio %g, %s channel over CQI [%d, %d]",
             cfg.frames, cfg.framework, cfg.compression_ratio,
             channel.kind, channel.cqi_min, channel.cqi_max)
    trace = sample_trace(channel, cfg.frames)
    cols = _simulate_columns(cfg, trace)
    probability = float(np.count_nonzero(cols.outage)) / cols.outage.size
    return probability, _columns_to_outcomes(cols)


def _row_from_columns(ratio: float, framework: str, cols: _FrameColumns) -> SweepRow:
    n = cols.outage.size
    return SweepRow(
        compression_ratio=ratio,
        framework=framework,
        outage_probability=float(np.count_nonzero(cols.outage)) / n,
        mean_latency_s=float(np.sum(cols.t_total)) / n,
        mean_wire_bytes=float(np.sum(cols.wire)) / n,
    )


def sweep(
    cfg: SimConfig,
    ratios: Sequence[float],
    frameworks: Sequence[str] = FRAMEWORKS,
) -> list[SweepRow]:
    """Run the (ratio x framework) grid over one shared channel trace.

    The trace is sampled once so cells are a paired comparison; CONV
    rows therefore repeat identically across ratios.
    """
    if not ratios:
        raise ValueError("ratios must be non-empty")
    if list(ratios) != sorted(ratios):
        raise ValueError("ratios must be sorted ascending")
    for fw in frameworks:
        if fw not in FRAMEWORKS:
            raise ValueError(f"unknown framework {fw!r}")
    channel = effective_channel(cfg)
    trace = sample_trace(channel, cfg.frames)
    log.info("sweep: %d ratios x %s over %d frames, %s channel CQI [%d, %d], policy %s",
             len(ratios), "/".join(frameworks), cfg.frames,
             channel.kind, channel.cqi_min, channel.cqi_max, cfg.policy)
    rows = []
    for ratio in ratios:
        for framework in frameworks:
            cell = replace(cfg, compression_ratio=float(ratio), framework=framework)
            cols = _simulate_columns(cell, trace)
            rows.append(_row_from_columns(float(ratio), framework, cols))
    return rows


# --------------------------------------------------------------------------
# Accuracy evaluation
# --------------------------------------------------------------------------


def _discover_corpus(corpus: str | Path) -> tuple[list[tuple[str, Path, Path]], int]:
    """Pair image files with their label files; count images lacking labels."""
    root = Path(corpus)
    images = sorted(p for p in root.iterdir()
                    if p.suffix.lower() in (".pgm", ".ppm") and p.is_file())
    frames = []
    skipped = 0
    for image_path in images:
        label_path = image_path.with_suffix(".txt")
        if not label_path.exists():
            log.warning("no label file for %s; frame skipped", image_path.name)
            skipped += 1
            continue
        frames.append((image_path.stem, image_path, label_path))
    return frames, skipped


def _all_ones_masked(image: Image) -> MaskedImage:
    mask = Mask(np.ones((image.height, image.width), dtype=np.uint8))
    return MaskedImage(image, mask, 0.0)


def evaluate_accuracy(
    corpus: str | Path,
    ratios: Sequence[float],
    oracle: OracleParams = OracleParams(),
    *,
    analysis_size: int = DEFAULT_ANALYSIS_SIZE,
    iou_threshold: float = 0.5,
) -> list[AccuracyCell]:
    """Oracle AP/mAP of the compression pipeline at each discard ratio.

    Every frame of the corpus is compressed with ``srvs_compress`` at
    each ratio (ratio 0 bypasses compression entirely) and scored by the
    oracle detector against the frame's ground truths.  Yields one cell
    per (ratio, class) plus a class="mAP" aggregate per ratio.  Images
    without a label file are skipped with a warning.
    """
    frames, skipped = _discover_corpus(corpus)
    if not frames:
        raise ValueError(f"no usable frames under {corpus}")
    log.info("evaluating %d frames (%d skipped) at %d ratios",
             len(frames), skipped, len(ratios))
    loaded: list[tuple[str, Image, list[GroundTruth]]] = [
        (stem, read_image(image_path), load_kitti_labels(label_path))
        for stem, image_path, label_path in frames
    ]

    cells: list[AccuracyCell] = []
    for ratio in ratios:
        dets_by_class: dict[str, list[tuple[str, Detection]]] = {c: [] for c in KITTI_CLASSES}
        truths_by_class: dict[str, dict[str, list[GroundTruth]]] = {
            c: {} for c in KITTI_CLASSES
        }
        for stem, image, truths in loaded:
            if ratio == 0:
                masked = _all_ones_masked(image)
            else:
                masked = srvs_compress(image, ratio, analysis_size)
            detections = oracle_detect(masked, truths, oracle)
            for class_name in KITTI_CLASSES:
                truths_by_class[class_name][stem] = [
                    t for t in truths if t.class_name == class_name
                ]
            for det in detections:
                if det.class_name in dets_by_class:
                    dets_by_class[det.class_name].append((stem, det))
        per_class: dict[str, float] = {}
        for class_name in KITTI_CLASSES:
            ap = average_precision(
                dets_by_class[class_name], truths_by_class[class_name], iou_threshold
            )
            per_class[class_name] = ap
            cells.append(AccuracyCell(
                ratio=float(ratio),
                class_name=class_name,
                ap=ap,
                num_truths=sum(len(ts) for ts in truths_by_class[class_name].values()),
                num_dets=len(dets_by_class[class_name]),
            ))
        cells.append(AccuracyCell(
            ratio=float(ratio),
            class_name="mAP",
            ap=mean_average_precision(per_class),
            num_truths=sum(len(ts) for c in KITTI_CLASSES
                           for ts in truths_by_class[c].values()),
            num_dets=sum(len(dets_by_class[c]) for c in KITTI_CLASSES),
        ))
    return cells


# --------------------------------------------------------------------------
# CSV emission (canonical byte-stable formatting)
# --------------------------------------------------------------------------


def _fmt(value) -> str:
    """Canonical cell text: shortest-round-trip floats, plain ints, true/false."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_outcomes_csv(outcomes: Sequence[FrameOutcome], out: IO[str]) -> None:
    """Per-frame rows; columns mirror FrameOutcome exactly."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([
        "frame_id", "decision", "cqi", "bytes_on_wire", "t_compress",
        "t_uplink", "t_detect", "t_downlink", "t_total", "outage",
    ])
    for o in outcomes:
        writer.writerow([
            o.frame_id, o.decision.value, o.cqi, o.bytes_on_wire,
            _fmt(o.t_compress), _fmt(o.t_uplink), _fmt(o.t_detect),
            _fmt(o.t_downlink), _fmt(o.t_total), _fmt(o.outage),
        ])


def write_sweep_csv(rows: Sequence[SweepRow], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([
        "compression_ratio", "framework", "outage_probability",
        "mean_latency_s", "mean_wire_bytes",
    ])
    for r in rows:
        writer.writerow([
            _fmt(r.compression_ratio), r.framework, _fmt(r.outage_probability),
            _fmt(r.mean_latency_s), _fmt(r.mean_wire_bytes),
        ])


def write_accuracy_csv(cells: Sequence[AccuracyCell], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["ratio", "class", "ap"])
    for c in cells:
        writer.writerow([_fmt(c.ratio), c.class_name, _fmt(c.ap)])
