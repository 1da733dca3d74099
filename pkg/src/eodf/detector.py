"""Detection types, KITTI label ingestion, the mask-aware oracle detector,
and AP/mAP evaluation.

The oracle detector stands in for a real network: it "detects" a ground
truth whenever enough of the object's pixels survive the compression
mask, which makes accuracy-vs-ratio studies deterministic and cheap.
Real detector outputs can be substituted through the replay store.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .saliency import MaskedImage

log = logging.getLogger(__name__)

__all__ = [
    "BoundingBox",
    "CLASS_IDS",
    "CLASS_NAMES",
    "Detection",
    "GroundTruth",
    "KITTI_CLASSES",
    "LabelParseError",
    "OracleParams",
    "average_precision",
    "format_class_report",
    "iou",
    "load_kitti_labels",
    "mean_average_precision",
    "oracle_detect",
    "parse_kitti_labels",
    "replay_detect",
]

# The evaluated vehicle classes; everything else parses as "other".
KITTI_CLASSES = ("car", "van", "truck", "tram")

# Stable ids for the wire protocol.
CLASS_IDS = {"car": 0, "van": 1, "truck": 2, "tram": 3, "other": 4}
CLASS_NAMES = {v: k for k, v in CLASS_IDS.items()}


class LabelParseError(ValueError):
    """Malformed label or replay line; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned 2-D box in pixel coordinates, positive area."""

    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self):
        if not (self.right > self.left and self.bottom > self.top):
            raise ValueError(
                f"degenerate box ({self.left}, {self.top}, {self.right}, {self.bottom})"
            )

    @property
    def area(self) -> float:
        return (self.right - self.left) * (self.bottom - self.top)


@dataclass(frozen=True)
class GroundTruth:
    """One annotated object; difficulty flags ride along untouched."""

    class_name: str
    box: BoundingBox
    # (truncation, occlusion) tokens exactly as they appeared in the file.
    difficulty_flags: tuple[str, str] = ("0", "0")


@dataclass(frozen=True)
class Detection:
    class_name: str
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class OracleParams:
    """Tuning of the ground-truth-based stand-in detector."""

    visibility_threshold: float = 0.5
    confidence_model: str = "retained-fraction"  # or "constant"

    def __post_init__(self):
        if not 0.0 < self.visibility_threshold <= 1.0:
            raise ValueError(
                f"visibility_threshold must be in (0, 1], got {self.visibility_threshold}"
            )
        if self.confidence_model not in ("retained-fraction", "constant"):
            raise ValueError(f"unknown confidence_model {self.confidence_model!r}")


# --------------------------------------------------------------------------
# Label parsing
# --------------------------------------------------------------------------


def parse_kitti_labels(text: str) -> list[GroundTruth]:
    """Parse KITTI object-label text (one object per line, 15+ fields).

    Fields 5-8 (1-based) are the 2-D box ``left top right bottom``.
    Class names are lower-cased; anything outside the four evaluated
    vehicle classes becomes "other"; DontCare lines are dropped.
    """
    truths: list[GroundTruth] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) < 15:
            raise LabelParseError(
                f"expected >= 15 whitespace-separated fields, got {len(fields)}", line_no
            )
        raw_class = fields[0]
        if raw_class.lower() == "dontcare":
            continue
        try:
            left, top, right, bottom = (float(f) for f in fields[4:8])
        except ValueError:
            raise LabelParseError(f"non-numeric bounding box fields {fields[4:8]}", line_no)
        name = raw_class.lower()
        if name not in KITTI_CLASSES:
            name = "other"
        try:
            box = BoundingBox(left, top, right, bottom)
        except ValueError as exc:
            raise LabelParseError(str(exc), line_no)
        truths.append(GroundTruth(name, box, (fields[1], fields[2])))
    return truths


def load_kitti_labels(path: str | Path) -> list[GroundTruth]:
    return parse_kitti_labels(Path(path).read_text())


# --------------------------------------------------------------------------
# Geometry
# --------------------------------------------------------------------------


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


# --------------------------------------------------------------------------
# Detectors
# --------------------------------------------------------------------------


def _pixel_bounds(box: BoundingBox, width: int, height: int) -> tuple[int, int, int, int] | None:
    """Integer pixel rectangle covered by a box, clipped to the image.

    A pixel column x belongs to the box when [x, x+1) overlaps
    [left, right), i.e. columns floor(left) .. ceil(right)-1; same for
    rows.  Returns None when the clipped rectangle is empty.
    """
    x0 = max(0, math.floor(box.left))
    y0 = max(0, math.floor(box.top))
    x1 = min(width, math.ceil(box.right))
    y1 = min(height, math.ceil(box.bottom))
    if x0 >= x1 or y0 >= y1:
        return None
    return x0, y0, x1, y1


def oracle_detect(
    masked: MaskedImage,
    truths: Sequence[GroundTruth],
    params: OracleParams = OracleParams(),
) -> list[Detection]:
    """Detect every truth whose retained pixel fraction reaches the threshold.

    For each ground truth, ``retained_fraction`` is the count of mask
    ones inside the box (clipped to the image) over the clipped box's
    pixel count.  A truth is detected iff the fraction is >= the
    visibility threshold; confidence is the fraction itself (or 1 under
    the "constant" model).  Boxes entirely outside the image are skipped
    with a warning.
    """
    bits = masked.mask.bits
    height, width = bits.shape
    detections: list[Detection] = []
    for truth in truths:
        bounds = _pixel_bounds(truth.box, width, height)
        if bounds is None:
            log.warning("ground-truth box %s lies outside the %dx%d frame; skipped",
                        truth.box, width, height)
            continue
        x0, y0, x1, y1 = bounds
        ones = int(bits[y0:y1, x0:x1].sum())
        total = (x1 - x0) * (y1 - y0)
        fraction = ones / total
        if fraction >= params.visibility_threshold:
            conf = fraction if params.confidence_model == "retained-fraction" else 1.0
            detections.append(Detection(truth.class_name, truth.box, conf))
    return detections


def replay_detect(frame_id: Any, store: str | Path) -> list[Detection]:
    """Read precomputed detections for a frame from ``<frame_id>.txt``.

    Lines are ``class conf left top right bottom``.  A missing file
    yields an empty sequence with a warning (the frame simply has no
    detections on record).
    """
    path = Path(store) / f"{frame_id}.txt"
    if not path.exists():
        log.warning("no replay file for frame %r at %s; returning no detections",
                    frame_id, path)
        return []
    detections: list[Detection] = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 6:
            raise LabelParseError(f"expected 'class conf left top right bottom', got {line!r}",
                                  line_no)
        try:
            conf = float(fields[1])
            left, top, right, bottom = (float(f) for f in fields[2:6])
        except ValueError:
            raise LabelParseError(f"non-numeric fields in {line!r}", line_no)
        try:
            detections.append(Detection(fields[0].lower(), BoundingBox(left, top, right, bottom), conf))
        except ValueError as exc:
            raise LabelParseError(str(exc), line_no)
    return detections


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


def average_precision(
    detections: Sequence[tuple[Any, Detection]],
    truths_by_frame: Mapping[Any, Sequence[GroundTruth]],
    iou_threshold: float = 0.5,
) -> float:
    """All-points-interpolated average precision for one class.

    ``detections`` are ``(frame_id, Detection)`` pairs in file order;
    ``truths_by_frame`` maps frame ids to that frame's ground truths of
    the same class.  Detections are ranked by confidence (ties broken by
    frame id, then input order) and greedily matched to the highest-IoU
    still-unmatched truth of their frame; a match at IoU >=
    ``iou_threshold`` is a true positive.  AP is the exact area under
    the right-monotonized precision-recall curve.

    Returns NaN when the class has no ground truths (undefined AP,
    excluded from mAP).
    """
    num_truths = sum(len(ts) for ts in truths_by_frame.values())
    if num_truths == 0:
        return math.nan
    order = sorted(
        range(len(detections)),
        key=lambda i: (-detections[i][1].confidence, detections[i][0], i),
    )
    matched: dict[Any, list[bool]] = {
        fid: [False] * len(ts) for fid, ts in truths_by_frame.items()
    }
    hits: list[bool] = []
    for i in order:
        frame_id, det = detections[i]
        truths = truths_by_frame.get(frame_id, ())
        flags = matched.get(frame_id, [])
        best_iou = 0.0
        best_j = -1
        for j, truth in enumerate(truths):
            if flags[j]:
                continue
            value = iou(det.box, truth.box)
            if value > best_iou:
                best_iou = value
                best_j = j
        if best_j >= 0 and best_iou >= iou_threshold:
            flags[best_j] = True
            hits.append(True)
        else:
            hits.append(False)
    if not hits:
        return 0.0

    # Precision-recall over the ranked sequence, envelope from the right.
    n = len(hits)
    precision = [0.0] * n
    recall = [0.0] * n
    tp = 0
    for k in range(n):
        if hits[k]:
            tp += 1
        precision[k] = tp / (k + 1)
        recall[k] = tp / num_truths
    for k in range(n - 2, -1, -1):
        if precision[k + 1] > precision[k]:
            precision[k] = precision[k + 1]
    ap = 0.0
    prev_recall = 0.0
    for k in range(n):
        if recall[k] != prev_recall:
            ap += (recall[k] - prev_recall) * precision[k]
            prev_recall = recall[k]
    return ap


def mean_average_precision(per_class_ap: Mapping[str, float]) -> float:
    """Unweighted mean of the defined (non-NaN) per-class APs."""
    defined = [ap for ap in per_class_ap.values() if not math.isnan(ap)]
    if not defined:
        raise ValueError("mean_average_precision: no class has a defined AP")
    return sum(defined) / len(defined)


def format_class_report(rows: Sequence[tuple[str, float, int, int]]) -> str:
    """Render per-class evaluation rows as CSV: ``class,ap,num_truths,num_dets``."""
    lines = ["class,ap,num_truths,num_dets"]
    for class_name, ap, num_truths, num_dets in rows:
        lines.append(f"{class_name},{ap!r},{num_truths},{num_dets}")
    return "\n".join(lines) + "\n"
