"""Edge-offloaded object detection with saliency-driven frame compression.

A vehicle-side client scores each camera frame with a spectral-residual
saliency map, discards the least-salient pixels when the radio link is
weak, and ships the rest to an edge server for detection.  The package
bundles the image pipeline, the link/latency model, a Monte Carlo
simulator, a ground-truth-driven stand-in detector with AP/mAP scoring,
and a TCP wire protocol, all behind one ``eodf`` command.
"""

from .channel import (
    CQI_EFFICIENCY,
    ChannelModel,
    Decision,
    LinkConfig,
    decide,
    sample_trace,
    splitmix64,
    throughput,
)
from .detector import (
    BoundingBox,
    Detection,
    GroundTruth,
    LabelParseError,
    OracleParams,
    average_precision,
    iou,
    mean_average_precision,
    oracle_detect,
    parse_kitti_labels,
)
from .imageio import (
    Image,
    ImageFormatError,
    Mask,
    parse_image,
    read_image,
    resize_bilinear,
    serialize_image,
    to_grayscale,
    upsample_mask_nearest,
    write_image,
)
from .latency import FrameOutcome, LatencyParams, frame_latency, outage_probability
from .saliency import (
    MaskedImage,
    SaliencyMap,
    binarize,
    compress,
    compute_saliency,
    srvs_compress,
    threshold_for_ratio,
)
from .sim import SimConfig, SweepRow, evaluate_accuracy, run_sim, sweep

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "CQI_EFFICIENCY",
    "ChannelModel",
    "Decision",
    "Detection",
    "FrameOutcome",
    "GroundTruth",
    "Image",
    "ImageFormatError",
    "LabelParseError",
    "LatencyParams",
    "LinkConfig",
    "Mask",
    "MaskedImage",
    "OracleParams",
    "SaliencyMap",
    "SimConfig",
    "SweepRow",
    "average_precision",
    "binarize",
    "compress",
    "compute_saliency",
    "decide",
    "evaluate_accuracy",
    "frame_latency",
    "iou",
    "mean_average_precision",
    "oracle_detect",
    "outage_probability",
    "parse_image",
    "parse_kitti_labels",
    "read_image",
    "resize_bilinear",
    "run_sim",
    "sample_trace",
    "serialize_image",
    "splitmix64",
    "srvs_compress",
    "sweep",
    "threshold_for_ratio",
    "throughput",
    "to_grayscale",
    "upsample_mask_nearest",
    "write_image",
    "__version__",
]
