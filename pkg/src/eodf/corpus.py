"""Synthetic street-scene corpus generator for demos and evaluation.

Frames look like a dashboard camera view: a smooth sky gradient over a
grainy road band, with a few high-contrast vehicle-like blocks whose
ground-truth boxes are written as KITTI label files next to each image.
Box corners are kept integral so their coordinates survive a
single-precision wire round trip without rounding.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .channel import splitmix64
from .detector import KITTI_CLASSES
from .imageio import Image, write_image

log = logging.getLogger(__name__)

__all__ = ["make_corpus", "make_frame"]

# Body intensity per class, so classes are visually distinguishable.
_BODY_LEVEL = {"car": 235, "van": 210, "truck": 246, "tram": 222}


def _paint_object(pixels: np.ndarray, left: int, top: int, w: int, h: int, level: int) -> None:
    """Bright block with a dark border and an internal dark grid."""
    body = pixels[top:top + h, left:left + w]
    body[:] = level
    body[:3, :] = 20
    body[-3:, :] = 20
    body[:, :3] = 20
    body[:, -3:] = 20
    for gx in range(24, w - 4, 24):
        body[:, gx:gx + 4] = 35
    for gy in range(22, h - 4, 22):
        body[gy:gy + 3, :] = 35


def make_frame(
    frame_index: int,
    width: int = 1242,
    height: int = 375,
    channels: int = 3,
    seed: int = 2024,
) -> tuple[Image, str]:
    """One synthetic frame plus its KITTI label text.

    Deterministic in (seed, frame_index) alone, so frames can be
    generated in any order.
    """
    if width < 320 or height < 160:
        raise ValueError("frames must be at least 320x160 to fit objects")
    rng = np.random.default_rng(splitmix64(seed, frame_index))
    gray = np.empty((height, width), dtype=np.uint8)

    sky_h = int(height * 0.35)
    sky_column = np.linspace(215.0, 185.0, sky_h)
    gray[:sky_h] = np.round(sky_column)[:, None].astype(np.uint8)

    road = rng.integers(78, 115, size=(height - sky_h, width))
    gray[sky_h:] = road.astype(np.uint8)

    num_objects = int(rng.integers(2, 5))
    labels = []
    for j in range(num_objects):
        class_name = KITTI_CLASSES[(frame_index + j) % len(KITTI_CLASSES)]
        max_w = min(221, width // 4)
        # Keep a sane sampling range at the minimum frame width, where
        # width // 4 collides with the usual 80-pixel lower bound.
        w = int(rng.integers(min(80, max_w - 16), max_w))
        h = int(rng.integers(50, min(131, height - sky_h - 12)))
        left = int(rng.integers(0, width - w))
        top = int(rng.integers(sky_h + 4, height - h - 4))
        _paint_object(gray, left, top, w, h, _BODY_LEVEL[class_name])
        labels.append(
            f"{class_name.capitalize()} 0.00 0 0.00 "
            f"{float(left):.2f} {float(top):.2f} {float(left + w):.2f} {float(top + h):.2f} "
            f"1.50 1.60 3.80 0.00 1.50 20.00 0.00"
        )

    if channels == 1:
        pixels = gray[:, :, None]
    else:
        pixels = np.repeat(gray[:, :, None], 3, axis=2).astype(np.int16)
        # Mild fixed tint keeps color channels distinct without moving texture.
        pixels[:sky_h, :, 2] = np.minimum(pixels[:sky_h, :, 2] + 12, 255)
        pixels[sky_h:, :, 0] = np.maximum(pixels[sky_h:, :, 0] - 6, 0)
        pixels = pixels.astype(np.uint8)
    return Image(pixels), "\n".join(labels) + "\n"


def make_corpus(
    out_dir: str | Path,
    frames: int = 60,
    width: int = 1242,
    height: int = 375,
    channels: int = 3,
    seed: int = 2024,
) -> list[Path]:
    """Write ``frames`` image/label pairs under ``out_dir``; returns image paths."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    suffix = ".pgm" if channels == 1 else ".ppm"
    paths = []
    for i in range(frames):
        image, labels = make_frame(i, width, height, channels, seed)
        image_path = root / f"{i:06d}{suffix}"
        write_image(image, image_path)
        image_path.with_suffix(".txt").write_text(labels, encoding="utf-8")
        paths.append(image_path)
    log.info("wrote %d frames (%dx%d, %d channel%s) under %s",
             frames, width, height, channels, "s" if channels != 1 else "", root)
    return paths
