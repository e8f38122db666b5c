"""Sliding-window inference over arbitrarily sized images.

The input is resized to a working height (default 384) preserving aspect
ratio, square windows (side 384, stride 128 by default) are scanned across
it with the final window placed flush against the edge, every window is
resized to the model's input size and pushed through the network, and the
per-window densities are mapped back onto their footprints and averaged
per pixel over the covering windows.  The text prompt is encoded exactly
once per prediction.  Images taller than the window side are tiled
vertically with the same plan logic.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
import torch

from .errors import InputError
from .model import DensityMap


@dataclass
class InferenceSettings:
    working_height: int = 384
    window_side: int = 384
    stride: int = 128

    def __post_init__(self):
        if self.working_height < 1 or self.window_side < 1 or self.stride < 1:
            raise InputError("inference geometry values must be positive")


@dataclass
class WindowPlan:
    """Horizontal scan positions over a resized image."""
    resized_height: int
    side: int
    stride: int
    offsets: list[int]

    @property
    def resized_width(self) -> int:
        return self.offsets[-1] + self.side


@dataclass
class CountResult:
    count: float
    density: DensityMap
    window_counts: list[float]
    prompt: str
    plan: WindowPlan | None = None


def plan_windows(resized_width: int, side: int, stride: int = 128,
                 resized_height: int | None = None) -> WindowPlan:
    """Offsets 0, stride, 2*stride, ...; when the regular grid stops short
    of the right edge a final window is placed flush at width - side."""
    if stride <= 0:
        raise InputError(f"stride must be positive, got {stride}")
    if side > resized_width:
        raise InputError(
            f"window side {side} exceeds image extent {resized_width}; "
            "resize or shrink the window first")
    offsets = [0]
    while offsets[-1] + side < resized_width:
        nxt = offsets[-1] + stride
        if nxt + side >= resized_width:
            offsets.append(resized_width - side)
            break
        offsets.append(nxt)
    return WindowPlan(resized_height=side if resized_height is None else resized_height,
                      side=side, stride=stride, offsets=offsets)


def stitch_boxes(densities: list[np.ndarray], boxes: list[tuple[int, int, int, int]],
                 shape: tuple[int, int]) -> np.ndarray:
    """Average overlapping window densities per pixel.  ``boxes`` holds
    (x, y, width, height) footprints matching each density's shape."""
    if len(densities) != len(boxes):
        raise InputError(
            f"{len(densities)} densities for {len(boxes)} planned windows")
    acc = np.zeros(shape, dtype=np.float64)
    cover = np.zeros(shape, dtype=np.float64)
    for d, (x, y, w, h) in zip(densities, boxes):
        d = np.asarray(d, dtype=np.float64)
        if d.shape != (h, w):
            raise InputError(f"density shape {d.shape} does not cover box {(h, w)}")
        acc[y:y + h, x:x + w] += d
        cover[y:y + h, x:x + w] += 1.0
    if (cover == 0).any():
        raise InputError("window plan leaves pixels uncovered")
    return acc / cover


def stitch_average(window_densities: list[np.ndarray], plan: WindowPlan) -> DensityMap:
    """Stitch horizontally planned windows; densities are (height, side)."""
    if len(window_densities) != len(plan.offsets):
        raise InputError(
            f"{len(window_densities)} densities for {len(plan.offsets)} offsets")
    boxes = [(off, 0, plan.side, plan.resized_height) for off in plan.offsets]
    stitched = stitch_boxes(list(window_densities), boxes,
                            (plan.resized_height, plan.resized_width))
    return DensityMap(stitched, scale=1.0)


def resample_density(density: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with sum-preserving rescaling, so a window's count
    survives the mapping onto its footprint."""
    density = np.asarray(density, dtype=np.float64)
    target_h, target_w = size
    if density.shape == (target_h, target_w):
        return density
    resized = cv2.resize(density, (target_w, target_h),
                         interpolation=cv2.INTER_LINEAR)
    total, new_total = density.sum(), resized.sum()
    if new_total > 0:
        resized = resized * (total / new_total)
    return resized


def _check_image(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError(f"expected an H x W x 3 RGB image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise InputError(f"expected uint8 pixels, got {arr.dtype}")
    return arr


def predict(model, image, description: str,
            settings: InferenceSettings | None = None) -> CountResult:
    """Full-image density prediction and count for one text prompt."""
    settings = settings or InferenceSettings()
    image = _check_image(image)
    if not isinstance(description, str) or not description.strip():
        raise InputError("description must be a non-empty string")

    h, w = image.shape[:2]
    work_h = settings.working_height
    work_w = max(1, round(w * work_h / h))
    if (work_h, work_w) != (h, w):
        resized = cv2.resize(image, (work_w, work_h), interpolation=cv2.INTER_LINEAR)
    else:
        resized = image

    side_x = min(settings.window_side, work_w)
    side_y = min(settings.window_side, work_h)
    plan_x = plan_windows(work_w, side_x, settings.stride, resized_height=work_h)
    plan_y = plan_windows(work_h, side_y, settings.stride, resized_height=work_h)

    tokens = model.tokenize([description])
    with torch.no_grad():
        text = model.encode_text(tokens)

    model_size = model.config.image_size
    densities, boxes, window_counts = [], [], []
    for oy in plan_y.offsets:
        for ox in plan_x.offsets:
            crop = resized[oy:oy + side_y, ox:ox + side_x]
            if crop.shape[:2] != (model_size, model_size):
                crop = cv2.resize(crop, (model_size, model_size),
                                  interpolation=cv2.INTER_LINEAR)
            with torch.no_grad():
                image_t = model.preprocess(crop[None])
                patches = model.encode_image(image_t)
                fused = model.interact(patches, text)
                out = model.decode_density(fused)
            window = out[0].detach().cpu().numpy().astype(np.float64)
            window_counts.append(float(window.sum() / model.density_scale))
            densities.append(resample_density(window, (side_y, side_x)))
            boxes.append((ox, oy, side_x, side_y))

    stitched = stitch_boxes(densities, boxes, (work_h, work_w))
    density = DensityMap(stitched, scale=model.density_scale)
    return CountResult(count=density.count, density=density,
                       window_counts=window_counts, prompt=description,
                       plan=plan_x)


def compose_horizontal(image_a, image_b) -> np.ndarray:
    """Concatenate two images side by side, resizing the second to the
    first's height while preserving its aspect ratio."""
    a = _check_image(image_a)
    b = _check_image(image_b)
    if b.shape[0] != a.shape[0]:
        new_w = max(1, round(b.shape[1] * a.shape[0] / b.shape[0]))
        b = cv2.resize(b, (new_w, a.shape[0]), interpolation=cv2.INTER_LINEAR)
    return np.concatenate([a, b], axis=1)


def composite_predict(model, image_a, image_b, descriptions: list[str],
                      settings: InferenceSettings | None = None) -> list[CountResult]:
    """Stitch two images horizontally and run one prediction per prompt on
    the composite."""
    composite = compose_horizontal(image_a, image_b)
    return [predict(model, composite, text, settings=settings)
            for text in descriptions]
