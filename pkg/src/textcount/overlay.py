"""Density-over-image rendering shared by the CLI, service, and
evaluation galleries."""

from __future__ import annotations

import io

import cv2
import numpy as np
from PIL import Image

from .errors import InputError


def render_overlay(image: np.ndarray, density, alpha: float = 0.6) -> np.ndarray:
    """Colormapped density composited over the image.

    The density is normalized to [0, 1] by its peak, mapped through a jet
    colormap, and blended with a per-pixel opacity proportional to the
    normalized density (peak regions reach ``alpha``; empty regions show
    the untouched image).  Returns uint8 RGB at the image's resolution.
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InputError(f"expected an H x W x 3 image, got shape {img.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise InputError(f"alpha={alpha} outside [0, 1]")
    data = np.asarray(getattr(density, "data", density))
    if data.ndim != 2:
        raise InputError(f"expected a 2-d density, got shape {data.shape}")

    data = data.astype(np.float64)
    if data.shape != img.shape[:2]:
        data = cv2.resize(data, (img.shape[1], img.shape[0]),
                          interpolation=cv2.INTER_LINEAR)
    peak = data.max()
    norm = data / peak if peak > 0 else np.zeros_like(data)

    heat_bgr = cv2.applyColorMap((norm * 255).astype(np.uint8), cv2.COLORMAP_JET)
    heat = cv2.cvtColor(heat_bgr, cv2.COLOR_BGR2RGB).astype(np.float64)
    weight = (alpha * norm)[:, :, None]
    blended = img.astype(np.float64) * (1 - weight) + heat * weight
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def overlay_png_bytes(image: np.ndarray, density, alpha: float = 0.6) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(render_overlay(image, density, alpha)).save(buf, format="PNG")
    return buf.getvalue()


def save_overlay(path, image: np.ndarray, density, alpha: float = 0.6) -> None:
    Image.fromarray(render_overlay(image, density, alpha)).save(path, format="PNG")
