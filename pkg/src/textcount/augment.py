"""Training-time augmentation: photometric/geometric pipeline and mosaicing.

An augmented sample is produced per draw: with probability 3/5 only the
random square crop is applied; otherwise either the staged pipeline (noise,
jitter, blur, affine, flip - each active with probability 3/20, in that
order) or a four-crop mosaic runs.  Geometric stages transform the dot
coordinates with the exact same matrix as the pixels; dots pushed out of
bounds are dropped, photometric stages never touch them.

All randomness flows through a single ``numpy.random.Generator`` so a fixed
seed reproduces the augmented sample bit for bit.  Pass ``trace`` (a list)
to record which stages and branches actually ran.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import ConfigurationError


@dataclass
class TrainSample:
    """A model-ready training triplet; image is a square uint8 RGB array."""
    image: np.ndarray
    points: np.ndarray
    description: str


@dataclass
class SourceSample:
    """An un-cropped sample as loaded from disk."""
    image: np.ndarray
    points: np.ndarray
    description: str


@dataclass
class AugmentConfig:
    p_augment: float = 2 / 5
    p_pipeline_given_augment: float = 3 / 8
    p_mosaic_given_augment: float = 5 / 8
    p_stage: float = 3 / 20
    mosaic_self_threshold: int = 70
    noise_std: float = 0.1
    jitter_brightness: float = 0.25
    jitter_contrast: float = 0.15
    jitter_saturation: float = 0.15
    jitter_hue: float = 0.15
    blur_kernel: tuple[int, int] = (7, 9)
    blur_sigma: tuple[float, float] = (0.1, 2.0)
    rotation_deg: float = 15.0
    scale_range: tuple[float, float] = (0.8, 1.2)
    translate_frac: float = 0.2
    shear_deg: float = 10.0
    flip_p: float = 0.5
    mosaic_seam: int = 32          # total blend width straddling each seam

    def __post_init__(self):
        if abs(self.p_pipeline_given_augment + self.p_mosaic_given_augment - 1.0) > 1e-9:
            raise ConfigurationError("pipeline and mosaic branch probabilities must sum to 1")
        for name in ("p_augment", "p_pipeline_given_augment", "p_mosaic_given_augment",
                     "p_stage", "flip_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("blur_kernel", "blur_sigma", "scale_range"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        d = dict(d)
        for key in ("blur_kernel", "blur_sigma", "scale_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


# -- base crop ---------------------------------------------------------------

def random_square_crop(image: np.ndarray, points: np.ndarray, image_size: int,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Square crop with side min(H, W) at a uniform offset, resized to
    ``image_size``.  Dots inside the window are rescaled, the rest dropped."""
    h, w = image.shape[:2]
    side = min(h, w)
    ox = int(rng.integers(0, w - side + 1))
    oy = int(rng.integers(0, h - side + 1))
    crop = image[oy:oy + side, ox:ox + side]
    if side != image_size:
        crop = cv2.resize(crop, (image_size, image_size), interpolation=cv2.INTER_LINEAR)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    inside = (pts[:, 0] >= ox) & (pts[:, 0] < ox + side) & \
             (pts[:, 1] >= oy) & (pts[:, 1] < oy + side)
    pts = (pts[inside] - [ox, oy]) * (image_size / side)
    pts = np.clip(pts, 0.0, image_size - 1e-6)
    return np.ascontiguousarray(crop), pts


# -- pipeline stages ---------------------------------------------------------

def add_gaussian_noise(img: np.ndarray, rng: np.random.Generator,
                       std: float) -> np.ndarray:
    return np.clip(img + rng.normal(0.0, std, img.shape), 0.0, 1.0).astype(np.float32)


def _gray(img: np.ndarray) -> np.ndarray:
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


def color_jitter(img: np.ndarray, rng: np.random.Generator,
                 cfg: AugmentConfig) -> np.ndarray:
    b = rng.uniform(max(0.0, 1 - cfg.jitter_brightness), 1 + cfg.jitter_brightness)
    c = rng.uniform(max(0.0, 1 - cfg.jitter_contrast), 1 + cfg.jitter_contrast)
    s = rng.uniform(max(0.0, 1 - cfg.jitter_saturation), 1 + cfg.jitter_saturation)
    h = rng.uniform(-cfg.jitter_hue, cfg.jitter_hue)
    img = np.clip(img * b, 0.0, 1.0)
    mean = _gray(img).mean()
    img = np.clip(img * c + mean * (1 - c), 0.0, 1.0)
    gray = _gray(img)[..., None]
    img = np.clip(img * s + gray * (1 - s), 0.0, 1.0).astype(np.float32)
    if h != 0.0:
        hsv = cv2.cvtColor(img, cv2.COLOR_RGB2HSV)
        hsv[..., 0] = (hsv[..., 0] + h * 360.0) % 360.0
        img = np.clip(cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB), 0.0, 1.0)
    return img.astype(np.float32)


def gaussian_blur(img: np.ndarray, rng: np.random.Generator,
                  cfg: AugmentConfig) -> np.ndarray:
    sigma = rng.uniform(*cfg.blur_sigma)
    return cv2.GaussianBlur(img, tuple(cfg.blur_kernel), sigmaX=sigma, sigmaY=sigma)


def build_affine_matrix(angle_deg: float, scale: float, tx: float, ty: float,
                        shear_x_deg: float, shear_y_deg: float, size: int) -> np.ndarray:
    """2x3 forward matrix rotating/scaling/shearing about the image center,
    then translating.  Applied identically to pixels and dot coordinates."""
    theta = math.radians(angle_deg)
    shx = math.tan(math.radians(shear_x_deg))
    shy = math.tan(math.radians(shear_y_deg))
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    shear = np.array([[1.0, shx], [shy, 1.0]])
    lin = scale * rot @ shear
    center = np.array([(size - 1) / 2.0, (size - 1) / 2.0])
    offset = center + np.array([tx, ty]) - lin @ center
    return np.hstack([lin, offset[:, None]])


def apply_affine(img: np.ndarray, points: np.ndarray,
                 matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    size = img.shape[0]
    warped = cv2.warpAffine(img, matrix, (img.shape[1], img.shape[0]),
                            flags=cv2.INTER_LINEAR, borderValue=0)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    moved = pts @ matrix[:, :2].T + matrix[:, 2]
    inside = (moved[:, 0] >= 0) & (moved[:, 0] < img.shape[1]) & \
             (moved[:, 1] >= 0) & (moved[:, 1] < size)
    return warped, moved[inside]


def random_affine(img: np.ndarray, points: np.ndarray, rng: np.random.Generator,
                  cfg: AugmentConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    size = img.shape[0]
    angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)
    scale = rng.uniform(*cfg.scale_range)
    tx = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * img.shape[1]
    ty = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * size
    shear_x = rng.uniform(-cfg.shear_deg, cfg.shear_deg)
    shear_y = rng.uniform(-cfg.shear_deg, cfg.shear_deg)
    matrix = build_affine_matrix(angle, scale, tx, ty, shear_x, shear_y, size)
    warped, moved = apply_affine(img, points, matrix)
    return warped, moved, matrix


def hflip(img: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2).copy()
    pts[:, 0] = (img.shape[1] - 1) - pts[:, 0]
    return np.ascontiguousarray(img[:, ::-1]), pts


def apply_pipeline(sample: TrainSample, cfg: AugmentConfig, rng: np.random.Generator,
                   trace: list | None = None) -> TrainSample:
    """Run the staged pipeline; each stage activates independently with
    probability ``cfg.p_stage`` in the fixed order noise, jitter, blur,
    affine, flip."""
    img = sample.image.astype(np.float32) / 255.0
    pts = np.asarray(sample.points, dtype=np.float64).reshape(-1, 2)

    if rng.random() < cfg.p_stage:
        img = add_gaussian_noise(img, rng, cfg.noise_std)
        _note(trace, "noise", None)
    if rng.random() < cfg.p_stage:
        img = color_jitter(img, rng, cfg)
        _note(trace, "jitter", None)
    if rng.random() < cfg.p_stage:
        img = gaussian_blur(img, rng, cfg)
        _note(trace, "blur", None)
    if rng.random() < cfg.p_stage:
        img, pts, matrix = random_affine(img, pts, rng, cfg)
        _note(trace, "affine", matrix)
    if rng.random() < cfg.p_stage:
        flipped = rng.random() < cfg.flip_p
        if flipped:
            img, pts = hflip(img, pts)
        _note(trace, "flip", flipped)

    out = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return TrainSample(out, pts, sample.description)


# -- mosaicing ---------------------------------------------------------------

def mosaic4(samples: list[TrainSample], prompt_index: int, cfg: AugmentConfig,
            rng: np.random.Generator, trace: list | None = None) -> TrainSample:
    """Compose four random half-size crops into a 2x2 mosaic.

    Each quadrant owns an exclusive half-size core whose dots are kept only
    when that quadrant's source description matches the prompt; pixels near
    the seams blend linearly over ``cfg.mosaic_seam`` columns/rows.
    """
    if len(samples) != 4:
        raise ConfigurationError(f"mosaic needs exactly 4 sources, got {len(samples)}")
    size = samples[0].image.shape[0]
    if size % 2:
        raise ConfigurationError(f"mosaic needs an even image size, got {size}")
    if any(s.image.shape[:2] != (size, size) for s in samples):
        raise ConfigurationError("mosaic sources must share one square size")
    half = size // 2
    prompt = samples[prompt_index].description
    ext = min(cfg.mosaic_seam // 2, half)

    acc = np.zeros((size, size, 3), dtype=np.float64)
    weight = np.zeros((size, size), dtype=np.float64)
    kept: list[np.ndarray] = []
    crops: list[tuple[int, int]] = []

    for (qx, qy), smp in zip(((0, 0), (half, 0), (0, half), (half, half)), samples):
        cx = int(rng.integers(0, size - half + 1))
        cy = int(rng.integers(0, size - half + 1))
        crops.append((cx, cy))
        if smp.description == prompt:
            pts = np.asarray(smp.points, dtype=np.float64).reshape(-1, 2)
            inside = (pts[:, 0] >= cx) & (pts[:, 0] < cx + half) & \
                     (pts[:, 1] >= cy) & (pts[:, 1] < cy + half)
            kept.append(pts[inside] - [cx, cy] + [qx, qy])
        # extensions reach only toward interior seams, clamped to the source
        ext_l = min(ext if qx > 0 else 0, cx)
        ext_r = min(ext if qx + half < size else 0, size - (cx + half))
        ext_t = min(ext if qy > 0 else 0, cy)
        ext_b = min(ext if qy + half < size else 0, size - (cy + half))
        src = smp.image[cy - ext_t: cy + half + ext_b,
                        cx - ext_l: cx + half + ext_r].astype(np.float64)
        wx = _seam_profile(half, ext_l, ext_r, ext)
        wy = _seam_profile(half, ext_t, ext_b, ext)
        w = np.outer(wy, wx)
        y0, x0 = qy - ext_t, qx - ext_l
        acc[y0:y0 + src.shape[0], x0:x0 + src.shape[1]] += src * w[:, :, None]
        weight[y0:y0 + src.shape[0], x0:x0 + src.shape[1]] += w

    _note(trace, "mosaic_crops", crops)
    image = np.clip(np.rint(acc / weight[:, :, None]), 0, 255).astype(np.uint8)
    points = np.concatenate(kept) if kept else np.zeros((0, 2))
    return TrainSample(image, points, prompt)


def _seam_profile(core: int, ext_lo: int, ext_hi: int, ext: int) -> np.ndarray:
    """[ascending ramp | ones(core) | descending ramp]; ramps run 1 -> 0
    across the seam so adjacent quadrants cross-fade linearly."""
    lo = np.array([1.0 - j / (ext + 1) for j in range(ext_lo, 0, -1)])
    hi = np.array([1.0 - j / (ext + 1) for j in range(1, ext_hi + 1)])
    return np.concatenate([lo, np.ones(core), hi])


# -- top-level draw ----------------------------------------------------------

def augment_sample(sample: SourceSample, dataset, cfg: AugmentConfig,
                   image_size: int, rng: np.random.Generator,
                   pivot_index: int | None = None,
                   trace: list | None = None) -> TrainSample:
    """One training draw.

    With probability 3/5 only the square crop runs; otherwise the pipeline
    (3/8) or mosaicing (5/8).  A mosaic reuses four crops of the same image
    when the source holds at least ``cfg.mosaic_self_threshold`` objects,
    else partners are drawn uniformly without replacement from ``dataset``
    (any indexable of objects with image/points/description), keeping the
    current sample's description as the prompt.
    """
    img, pts = random_square_crop(sample.image, sample.points, image_size, rng)
    base = TrainSample(img, pts, sample.description)
    if rng.random() >= cfg.p_augment:
        _note(trace, "augment", False)
        return base
    _note(trace, "augment", True)

    if rng.random() < cfg.p_pipeline_given_augment:
        _note(trace, "branch", "pipeline")
        return apply_pipeline(base, cfg, rng, trace)

    _note(trace, "branch", "mosaic")
    if len(sample.points) >= cfg.mosaic_self_threshold:
        _note(trace, "mosaic_self", True)
        sources = [base] * 4
    else:
        _note(trace, "mosaic_self", False)
        candidates = [i for i in range(len(dataset)) if i != pivot_index]
        replace = len(candidates) < 3
        chosen = rng.choice(len(candidates), size=3, replace=replace)
        sources = [base]
        for idx in chosen:
            partner = dataset[candidates[int(idx)]]
            pimg, ppts = random_square_crop(partner.image, partner.points, image_size, rng)
            sources.append(TrainSample(pimg, ppts, partner.description))
    return mosaic4(sources, 0, cfg, rng, trace)


def _note(trace: list | None, name: str, payload) -> None:
    if trace is not None:
        trace.append((name, payload))
