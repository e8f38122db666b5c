"""FSC-147 style dataset loading, density targets, and integrity checks.

Expected on-disk layout (all names overridable):

    <root>/images/            one RGB file per sample
    <root>/annotations.json   {"<filename>": [[x, y], ...]} dot centers
    <root>/splits.json        {"train": [...], "val": [...], "test": [...]}
    <root>/classes.json       {"<filename>": "<class name>"}

Descriptions live in a separate JSON file mapping filename to the answer a
person would give to "what object should be counted?".  Adapters accept the
published variants: annotation values wrapped as {"points": [...]}, class
maps as tab-separated ``.txt``, and description values wrapped in an object.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DatasetError, InputError

# counts below this are atypical for FSC-147 sources and get flagged
FSC147_MIN_COUNT = 7


@dataclass
class SampleRecord:
    filename: str
    image_path: Path
    points: np.ndarray          # (N, 2) float64, (x, y) in source pixels
    description: str
    class_name: str

    @property
    def count(self) -> int:
        return len(self.points)

    def load_image(self) -> np.ndarray:
        with Image.open(self.image_path) as img:
            return np.asarray(img.convert("RGB"))


@dataclass
class DatasetIndex:
    root: Path
    splits: dict[str, list[SampleRecord]]

    def split(self, name: str) -> list[SampleRecord]:
        if name not in self.splits:
            raise DatasetError(f"unknown split {name!r}; have {sorted(self.splits)}")
        return self.splits[name]

    def __len__(self) -> int:
        return sum(len(v) for v in self.splits.values())


@dataclass
class DensityTarget:
    """Dense ground truth whose sum equals the dot count."""
    data: np.ndarray
    count: int


def load_descriptions(path) -> dict[str, str]:
    """Load the filename -> description map, rejecting duplicates and blanks."""
    path = Path(path)
    duplicates: list[str] = []

    def _pairs_hook(pairs):
        seen = set()
        for key, _ in pairs:
            if key in seen:
                duplicates.append(key)
            seen.add(key)
        return dict(pairs)

    try:
        raw = json.loads(path.read_text(encoding="utf-8"), object_pairs_hook=_pairs_hook)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read descriptions file {path}: {exc}") from exc
    if duplicates:
        raise DatasetError("duplicate description keys", [f"duplicate key {k!r}" for k in duplicates])
    if not isinstance(raw, dict):
        raise DatasetError(f"descriptions file {path} must be a JSON object")

    out: dict[str, str] = {}
    violations: list[str] = []
    for key, value in raw.items():
        if isinstance(value, dict):        # adapter for wrapped schemas
            value = value.get("text", value.get("description"))
        if not isinstance(value, str) or not value.strip():
            violations.append(f"{key}: empty or non-string description")
            continue
        out[key] = value.strip()
    if violations:
        raise DatasetError("invalid descriptions", violations)
    return out


def _load_points_file(path: Path) -> dict[str, np.ndarray]:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read annotation file {path}: {exc}") from exc
    out = {}
    for name, value in raw.items():
        if isinstance(value, dict):        # adapter for {"points": [...], ...}
            value = value.get("points", [])
        pts = np.asarray(value, dtype=np.float64)
        if pts.size == 0:
            pts = np.zeros((0, 2), dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DatasetError(f"annotation for {name} is not a list of [x, y] points")
        out[name] = pts
    return out


def _load_class_map(path: Path) -> dict[str, str]:
    if path.suffix == ".txt":
        out = {}
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            name, _, cls = line.partition("\t")
            out[name.strip()] = cls.strip()
        return out
    try:
        return {k: str(v) for k, v in json.loads(path.read_text(encoding="utf-8")).items()}
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read class file {path}: {exc}") from exc


def load_fsc147(root, descriptions_path, *, images_dir="images",
                annotation_file="annotations.json", split_file="splits.json",
                class_file="classes.json") -> DatasetIndex:
    """Build a validated index over an FSC-147 style tree.

    Fails with a :class:`DatasetError` listing every offender when images,
    annotations, classes, or descriptions are missing, or when the class
    sets of the splits overlap.
    """
    root = Path(root)
    images = root / images_dir
    points_by_name = _load_points_file(root / annotation_file)
    class_by_name = _load_class_map(root / class_file)
    descriptions = load_descriptions(descriptions_path)
    try:
        split_names = json.loads((root / split_file).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read split file {root / split_file}: {exc}") from exc

    violations: list[str] = []
    splits: dict[str, list[SampleRecord]] = {}
    for split, names in split_names.items():
        records = []
        for name in names:
            image_path = images / name
            problems = []
            if not image_path.exists():
                problems.append("image file missing")
            if name not in points_by_name:
                problems.append("no dot annotation")
            if name not in class_by_name:
                problems.append("no class name")
            if name not in descriptions:
                problems.append("no description")
            if problems:
                violations.append(f"{split}/{name}: " + ", ".join(problems))
                continue
            records.append(SampleRecord(
                filename=name,
                image_path=image_path,
                points=points_by_name[name],
                description=descriptions[name],
                class_name=class_by_name[name],
            ))
        splits[split] = records

    class_sets = {s: {r.class_name for r in recs} for s, recs in splits.items()}
    names_sorted = sorted(class_sets)
    for i, a in enumerate(names_sorted):
        for b in names_sorted[i + 1:]:
            shared = class_sets[a] & class_sets[b]
            for cls in sorted(shared):
                violations.append(f"class {cls!r} appears in both {a!r} and {b!r} splits")
    if violations:
        raise DatasetError("dataset failed validation", violations)
    return DatasetIndex(root=root, splits=splits)


def scale_dots(points: np.ndarray, from_size: tuple[int, int],
               to_size: tuple[int, int]) -> np.ndarray:
    """Rescale (x, y) dot coordinates between image sizes.

    Sizes are (width, height).  Coordinates are scaled by the axis ratios,
    rounded to the nearest pixel, and clamped into bounds; the dot count is
    preserved.
    """
    fw, fh = from_size
    tw, th = to_size
    if min(fw, fh, tw, th) <= 0:
        raise InputError("sizes must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2).copy()
    pts[:, 0] *= tw / fw
    pts[:, 1] *= th / fh
    pts = np.rint(pts)
    pts[:, 0] = np.clip(pts[:, 0], 0, tw - 1)
    pts[:, 1] = np.clip(pts[:, 1], 0, th - 1)
    return pts


def build_density_target(points: np.ndarray, src_size: tuple[int, int],
                         out_size: tuple[int, int], sigma: float = 1.0,
                         radius: int = 4) -> DensityTarget:
    """Gaussian-splat dot centers into a density map that sums to the count.

    Each dot contributes a truncated Gaussian (given ``sigma`` and square
    ``radius``) renormalized to unit mass over the in-bounds part of its
    window, so mass is conserved even at borders.  Dots are first rescaled
    from ``src_size`` to ``out_size`` (both (width, height)).
    """
    sw, sh = src_size
    ow, oh = out_size
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    out_of_bounds = [
        f"dot ({x:g}, {y:g}) outside source bounds {sw}x{sh}"
        for x, y in pts if not (0 <= x < sw and 0 <= y < sh)
    ]
    if out_of_bounds:
        raise DatasetError("dots outside image", out_of_bounds)

    density = np.zeros((oh, ow), dtype=np.float64)
    if len(pts) == 0:
        return DensityTarget(density, 0)

    scaled = scale_dots(pts, src_size, out_size)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel_1d = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(kernel_1d, kernel_1d)        # (2r+1, 2r+1), unnormalized

    for x, y in scaled:
        ix, iy = int(x), int(y)
        x0, x1 = max(ix - radius, 0), min(ix + radius, ow - 1)
        y0, y1 = max(iy - radius, 0), min(iy + radius, oh - 1)
        patch = kernel[y0 - iy + radius: y1 - iy + radius + 1,
                       x0 - ix + radius: x1 - ix + radius + 1]
        density[y0:y1 + 1, x0:x1 + 1] += patch / patch.sum()
    return DensityTarget(density, len(pts))


@dataclass
class DatasetReport:
    """Integrity and statistics report; violations never raise here."""
    split_stats: dict[str, dict] = field(default_factory=dict)
    description_word_hist: dict[int, int] = field(default_factory=dict)
    the_prefix_fraction: float = 0.0
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "split_stats": self.split_stats,
            "description_word_hist": self.description_word_hist,
            "the_prefix_fraction": self.the_prefix_fraction,
            "violations": self.violations,
            "ok": self.ok,
        }


def validate_dataset(index: DatasetIndex, min_count: int = FSC147_MIN_COUNT) -> DatasetReport:
    """Per-split statistics plus a list of invariant violations.

    Checks dot bounds against the actual image dimensions, flags counts
    below ``min_count``, and summarizes count and description-length
    distributions.
    """
    report = DatasetReport()
    word_hist: Counter[int] = Counter()
    the_prefix = 0
    total = 0
    for split, records in index.splits.items():
        counts = []
        for rec in records:
            counts.append(rec.count)
            total += 1
            words = len(rec.description.split())
            word_hist[words] += 1
            if rec.description.lower().startswith("the "):
                the_prefix += 1
            if rec.count < min_count:
                report.violations.append(
                    f"{split}/{rec.filename}: count {rec.count} below minimum {min_count}"
                )
            try:
                with Image.open(rec.image_path) as img:
                    w, h = img.size
            except OSError:
                report.violations.append(f"{split}/{rec.filename}: unreadable image")
                continue
            bad = [(x, y) for x, y in rec.points if not (0 <= x < w and 0 <= y < h)]
            if bad:
                report.violations.append(
                    f"{split}/{rec.filename}: {len(bad)} dots outside {w}x{h} image, "
                    f"first at ({bad[0][0]:g}, {bad[0][1]:g})"
                )
        arr = np.asarray(counts) if counts else np.zeros(0)
        report.split_stats[split] = {
            "samples": len(records),
            "classes": len({r.class_name for r in records}),
            "count_min": int(arr.min()) if arr.size else 0,
            "count_max": int(arr.max()) if arr.size else 0,
            "count_mean": float(arr.mean()) if arr.size else 0.0,
        }
    report.description_word_hist = {k: word_hist[k] for k in sorted(word_hist)}
    report.the_prefix_fraction = the_prefix / total if total else 0.0
    return report
