import json

import numpy as np
import pytest
import torch
from PIL import Image

from textcount.model import ModelConfig, init_model


def seeded_rng(seed=0):
    return np.random.default_rng(seed)


def random_image(rng, h, w):
    return rng.integers(0, 256, (h, w, 3), dtype=np.uint8)


@pytest.fixture(scope="session")
def toy_config():
    return ModelConfig.toy()


@pytest.fixture()
def toy_model(toy_config):
    torch.manual_seed(0)
    return init_model(toy_config, seed=0)


def write_image(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)


def build_dataset(root, samples, *, descriptions_name="descriptions.json"):
    """Materialize an FSC-147 style tree under ``root``.

    ``samples`` is a list of dicts with keys: filename, split, class_name,
    description, points, size (h, w).  Returns (root, descriptions_path).
    """
    root.mkdir(parents=True, exist_ok=True)
    annotations, splits, classes, descriptions = {}, {}, {}, {}
    rng = seeded_rng(99)
    for s in samples:
        h, w = s.get("size", (64, 64))
        if "image" in s:
            img = s["image"]
        else:
            img = random_image(rng, h, w)
        write_image(root / "images" / s["filename"], img)
        annotations[s["filename"]] = [list(map(float, p)) for p in s["points"]]
        splits.setdefault(s["split"], []).append(s["filename"])
        classes[s["filename"]] = s["class_name"]
        descriptions[s["filename"]] = s["description"]
    (root / "annotations.json").write_text(json.dumps(annotations))
    (root / "splits.json").write_text(json.dumps(splits))
    (root / "classes.json").write_text(json.dumps(classes))
    desc_path = root / descriptions_name
    desc_path.write_text(json.dumps(descriptions))
    return root, desc_path


def grid_points(n, size, margin=4, seed=0):
    """n dot positions spread over a size x size image."""
    rng = seeded_rng(seed)
    return rng.uniform(margin, size - 1 - margin, (n, 2))


def six_sample_specs(image_size=384):
    """Fixture used by evaluation/CLI/service end-to-end tests: six square
    val images with known counts and distinct classes."""
    counts = [7, 9, 12, 3, 10, 20]
    specs = []
    for i, count in enumerate(counts):
        specs.append({
            "filename": f"val_{i}.png",
            "split": "val",
            "class_name": f"class-{i}",
            "description": f"the type {i} items",
            "points": grid_points(count, image_size, seed=10 + i).tolist(),
            "size": (image_size, image_size),
        })
    return specs, counts
