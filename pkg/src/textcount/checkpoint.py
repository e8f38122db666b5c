"""Checkpoint archives.

A checkpoint is a plain zip file with three members:

* ``config.json``   - every model config field plus a ``model_class`` tag
* ``metadata.json`` - epoch, validation MAE, rng seed, free-form extras
* ``weights.npz``   - named parameter arrays (bit-exact round trip)

The ``model_class`` tag dispatches loading: ``count_model`` rebuilds the
full network, ``uniform_stub`` rebuilds the deterministic stub used to
exercise the CLI/service pipeline end to end.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError, ConfigurationError
from .model import CountModel, ModelConfig

FORMAT_VERSION = 1


def save_checkpoint(model, path, metadata: dict | None = None) -> None:
    """Write ``model`` to ``path``; see the module docstring for the layout."""
    path = Path(path)
    metadata = dict(metadata or {})
    metadata.setdefault("format_version", FORMAT_VERSION)

    if isinstance(model, CountModel):
        config = model.config.to_dict()
        config["model_class"] = "count_model"
        arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    elif hasattr(model, "checkpoint_payload"):        # stub models
        config, arrays = model.checkpoint_payload()
    else:
        raise CheckpointError(f"cannot checkpoint object of type {type(model).__name__}")

    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        zf.writestr("config.json", json.dumps(config, indent=2))
        zf.writestr("metadata.json", json.dumps(metadata, indent=2))
        zf.writestr("weights.npz", buf.getvalue())


def read_checkpoint_info(path) -> tuple[dict, dict]:
    """Return (config dict, metadata dict) without instantiating a model."""
    try:
        with zipfile.ZipFile(path) as zf:
            config = json.loads(zf.read("config.json"))
            metadata = json.loads(zf.read("metadata.json"))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, OSError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    return config, metadata


def load_checkpoint(path, config: ModelConfig | None = None, tokenizer=None):
    """Rebuild the model stored at ``path``.

    When ``config`` is given it must equal the stored config; a mismatch is
    a :class:`ConfigurationError`.  Returns the model; stored metadata is
    attached as ``model.checkpoint_metadata``.
    """
    stored_config, metadata = read_checkpoint_info(path)
    try:
        with zipfile.ZipFile(path) as zf:
            with zf.open("weights.npz") as fh:
                npz = np.load(io.BytesIO(fh.read()))
                arrays = {k: npz[k] for k in npz.files}
    except (zipfile.BadZipFile, KeyError, OSError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc

    model_class = stored_config.pop("model_class", "count_model")
    if model_class == "uniform_stub":
        from .stub import UniformStubModel
        model = UniformStubModel.from_checkpoint_payload(stored_config, arrays)
        model.checkpoint_metadata = metadata
        return model
    if model_class != "count_model":
        raise CheckpointError(f"unknown model_class {model_class!r} in {path}")

    try:
        loaded_config = ModelConfig.from_dict(stored_config)
    except (TypeError, ConfigurationError) as exc:
        raise CheckpointError(f"invalid stored config in {path}: {exc}") from exc
    if config is not None and config != loaded_config:
        diffs = [
            f"{f}: given {getattr(config, f)} vs stored {getattr(loaded_config, f)}"
            for f in (x.name for x in loaded_config.__dataclass_fields__.values())
            if getattr(config, f) != getattr(loaded_config, f)
        ]
        raise ConfigurationError("checkpoint config mismatch: " + "; ".join(diffs))

    model = CountModel(loaded_config, tokenizer=tokenizer)
    state = {}
    expected = model.state_dict()
    missing = [k for k in expected if k not in arrays]
    extra = [k for k in arrays if k not in expected]
    if missing or extra:
        raise CheckpointError(
            f"parameter set mismatch in {path}: missing {missing[:3]}, extra {extra[:3]}"
        )
    for k, arr in arrays.items():
        if tuple(arr.shape) != tuple(expected[k].shape):
            raise CheckpointError(
                f"shape mismatch for {k}: stored {arr.shape} vs model {tuple(expected[k].shape)}"
            )
        state[k] = torch.from_numpy(arr)
    model.load_state_dict(state)
    model.set_component_trainable("text_encoder", False)
    model.eval()
    model.checkpoint_metadata = metadata
    return model
