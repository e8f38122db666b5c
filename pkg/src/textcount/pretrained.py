"""Ingestion of public joint vision-language (CLIP) weight releases.

The encoder towers in :class:`textcount.model.CountModel` use the same
submodule layout as the open-source CLIP reference, so the name mapping is
a pure prefix rewrite:

====================================  ====================================
released name                          internal name
====================================  ====================================
``visual.<rest>``                      ``image_encoder.<rest>``
``transformer.resblocks.<i>.<rest>``   ``text_encoder.transformer.resblocks.<i>.<rest>``
``token_embedding.weight``             ``text_encoder.token_embedding.weight``
``positional_embedding``               ``text_encoder.positional_embedding``
``ln_final.{weight,bias}``             ``text_encoder.ln_final.{weight,bias}``
``text_projection``                    ``text_encoder.text_projection``
====================================  ====================================

Releases that nest the text tower under a ``text.`` prefix are handled by
stripping that prefix first.  ``logit_scale`` and any other contrastive-head
entries are ignored; interaction and decoder weights are never sourced from
a release.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .errors import ConfigurationError

_IGNORED_KEYS = {"logit_scale", "input_resolution", "context_length", "vocab_size"}


def remap_clip_keys(state_dict: dict) -> dict[str, torch.Tensor]:
    """Rewrite released parameter names to internal encoder names."""
    remapped: dict[str, torch.Tensor] = {}
    for key, value in state_dict.items():
        if key in _IGNORED_KEYS or key.startswith("logit_"):
            continue
        if key.startswith("module."):
            key = key[len("module."):]
        if key.startswith("visual."):
            remapped["image_encoder." + key[len("visual."):]] = value
            continue
        if key.startswith("text."):
            key = key[len("text."):]
        remapped["text_encoder." + key] = value
    return remapped


def load_pretrained_clip(model, source) -> None:
    """Copy encoder weights from ``source`` (path or state dict) into ``model``.

    Raises :class:`ConfigurationError` when shapes disagree with the model
    config or when encoder parameters are missing from the release.
    """
    if isinstance(source, (str, Path)):
        payload = torch.load(source, map_location="cpu", weights_only=False)
        if hasattr(payload, "state_dict"):
            payload = payload.state_dict()
        if isinstance(payload, dict) and "state_dict" in payload:
            payload = payload["state_dict"]
        source = payload
    remapped = remap_clip_keys(source)

    own = model.state_dict()
    encoder_keys = [k for k in own if k.startswith(("image_encoder.", "text_encoder."))]
    missing = [k for k in encoder_keys if k not in remapped]
    if missing:
        raise ConfigurationError(
            f"pretrained source lacks {len(missing)} encoder parameters, "
            f"e.g. {missing[:3]}"
        )
    mismatched = [
        f"{k}: source {tuple(remapped[k].shape)} vs model {tuple(own[k].shape)}"
        for k in encoder_keys if tuple(remapped[k].shape) != tuple(own[k].shape)
    ]
    if mismatched:
        raise ConfigurationError(
            "pretrained weight shapes do not match the model config:\n  "
            + "\n  ".join(mismatched[:5])
        )
    # state_dict tensors share storage with the model parameters
    with torch.no_grad():
        for k in encoder_keys:
            own[k].copy_(remapped[k].to(own[k].dtype))
