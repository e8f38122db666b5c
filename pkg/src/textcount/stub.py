"""Deterministic stand-in models.

These implement the same per-window protocol the inference path drives
(``tokenize`` / ``encode_text`` / ``encode_image`` / ``interact`` /
``decode_density`` plus ``preprocess``, ``config.image_size`` and
``density_scale``), but emit closed-form densities so pipeline outputs can
be checked against hand arithmetic.  The uniform stub round-trips through
the checkpoint format, which lets the CLI and service run end to end
without trained weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass
class StubConfig:
    image_size: int = 224
    output_size: int = 384

    def to_dict(self) -> dict:
        return {"image_size": self.image_size, "output_size": self.output_size}


class StubModel:
    """Base protocol implementation; subclasses define the density."""

    def __init__(self, config: StubConfig | None = None):
        self.config = config or StubConfig()
        self.density_scale = 1.0
        self.text_encodes = 0

    # protocol plumbing -----------------------------------------------------
    def tokenize(self, texts):
        if isinstance(texts, str):
            texts = [texts]
        return torch.zeros((len(texts), 1), dtype=torch.int64)

    def encode_text(self, tokens):
        self.text_encodes += 1
        return torch.zeros((tokens.shape[0], 1))

    def preprocess(self, images):
        arr = np.asarray(images, dtype=np.float32) / 255.0
        if arr.ndim == 3:
            arr = arr[None]
        return torch.from_numpy(arr).permute(0, 3, 1, 2)

    def encode_image(self, images):
        return images

    def interact(self, patches, text):
        return patches

    def decode_density(self, fused) -> torch.Tensor:
        raise NotImplementedError

    def eval(self):
        return self

    def __call__(self, images, tokens):
        text = self.encode_text(tokens)
        return self.decode_density(self.interact(self.encode_image(images), text))


class UniformStubModel(StubModel):
    """Emits a uniform density summing to ``count_per_window`` for every
    window, regardless of image content or prompt."""

    model_class = "uniform_stub"

    def __init__(self, count_per_window: float, config: StubConfig | None = None):
        super().__init__(config)
        self.count_per_window = float(count_per_window)

    def decode_density(self, fused) -> torch.Tensor:
        batch = fused.shape[0]
        out = self.config.output_size
        value = self.count_per_window * self.density_scale / (out * out)
        return torch.full((batch, out, out), value, dtype=torch.float64)

    # checkpoint hooks ------------------------------------------------------
    def checkpoint_payload(self) -> tuple[dict, dict]:
        config = self.config.to_dict()
        config["model_class"] = self.model_class
        return config, {"count_per_window": np.asarray(self.count_per_window)}

    @classmethod
    def from_checkpoint_payload(cls, config: dict, arrays: dict) -> "UniformStubModel":
        return cls(float(arrays["count_per_window"]),
                   StubConfig(image_size=int(config.get("image_size", 224)),
                              output_size=int(config.get("output_size", 384))))


class SequenceStubModel(StubModel):
    """Emits the next value from ``counts_per_window`` on each new
    prediction (one prompt encoding advances the sequence once; all windows
    of that prediction share the value).  Handy for scripting exact
    per-sample counts in evaluation tests."""

    def __init__(self, counts_per_window, config: StubConfig | None = None):
        super().__init__(config)
        self.counts_per_window = [float(c) for c in counts_per_window]
        self._current = self.counts_per_window[0] if self.counts_per_window else 0.0

    def encode_text(self, tokens):
        idx = min(self.text_encodes, len(self.counts_per_window) - 1)
        self._current = self.counts_per_window[idx]
        return super().encode_text(tokens)

    def decode_density(self, fused) -> torch.Tensor:
        batch = fused.shape[0]
        out = self.config.output_size
        value = self._current * self.density_scale / (out * out)
        return torch.full((batch, out, out), value, dtype=torch.float64)


class HalfSplitStubModel(StubModel):
    """Puts all density on the left or right half of each window depending
    on which of two known prompts is active; used to probe composite-image
    behavior without trained weights."""

    def __init__(self, left_prompt: str, right_prompt: str, count: float = 10.0,
                 config: StubConfig | None = None):
        super().__init__(config)
        self.left_prompt = left_prompt
        self.right_prompt = right_prompt
        self.count = float(count)
        self._side = "left"

    def tokenize(self, texts):
        if isinstance(texts, str):
            texts = [texts]
        if texts and texts[0] == self.right_prompt:
            self._side = "right"
        else:
            self._side = "left"
        return super().tokenize(texts)

    def decode_density(self, fused) -> torch.Tensor:
        batch = fused.shape[0]
        out = self.config.output_size
        half = out // 2
        value = self.count * self.density_scale / (out * half)
        grid = torch.zeros((batch, out, out), dtype=torch.float64)
        if self._side == "left":
            grid[:, :, :half] = value
        else:
            grid[:, :, out - half:] = value
        return grid
