"""Density-regression counting model conditioned on a text description.

Four networks compose the forward pass: a vision transformer that turns the
image into a grid of patch features, a text transformer that turns the
description into a single embedding in the same joint space, a feature
interaction module in which patch features cross-attend to the text
embedding, and a convolutional decoder that upsamples the fused grid into a
nonnegative density map.  The (scale-corrected) sum of the density map is
the predicted object count.

The two encoder towers mirror the layout of the public CLIP ViT-B/16
release so pretrained weights can be ingested directly (see
``textcount.pretrained``).
"""

from __future__ import annotations

import dataclasses
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError, InputError
from .tokenizer import HashTokenizer

# Channel statistics published with the CLIP weight releases.
CLIP_IMAGE_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_IMAGE_STD = (0.26862954, 0.26130258, 0.27577711)

COMPONENT_NAMES = ("image_encoder", "text_encoder", "interaction", "decoder")


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    The defaults describe the full-size model: 224x224 inputs, 16x16
    patches, 512-d joint embedding space, and a decoder that bilinearly
    lifts the fused patch grid to 24x24 and doubles it four times, giving a
    384x384 density map.
    """

    image_size: int = 224
    patch_size: int = 16
    embed_dim: int = 512
    image_layers: int = 12
    text_layers: int = 12
    context_length: int = 77
    interaction_layers: int = 2
    decoder_base_channels: int = 256
    decoder_upsample_blocks: int = 4
    interaction_grid: int = 24
    density_scale: float = 60.0
    toy_mode: bool = False
    # tower internals (widths may differ from the joint embed_dim)
    vision_width: int = 768
    vision_heads: int = 12
    text_width: int = 512
    text_heads: int = 8
    interaction_heads: int = 8
    vocab_size: int = 49408
    image_mean: tuple[float, float, float] = CLIP_IMAGE_MEAN
    image_std: tuple[float, float, float] = CLIP_IMAGE_STD

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ConfigurationError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        for name in ("embed_dim", "image_layers", "text_layers", "interaction_layers",
                     "decoder_base_channels", "decoder_upsample_blocks", "interaction_grid",
                     "vision_width", "text_width", "vocab_size", "context_length"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.density_scale <= 0:
            raise ConfigurationError("density_scale must be positive")
        if self.vision_width % self.vision_heads != 0:
            raise ConfigurationError("vision_width must divide evenly into vision_heads")
        if self.text_width % self.text_heads != 0:
            raise ConfigurationError("text_width must divide evenly into text_heads")
        if self.embed_dim % self.interaction_heads != 0:
            raise ConfigurationError("embed_dim must divide evenly into interaction_heads")

    @property
    def patch_grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def output_size(self) -> int:
        return self.interaction_grid * 2 ** self.decoder_upsample_blocks

    @classmethod
    def toy(cls, **overrides) -> "ModelConfig":
        """Reduced dimensions so gradient and overfit tests run in minutes on CPU."""
        base = dict(
            image_size=64, patch_size=16, embed_dim=64,
            image_layers=2, text_layers=2, context_length=16,
            interaction_layers=1, decoder_base_channels=32,
            decoder_upsample_blocks=2, interaction_grid=6,
            vision_width=64, vision_heads=4, text_width=64, text_heads=4,
            interaction_heads=4, vocab_size=512, toy_mode=True,
            image_mean=(0.0, 0.0, 0.0), image_std=(1.0, 1.0, 1.0),
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["image_mean"] = list(d["image_mean"])
        d["image_std"] = list(d["image_std"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("image_mean", "image_std"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class DensityMap:
    """Nonnegative density whose scale-corrected sum is the count."""

    data: np.ndarray
    scale: float

    @property
    def count(self) -> float:
        return float(self.data.sum() / self.scale)


def count_from_density(density: DensityMap) -> float:
    """Scale-corrected sum of the density map."""
    if not np.all(np.isfinite(density.data)):
        raise InputError("density map contains non-finite values")
    return float(density.data.sum() / density.scale)


class ResidualAttentionBlock(nn.Module):
    """Pre-norm transformer block matching the CLIP resblock layout."""

    def __init__(self, width: int, heads: int, attn_mask: torch.Tensor | None = None):
        super().__init__()
        self.ln_1 = nn.LayerNorm(width)
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.ln_2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(OrderedDict([
            ("c_fc", nn.Linear(width, width * 4)),
            ("gelu", nn.GELU()),
            ("c_proj", nn.Linear(width * 4, width)),
        ]))
        if attn_mask is not None:
            self.register_buffer("attn_mask", attn_mask, persistent=False)
        else:
            self.attn_mask = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mask = self.attn_mask
        if mask is not None:
            mask = mask.to(dtype=x.dtype)
        a = self.ln_1(x)
        x = x + self.attn(a, a, a, need_weights=False, attn_mask=mask)[0]
        x = x + self.mlp(self.ln_2(x))
        return x


class Transformer(nn.Module):
    def __init__(self, width: int, layers: int, heads: int,
                 attn_mask: torch.Tensor | None = None):
        super().__init__()
        self.resblocks = nn.ModuleList(
            [ResidualAttentionBlock(width, heads, attn_mask) for _ in range(layers)]
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.resblocks:
            x = block(x)
        return x


class VisionTransformer(nn.Module):
    """ViT image tower; emits per-patch features projected to the joint space.

    Parameter names track the ``visual.*`` entries of the CLIP state dict.
    """

    def __init__(self, image_size: int, patch_size: int, width: int, layers: int,
                 heads: int, output_dim: int):
        super().__init__()
        self.image_size = image_size
        self.patch_size = patch_size
        grid = image_size // patch_size
        self.conv1 = nn.Conv2d(3, width, kernel_size=patch_size, stride=patch_size, bias=False)
        self.class_embedding = nn.Parameter(torch.zeros(width))
        self.positional_embedding = nn.Parameter(torch.zeros(grid * grid + 1, width))
        self.ln_pre = nn.LayerNorm(width)
        self.transformer = Transformer(width, layers, heads)
        self.ln_post = nn.LayerNorm(width)
        self.proj = nn.Parameter(torch.zeros(width, output_dim))

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.ndim != 4 or images.shape[1] != 3:
            raise InputError(f"expected (batch, 3, H, W) images, got {tuple(images.shape)}")
        if images.shape[2] != self.image_size or images.shape[3] != self.image_size:
            raise InputError(
                f"expected {self.image_size}x{self.image_size} inputs, "
                f"got {images.shape[2]}x{images.shape[3]}"
            )
        x = self.conv1(images)                      # (B, width, g, g)
        grid = x.shape[2]
        x = x.flatten(2).transpose(1, 2)            # (B, g*g, width)
        cls = self.class_embedding.to(x.dtype).expand(x.shape[0], 1, -1)
        x = torch.cat([cls, x], dim=1)
        x = x + self.positional_embedding.to(x.dtype)
        x = self.ln_pre(x)
        x = self.transformer(x)
        x = self.ln_post(x)
        x = x @ self.proj
        patches = x[:, 1:, :]                       # class token discarded
        return patches.reshape(x.shape[0], grid, grid, -1)


class TextTransformer(nn.Module):
    """Causal text tower; pools the end-marker position into one embedding.

    Parameter names track the text entries of the CLIP state dict.
    """

    def __init__(self, vocab_size: int, context_length: int, width: int, layers: int,
                 heads: int, output_dim: int):
        super().__init__()
        self.context_length = context_length
        self.token_embedding = nn.Embedding(vocab_size, width)
        self.positional_embedding = nn.Parameter(torch.zeros(context_length, width))
        mask = torch.full((context_length, context_length), float("-inf"))
        mask.triu_(1)
        self.transformer = Transformer(width, layers, heads, attn_mask=mask)
        self.ln_final = nn.LayerNorm(width)
        self.text_projection = nn.Parameter(torch.zeros(width, output_dim))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.ndim != 2 or tokens.shape[1] != self.context_length:
            raise InputError(
                f"expected (batch, {self.context_length}) token sequences, "
                f"got {tuple(tokens.shape)}"
            )
        x = self.token_embedding(tokens)
        x = x + self.positional_embedding.to(x.dtype)
        x = self.transformer(x)
        x = self.ln_final(x)
        # pad id is 0, so the last nonzero position is the end marker
        eot = (tokens != 0).sum(dim=-1) - 1
        pooled = x[torch.arange(x.shape[0]), eot]
        return pooled @ self.text_projection


class InteractionBlock(nn.Module):
    """Pre-norm decoder block: patch self-attention, cross-attention to the
    text embedding (patches form the queries, the text token forms the single
    key and value), then a feed-forward."""

    def __init__(self, width: int, heads: int):
        super().__init__()
        self.ln_1 = nn.LayerNorm(width)
        self.self_attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.ln_cross = nn.LayerNorm(width)
        self.cross_attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.ln_2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(OrderedDict([
            ("c_fc", nn.Linear(width, width * 4)),
            ("gelu", nn.GELU()),
            ("c_proj", nn.Linear(width * 4, width)),
        ]))

    def forward(self, x: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        a = self.ln_1(x)
        x = x + self.self_attn(a, a, a, need_weights=False)[0]
        q = self.ln_cross(x)
        x = x + self.cross_attn(q, text, text, need_weights=False)[0]
        x = x + self.mlp(self.ln_2(x))
        return x


class FeatureInteraction(nn.Module):
    """Stack of interaction blocks fusing patch features with the text embedding."""

    def __init__(self, width: int, layers: int, heads: int):
        super().__init__()
        self.width = width
        self.blocks = nn.ModuleList([InteractionBlock(width, heads) for _ in range(layers)])

    def forward(self, patches: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        b, gh, gw, dim = patches.shape
        if text.shape[0] != b:
            raise ConfigurationError(
                f"batch mismatch: {b} patch maps vs {text.shape[0]} text embeddings"
            )
        if dim != self.width or text.shape[-1] != self.width:
            raise ConfigurationError(
                f"embed dim mismatch: expected {self.width}, got patches {dim} "
                f"and text {text.shape[-1]}"
            )
        x = patches.reshape(b, gh * gw, dim)
        kv = text.unsqueeze(1)                      # single key/value token
        for block in self.blocks:
            x = block(x, kv)
        return x.reshape(b, gh, gw, dim)


class DensityDecoder(nn.Module):
    """Lifts the fused patch grid to the density resolution.

    Bilinear resize to the interaction grid, one convolution down to the base
    channel count, then per upsample block a convolution followed by 2x
    bilinear upsampling, and a final 1x1 convolution to one channel clamped
    at zero.
    """

    def __init__(self, embed_dim: int, base_channels: int, upsample_blocks: int,
                 interaction_grid: int):
        super().__init__()
        self.interaction_grid = interaction_grid
        self.input_conv = nn.Conv2d(embed_dim, base_channels, kernel_size=3, padding=1)
        self.blocks = nn.ModuleList([
            nn.Conv2d(base_channels, base_channels, kernel_size=3, padding=1)
            for _ in range(upsample_blocks)
        ])
        self.head = nn.Conv2d(base_channels, 1, kernel_size=1)

    def forward(self, fused: torch.Tensor) -> torch.Tensor:
        x = fused.permute(0, 3, 1, 2)               # (B, E, g, g)
        x = F.interpolate(x, size=(self.interaction_grid, self.interaction_grid),
                          mode="bilinear", align_corners=False)
        x = F.relu(self.input_conv(x))
        for block in self.blocks:
            x = F.relu(block(x))
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = self.head(x)
        return F.relu(x).squeeze(1)                 # clamp at zero -> nonnegative map


class CountModel(nn.Module):
    """Full counting model; see the module docstring for the pipeline."""

    def __init__(self, config: ModelConfig, tokenizer=None):
        super().__init__()
        self.config = config
        self.image_encoder = VisionTransformer(
            config.image_size, config.patch_size, config.vision_width,
            config.image_layers, config.vision_heads, config.embed_dim,
        )
        self.text_encoder = TextTransformer(
            config.vocab_size, config.context_length, config.text_width,
            config.text_layers, config.text_heads, config.embed_dim,
        )
        self.interaction = FeatureInteraction(
            config.embed_dim, config.interaction_layers, config.interaction_heads,
        )
        self.decoder = DensityDecoder(
            config.embed_dim, config.decoder_base_channels,
            config.decoder_upsample_blocks, config.interaction_grid,
        )
        self.tokenizer = tokenizer or HashTokenizer(config.vocab_size, config.context_length)
        self.density_scale = config.density_scale

    # -- components ---------------------------------------------------------

    def components(self) -> dict[str, nn.Module]:
        return {name: getattr(self, name) for name in COMPONENT_NAMES}

    def set_component_trainable(self, component: str, trainable: bool) -> None:
        """Toggle gradient flow for one component; frozen components are also
        excluded from optimizers built via ``training.make_optimizer``."""
        if component not in COMPONENT_NAMES:
            raise ConfigurationError(
                f"unknown component {component!r}; expected one of {COMPONENT_NAMES}"
            )
        for p in getattr(self, component).parameters():
            p.requires_grad_(trainable)

    # -- pipeline stages ----------------------------------------------------

    def tokenize(self, texts: str | list[str]) -> torch.Tensor:
        tokens = self.tokenizer(texts)
        return torch.as_tensor(np.asarray(tokens), dtype=torch.long)

    def preprocess(self, images: np.ndarray) -> torch.Tensor:
        """uint8 RGB (B, H, W, 3) or (H, W, 3) -> normalized float (B, 3, H, W)."""
        arr = np.asarray(images)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4 or arr.shape[-1] != 3:
            raise InputError(f"expected (B, H, W, 3) RGB images, got {arr.shape}")
        dtype = next(self.parameters()).dtype
        x = torch.as_tensor(arr.astype(np.float32) / 255.0).permute(0, 3, 1, 2).to(dtype)
        mean = torch.tensor(self.config.image_mean, dtype=dtype).view(1, 3, 1, 1)
        std = torch.tensor(self.config.image_std, dtype=dtype).view(1, 3, 1, 1)
        return (x - mean) / std

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        return self.image_encoder(images)

    def encode_text(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.text_encoder(tokens)

    def interact(self, patches: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        return self.interaction(patches, text)

    def decode_density(self, fused: torch.Tensor) -> torch.Tensor:
        return self.decoder(fused)

    def forward(self, images: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        return self.decode_density(self.interact(self.encode_image(images),
                                                 self.encode_text(tokens)))

    def density_map(self, density: torch.Tensor) -> DensityMap:
        return DensityMap(density.detach().cpu().numpy(), self.density_scale)


def _init_fresh(module: nn.Module, generator: torch.Generator) -> None:
    """Truncated-normal weights (std 0.02), zero biases, identity layer norms."""
    for m in module.modules():
        if isinstance(m, (nn.Linear, nn.Conv2d)):
            _trunc_normal_(m.weight, 0.02, generator)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.MultiheadAttention):
            _trunc_normal_(m.in_proj_weight, 0.02, generator)
            nn.init.zeros_(m.in_proj_bias)
            _trunc_normal_(m.out_proj.weight, 0.02, generator)
            nn.init.zeros_(m.out_proj.bias)
        elif isinstance(m, nn.LayerNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Embedding):
            _trunc_normal_(m.weight, 0.02, generator)


def _trunc_normal_(tensor: torch.Tensor, std: float, generator: torch.Generator) -> None:
    with torch.no_grad():
        tensor.normal_(0.0, std, generator=generator).clamp_(-2 * std, 2 * std)


def init_model(config: ModelConfig, pretrained=None, tokenizer=None,
               seed: int = 0) -> CountModel:
    """Build a model; encoder towers take pretrained weights when given.

    ``pretrained`` is a path to (or loaded state dict of) a CLIP-style
    weight release; interaction and decoder weights are always freshly
    initialized.  The default trainability mirrors the best fine-tuning
    strategy: image encoder trainable, text encoder frozen.
    """
    model = CountModel(config, tokenizer=tokenizer)
    generator = torch.Generator().manual_seed(seed)
    _init_fresh(model, generator)
    for tower in (model.image_encoder, model.text_encoder):
        for name in ("class_embedding", "positional_embedding", "proj", "text_projection"):
            param = getattr(tower, name, None)
            if isinstance(param, nn.Parameter):
                _trunc_normal_(param, 0.02, generator)
    if pretrained is not None:
        from .pretrained import load_pretrained_clip
        load_pretrained_clip(model, pretrained)
    model.set_component_trainable("text_encoder", False)
    model.eval()
    return model


def shape_chain(config: ModelConfig) -> dict[str, tuple]:
    """The expected tensor shapes along the pipeline, from the config arithmetic."""
    g = config.patch_grid
    out = config.output_size
    return {
        "image": (3, config.image_size, config.image_size),
        "patches": (g, g, config.embed_dim),
        "text": (config.embed_dim,),
        "fused": (g, g, config.embed_dim),
        "density": (out, out),
    }
