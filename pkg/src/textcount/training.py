"""Training loop: scaled-density regression loss with pixel dropping,
AdamW with a warmup + half-cycle cosine schedule, and best-on-validation
checkpoint selection.

The objective is the mean over the batch of

    sum_over_pixels(mask * (prediction - scale * target)^2) / (H * W)

where each pixel's error term is zeroed independently with probability
``pixel_drop_p`` and the denominator stays the full pixel count (dropped
terms are not rescaled).  Targets are pre-multiplied by ``density_scale``
(default 60) before entering the loss.

Config files are JSON objects mirroring :class:`TrainConfig` field names,
with the augmentation settings nested under ``"augment"``.  Per-epoch
metrics are appended to a line-delimited JSON log; checkpoints are written
in the portable zip format at ``best.ckpt`` and ``last.ckpt``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .augment import AugmentConfig, SourceSample, augment_sample
from .checkpoint import save_checkpoint
from .dataset import SampleRecord, build_density_target
from .errors import ConfigurationError, InputError, TrainingDiverged
from .model import CountModel


@dataclass
class TrainConfig:
    batch_size: int = 8
    base_lr: float = 6.25e-6
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.05
    warmup_epochs: int = 10
    total_epochs: int = 1000
    density_scale: float = 60.0
    pixel_drop_p: float = 0.2
    seed: int = 1234
    freeze_text_encoder: bool = True
    freeze_image_encoder: bool = False
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.warmup_epochs >= self.total_epochs:
            raise ConfigurationError(
                f"warmup_epochs={self.warmup_epochs} must be below "
                f"total_epochs={self.total_epochs}")
        if not 0.0 <= self.pixel_drop_p < 1.0:
            raise ConfigurationError(f"pixel_drop_p={self.pixel_drop_p} outside [0, 1)")
        if self.density_scale <= 0:
            raise ConfigurationError("density_scale must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if self.base_lr <= 0:
            raise ConfigurationError("base_lr must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["augment"] = self.augment.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "augment" in d:
            d["augment"] = AugmentConfig.from_dict(d["augment"])
        return cls(**d)


def load_train_config(path) -> TrainConfig:
    """Read a JSON training config file; absent keys take the defaults."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read training config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"training config {path} must hold a JSON object")
    try:
        return TrainConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigurationError(f"unknown training config key: {exc}") from exc


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mae: float
    val_rmse: float
    lr: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainValSplits:
    """Training and validation pools of image/points/description samples."""
    train: Sequence
    val: Sequence


class RecordDataset:
    """Lazy view over :class:`SampleRecord` rows, loading pixels on access."""

    def __init__(self, records: Sequence[SampleRecord]):
        self._records = list(records)
        self._cache: dict[int, SourceSample] = {}

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, idx: int) -> SourceSample:
        if idx not in self._cache:
            rec = self._records[idx]
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[idx] = SourceSample(rec.load_image(), rec.points,
                                            rec.description)
        return self._cache[idx]


# -- loss --------------------------------------------------------------------

def masked_loss(pred, target, drop_p: float = 0.0,
                rng: np.random.Generator | None = None):
    """Pixel-dropped squared-error loss.

    ``pred``/``target`` are (H, W) or (batch, H, W) arrays/tensors at the
    same resolution, the target already multiplied by the density scale.
    Each pixel is zeroed independently with probability ``drop_p``; the sum
    is divided by the full H*W and averaged over the batch.  Returns a
    torch scalar (differentiable when ``pred`` requires grad).
    """
    pred_t = _as_tensor(pred)
    target_t = _as_tensor(target)
    if pred_t.shape != target_t.shape:
        raise InputError(
            f"prediction shape {tuple(pred_t.shape)} != target shape "
            f"{tuple(target_t.shape)}")
    if pred_t.dim() == 2:
        pred_t = pred_t.unsqueeze(0)
        target_t = target_t.unsqueeze(0)
    elif pred_t.dim() != 3:
        raise InputError(f"expected 2- or 3-d maps, got {pred_t.dim()}-d")
    if not 0.0 <= drop_p <= 1.0:
        raise InputError(f"drop_p={drop_p} outside [0, 1]")
    if target_t.dtype != pred_t.dtype:
        target_t = target_t.to(pred_t.dtype)

    sq = (pred_t - target_t) ** 2
    if drop_p > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        keep = torch.from_numpy(
            (rng.random(tuple(sq.shape)) >= drop_p).astype(np.float64))
        sq = sq * keep.to(sq.dtype)
    pixels = sq.shape[1] * sq.shape[2]
    return sq.sum(dim=(1, 2)).div(pixels).mean()


def _as_tensor(value) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value                     # keep the autograd graph intact
    data = getattr(value, "data", value)  # unwrap density-map containers
    if isinstance(data, torch.Tensor):
        return data
    return torch.as_tensor(np.asarray(data, dtype=np.float64))


# -- schedule ----------------------------------------------------------------

def lr_at(epoch: float, cfg: TrainConfig) -> float:
    """Learning rate at a (fractional) epoch: linear warmup from 0 to
    ``base_lr`` over ``warmup_epochs``, then half-cycle cosine decay to 0
    at ``total_epochs``."""
    if epoch < 0 or epoch > cfg.total_epochs:
        raise InputError(f"epoch {epoch} outside [0, {cfg.total_epochs}]")
    if epoch < cfg.warmup_epochs:
        return cfg.base_lr * epoch / cfg.warmup_epochs
    span = cfg.total_epochs - cfg.warmup_epochs
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * (epoch - cfg.warmup_epochs) / span))


# -- loop --------------------------------------------------------------------

def apply_freeze(model: CountModel, cfg: TrainConfig) -> None:
    model.set_component_trainable("text_encoder", not cfg.freeze_text_encoder)
    model.set_component_trainable("image_encoder", not cfg.freeze_image_encoder)


def make_optimizer(model: CountModel, cfg: TrainConfig) -> torch.optim.AdamW:
    params = [p for p in model.parameters() if p.requires_grad]
    if not params:
        raise ConfigurationError("every parameter is frozen; nothing to optimize")
    return torch.optim.AdamW(params, lr=cfg.base_lr,
                             betas=(cfg.beta1, cfg.beta2),
                             weight_decay=cfg.weight_decay)


def train_epoch(model: CountModel, dataset, cfg: TrainConfig, epoch: int,
                rng: np.random.Generator,
                optimizer: torch.optim.AdamW | None = None) -> float:
    """One pass over the shuffled training pool; returns the mean batch loss.

    ``epoch`` is 0-based for scheduling (first epoch sweeps learning rates
    ``lr_at(0 + fraction)``).  Pass the persistent ``optimizer`` when
    calling repeatedly; a transient one is created otherwise.
    """
    if optimizer is None:
        optimizer = make_optimizer(model, cfg)
    model.train()
    size = model.config.image_size
    out = model.config.output_size
    order = rng.permutation(len(dataset))
    batches = [order[i:i + cfg.batch_size]
               for i in range(0, len(order), cfg.batch_size)]
    losses = []
    for batch_idx, batch in enumerate(batches):
        images, targets, texts, ids = [], [], [], []
        for pos in batch:
            src = dataset[int(pos)]
            drawn = augment_sample(src, dataset, cfg.augment, size, rng,
                                   pivot_index=int(pos))
            dt = build_density_target(drawn.points, (size, size), (out, out))
            images.append(drawn.image)
            targets.append(dt.data * cfg.density_scale)
            texts.append(drawn.description)
            ids.append(int(pos))
        image_t = model.preprocess(np.stack(images))
        tokens = model.tokenize(texts)
        target_t = torch.as_tensor(np.stack(targets))
        pred = model(image_t, tokens)
        loss = masked_loss(pred, target_t, cfg.pixel_drop_p, rng)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingDiverged(
                f"non-finite loss {value} at epoch {epoch}", value, ids)
        lr = lr_at(min(epoch + batch_idx / len(batches), cfg.total_epochs), cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(value)
    model.eval()
    return float(np.mean(losses))


def select_best_epoch(val_maes: Sequence[float]) -> int:
    """0-based position of the smallest validation MAE; earliest wins ties."""
    if not len(val_maes):
        raise InputError("no validation records to select from")
    return int(np.argmin(np.asarray(val_maes)))


@dataclass
class FitResult:
    records: list[EpochRecord]
    best_epoch: int            # 1-based, matching EpochRecord.epoch
    best_val_mae: float
    best_state: dict
    best_path: Path | None = None
    last_path: Path | None = None

    def restore_best(self, model: CountModel) -> None:
        model.load_state_dict(self.best_state)


def fit(model: CountModel, splits: TrainValSplits, cfg: TrainConfig, *,
        epochs: int | None = None, out_dir=None, log_path=None,
        val_settings=None,
        progress: Callable[[EpochRecord], None] | None = None) -> FitResult:
    """Run ``epochs`` training epochs (default ``cfg.total_epochs``),
    validating after each via the full sliding-window inference path, and
    retain the weights of the epoch with the smallest validation MAE
    (earliest epoch on ties).  ``val_settings`` overrides the inference
    geometry (useful for small-image fixtures).
    """
    from .evaluation import mae as _mae, rmse as _rmse
    from .inference import InferenceSettings, predict

    if len(splits.train) == 0 or len(splits.val) == 0:
        raise ConfigurationError("both train and val splits must be non-empty")
    epochs = cfg.total_epochs if epochs is None else epochs
    apply_freeze(model, cfg)
    optimizer = make_optimizer(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    settings = val_settings if val_settings is not None else InferenceSettings()

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    log_file = Path(log_path) if log_path is not None else None

    records: list[EpochRecord] = []
    best_state: dict = {}
    best_mae = math.inf
    best_epoch = 0
    for epoch in range(epochs):
        train_loss = train_epoch(model, splits.train, cfg, epoch, rng, optimizer)
        preds, gts = [], []
        for sample in splits.val:
            result = predict(model, sample.image, sample.description,
                             settings=settings)
            preds.append(result.count)
            gts.append(float(len(sample.points)))
        record = EpochRecord(epoch=epoch + 1, train_loss=train_loss,
                             val_mae=_mae(preds, gts), val_rmse=_rmse(preds, gts),
                             lr=lr_at(epoch, cfg))
        records.append(record)
        if log_file is not None:
            with log_file.open("a") as fh:
                fh.write(json.dumps(record.to_dict()) + "\n")
        if progress is not None:
            progress(record)
        if record.val_mae < best_mae:
            best_mae = record.val_mae
            best_epoch = record.epoch
            best_state = {k: v.detach().clone()
                          for k, v in model.state_dict().items()}

    result = FitResult(records=records, best_epoch=best_epoch,
                       best_val_mae=best_mae, best_state=best_state)
    if out_dir is not None:
        last_meta = {"epoch": records[-1].epoch, "val_mae": records[-1].val_mae,
                     "seed": cfg.seed}
        result.last_path = out_dir / "last.ckpt"
        save_checkpoint(model, result.last_path, metadata=last_meta)
        current = {k: v.detach().clone() for k, v in model.state_dict().items()}
        model.load_state_dict(best_state)
        result.best_path = out_dir / "best.ckpt"
        save_checkpoint(model, result.best_path,
                        metadata={"epoch": best_epoch, "val_mae": best_mae,
                                  "seed": cfg.seed})
        model.load_state_dict(current)
    return result
