"""
Training the toy configuration on a synthetic four-image dataset
================================================================

The full-size model needs pretrained encoders and a GPU week; the toy
configuration keeps the exact same pipeline (augment -> density target ->
masked loss -> AdamW with warmup + cosine decay -> best-checkpoint
selection) at CPU-demo scale.
"""

import numpy as np
import torch

from textcount.augment import AugmentConfig, SourceSample
from textcount.inference import InferenceSettings
from textcount.model import ModelConfig, init_model
from textcount.training import TrainConfig, TrainValSplits, fit

# Four 64 x 64 images, each with its objects clustered in one corner so
# the tiny decoder can actually localize them.
rng = np.random.default_rng(5)
corners = [(6, 6), (6, 38), (38, 6), (38, 38)]
samples = []
for i, (count, (ox, oy)) in enumerate(zip([12, 9, 11, 10], corners)):
    image = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
    pts = np.column_stack([rng.uniform(ox, ox + 20, count),
                           rng.uniform(oy, oy + 20, count)])
    samples.append(SourceSample(image, pts, f"the cluster {i} items"))

# The toy net: 64 px input, 2+2 transformer layers, 24 x 24 density output.
torch.manual_seed(0)
model = init_model(ModelConfig.toy(), seed=0)

# Small-batch config with augmentation off so the loss trail is easy to
# read; the text encoder stays frozen exactly as in full training.
cfg = TrainConfig(batch_size=1, base_lr=3e-3, warmup_epochs=2,
                  total_epochs=2000, pixel_drop_p=0.0, seed=0,
                  augment=AugmentConfig(p_augment=0.0))

# Validate on one held-out-ish sample with inference geometry matched to
# the 64 px fixture (the default 384 px windows would be overkill here).
splits = TrainValSplits(train=samples, val=samples[:1])
result = fit(model, splits, cfg, epochs=12,
             val_settings=InferenceSettings(working_height=64,
                                            window_side=64, stride=32),
             progress=lambda r: print(
                 f"epoch {r.epoch:2d}  loss {r.train_loss:7.3f}  "
                 f"val MAE {r.val_mae:6.3f}  lr {r.lr:.2e}"))

print(f"\nbest epoch: {result.best_epoch} (val MAE {result.best_val_mae:.3f})")
print("the stored best_state can be restored with result.restore_best(model)")
