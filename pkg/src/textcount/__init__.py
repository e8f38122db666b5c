"""Text-specified open-world object counting.

Count objects in images from a written description alone: a contrastively
pretrained image-text backbone feeds a transformer feature-interaction
stage and a convolutional decoder that regresses a density map whose sum
is the count.  The package covers the full workflow - dataset tooling,
training with mosaicing augmentation, sliding-window inference, MAE/RMSE
evaluation, an HTTP service, and a CLI.
"""

from .augment import (AugmentConfig, SourceSample, TrainSample, apply_pipeline,
                      augment_sample, mosaic4, random_square_crop)
from .checkpoint import (FORMAT_VERSION, load_checkpoint, read_checkpoint_info,
                         save_checkpoint)
from .dataset import (DatasetIndex, DatasetReport, DensityTarget, SampleRecord,
                      build_density_target, load_descriptions, load_fsc147,
                      scale_dots, validate_dataset)
from .errors import (CheckpointError, ConfigurationError, DatasetError,
                     InputError, TextcountError, TrainingDiverged)
from .evaluation import (EvalResult, composite_probe, evaluate_split, mae,
                         rmse)
from .inference import (CountResult, InferenceSettings, WindowPlan,
                        compose_horizontal, composite_predict, plan_windows,
                        predict, stitch_average)
from .model import (CountModel, DensityMap, ModelConfig, count_from_density,
                    init_model, shape_chain)
from .overlay import overlay_png_bytes, render_overlay, save_overlay
from .pretrained import load_pretrained_clip, remap_clip_keys
from .service import create_app
from .stub import HalfSplitStubModel, SequenceStubModel, UniformStubModel
from .tokenizer import HashTokenizer
from .training import (EpochRecord, FitResult, TrainConfig, TrainValSplits,
                       fit, lr_at, masked_loss, select_best_epoch, train_epoch)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "SourceSample", "TrainSample", "apply_pipeline",
    "augment_sample", "mosaic4", "random_square_crop",
    "FORMAT_VERSION", "load_checkpoint", "read_checkpoint_info", "save_checkpoint",
    "DatasetIndex", "DatasetReport", "DensityTarget", "SampleRecord",
    "build_density_target", "load_descriptions", "load_fsc147", "scale_dots",
    "validate_dataset",
    "CheckpointError", "ConfigurationError", "DatasetError", "InputError",
    "TextcountError", "TrainingDiverged",
    "EvalResult", "composite_probe", "evaluate_split", "mae", "rmse",
    "CountResult", "InferenceSettings", "WindowPlan", "compose_horizontal",
    "composite_predict", "plan_windows", "predict", "stitch_average",
    "CountModel", "DensityMap", "ModelConfig", "count_from_density",
    "init_model", "shape_chain",
    "overlay_png_bytes", "render_overlay", "save_overlay",
    "load_pretrained_clip", "remap_clip_keys",
    "create_app",
    "HalfSplitStubModel", "SequenceStubModel", "UniformStubModel",
    "HashTokenizer",
    "EpochRecord", "FitResult", "TrainConfig", "TrainValSplits", "fit",
    "lr_at", "masked_loss", "select_best_epoch", "train_epoch",
    "__version__",
]
