"""unet_trainer: toy MC-dropout U-Net for calibration-phantom slices,
exchanging data with the segmentation pipeline through MetaImage files.
"""

from .data import prepare_slices, read_fold_plan, read_index, read_manifest
from .model import UNet, enable_mc_dropout
from .predict import predict_volume
from .train import TrainConfig, load_checkpoint, train

__version__ = "0.1.0"
