"""Hip landmark detection on synthetic ultrasound phantoms.

A dual-branch heatmap network (encoder-decoder local branch plus patch-token
global branch) fused by mutual modulation, refined by a topological graph
network over the three collinear landmark pairs, trained and evaluated on a
Graf-consistent phantom generator. Everything runs on a small from-scratch
reverse-mode tensor engine.
"""

from .autodiff import Tensor
from .config import BackboneConfig, EvalConfig, FusionConfig, GeneratorConfig, GraphConfig, ModelConfig, TrainConfig
from .dataset import ImageSample, read_manifest
from .estimator import HipLandmarkDetector
from .metrics import GrafAngles, classify_graf, decode_landmarks, graf_angles, mre, sdr
from .nets.model import LandmarkNet, build_model
from .phantom import generate_dataset, render_phantom, sample_geometry
from .training import augment_hflip, make_gt_heatmaps, total_loss, train

__version__ = "0.1.0"

__all__ = [
    "BackboneConfig",
    "EvalConfig",
    "FusionConfig",
    "GeneratorConfig",
    "GrafAngles",
    "GraphConfig",
    "HipLandmarkDetector",
    "ImageSample",
    "LandmarkNet",
    "ModelConfig",
    "Tensor",
    "TrainConfig",
    "augment_hflip",
    "build_model",
    "classify_graf",
    "decode_landmarks",
    "generate_dataset",
    "graf_angles",
    "make_gt_heatmaps",
    "mre",
    "read_manifest",
    "render_phantom",
    "sample_geometry",
    "sdr",
    "total_loss",
    "train",
]
