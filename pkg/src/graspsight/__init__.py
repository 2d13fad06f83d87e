"""Saliency-guided grasp detection and multi-fingered grasp planning on
synthetic tabletop scenes."""

__version__ = "0.1.0"

from .detect import GraspInfo, GraspType, detect, score_roi, select_type
from .imaging import ImageF
from .planner import HandKind, HandModel, plan, random_baseline
from .saliency import Roi, compute_saliency, extract_rois
from .scene import CameraModel, Scene, load_scene

__all__ = [
    "CameraModel",
    "GraspInfo",
    "GraspType",
    "HandKind",
    "HandModel",
    "ImageF",
    "Roi",
    "Scene",
    "compute_saliency",
    "detect",
    "extract_rois",
    "load_scene",
    "plan",
    "random_baseline",
    "score_roi",
    "select_type",
]
