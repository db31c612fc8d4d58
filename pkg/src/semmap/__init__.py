"""Top-down semantic mapping from egocentric depth + label observations.

Builds allocentric semantic grid maps along known-pose trajectories over
procedurally generated synthetic scenes, compares three map-construction
paradigms, and reuses the maps for object-goal navigation and counting QA.
"""

from .config import NoiseModel, PipelineConfig
from .geometry import CameraIntrinsics, GridSpec, Pose
from .mapdata import CLASS_NAMES, NUM_CLASSES, SemanticMap
from .memory import SpatialMemory
from .scene import EgoFrame, SceneModel, Trajectory, generate_scene

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics", "GridSpec", "Pose", "SemanticMap", "SpatialMemory",
    "SceneModel", "EgoFrame", "Trajectory", "generate_scene", "NoiseModel",
    "PipelineConfig", "CLASS_NAMES", "NUM_CLASSES", "__version__",
]
