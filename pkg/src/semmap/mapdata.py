"""Shared map data types and the 13-class label space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GridSpec

VOID = 0
CLASS_NAMES = (
    "void", "chair", "table", "cushion", "cabinet", "shelving", "sink",
    "dresser", "plant", "bed", "sofa", "counter", "fireplace",
)
NUM_CLASSES = len(CLASS_NAMES)  # 13 including void


@dataclass
class SemanticMap:
    """Top-down class-label grid; labels indexed [v, u]."""

    grid: GridSpec
    labels: np.ndarray  # (v_size, u_size) uint8, 0 = void

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.labels.shape != (self.grid.v_size, self.grid.u_size):
            raise ValueError("label raster does not match grid spec")
