import numpy as np
import pytest

from semmap.geometry import CameraIntrinsics
from semmap.scene import (coverage_trajectory, generate_scene,
                          ground_truth_map, observed_mask, render_trajectory)

SUITE_CAMERA = CameraIntrinsics.from_hfov(160, 120, 90.0)
TINY_CAMERA = CameraIntrinsics.from_hfov(64, 48, 90.0)


def build_corpus(seeds, extent=4.0, n_boxes=6, camera=SUITE_CAMERA, stride=4):
    """Render a list of (scene, grid, frames, gt_map, observed) tuples."""
    out = []
    for seed in seeds:
        scene = generate_scene(seed, extent=extent, n_boxes=n_boxes)
        grid = scene.default_grid()
        traj = coverage_trajectory(scene, seed)
        frames = render_trajectory(scene, traj, camera, stride=stride)
        gt, _ = ground_truth_map(scene, grid)
        mask = observed_mask(frames, grid, camera).astype(bool)
        out.append((scene, grid, frames, gt, mask))
    return out


@pytest.fixture(scope="session")
def small_corpus():
    """Three rendered scenes shared by the slower integration tests."""
    return build_corpus(range(1, 4))


@pytest.fixture(scope="session")
def suite_camera():
    return SUITE_CAMERA


@pytest.fixture
def rng():
    return np.random.default_rng(0)
