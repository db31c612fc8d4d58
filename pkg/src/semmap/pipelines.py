"""The three map-construction paradigms and the egocentric noise model.

All three consume the same rendered frame sequence:

* project-labels ("seg2proj"): corrupt egocentric labels, optionally erode /
  downsample, project them straight into a label grid, then clean up with
  median filters.
* project-pixels ("proj2seg"): project only geometry (heights + observation
  density) and label the top-down raster with a weak lookup classifier fit
  on held-out training scenes. Per-pixel labels are deliberately hidden from
  this route.
* memory ("smnet"): project per-pixel one-hot class scores into the spatial
  memory, aggregate across frames, decode with a box vote.

The noise model is what separates them measurably: label flips concentrated
at egocentric object boundaries reproduce the splatter that per-frame label
projection smears onto the map, while repeated-observation aggregation in
the memory route averages it away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .config import NoiseModel, PipelineConfig
from .errors import EmptyObservation
from .geometry import CameraIntrinsics, GridSpec
from .imgproc import _window_sums, downsample_nn, median_filter, morphology
from .mapdata import NUM_CLASSES, SemanticMap
from .memory import (SpatialMemory, decode_map, make_aggregator, project_frame,
                     update_memory)
from .rng import hash_uniform
from .scene import EgoFrame, SceneModel, Trajectory, generate_scene, \
    coverage_trajectory, ground_truth_map, render_trajectory


def corrupt_labels(frame: EgoFrame, nm: NoiseModel, frame_index: int = 0) -> np.ndarray:
    """Corrupted copy of a frame's label raster.

    Pixels within ``boundary_band`` of a label boundary flip to a uniformly
    chosen other label present in the surrounding window with probability
    ``boundary_flip_prob``; every valid pixel additionally flips to a uniform
    random class (possibly its own) with probability ``uniform_flip_prob``.
    Draws depend only on (seed, frame_index, pixel), so corruption is
    reproducible regardless of evaluation order. Invalid-depth pixels are
    never touched.
    """
    labels = frame.labels.copy()
    h, w = labels.shape
    valid = frame.depth > 0
    idx = np.arange(h * w, dtype=np.uint64).reshape(h, w)

    if nm.boundary_flip_prob > 0 and nm.boundary_band > 0:
        edge = np.zeros((h, w), dtype=bool)
        edge[:, 1:] |= labels[:, 1:] != labels[:, :-1]
        edge[:, :-1] |= labels[:, 1:] != labels[:, :-1]
        edge[1:, :] |= labels[1:, :] != labels[:-1, :]
        edge[:-1, :] |= labels[1:, :] != labels[:-1, :]
        side = 2 * nm.boundary_band + 1
        band = ndimage.maximum_filter(edge.astype(np.uint8), size=side,
                                      mode="constant", cval=0).astype(bool)
        band &= valid
        if band.any():
            flip = hash_uniform(nm.seed, 4 * frame_index, idx) < nm.boundary_flip_prob
            flip &= band
            if flip.any():
                onehot = (labels[..., None] == np.arange(NUM_CLASSES)).astype(np.int64)
                present = _window_sums(onehot, side) > 0
                present[np.arange(h)[:, None], np.arange(w)[None, :], labels] = False
                counts = present.sum(axis=-1)
                pick = np.floor(hash_uniform(nm.seed, 4 * frame_index + 1, idx)
                                * counts).astype(np.int64)
                cum = np.cumsum(present, axis=-1)
                chosen = np.argmax(cum > pick[..., None], axis=-1)
                do = flip & (counts > 0)
                labels[do] = chosen[do].astype(labels.dtype)

    if nm.uniform_flip_prob > 0:
        flip = hash_uniform(nm.seed, 4 * frame_index + 2, idx) < nm.uniform_flip_prob
        flip &= valid
        if flip.any():
            rand_cls = np.floor(hash_uniform(nm.seed, 4 * frame_index + 3, idx)
                                * NUM_CLASSES).astype(labels.dtype)
            labels[flip] = rand_cls[flip]
    return labels


def _downsampled_view(frame: EgoFrame, labels: np.ndarray,
                      k: CameraIntrinsics, factor: int):
    """Downsample a frame (with override labels) and rescale intrinsics."""
    if factor == 1:
        return frame, labels, k
    depth = downsample_nn(frame.depth, factor)
    lab = downsample_nn(labels, factor)
    inst = downsample_nn(frame.instances, factor)
    small = EgoFrame(depth=depth, labels=np.where(depth > 0, lab, 0).astype(np.uint8),
                     instances=np.where(depth > 0, inst, 0).astype(np.int32),
                     pose=frame.pose, camera_y=frame.camera_y)
    k_small = CameraIntrinsics(fx=k.fx / factor, fy=k.fy / factor,
                               cx=k.cx / factor, cy=k.cy / factor,
                               width=k.width // factor, height=k.height // factor)
    return small, small.labels, k_small


def _erode_labels(labels: np.ndarray, side: int) -> np.ndarray:
    """Per-class binary erosion; eroded-away pixels become void."""
    out = np.zeros_like(labels)
    for cls in range(1, NUM_CLASSES):
        mask = labels == cls
        if mask.any():
            kept = morphology(mask.astype(np.uint8), "erode", side).astype(bool)
            out[kept] = cls
    return out


def run_smnet(frames, k: CameraIntrinsics, grid: GridSpec,
              cfg: PipelineConfig):
    """Project one-hot scores into the memory, aggregate, decode.

    Returns (SemanticMap, SpatialMemory).
    """
    mem = SpatialMemory(grid=grid)
    agg = make_aggregator(cfg.aggregator, cfg.ema_alpha)
    for t, frame in enumerate(frames):
        labels = corrupt_labels(frame, cfg.noise, t)
        obs = project_frame(frame, k, grid, labels=labels)
        update_memory(mem, obs, agg)
    sem = decode_map(mem, smoothing=cfg.smoothing, box_vote_k=cfg.box_vote_k)
    return sem, mem


def run_seg2proj(frames, k: CameraIntrinsics, grid: GridSpec,
                 cfg: PipelineConfig, observed_full: np.ndarray | None = None):
    """Project egocentric labels directly, then median-filter cleanups.

    observed_full, when given, is the full-resolution observed mask used for
    hole filling and the final modal masking (needed when projection runs on
    downsampled frames); otherwise the projection's own mask is used.

    Returns (SemanticMap, SpatialMemory).
    """
    mem = SpatialMemory(grid=grid)
    agg = make_aggregator(cfg.seg2proj_cross_frame)
    for t, frame in enumerate(frames):
        labels = corrupt_labels(frame, cfg.noise, t)
        if cfg.erosion_side:
            labels = _erode_labels(labels, cfg.erosion_side)
        small, lab, k_use = _downsampled_view(frame, labels, k,
                                              cfg.downsample_factor)
        obs = project_frame(small, k_use, grid, labels=lab)
        update_memory(mem, obs, agg)
    decoded = decode_map(mem, smoothing="none")
    labels = decoded.labels
    observed = observed_full if observed_full is not None else mem.observed
    observed = observed.astype(bool)
    if cfg.fill_median_k:
        # holes: cells inside the observed footprint that the (possibly
        # downsampled) projection never reached; floor cells are not holes
        holes = observed & (mem.observed == 0)
        if holes.any():
            # vote among projected cells only, with projected floor as its
            # own label so splatter specks get outvoted on the floor
            aux = labels.astype(np.int64)
            aux[mem.observed.astype(bool) & (labels == 0)] = NUM_CLASSES
            filled = median_filter(aux, cfg.fill_median_k, ignore_void=True,
                                   num_labels=NUM_CLASSES + 1)
            filled[filled == NUM_CLASSES] = 0
            labels = np.where(holes, filled.astype(labels.dtype), labels)
    if cfg.post_median_k:
        # post filter treats void as a label: isolated splatter votes back to void
        labels = median_filter(labels, cfg.post_median_k, ignore_void=False)
    labels = np.where(observed, labels, 0).astype(np.uint8)
    return SemanticMap(grid=grid, labels=labels), mem


class TopDownLabeler:
    """Weak top-down classifier for the project-pixels route.

    Labels each observed cell from a frequency lookup keyed by (quantized
    height band, observation density in a local window), fit on training
    scenes. It never sees per-pixel class labels, which is the point: the
    top-down-only view must recover semantics from geometry alone.

    The estimator follows the fit/predict/get_params convention.
    """

    def __init__(self, band_size: float = 0.20, n_bands: int = 11,
                 density_window: int = 5):
        self.band_size = band_size
        self.n_bands = n_bands
        self.density_window = density_window
        self.counts_ = None

    def get_params(self, deep: bool = True) -> dict:
        return {"band_size": self.band_size, "n_bands": self.n_bands,
                "density_window": self.density_window}

    def set_params(self, **params) -> "TopDownLabeler":
        for key, val in params.items():
            if key not in self.get_params():
                raise ValueError(f"unknown parameter {key!r}")
            setattr(self, key, val)
        return self

    def _features(self, heights: np.ndarray, observed: np.ndarray):
        bands = np.clip(np.floor(heights / self.band_size), 0,
                        self.n_bands - 1).astype(np.int64)
        dens = _window_sums(observed[..., None].astype(np.int64),
                            self.density_window)[..., 0]
        return bands, dens

    def fit(self, observations, gt_maps) -> "TopDownLabeler":
        """Accumulate (band, density) -> class frequencies over training scenes.

        observations: list of (heights, observed) rasters; gt_maps: aligned
        list of ground-truth label rasters.
        """
        n_dens = self.density_window ** 2 + 1
        counts = np.zeros((self.n_bands, n_dens, NUM_CLASSES), dtype=np.int64)
        for (heights, observed), gt in zip(observations, gt_maps):
            obs = observed.astype(bool)
            bands, dens = self._features(heights, observed)
            np.add.at(counts, (bands[obs], dens[obs], gt[obs]), 1)
        self.counts_ = counts
        return self

    def predict(self, heights: np.ndarray, observed: np.ndarray) -> np.ndarray:
        if self.counts_ is None:
            raise ValueError("labeler is not fit")
        obs = observed.astype(bool)
        bands, dens = self._features(heights, observed)
        table = np.argmax(self.counts_, axis=-1)
        band_marginal = np.argmax(self.counts_.sum(axis=1), axis=-1)
        global_mode = int(np.argmax(self.counts_.sum(axis=(0, 1))))
        seen = self.counts_.sum(axis=-1) > 0
        band_seen = self.counts_.sum(axis=(1, 2)) > 0
        out = np.where(seen[bands, dens], table[bands, dens],
                       np.where(band_seen[bands], band_marginal[bands],
                                global_mode))
        out = out.astype(np.uint8)
        out[~obs] = 0
        return out


def project_geometry(frames, k: CameraIntrinsics, grid: GridSpec):
    """Heights + observed rasters from a frame sequence, labels hidden."""
    mem = SpatialMemory(grid=grid)
    agg = make_aggregator("latest_wins")
    for frame in frames:
        obs = project_frame(frame, k, grid)
        update_memory(mem, obs, agg)
    heights = np.where(mem.observed.astype(bool), mem.heights, 0.0)
    return heights, mem


def run_proj2seg(frames, k: CameraIntrinsics, grid: GridSpec,
                 cfg: PipelineConfig, labeler: TopDownLabeler):
    """Project pixels to a top-down observation raster, then label it.

    Returns (SemanticMap, SpatialMemory).
    """
    heights, mem = project_geometry(frames, k, grid)
    if not mem.observed.any():
        raise EmptyObservation("no cell received a projection")
    labels = labeler.predict(heights, mem.observed)
    return SemanticMap(grid=grid, labels=labels), mem


def fit_labeler_on_scenes(cfg: PipelineConfig,
                          scene_extent: float = 4.0,
                          n_boxes: int = 6) -> TopDownLabeler:
    """Fit the proj2seg labeler on the seeded held-out training scenes."""
    k = CameraIntrinsics.from_hfov(cfg.camera_width, cfg.camera_height_px,
                                   cfg.camera_hfov_deg)
    observations, gts = [], []
    for off in range(cfg.proj2seg_train_scenes):
        seed = cfg.proj2seg_train_seed_base + off
        scene = generate_scene(seed, extent=scene_extent, n_boxes=n_boxes)
        grid = scene.default_grid()
        traj = coverage_trajectory(scene, seed)
        frames = render_trajectory(scene, traj, k, stride=cfg.frame_stride,
                                   max_range=cfg.max_range)
        heights, mem = project_geometry(frames, k, grid)
        gt, _ = ground_truth_map(scene, grid)
        observations.append((heights, mem.observed))
        gts.append(gt.labels)
    n_bands = int(math.ceil(2.0 / cfg.proj2seg_band_size)) + 1
    return TopDownLabeler(band_size=cfg.proj2seg_band_size,
                          n_bands=n_bands).fit(observations, gts)


def build_map(scene: SceneModel, traj: Trajectory, cfg: PipelineConfig,
              labeler: TopDownLabeler | None = None):
    """Render a trajectory and run the configured pipeline end to end.

    Returns (SemanticMap, SpatialMemory). The memory's heights/observed
    layers feed free-space estimation downstream.
    """
    k = CameraIntrinsics.from_hfov(cfg.camera_width, cfg.camera_height_px,
                                   cfg.camera_hfov_deg)
    grid = scene.default_grid()
    frames = render_trajectory(scene, traj, k, stride=cfg.frame_stride,
                               max_range=cfg.max_range)
    if cfg.kind == "smnet":
        return run_smnet(frames, k, grid, cfg)
    if cfg.kind == "seg2proj":
        from .scene import observed_mask
        full = observed_mask(frames, grid, k) if cfg.downsample_factor > 1 else None
        return run_seg2proj(frames, k, grid, cfg, observed_full=full)
    if cfg.kind == "proj2seg":
        if labeler is None:
            labeler = fit_labeler_on_scenes(cfg)
        sem, mem = run_proj2seg(frames, k, grid, cfg, labeler)
        return sem, mem
    raise ValueError(f"unknown pipeline kind {cfg.kind!r}")
