"""The spatial memory grid: per-cell class-score accumulators.

Each cell holds a 13-wide score vector (one slot per class, void included),
a max-observed-height layer, and an observed flag. Frames are folded in one
at a time through a pluggable aggregation rule; only cells that actually
received a projection in a frame are touched, so previously observed areas
stay stable.

The aggregation rule is the extension point where a learned recurrent cell
could be substituted later; the four rules shipped here are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch
from .geometry import (SURFACE_NUDGE, CameraIntrinsics, GridSpec,
                       unproject_pixels, world_to_cells)
from .mapdata import NUM_CLASSES, SemanticMap
from .imgproc import _window_sums

CEILING_MARGIN = 0.50  # meters above the camera beyond which hits are dropped
HEIGHT_SENTINEL = -1.0e9  # placeholder for never-observed cells


@dataclass
class ProjectedObservation:
    cell: tuple       # (u, v)
    class_id: int
    height: float     # world y of the surviving pixel
    pixel: tuple      # (i, j) source pixel


class Aggregator:
    """Per-cell update rule applied uniformly across the grid."""

    name = "base"

    def update(self, mem: "SpatialMemory", vv, uu, classes, heights):
        raise NotImplementedError


class LatestWins(Aggregator):
    name = "latest_wins"

    def update(self, mem, vv, uu, classes, heights):
        mem.cell_state[vv, uu, :] = 0.0
        mem.cell_state[vv, uu, classes] = 1.0


class MaxHeight(Aggregator):
    """Keep the class of the all-time tallest observation (strictly taller wins)."""

    name = "max_height"

    def update(self, mem, vv, uu, classes, heights):
        taller = (~mem.observed[vv, uu].astype(bool)) | (heights > mem.heights[vv, uu])
        v2, u2, c2 = vv[taller], uu[taller], classes[taller]
        mem.cell_state[v2, u2, :] = 0.0
        mem.cell_state[v2, u2, c2] = 1.0


class MajorityVote(Aggregator):
    name = "majority_vote"

    def update(self, mem, vv, uu, classes, heights):
        mem.cell_state[vv, uu, classes] += 1.0


class Ema(Aggregator):
    """Exponential moving average of one-hot class vectors."""

    name = "ema"

    def __init__(self, alpha: float = 0.3):
        self.alpha = alpha

    def update(self, mem, vv, uu, classes, heights):
        mem.cell_state[vv, uu, :] *= 1.0 - self.alpha
        mem.cell_state[vv, uu, classes] += self.alpha


def make_aggregator(name: str, ema_alpha: float = 0.3) -> Aggregator:
    table = {"latest_wins": LatestWins, "max_height": MaxHeight,
             "majority_vote": MajorityVote}
    if name == "ema":
        return Ema(ema_alpha)
    if name not in table:
        raise ValueError(f"unknown aggregator {name!r}")
    return table[name]()


@dataclass
class SpatialMemory:
    grid: GridSpec
    cell_state: np.ndarray = None   # (v, u, 13) scores
    heights: np.ndarray = None      # (v, u) max observed world y
    observed: np.ndarray = None     # (v, u) uint8
    frame_counter: int = 0

    def __post_init__(self):
        shape = (self.grid.v_size, self.grid.u_size)
        if self.cell_state is None:
            self.cell_state = np.zeros(shape + (NUM_CLASSES,))
        if self.heights is None:
            self.heights = np.full(shape, HEIGHT_SENTINEL)
        if self.observed is None:
            self.observed = np.zeros(shape, dtype=np.uint8)


def project_frame(frame, k: CameraIntrinsics, grid: GridSpec,
                  labels: np.ndarray | None = None):
    """Project a frame's pixels into grid cells, one winner per cell.

    Skips invalid-depth pixels, pixels above camera_y + 50 cm (ceiling rule),
    and out-of-grid projections. When several pixels land in a cell, the one
    with maximum world height survives; ties go to the smaller row-major
    pixel index. ``labels`` overrides the frame's label raster (used after
    corruption / downsampling).

    Returns arrays (u, v, class_id, height, pixel_index), sorted by cell.
    """
    depth = frame.depth
    lab = frame.labels if labels is None else labels
    h, w = depth.shape
    valid = depth > 0
    jj, ii = np.nonzero(valid)
    if jj.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty, np.zeros(0), empty
    pts = unproject_pixels(k, frame.pose, ii, jj, depth[jj, ii] + SURFACE_NUDGE)
    keep = pts[:, 1] <= frame.camera_y + CEILING_MARGIN
    ii, jj, pts = ii[keep], jj[keep], pts[keep]
    u, v = world_to_cells(grid, pts[:, 0], pts[:, 2])
    ok = (u >= 0) & (u < grid.u_size) & (v >= 0) & (v < grid.v_size)
    ii, jj, pts, u, v = ii[ok], jj[ok], pts[ok], u[ok], v[ok]
    if u.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty, np.zeros(0), empty
    pix = jj.astype(np.int64) * w + ii
    cell = v * grid.u_size + u
    # sort by (cell, -height, pixel index); first entry per cell wins
    order = np.lexsort((pix, -pts[:, 1], cell))
    cell_sorted = cell[order]
    firsts = np.ones(cell_sorted.size, dtype=bool)
    firsts[1:] = cell_sorted[1:] != cell_sorted[:-1]
    sel = order[firsts]
    return (u[sel], v[sel], lab[jj[sel], ii[sel]].astype(np.int64),
            pts[sel, 1], pix[sel])


def observations_from_arrays(u, v, classes, heights, pix, width: int):
    """Array output of project_frame as ProjectedObservation records."""
    return [ProjectedObservation(cell=(int(a), int(b)), class_id=int(c),
                                 height=float(h),
                                 pixel=(int(p) % width, int(p) // width))
            for a, b, c, h, p in zip(u, v, classes, heights, pix)]


def update_memory(mem: SpatialMemory, obs, agg: Aggregator,
                  grid: GridSpec | None = None) -> SpatialMemory:
    """Fold one frame's projected observations into the memory in place.

    ``obs`` is the array tuple returned by project_frame. Only listed cells
    change; the height layer takes the running max.
    """
    if grid is not None and grid != mem.grid:
        raise GridMismatch("observation grid differs from memory grid")
    u, v, classes, heights, _ = obs
    if u.size:
        agg.update(mem, v, u, classes, heights)
        prev = np.where(mem.observed[v, u].astype(bool), mem.heights[v, u],
                        -np.inf)
        mem.heights[v, u] = np.maximum(prev, heights)
        mem.observed[v, u] = 1
    mem.frame_counter += 1
    return mem


def decode_map(mem: SpatialMemory, smoothing: str = "none",
               box_vote_k: int = 3) -> SemanticMap:
    """Argmax decode of the accumulated scores; unobserved cells stay void.

    smoothing="box_vote" first sums scores over a k x k window restricted to
    observed cells (unobserved cells hold zero scores). Ties go to the
    smaller class id.
    """
    scores = mem.cell_state
    if smoothing == "box_vote":
        if np.allclose(scores, np.round(scores)):
            summed = _window_sums(np.round(scores).astype(np.int64), box_vote_k)
        else:
            summed = _float_window_sums(scores, box_vote_k)
        scores = summed
    elif smoothing != "none":
        raise ValueError(f"unknown smoothing {smoothing!r}")
    labels = np.argmax(scores, axis=-1).astype(np.uint8)
    labels[mem.observed == 0] = 0
    return SemanticMap(grid=mem.grid, labels=labels)


def _float_window_sums(scores: np.ndarray, k: int) -> np.ndarray:
    lo = k // 2
    hi = k - 1 - lo
    h, w, c = scores.shape
    padded = np.zeros((h + k, w + k, c))
    padded[lo:lo + h, lo:lo + w] = scores
    out = np.zeros_like(scores)
    for dr in range(-lo, hi + 1):
        for dc in range(-lo, hi + 1):
            out += padded[lo + dr:lo + dr + h, lo + dc:lo + dc + w]
    return out
