"""Procedural synthetic worlds and the depth + semantic raycaster.

A scene is a flat floor at y = 0 plus axis-aligned labeled boxes resting on
it. Rendering is analytic ray / AABB intersection, which stands in for a
full simulator: it gives exact depth, per-pixel class labels, and instance
ids along any trajectory.

Box footprints are snapped to the top-down grid resolution so that an
egocentric observation of a box side lands in the same cell the ground-truth
map assigns to the box (no half-cell leakage at footprint borders).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import FormatError, InfeasiblePlacement, NoFreeSpace
from .geometry import (CameraIntrinsics, GridSpec, Pose, DEFAULT_RESOLUTION,
                       unproject_pixels)
from .mapdata import NUM_CLASSES, VOID, SemanticMap
from .rng import Rng

FORWARD_STEP = 0.10   # meters per forward action
TURN_STEP_DEG = 9     # degrees per rotate action
SCAN_TURNS = 40       # full 360 rotation at lane ends
AGENT_RADIUS = 0.10   # meters
# Viewpoints sit at cell centers, not on the cell lattice itself: with
# axis-aligned yaws, a camera placed exactly on a cell-boundary plane sends
# its central pixel column grazing along that plane, and hits that land
# exactly on the boundary bin into an arbitrary neighbor cell.
LATTICE_OFFSET = DEFAULT_RESOLUTION / 2.0
DEFAULT_CAMERA_HEIGHT = 1.25
DEFAULT_MAX_RANGE = 10.0

# Hit points are advanced this far along the ray so box-side hits fall
# strictly inside the snapped footprint instead of exactly on its border.
_DEPTH_EPS = 5e-7

# Per class id 1..12: (height lo, height hi, side lo, side hi) in meters.
_CLASS_DIMS = {
    1: (0.85, 0.95, 0.45, 0.55),   # chair
    2: (0.70, 0.78, 0.90, 1.40),   # table
    3: (0.12, 0.20, 0.40, 0.55),   # cushion
    4: (1.15, 1.35, 0.50, 0.90),   # cabinet
    5: (1.50, 1.70, 0.50, 1.00),   # shelving
    6: (0.82, 0.90, 0.45, 0.60),   # sink
    7: (0.95, 1.10, 0.50, 1.00),   # dresser
    8: (1.00, 1.30, 0.40, 0.50),   # plant
    9: (0.50, 0.60, 1.40, 2.00),   # bed
    10: (0.75, 0.85, 0.80, 1.80),  # sofa
    11: (0.90, 1.00, 0.60, 1.50),  # counter
    12: (1.25, 1.45, 0.80, 1.20),  # fireplace
}

_PLACEMENT_BUDGET = 10_000
_BOX_MARGIN = 0.25       # min clearance between boxes
_WALL_MARGIN = 0.30      # clearance to the floor boundary
_SPAWN_RING_RADIUS = 0.40  # disc around scene center kept free of boxes


@dataclass(frozen=True)
class Box:
    class_id: int
    instance_id: int
    aabb: tuple  # (xmin, ymin, zmin, xmax, ymax, zmax)

    def __post_init__(self):
        xmin, ymin, zmin, xmax, ymax, zmax = self.aabb
        if not (xmin < xmax and ymin < ymax and zmin < zmax):
            raise ValueError("box min must be < max per axis")
        if ymin < 0:
            raise ValueError("boxes must rest at or above the floor")
        if not (1 <= self.class_id < NUM_CLASSES):
            raise ValueError("class_id must be in 1..12")
        if self.instance_id <= 0:
            raise ValueError("instance_id must be positive")


@dataclass
class SceneModel:
    floor: tuple  # (xmin, zmin, xmax, zmax)
    boxes: list
    seed: int = 0

    def __post_init__(self):
        ids = [b.instance_id for b in self.boxes]
        if len(set(ids)) != len(ids):
            raise ValueError("instance ids must be unique")

    def default_grid(self, resolution: float = DEFAULT_RESOLUTION) -> GridSpec:
        xmin, zmin, xmax, zmax = self.floor
        u = int(round((xmax - xmin) / resolution))
        v = int(round((zmax - zmin) / resolution))
        return GridSpec(origin_x=xmin, origin_z=zmin, resolution=resolution,
                        u_size=u, v_size=v)


@dataclass
class EgoFrame:
    """One rendered observation: depth 0 marks no-return pixels."""

    depth: np.ndarray      # (H, W) meters
    labels: np.ndarray     # (H, W) class ids, 0 where depth == 0
    instances: np.ndarray  # (H, W) instance ids, 0 = none
    pose: Pose
    camera_y: float

    def __post_init__(self):
        if not (self.depth.shape == self.labels.shape == self.instances.shape):
            raise ValueError("depth/labels/instances dims differ")
        if np.any(self.labels[self.depth == 0] != 0):
            raise ValueError("labels must be void where depth is invalid")


@dataclass
class Trajectory:
    states: list                  # (x, z, yaw_deg) tuples
    camera_height: float = DEFAULT_CAMERA_HEIGHT
    forward_step: float = FORWARD_STEP
    turn_step_deg: float = TURN_STEP_DEG


def _snap(x: float, resolution: float) -> float:
    return round(x / resolution) * resolution


def generate_scene(seed: int, extent: float = 4.0, n_boxes: int = 6,
                   class_weights=None,
                   resolution: float = DEFAULT_RESOLUTION) -> SceneModel:
    """Rejection-sample non-overlapping boxes on a square floor.

    Deterministic for a fixed seed. Boxes keep a clearance margin from each
    other, from the walls, and from the spawn ring at the scene center, so
    every generated scene is traversable and instances are well separated.
    """
    if extent <= 0:
        raise ValueError("extent must be positive")
    if n_boxes < 0:
        raise ValueError("n_boxes must be >= 0")
    if class_weights is None:
        class_weights = [1.0] * 12
    rng = Rng(seed)
    half = _snap(extent / 2.0, resolution)
    floor = (-half, -half, half, half)
    boxes = []
    tries = 0
    while len(boxes) < n_boxes:
        tries += 1
        if tries > _PLACEMENT_BUDGET:
            raise InfeasiblePlacement(
                f"could not place {n_boxes} boxes in {_PLACEMENT_BUDGET} tries")
        cls = rng.choice_weighted(class_weights) + 1
        h_lo, h_hi, s_lo, s_hi = _CLASS_DIMS[cls]
        # sides snap to an even cell count so half-widths stay on cell
        # boundaries (footprint edges must never cross a cell center)
        w = _snap(rng.uniform_range(s_lo, s_hi), 2 * resolution)
        dep = _snap(rng.uniform_range(s_lo, s_hi), 2 * resolution)
        height = rng.uniform_range(h_lo, h_hi)
        cx = _snap(rng.uniform_range(-half + _WALL_MARGIN + w / 2,
                                     half - _WALL_MARGIN - w / 2), resolution)
        cz = _snap(rng.uniform_range(-half + _WALL_MARGIN + dep / 2,
                                     half - _WALL_MARGIN - dep / 2), resolution)
        xmin, xmax = cx - w / 2, cx + w / 2
        zmin, zmax = cz - dep / 2, cz + dep / 2
        # keep the spawn ring clear
        dx = max(xmin, min(0.0, xmax))
        dz = max(zmin, min(0.0, zmax))
        if math.hypot(dx, dz) < _SPAWN_RING_RADIUS + _BOX_MARGIN:
            continue
        ok = True
        for b in boxes:
            bx0, _, bz0, bx1, _, bz1 = b.aabb
            if (xmin - _BOX_MARGIN < bx1 and xmax + _BOX_MARGIN > bx0 and
                    zmin - _BOX_MARGIN < bz1 and zmax + _BOX_MARGIN > bz0):
                ok = False
                break
        if not ok:
            continue
        boxes.append(Box(class_id=cls, instance_id=len(boxes) + 1,
                         aabb=(xmin, 0.0, zmin, xmax, height, zmax)))
    return SceneModel(floor=floor, boxes=boxes, seed=seed)


def raycast_frame(scene: SceneModel, k: CameraIntrinsics, pose: Pose,
                  camera_y: float, max_range: float = DEFAULT_MAX_RANGE) -> EgoFrame:
    """Render one frame by slab-testing every pixel ray against every box.

    Depth is the camera-frame z coordinate of the nearest hit among the floor
    plane and the box AABBs; 0 where nothing is hit within max_range.
    """
    h, w = k.height, k.width
    jj, ii = np.mgrid[0:h, 0:w]
    # camera-frame directions with unit z, so the ray parameter equals depth
    dirs_cam = np.stack([(ii - k.cx) / k.fx, (jj - k.cy) / k.fy,
                         np.ones((h, w))], axis=-1)
    dirs = dirs_cam @ pose.rotation  # = R^T @ dir per pixel
    origin = pose.camera_center()

    best_t = np.full((h, w), np.inf)
    labels = np.zeros((h, w), dtype=np.uint8)
    instances = np.zeros((h, w), dtype=np.int32)

    with np.errstate(divide="ignore", invalid="ignore"):
        # floor plane y = 0
        t_floor = (0.0 - origin[1]) / dirs[..., 1]
        hit = np.isfinite(t_floor) & (t_floor > 0)
        # restrict to the floor rectangle
        fx0, fz0, fx1, fz1 = scene.floor
        px = origin[0] + t_floor * dirs[..., 0]
        pz = origin[2] + t_floor * dirs[..., 2]
        hit &= (px >= fx0) & (px <= fx1) & (pz >= fz0) & (pz <= fz1)
        best_t = np.where(hit, t_floor, best_t)

        for box in scene.boxes:
            lo = np.array([box.aabb[0], box.aabb[1], box.aabb[2]])
            hi = np.array([box.aabb[3], box.aabb[4], box.aabb[5]])
            t1 = (lo - origin) / dirs
            t2 = (hi - origin) / dirs
            near = np.minimum(t1, t2)
            far = np.maximum(t1, t2)
            # parallel rays: inside the slab -> (-inf, +inf), outside -> miss
            par = dirs == 0.0
            inside = (origin >= lo) & (origin <= hi)
            near = np.where(par, np.where(inside, -np.inf, np.inf), near)
            far = np.where(par, np.where(inside, np.inf, -np.inf), far)
            t_entry = near.max(axis=-1)
            t_exit = far.min(axis=-1)
            hit = (t_entry <= t_exit) & (t_entry > 0) & (t_entry < best_t)
            best_t = np.where(hit, t_entry, best_t)
            labels = np.where(hit, np.uint8(box.class_id), labels)
            instances = np.where(hit, np.int32(box.instance_id), instances)

    depth = np.where(np.isfinite(best_t) & (best_t <= max_range),
                     best_t + _DEPTH_EPS, 0.0)
    labels = np.where(depth > 0, labels, 0).astype(np.uint8)
    instances = np.where(depth > 0, instances, 0).astype(np.int32)
    return EgoFrame(depth=depth, labels=labels, instances=instances,
                    pose=pose, camera_y=camera_y)


def ground_truth_map(scene: SceneModel, g: GridSpec):
    """Top-down GT by the tallest-object rule at cell centers.

    Returns (SemanticMap, heights) where heights stores the winning box top
    (0 for bare floor). Ties in top height go to the lower instance id.
    """
    xs = g.origin_x + (np.arange(g.u_size) + 0.5) * g.resolution
    zs = g.origin_z + (np.arange(g.v_size) + 0.5) * g.resolution
    labels = np.zeros((g.v_size, g.u_size), dtype=np.uint8)
    heights = np.zeros((g.v_size, g.u_size), dtype=np.float64)
    best_inst = np.full((g.v_size, g.u_size), np.iinfo(np.int64).max)
    for box in scene.boxes:
        xmin, _, zmin, xmax, ymax, zmax = box.aabb
        inx = (xs >= xmin) & (xs <= xmax)
        inz = (zs >= zmin) & (zs <= zmax)
        cover = inz[:, None] & inx[None, :]
        win = cover & ((ymax > heights) |
                       ((ymax == heights) & (box.instance_id < best_inst)))
        labels[win] = box.class_id
        heights[win] = ymax
        best_inst[win] = box.instance_id
    return SemanticMap(grid=g, labels=labels), heights


def ground_truth_freespace(scene: SceneModel, g: GridSpec,
                           floor_band: float = 0.05) -> np.ndarray:
    """Binary free-space grid: GT height within +-floor_band of the floor."""
    _, heights = ground_truth_map(scene, g)
    xs = g.origin_x + (np.arange(g.u_size) + 0.5) * g.resolution
    zs = g.origin_z + (np.arange(g.v_size) + 0.5) * g.resolution
    fx0, fz0, fx1, fz1 = scene.floor
    inside = ((zs >= fz0) & (zs <= fz1))[:, None] & ((xs >= fx0) & (xs <= fx1))[None, :]
    free = inside & (np.abs(heights - 0.0) <= floor_band)
    return free.astype(np.uint8)


# ---------------------------------------------------------------------------
# Scripted coverage trajectory
# ---------------------------------------------------------------------------

_CARDINAL = {(0, 1): 0, (1, 0): 90, (0, -1): 180, (-1, 0): 270}  # (dx,dz)->yaw


def _turn_sequence(yaw_from: int, yaw_to: int):
    """Shortest chain of +-9 degree turns between two headings."""
    diff = (yaw_to - yaw_from) % 360
    if diff > 180:
        steps = -((360 - diff) // TURN_STEP_DEG)
    else:
        steps = diff // TURN_STEP_DEG
    out = []
    yaw = yaw_from
    for _ in range(abs(steps)):
        yaw = (yaw + (TURN_STEP_DEG if steps > 0 else -TURN_STEP_DEG)) % 360
        out.append(yaw)
    return out


class _LatticeWalker:
    """Emits legal-action states while walking a 0.10 m position lattice."""

    def __init__(self, start_ix: int, start_iz: int, valid):
        self.ix, self.iz = start_ix, start_iz
        self.yaw = 0
        self.valid = valid
        self.states = [self._state()]

    def _state(self):
        return (self.ix * FORWARD_STEP + LATTICE_OFFSET,
                self.iz * FORWARD_STEP + LATTICE_OFFSET, float(self.yaw))

    def rotate_to(self, yaw_to: int):
        for yaw in _turn_sequence(self.yaw, yaw_to):
            self.yaw = yaw
            self.states.append(self._state())

    def scan(self):
        for _ in range(SCAN_TURNS):
            self.yaw = (self.yaw + TURN_STEP_DEG) % 360
            self.states.append(self._state())

    def step_to(self, ix: int, iz: int):
        dx, dz = ix - self.ix, iz - self.iz
        self.rotate_to(_CARDINAL[(dx, dz)])
        self.ix, self.iz = ix, iz
        self.states.append(self._state())

    def goto(self, ix: int, iz: int) -> bool:
        """BFS over valid lattice points, then replay the path. False if cut off."""
        if (ix, iz) == (self.ix, self.iz):
            return True
        prev = {(self.ix, self.iz): None}
        frontier = [(self.ix, self.iz)]
        while frontier and (ix, iz) not in prev:
            nxt = []
            for cx, cz in frontier:
                for dx, dz in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                    n = (cx + dx, cz + dz)
                    if n not in prev and self.valid(*n):
                        prev[n] = (cx, cz)
                        nxt.append(n)
            frontier = nxt
        if (ix, iz) not in prev:
            return False
        path = []
        cur = (ix, iz)
        while cur is not None:
            path.append(cur)
            cur = prev[cur]
        for p in reversed(path[:-1]):
            self.step_to(*p)
        return True


def coverage_trajectory(scene: SceneModel, seed: int,
                        camera_height: float = DEFAULT_CAMERA_HEIGHT,
                        lane_spacing: float = 0.5,
                        max_steps: int = 6000) -> Trajectory:
    """Boustrophedon sweep of the free space on the action lattice.

    Lanes run along x at ``lane_spacing`` intervals in z; a 360 degree scan
    (40 x 9 degree turns) is inserted at every lane-run end. All transitions
    are single legal actions and the agent (radius 0.1 m) stays in free space.
    """
    g = scene.default_grid()
    free = ground_truth_freespace(scene, g).astype(bool)
    if not free.any():
        raise NoFreeSpace("scene has no free cells")
    rad_cells = int(math.ceil(AGENT_RADIUS / g.resolution))
    dy, dx = np.mgrid[-rad_cells:rad_cells + 1, -rad_cells:rad_cells + 1]
    disk = (dx * dx + dy * dy) <= rad_cells * rad_cells
    safe = ndimage.minimum_filter(free.astype(np.uint8), footprint=disk,
                                  mode="constant", cval=0).astype(bool)

    def valid(ix: int, iz: int) -> bool:
        x = ix * FORWARD_STEP + LATTICE_OFFSET
        z = iz * FORWARD_STEP + LATTICE_OFFSET
        u = int(math.floor((x - g.origin_x) / g.resolution))
        v = int(math.floor((z - g.origin_z) / g.resolution))
        return 0 <= u < g.u_size and 0 <= v < g.v_size and bool(safe[v, u])

    per_lane = max(1, int(round(lane_spacing / FORWARD_STEP)))
    fx0, fz0, fx1, fz1 = scene.floor
    ix_lo, ix_hi = int(math.ceil(fx0 / FORWARD_STEP)), int(math.floor(fx1 / FORWARD_STEP))
    iz_lo, iz_hi = int(math.ceil(fz0 / FORWARD_STEP)), int(math.floor(fz1 / FORWARD_STEP))

    # start at the valid lattice point nearest the scene center
    start = None
    for r in range(0, max(ix_hi - ix_lo, iz_hi - iz_lo) + 1):
        for ix in range(-r, r + 1):
            for iz in range(-r, r + 1):
                if max(abs(ix), abs(iz)) == r and valid(ix, iz):
                    start = (ix, iz)
                    break
            if start:
                break
        if start:
            break
    if start is None:
        raise NoFreeSpace("no valid agent position on the lattice")

    walker = _LatticeWalker(start[0], start[1], valid)
    lanes = list(range(iz_lo, iz_hi + 1, per_lane))
    if Rng(seed).randint(2) == 1:
        lanes.reverse()

    single_point = not any(
        valid(start[0] + dx, start[1] + dz)
        for dx, dz in ((0, 1), (1, 0), (0, -1), (-1, 0)))
    if single_point:
        walker.scan()
        return Trajectory(states=walker.states, camera_height=camera_height)

    left_to_right = True
    for iz in lanes:
        cells = [ix for ix in range(ix_lo, ix_hi + 1) if valid(ix, iz)]
        if not cells:
            continue
        # contiguous runs of valid x positions
        runs = []
        run = [cells[0]]
        for ix in cells[1:]:
            if ix == run[-1] + 1:
                run.append(ix)
            else:
                runs.append(run)
                run = [ix]
        runs.append(run)
        if not left_to_right:
            runs = [list(reversed(r)) for r in reversed(runs)]
        for run in runs:
            if len(walker.states) >= max_steps:
                break
            if not walker.goto(run[0], iz):
                continue
            for ix in run[1:]:
                walker.step_to(ix, iz)
            walker.scan()
        left_to_right = not left_to_right
        if len(walker.states) >= max_steps:
            break
    return Trajectory(states=walker.states, camera_height=camera_height)


def validate_trajectory(traj: Trajectory, tol: float = 1e-9) -> None:
    """Raise ValueError unless consecutive states differ by one legal action."""
    for idx in range(1, len(traj.states)):
        x0, z0, y0 = traj.states[idx - 1]
        x1, z1, y1 = traj.states[idx]
        dyaw = (y1 - y0) % 360
        if abs(x1 - x0) < tol and abs(z1 - z0) < tol:
            if not (abs(dyaw - TURN_STEP_DEG) < tol or
                    abs(dyaw - (360 - TURN_STEP_DEG)) < tol):
                raise ValueError(f"state {idx}: rotation is not +-9 degrees")
        else:
            if abs(dyaw) > tol and abs(dyaw - 360) > tol:
                raise ValueError(f"state {idx}: moved and turned at once")
            yaw = math.radians(y0)
            ex = x0 + FORWARD_STEP * math.sin(yaw)
            ez = z0 + FORWARD_STEP * math.cos(yaw)
            if abs(x1 - ex) > tol or abs(z1 - ez) > tol:
                raise ValueError(f"state {idx}: not a 0.10 m forward step")


def render_trajectory(scene: SceneModel, traj: Trajectory, k: CameraIntrinsics,
                      stride: int = 1,
                      max_range: float = DEFAULT_MAX_RANGE) -> list:
    """Render EgoFrames at every ``stride``-th trajectory state."""
    frames = []
    for x, z, yaw_deg in traj.states[::stride]:
        pose = Pose.from_agent_state(x, z, math.radians(yaw_deg),
                                     traj.camera_height)
        frames.append(raycast_frame(scene, k, pose, traj.camera_height,
                                    max_range=max_range))
    return frames


def observed_mask(frames, grid: GridSpec,
                  k: CameraIntrinsics | None = None) -> np.ndarray:
    """Union of per-frame footprints over the trajectory.

    With k omitted, square-pixel 90 degree FOV intrinsics are assumed.
    """
    from .geometry import frame_footprint  # local import avoids cycle noise
    mask = np.zeros((grid.v_size, grid.u_size), dtype=np.uint8)
    for f in frames:
        if k is None:
            h, w = f.depth.shape
            intr = CameraIntrinsics.from_hfov(w, h, 90.0)
        else:
            intr = k
        mask |= frame_footprint(intr, f.pose, f.depth, grid, f.camera_y)
    return mask


# ---------------------------------------------------------------------------
# Text file formats
# ---------------------------------------------------------------------------

def write_scene(scene: SceneModel, path: str) -> None:
    lines = ["SMAPSCENE 1"]
    fx0, fz0, fx1, fz1 = scene.floor
    lines.append(f"floor {fx0!r} {fz0!r} {fx1!r} {fz1!r}")
    for b in scene.boxes:
        xmin, ymin, zmin, xmax, ymax, zmax = b.aabb
        lines.append(f"box {b.class_id} {b.instance_id} "
                     f"{xmin!r} {ymin!r} {zmin!r} {xmax!r} {ymax!r} {zmax!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_scene(path: str) -> SceneModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "SMAPSCENE 1":
        raise FormatError("missing SMAPSCENE 1 header")
    floor = None
    boxes = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "floor":
            floor = tuple(float(p) for p in parts[1:5])
        elif parts[0] == "box":
            boxes.append(Box(class_id=int(parts[1]), instance_id=int(parts[2]),
                             aabb=tuple(float(p) for p in parts[3:9])))
        else:
            raise FormatError(f"unknown scene record {parts[0]!r}")
    if floor is None:
        raise FormatError("scene file has no floor record")
    return SceneModel(floor=floor, boxes=boxes)


def write_trajectory(traj: Trajectory, path: str) -> None:
    lines = ["SMAPTRAJ 1", f"camera_height {traj.camera_height!r}"]
    for idx, (x, z, yaw_deg) in enumerate(traj.states):
        lines.append(f"step {idx} {x!r} {z!r} {yaw_deg!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory(path: str) -> Trajectory:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "SMAPTRAJ 1":
        raise FormatError("missing SMAPTRAJ 1 header")
    camera_height = DEFAULT_CAMERA_HEIGHT
    states = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "camera_height":
            camera_height = float(parts[1])
        elif parts[0] == "step":
            states.append((float(parts[2]), float(parts[3]), float(parts[4])))
        else:
            raise FormatError(f"unknown trajectory record {parts[0]!r}")
    return Trajectory(states=states, camera_height=camera_height)
