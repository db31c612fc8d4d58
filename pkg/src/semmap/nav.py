"""Object-goal navigation planning on top of built maps.

Free space comes from the memory's height layer (floor-band thresholding),
the goal region from the semantic map, and the planner is A* over continuous
poses with a 12-way circle fan of 0.25 m steps. Edges are validated by
dragging the agent's radius disk along the motion segment over the free-space
grid; an episode succeeds when the agent stops within 1 m of a goal cell that
is in its line of sight.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import FormatError, NoObservations, NoPath, StartBlocked
from .geometry import GridSpec
from .imgproc import line_of_sight, morphology
from .mapdata import SemanticMap
from .memory import SpatialMemory
from .scene import (AGENT_RADIUS, SceneModel, ground_truth_freespace,
                    ground_truth_map)

STEP_LENGTH = 0.25        # meters per planner step
HEADING_STEP_DEG = 30     # successor fan spacing (12 headings)
STOP_RADIUS = 1.0         # meters to a goal cell at which stopping is legal
FLOOR_BAND = 0.05         # meters around the floor height counted as free
CLOSE_SIDE = 10           # square element for free-space closing
OPEN_SIDE = 10            # square element for goal-map opening
_HIST_BIN = 0.01          # floor-height histogram bin width (1 cm)


@dataclass
class Episode:
    episode_id: int
    start: tuple          # (x, z, yaw_deg)
    target_class: int


@dataclass
class EpisodeResult:
    episode_id: int
    success: bool
    path: list                    # poses (x, z, yaw_deg) actually traversed
    path_length: float            # p, meters
    shortest_length: float        # oracle l, meters (inf if unreachable)
    initial_dist: float           # d0, geodesic meters at start
    final_dist: float             # d, geodesic meters at stop


def estimate_freespace(mem: SpatialMemory, floor_band: float = FLOOR_BAND) -> np.ndarray:
    """Free-space raster from observed heights.

    Floor height is the mode of observed heights over 1 cm histogram bins;
    cells within +-floor_band of it are free, then a binary closing with a
    square element of side 10 removes pinholes.
    """
    obs = mem.observed.astype(bool)
    if not obs.any():
        raise NoObservations("memory has no observed cells")
    h = mem.heights[obs]
    bins = np.floor(h / _HIST_BIN).astype(np.int64)
    shift = bins.min()
    counts = np.bincount(bins - shift)
    floor = (int(np.argmax(counts)) + shift + 0.5) * _HIST_BIN
    free = obs & (np.abs(mem.heights - floor) <= floor_band)
    return morphology(free.astype(np.uint8), "close", CLOSE_SIDE)


def build_goal_map(sem: SemanticMap, target_class: int) -> np.ndarray:
    """Target-class cells, cleaned with a binary opening (square side 10)."""
    raw = (sem.labels == target_class).astype(np.uint8)
    if not raw.any():
        return raw
    return morphology(raw, "open", OPEN_SIDE)


def _disk_offsets(radius_m: float, resolution: float):
    rc = int(math.ceil(radius_m / resolution))
    dv, du = np.mgrid[-rc:rc + 1, -rc:rc + 1]
    keep = du * du + dv * dv <= rc * rc
    return du[keep], dv[keep]


def _segment_cells(g: GridSpec, a, b):
    """Cells whose row the segment a->b passes through (densely sampled)."""
    dist = math.hypot(b[0] - a[0], b[1] - a[1])
    n = max(1, int(math.ceil(dist / (g.resolution / 2.0)))) + 1
    ts = np.linspace(0.0, 1.0, n)
    xs = a[0] + ts * (b[0] - a[0])
    zs = a[1] + ts * (b[1] - a[1])
    u = np.floor((xs - g.origin_x) / g.resolution).astype(np.int64)
    v = np.floor((zs - g.origin_z) / g.resolution).astype(np.int64)
    return u, v


def _swept_ok(free: np.ndarray, g: GridSpec, a, b, du, dv) -> bool:
    """True iff the agent disk dragged along a->b stays on free cells."""
    u, v = _segment_cells(g, a, b)
    uu = (u[:, None] + du[None, :]).ravel()
    vv = (v[:, None] + dv[None, :]).ravel()
    if (uu < 0).any() or (vv < 0).any() or (uu >= free.shape[1]).any() \
            or (vv >= free.shape[0]).any():
        return False
    return bool(free[vv, uu].all())


def _goal_distance_m(goal: np.ndarray, g: GridSpec) -> np.ndarray:
    """Euclidean meters from each cell center to the nearest goal cell."""
    return ndimage.distance_transform_edt(goal == 0) * g.resolution


def _stop_cell(pose, g: GridSpec, goal_uv, goal_xy, observed) -> tuple | None:
    """Goal cell that satisfies the stop criterion at this pose, if any."""
    d = np.hypot(goal_xy[0] - pose[0], goal_xy[1] - pose[1])
    near = np.nonzero(d <= STOP_RADIUS)[0]
    if near.size == 0:
        return None
    pu = int(math.floor((pose[0] - g.origin_x) / g.resolution))
    pv = int(math.floor((pose[1] - g.origin_z) / g.resolution))
    if not (0 <= pu < observed.shape[1] and 0 <= pv < observed.shape[0]):
        return None
    for i in near[np.argsort(d[near], kind="stable")]:
        gv, gu = int(goal_uv[0][i]), int(goal_uv[1][i])
        if line_of_sight(observed, (pv, pu), (gv, gu)):
            return gv, gu
    return None


def plan_astar(free: np.ndarray, goal: np.ndarray, observed: np.ndarray,
               g: GridSpec, start, agent_radius: float = AGENT_RADIUS,
               greedy: bool = False, max_expansions: int = 200_000):
    """Plan a stop-legal path from start over the free-space raster.

    States are continuous poses snapped to (cell, 30 degree heading bucket)
    for deduplication; successors fan out 12 ways at 0.25 m. Returns the pose
    list including the start; a start already satisfying the stop criterion
    yields the single-pose path. Raises StartBlocked / NoPath.

    greedy switches to the one-step descend-the-heuristic policy (kept for
    ablation; incomplete by construction).
    """
    free = np.asarray(free).astype(bool)
    observed = np.asarray(observed).astype(bool)
    du, dv = _disk_offsets(agent_radius, g.resolution)
    x0, z0, yaw0 = float(start[0]), float(start[1]), float(start[2])
    if not _swept_ok(free, g, (x0, z0), (x0, z0), du, dv):
        raise StartBlocked("agent disk does not fit at the start pose")
    goal_uv = np.nonzero(goal)
    if goal_uv[0].size == 0:
        raise NoPath("goal region is empty")
    goal_xy = (g.origin_x + (goal_uv[1] + 0.5) * g.resolution,
               g.origin_z + (goal_uv[0] + 0.5) * g.resolution)
    dist_m = _goal_distance_m(np.asarray(goal), g)

    def heuristic(x, z):
        u = min(max(int(math.floor((x - g.origin_x) / g.resolution)), 0),
                free.shape[1] - 1)
        v = min(max(int(math.floor((z - g.origin_z) / g.resolution)), 0),
                free.shape[0] - 1)
        return max(0.0, dist_m[v, u] - STOP_RADIUS)

    def key(x, z, yaw):
        u = int(math.floor((x - g.origin_x) / g.resolution))
        v = int(math.floor((z - g.origin_z) / g.resolution))
        return u, v, int(round(yaw / HEADING_STEP_DEG)) % (360 // HEADING_STEP_DEG)

    def successors(x, z, yaw):
        for kk in range(360 // HEADING_STEP_DEG):
            hy = (yaw + kk * HEADING_STEP_DEG) % 360.0
            rad = math.radians(hy)
            yield (x + STEP_LENGTH * math.sin(rad),
                   z + STEP_LENGTH * math.cos(rad), hy)

    if _stop_cell((x0, z0), g, goal_uv, goal_xy, observed) is not None:
        return [(x0, z0, yaw0)]

    if greedy:
        pose = (x0, z0, yaw0)
        path = [pose]
        seen = {key(*pose)}
        for _ in range(max_expansions):
            best = None
            for nxt in successors(*pose):
                if key(*nxt) in seen:
                    continue
                if not _swept_ok(free, g, pose[:2], nxt[:2], du, dv):
                    continue
                h = heuristic(nxt[0], nxt[1])
                if best is None or h < best[0]:
                    best = (h, nxt)
            if best is None:
                raise NoPath("greedy policy is stuck")
            pose = best[1]
            seen.add(key(*pose))
            path.append(pose)
            if _stop_cell(pose[:2], g, goal_uv, goal_xy, observed) is not None:
                return path
        raise NoPath("greedy policy exceeded the step budget")

    start_pose = (x0, z0, yaw0)
    counter = 0
    frontier = [(heuristic(x0, z0), counter, 0.0, start_pose)]
    came_from = {key(*start_pose): None}
    best_g = {key(*start_pose): 0.0}
    expansions = 0
    while frontier:
        _, _, gc, pose = heapq.heappop(frontier)
        k = key(*pose)
        if gc > best_g.get(k, math.inf):
            continue
        if _stop_cell(pose[:2], g, goal_uv, goal_xy, observed) is not None:
            path = [pose]
            while came_from[key(*path[-1])] is not None:
                path.append(came_from[key(*path[-1])])
            return list(reversed(path))
        expansions += 1
        if expansions > max_expansions:
            break
        for nxt in successors(*pose):
            nk = key(*nxt)
            ng = gc + STEP_LENGTH
            if ng >= best_g.get(nk, math.inf):
                continue
            if not _swept_ok(free, g, pose[:2], nxt[:2], du, dv):
                continue
            best_g[nk] = ng
            came_from[nk] = pose
            counter += 1
            heapq.heappush(frontier, (ng + heuristic(nxt[0], nxt[1]),
                                      counter, ng, nxt))
    raise NoPath("frontier exhausted without reaching the goal")


def oracle_shortest(free_gt: np.ndarray, g: GridSpec, start,
                    goal: np.ndarray) -> float:
    """8-connected Dijkstra length (meters) to the 1 m stopping shell.

    Edge weights are resolution x {1, sqrt(2)}; returns +inf when the shell
    is unreachable, 0.0 when the start already lies on it.
    """
    free = np.asarray(free_gt).astype(bool)
    goal = np.asarray(goal)
    if not goal.any():
        return math.inf
    shell = _goal_distance_m(goal, g) <= STOP_RADIUS
    su = int(math.floor((start[0] - g.origin_x) / g.resolution))
    sv = int(math.floor((start[1] - g.origin_z) / g.resolution))
    h, w = free.shape
    if not (0 <= su < w and 0 <= sv < h):
        return math.inf
    if shell[sv, su]:
        return 0.0
    diag = math.sqrt(2.0) * g.resolution
    dist = np.full((h, w), math.inf)
    dist[sv, su] = 0.0
    heap = [(0.0, sv, su)]
    while heap:
        d, v, u = heapq.heappop(heap)
        if d > dist[v, u]:
            continue
        if shell[v, u]:
            return d
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                nv, nu = v + dr, u + dc
                if not (0 <= nv < h and 0 <= nu < w):
                    continue
                if not free[nv, nu]:
                    continue
                nd = d + (diag if dr and dc else g.resolution)
                if nd < dist[nv, nu]:
                    dist[nv, nu] = nd
                    heapq.heappush(heap, (nd, nv, nu))
    return math.inf


def _geodesic_field(free_gt: np.ndarray, goal: np.ndarray,
                    g: GridSpec) -> np.ndarray:
    """Multi-source Dijkstra meters-to-goal over GT free space union goal."""
    free = np.asarray(free_gt).astype(bool) | np.asarray(goal).astype(bool)
    h, w = free.shape
    dist = np.full((h, w), math.inf)
    heap = []
    gv, gu = np.nonzero(goal)
    for v, u in zip(gv, gu):
        dist[v, u] = 0.0
        heap.append((0.0, int(v), int(u)))
    heapq.heapify(heap)
    diag = math.sqrt(2.0) * g.resolution
    while heap:
        d, v, u = heapq.heappop(heap)
        if d > dist[v, u]:
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                nv, nu = v + dr, u + dc
                if not (0 <= nv < h and 0 <= nu < w and free[nv, nu]):
                    continue
                nd = d + (diag if dr and dc else g.resolution)
                if nd < dist[nv, nu]:
                    dist[nv, nu] = nd
                    heapq.heappush(heap, (nd, nv, nu))
    return dist


def run_episode(ep: Episode, scene: SceneModel, sem: SemanticMap,
                mem: SpatialMemory | None, free_source: str = "pred",
                greedy: bool = False) -> EpisodeResult:
    """Plan on the chosen maps, then execute against the GT world.

    The planned path is re-validated segment by segment against GT free
    space (the execution stand-in for a simulator): the agent stops at the
    first violating segment. Success requires a clean run that ends within
    1 m of a GT target-footprint cell with an unobstructed line of sight.
    A target class absent from the scene makes the episode a failure.
    """
    g = sem.grid
    free_gt = ground_truth_freespace(scene, g).astype(bool)
    gt_map, _ = ground_truth_map(scene, g)
    gt_goal = (gt_map.labels == ep.target_class).astype(np.uint8)
    du, dv = _disk_offsets(AGENT_RADIUS, g.resolution)
    start = ep.start
    start_pose = (float(start[0]), float(start[1]), float(start[2]))

    if free_source == "gt":
        free = free_gt
        # perfect knowledge: sight is blocked by obstacles, nothing else
        observed = free_gt | gt_goal.astype(bool)
    elif free_source == "pred":
        if mem is None:
            raise ValueError("predicted free space needs the spatial memory")
        free = estimate_freespace(mem).astype(bool)
        observed = mem.observed.astype(bool)
    else:
        raise ValueError(f"unknown free source {free_source!r}")

    target_present = bool(gt_goal.any())
    shortest = oracle_shortest(free_gt, g, start_pose, gt_goal) \
        if target_present else math.inf
    geo = _geodesic_field(free_gt, gt_goal, g) if target_present else None

    def geo_at(x, z):
        if geo is None:
            return math.nan
        u = min(max(int(math.floor((x - g.origin_x) / g.resolution)), 0),
                free_gt.shape[1] - 1)
        v = min(max(int(math.floor((z - g.origin_z) / g.resolution)), 0),
                free_gt.shape[0] - 1)
        d = geo[v, u]
        if math.isinf(d):  # cut off in GT: fall back to straight-line meters
            gv, gu = np.nonzero(gt_goal)
            gx = g.origin_x + (gu + 0.5) * g.resolution
            gz = g.origin_z + (gv + 0.5) * g.resolution
            d = float(np.hypot(gx - x, gz - z).min())
        return float(d)

    d0 = geo_at(start_pose[0], start_pose[1])

    goal = build_goal_map(sem, ep.target_class)
    try:
        planned = plan_astar(free, goal, observed.astype(np.uint8), g,
                             start_pose, greedy=greedy)
    except (NoPath, StartBlocked):
        return EpisodeResult(ep.episode_id, False, [start_pose], 0.0,
                             shortest, d0, geo_at(*start_pose[:2]))

    # execute: walk segments over GT free space, stop at the first collision
    path = [planned[0]]
    collided = False
    length = 0.0
    for prev, nxt in zip(planned, planned[1:]):
        if not _swept_ok(free_gt, g, prev[:2], nxt[:2], du, dv):
            collided = True
            break
        length += math.hypot(nxt[0] - prev[0], nxt[1] - prev[1])
        path.append(nxt)
    final = path[-1]

    success = False
    if target_present and not collided:
        vis = (free_gt | gt_goal.astype(bool)).astype(np.uint8)
        success = _stop_cell(final[:2], g, np.nonzero(gt_goal),
                             (g.origin_x + (np.nonzero(gt_goal)[1] + 0.5) * g.resolution,
                              g.origin_z + (np.nonzero(gt_goal)[0] + 0.5) * g.resolution),
                             vis) is not None
    return EpisodeResult(ep.episode_id, success, path, length, shortest,
                         d0, geo_at(final[0], final[1]))


# ---------------------------------------------------------------------------
# Episode file format
# ---------------------------------------------------------------------------

def write_episodes(episodes, path: str) -> None:
    lines = ["SMAPEPIS 1"]
    for ep in episodes:
        x, z, yaw = ep.start
        lines.append(f"episode {ep.episode_id} {x!r} {z!r} {yaw!r} "
                     f"{ep.target_class}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_episodes(path: str):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "SMAPEPIS 1":
        raise FormatError("missing SMAPEPIS 1 header")
    out = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] != "episode" or len(parts) != 6:
            raise FormatError(f"bad episode record: {ln!r}")
        out.append(Episode(episode_id=int(parts[1]),
                           start=(float(parts[2]), float(parts[3]),
                                  float(parts[4])),
                           target_class=int(parts[5])))
    return out


def write_results(results, path: str) -> None:
    """One line per episode: id success p l d0 d."""
    lines = []
    for r in results:
        lines.append(f"{r.episode_id} {int(r.success)} {r.path_length!r} "
                     f"{r.shortest_length!r} {r.initial_dist!r} "
                     f"{r.final_dist!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
