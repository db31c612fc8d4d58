"""Independent brute-force reference implementations used to pin behavior.

Everything here is deliberately slow and simple: per-pixel loops, all-pairs
matching, recursive flood fill. The package must agree with these exactly
(or within the stated tolerances); the oracles never import the modules they
check beyond plain data types.
"""

import math

import numpy as np

NUM_CLASSES = 13


# ---------------------------------------------------------------------------
# geometry / raycasting
# ---------------------------------------------------------------------------

def ray_aabb_depth(origin, direction, lo, hi):
    """Entry t of a ray into an AABB, or None. Scalar slab test."""
    t_near, t_far = -math.inf, math.inf
    for a in range(3):
        if direction[a] == 0.0:
            if not (lo[a] <= origin[a] <= hi[a]):
                return None
            continue
        t1 = (lo[a] - origin[a]) / direction[a]
        t2 = (hi[a] - origin[a]) / direction[a]
        t_near = max(t_near, min(t1, t2))
        t_far = min(t_far, max(t1, t2))
    if t_near > t_far or t_near <= 0.0:
        return None
    return t_near


def pixel_depth_oracle(scene, k, pose, max_range=10.0):
    """Per-pixel nearest-hit depths via scalar slab tests; (H, W) array."""
    h, w = k.height, k.width
    origin = pose.camera_center()
    out = np.zeros((h, w))
    for j in range(h):
        for i in range(w):
            d_cam = np.array([(i - k.cx) / k.fx, (j - k.cy) / k.fy, 1.0])
            d_world = pose.rotation.T @ d_cam
            best = math.inf
            # floor plane y=0, clipped to the floor rectangle
            if d_world[1] != 0.0:
                t = -origin[1] / d_world[1]
                if t > 0:
                    px = origin[0] + t * d_world[0]
                    pz = origin[2] + t * d_world[2]
                    fx0, fz0, fx1, fz1 = scene.floor
                    if fx0 <= px <= fx1 and fz0 <= pz <= fz1:
                        best = t
            for box in scene.boxes:
                lo = (box.aabb[0], box.aabb[1], box.aabb[2])
                hi = (box.aabb[3], box.aabb[4], box.aabb[5])
                t = ray_aabb_depth(origin, d_world, lo, hi)
                if t is not None and t < best:
                    best = t
            out[j, i] = best if best <= max_range else 0.0
    return out


def project_frame_oracle(frame, k, grid, ceiling_margin=0.50):
    """Brute-force per-pixel projection + per-cell max-height grouping.

    Returns {(u, v): (class_id, height, pixel_index)}.
    """
    h, w = frame.depth.shape
    winners = {}
    for j in range(h):
        for i in range(w):
            if frame.depth[j, i] <= 0:
                continue
            # same forward nudge as the implementation: bin exact face hits
            # into the occupied cell
            d = frame.depth[j, i] + 1.0e-5
            cam = np.array([(i - k.cx) / k.fx * d, (j - k.cy) / k.fy * d, d])
            p = frame.pose.rotation.T @ cam - frame.pose.translation
            if p[1] > frame.camera_y + ceiling_margin:
                continue
            u = math.floor((p[0] - grid.origin_x) / grid.resolution)
            v = math.floor((p[2] - grid.origin_z) / grid.resolution)
            if not (0 <= u < grid.u_size and 0 <= v < grid.v_size):
                continue
            pix = j * w + i
            cur = winners.get((u, v))
            if cur is None or p[1] > cur[1] or (p[1] == cur[1] and pix < cur[2]):
                winners[(u, v)] = (int(frame.labels[j, i]), float(p[1]), pix)
    return winners


# ---------------------------------------------------------------------------
# raster primitives
# ---------------------------------------------------------------------------

def flood_fill_components(mask, connectivity=4):
    """Component count by iterative flood fill."""
    mask = np.asarray(mask) != 0
    h, w = mask.shape
    seen = np.zeros((h, w), dtype=bool)
    if connectivity == 4:
        nbrs = ((1, 0), (-1, 0), (0, 1), (0, -1))
    else:
        nbrs = tuple((dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)
                     if (dr, dc) != (0, 0))
    count = 0
    for r0 in range(h):
        for c0 in range(w):
            if not mask[r0, c0] or seen[r0, c0]:
                continue
            count += 1
            stack = [(r0, c0)]
            seen[r0, c0] = True
            while stack:
                r, c = stack.pop()
                for dr, dc in nbrs:
                    nr, nc = r + dr, c + dc
                    if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] \
                            and not seen[nr, nc]:
                        seen[nr, nc] = True
                        stack.append((nr, nc))
    return count


def window_mode_oracle(raster, k, ignore_void=False):
    """Per-cell window mode with clipped borders and the floor(k/2) anchor."""
    raster = np.asarray(raster)
    h, w = raster.shape
    lo = k // 2
    hi = k - 1 - lo
    out = np.zeros_like(raster)
    for r in range(h):
        for c in range(w):
            win = raster[max(0, r - lo):min(h, r + hi + 1),
                         max(0, c - lo):min(w, c + hi + 1)].ravel()
            if ignore_void:
                win = win[win != 0]
                if win.size == 0:
                    out[r, c] = 0
                    continue
            counts = np.bincount(win.astype(np.int64))
            out[r, c] = int(np.argmax(counts))
    return out


def window_sum_oracle(scores, k):
    """Naive k x k window sums (clipped) over the trailing class axis."""
    h, w, c = scores.shape
    lo = k // 2
    hi = k - 1 - lo
    out = np.zeros_like(scores)
    for r in range(h):
        for cc in range(w):
            out[r, cc] = scores[max(0, r - lo):min(h, r + hi + 1),
                                max(0, cc - lo):min(w, cc + hi + 1)].sum(
                                    axis=(0, 1))
    return out


# ---------------------------------------------------------------------------
# boundary F1
# ---------------------------------------------------------------------------

def boundary_cells_oracle(labels, mask, cls):
    """Class cells 4-adjacent (within mask) to a different-label mask cell."""
    labels = np.asarray(labels)
    mask = np.asarray(mask).astype(bool)
    h, w = labels.shape
    out = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            if not mask[r, c] or labels[r, c] != cls:
                continue
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nr, nc = r + dr, c + dc
                if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] \
                        and labels[nr, nc] != cls:
                    out[r, c] = True
                    break
    return out


def bf1_oracle(gt, pred, mask, cls, theta=3):
    """All-pairs Chebyshev boundary matching for one class."""
    gb = np.argwhere(boundary_cells_oracle(gt, mask, cls))
    pb = np.argwhere(boundary_cells_oracle(pred, mask, cls))
    if len(gb) == 0 and len(pb) == 0:
        return 1.0
    if len(gb) == 0 or len(pb) == 0:
        return 0.0

    def matched(cells, others):
        hits = 0
        for r, c in cells:
            for r2, c2 in others:
                if max(abs(r - r2), abs(c - c2)) <= theta:
                    hits += 1
                    break
        return hits

    precision = matched(pb, gb) / len(pb)
    recall = matched(gb, pb) / len(gb)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def mean_bf1_oracle(gt, pred, mask, theta=3):
    """Mean BF1 over classes present (non-void) in GT or prediction."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    mask = np.asarray(mask).astype(bool)
    vals = []
    for cls in range(1, NUM_CLASSES):
        gt_n = np.count_nonzero((gt == cls) & mask)
        pred_n = np.count_nonzero((pred == cls) & mask)
        if gt_n == 0 and pred_n == 0:
            continue
        vals.append(bf1_oracle(gt, pred, mask, cls, theta))
    return float(np.mean(vals)) if vals else float("nan")
