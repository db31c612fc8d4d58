"""Evaluation metrics for top-down semantic maps.

All metrics operate on a pair of label rasters restricted to an evaluation
mask (normally the observed mask, so never-seen cells cannot reward or
punish a method). Per-class metrics cover class ids 1..12; overall accuracy
counts void cells too unless excluded.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import EmptyInput, LengthMismatch
from .mapdata import NUM_CLASSES
from .rng import Rng

BOUNDARY_TOLERANCE = 3  # Chebyshev cell distance for boundary matching


def confusion_matrix(gt: np.ndarray, pred: np.ndarray,
                     mask: np.ndarray) -> np.ndarray:
    """(13, 13) count matrix, rows = ground truth, cols = prediction."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    m = np.asarray(mask).astype(bool)
    if gt.shape != pred.shape or gt.shape != m.shape:
        raise LengthMismatch("gt/pred/mask dims differ")
    g = gt[m].astype(np.int64)
    p = pred[m].astype(np.int64)
    flat = np.bincount(g * NUM_CLASSES + p, minlength=NUM_CLASSES * NUM_CLASSES)
    return flat.reshape(NUM_CLASSES, NUM_CLASSES)


def _boundary_cells(labels: np.ndarray, mask: np.ndarray, cls: int) -> np.ndarray:
    """Cells of ``cls`` 4-adjacent (within the mask) to a different label."""
    inside = np.asarray(mask).astype(bool)
    lab = np.asarray(labels).astype(np.int64)
    is_cls = (lab == cls) & inside
    boundary = np.zeros_like(is_cls)
    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        shifted_lab = np.full_like(lab, -1)
        shifted_in = np.zeros_like(inside)
        src = (slice(max(dr, 0), lab.shape[0] + min(dr, 0)),
               slice(max(dc, 0), lab.shape[1] + min(dc, 0)))
        dst = (slice(max(-dr, 0), lab.shape[0] + min(-dr, 0)),
               slice(max(-dc, 0), lab.shape[1] + min(-dc, 0)))
        shifted_lab[dst] = lab[src]
        shifted_in[dst] = inside[src]
        boundary |= is_cls & shifted_in & (shifted_lab != cls)
    return boundary


def _bf1(gt_b: np.ndarray, pred_b: np.ndarray, theta: int) -> float:
    """Boundary F1 with square (Chebyshev) matching tolerance theta."""
    if not gt_b.any() and not pred_b.any():
        return 1.0
    if not gt_b.any() or not pred_b.any():
        return 0.0
    side = 2 * theta + 1
    gt_near = ndimage.maximum_filter(gt_b.astype(np.uint8), size=side,
                                     mode="constant", cval=0).astype(bool)
    pred_near = ndimage.maximum_filter(pred_b.astype(np.uint8), size=side,
                                       mode="constant", cval=0).astype(bool)
    precision = (pred_b & gt_near).sum() / pred_b.sum()
    recall = (gt_b & pred_near).sum() / gt_b.sum()
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def eval_segmentation(gt: np.ndarray, pred: np.ndarray, mask: np.ndarray,
                      include_void_in_acc: bool = True,
                      penalize_hallucinated: bool = True,
                      boundary_tolerance: int = BOUNDARY_TOLERANCE) -> dict:
    """Full metric suite over one map pair.

    Returns a dict with overall ``acc``, per-class arrays (index 0 unused,
    NaN where undefined), and macro means:

    * mean_recall over classes present in GT;
    * mean_precision over classes present in the prediction (or GT-present
      classes when penalize_hallucinated is off);
    * mean_iou / mean_bf1 over classes present in GT or prediction, which
      makes both means symmetric under swapping gt and pred.
    """
    m = np.asarray(mask).astype(bool)
    if not m.any():
        raise EmptyInput("evaluation mask is empty")
    cm = confusion_matrix(gt, pred, mask)

    if include_void_in_acc:
        acc = float(np.trace(cm)) / float(cm.sum())
    else:
        nonvoid = cm[1:, :]
        total = nonvoid.sum()
        acc = float(np.trace(cm[1:, 1:])) / float(total) if total else float("nan")

    recall = np.full(NUM_CLASSES, np.nan)
    precision = np.full(NUM_CLASSES, np.nan)
    iou = np.full(NUM_CLASSES, np.nan)
    bf1 = np.full(NUM_CLASSES, np.nan)
    gt_present = np.zeros(NUM_CLASSES, dtype=bool)
    pred_present = np.zeros(NUM_CLASSES, dtype=bool)
    for c in range(1, NUM_CLASSES):
        tp = cm[c, c]
        gt_n = cm[c, :].sum()
        pred_n = cm[:, c].sum()
        gt_present[c] = gt_n > 0
        pred_present[c] = pred_n > 0
        if gt_n:
            recall[c] = tp / gt_n
        if pred_n:
            precision[c] = tp / pred_n
        union = gt_n + pred_n - tp
        if union:
            iou[c] = tp / union
        if gt_n or pred_n:
            bf1[c] = _bf1(_boundary_cells(gt, m, c),
                          _boundary_cells(pred, m, c), boundary_tolerance)

    either = gt_present | pred_present
    # hallucinated classes (predicted, absent from GT) have precision 0; with
    # penalize_hallucinated off they drop out of the mean entirely
    prec_set = pred_present if penalize_hallucinated else (pred_present & gt_present)

    def _mean(values, sel):
        return float(np.mean(values[sel])) if sel.any() else float("nan")

    return {
        "acc": acc,
        "recall": recall,
        "precision": precision,
        "iou": iou,
        "bf1": bf1,
        "mean_recall": _mean(recall, gt_present),
        "mean_precision": _mean(precision, prec_set),
        "mean_iou": _mean(np.where(np.isnan(iou), 0.0, iou), either),
        "mean_bf1": _mean(np.where(np.isnan(bf1), 0.0, bf1), either),
        "confusion": cm,
    }


def bootstrap_se(per_scene_values, n_resamples: int = 1000,
                 seed: int = 0) -> float:
    """Bootstrap standard error of the mean over per-scene metric values.

    Resamples the scene list with replacement n_resamples times and returns
    the population standard deviation (ddof = 0) of the resampled means.
    Deterministic for a fixed seed.
    """
    vals = np.asarray(per_scene_values, dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise EmptyInput("need a non-empty 1-d list of per-scene values")
    rng = Rng(seed)
    n = vals.size
    idx = np.empty((n_resamples, n), dtype=np.int64)
    for b in range(n_resamples):
        for i in range(n):
            idx[b, i] = rng.randint(n)
    means = vals[idx].mean(axis=1)
    return float(means.std(ddof=0))


def _episode_field(ep, name):
    return ep[name] if isinstance(ep, dict) else getattr(ep, name)


def eval_navigation(episodes) -> dict:
    """Aggregate episode records into success rate, SPL, and soft SPL.

    Episodes carry ``success``, ``path_length`` (p), ``shortest_length``
    (oracle l), and geodesic goal distances ``initial_dist`` (d0) /
    ``final_dist`` (d). Per episode:

    * SPL = success * l / max(p, l), with the start-at-goal case (l = 0,
      p = 0) counting 1;
    * soft SPL = clamp((1 - d/d0) * l / max(p, l), 0, 1), progress 1 when
      d0 = 0;
    * unreachable goals (non-finite l) contribute 0 to both.

    mean_dist_to_goal averages finite final distances.
    """
    episodes = list(episodes)
    if not episodes:
        raise EmptyInput("no episodes to aggregate")
    succ = spl = soft = 0.0
    dists = []
    for ep in episodes:
        s = 1.0 if _episode_field(ep, "success") else 0.0
        succ += s
        shortest = float(_episode_field(ep, "shortest_length"))
        path = float(_episode_field(ep, "path_length"))
        d0 = float(_episode_field(ep, "initial_dist"))
        d = float(_episode_field(ep, "final_dist"))
        if np.isfinite(d):
            dists.append(d)
        if not np.isfinite(shortest):
            continue
        ratio = 1.0 if (shortest == 0.0 and path == 0.0) \
            else shortest / max(path, shortest)
        spl += s * ratio
        if np.isfinite(d0) and np.isfinite(d):
            progress = 1.0 if d0 == 0.0 else 1.0 - d / d0
            soft += min(1.0, max(0.0, progress * ratio))
    n = len(episodes)
    return {"success_rate": succ / n, "spl": spl / n, "soft_spl": soft / n,
            "mean_dist_to_goal": float(np.mean(dists)) if dists else float("nan"),
            "episodes": n}
