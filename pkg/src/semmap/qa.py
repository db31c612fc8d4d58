"""Counting question answering over built maps.

A counting question asks how many instances of a target class the map
contains; the answer domain is 0..19 plus a "20+" bucket (encoded as 20).
Counting runs connected components over the target-class mask with a small
minimum area to reject label splatter. The prior baseline answers every
question with the modal training answer for that class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTable, FormatError, LengthMismatch
from .imgproc import connected_components
from .mapdata import NUM_CLASSES, SemanticMap

MIN_AREA_CELLS = 25     # 100 cm^2 at 2 cm cells
MAX_COUNT = 20          # answers clip to 0..19 and the "20+" bucket


@dataclass
class CountQuestion:
    question_id: int
    target_class: int

    def __post_init__(self):
        if not (1 <= self.target_class < NUM_CLASSES):
            raise ValueError("target class must be in 1..12")


def count_instances(sem: SemanticMap, target_class: int,
                    connectivity: int = 8,
                    min_area_cells: int = MIN_AREA_CELLS) -> int:
    """Count target-class components with area >= min_area_cells.

    The result is clipped to the answer domain, so 20 means "20 or more".
    """
    mask = (sem.labels == target_class).astype(np.uint8)
    labeled, n = connected_components(mask, connectivity)
    if n == 0:
        return 0
    areas = np.bincount(labeled.ravel(), minlength=n + 1)[1:]
    return int(min(int((areas >= min_area_cells).sum()), MAX_COUNT))


def count_instances_windowed(sem: SemanticMap, target_class: int,
                             window_m: float = 5.0,
                             min_area_cells: int = MIN_AREA_CELLS) -> int:
    """Sliding-window count accumulation (kept for fidelity experiments).

    Tiles the map with non-overlapping windows and sums per-window component
    counts; instances crossing window borders are double-counted, which is
    exactly the artifact global components avoid.
    """
    g = sem.grid
    side = max(1, int(round(window_m / g.resolution)))
    total = 0
    for v0 in range(0, g.v_size, side):
        for u0 in range(0, g.u_size, side):
            tile = sem.labels[v0:v0 + side, u0:u0 + side]
            mask = (tile == target_class).astype(np.uint8)
            labeled, n = connected_components(mask, 8)
            if n:
                areas = np.bincount(labeled.ravel(), minlength=n + 1)[1:]
                total += int((areas >= min_area_cells).sum())
    return int(min(total, MAX_COUNT))


def prior_baseline(train_answers: dict) -> dict:
    """Modal training answer per class; ties break toward the smaller count.

    train_answers maps class_id -> list of observed answers.
    """
    out = {}
    for cls, answers in train_answers.items():
        if not answers:
            raise EmptyTable(f"no training answers for class {cls}")
        counts = np.bincount(np.asarray(answers, dtype=np.int64),
                             minlength=MAX_COUNT + 1)
        out[cls] = int(np.argmax(counts))
    if not out:
        raise EmptyTable("training answer table is empty")
    return out


def eval_qa(pred_answers, gt_answers, target_classes) -> dict:
    """Accuracy, class-balanced accuracy, and RMSE over aligned answers.

    The 20+ bucket enters RMSE as the number 20. Class-balanced accuracy is
    the mean of per-target-class accuracies.
    """
    pred = np.asarray(pred_answers, dtype=np.int64)
    gt = np.asarray(gt_answers, dtype=np.int64)
    cls = np.asarray(target_classes, dtype=np.int64)
    if not (pred.shape == gt.shape == cls.shape) or pred.ndim != 1:
        raise LengthMismatch("answer/class lists must align")
    if pred.size == 0:
        raise LengthMismatch("no questions to score")
    correct = pred == gt
    acc = float(correct.mean())
    per_class = [float(correct[cls == c].mean())
                 for c in np.unique(cls)]
    rmse = float(np.sqrt(np.mean((np.minimum(pred, MAX_COUNT)
                                  - np.minimum(gt, MAX_COUNT)) ** 2.0)))
    return {"accuracy": acc,
            "class_balanced_accuracy": float(np.mean(per_class)),
            "rmse": rmse, "questions": int(pred.size)}


# ---------------------------------------------------------------------------
# Question / answer file format
# ---------------------------------------------------------------------------

def write_questions(questions, path: str) -> None:
    lines = ["SMAPQA 1"]
    for q in questions:
        lines.append(f"q {q.question_id} count {q.target_class}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_questions(path: str):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "SMAPQA 1":
        raise FormatError("missing SMAPQA 1 header")
    out = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 4 or parts[0] != "q" or parts[2] != "count":
            raise FormatError(f"bad question record: {ln!r}")
        out.append(CountQuestion(question_id=int(parts[1]),
                                 target_class=int(parts[3])))
    return out


def write_answers(answers, path: str) -> None:
    """answers: list of (question_id, count)."""
    lines = [f"a {qid} {count}" for qid, count in answers]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def read_answers(path: str):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    out = []
    for ln in lines:
        parts = ln.split()
        if len(parts) != 3 or parts[0] != "a":
            raise FormatError(f"bad answer record: {ln!r}")
        out.append((int(parts[1]), int(parts[2])))
    return out
