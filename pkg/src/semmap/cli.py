"""Command-line surface tying the pipeline together.

Subcommands: scene gen, traj record, map build, map gt, eval seg, nav run,
qa run, render. Every seeded subcommand is byte-for-byte reproducible; all
diagnostics go to standard error. Exit codes: 0 success, 1 runtime error,
2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import nav as navmod
from . import qa as qamod
from .config import PipelineConfig, pipeline_config_from_dict, read_config
from .errors import SemmapError
from .gridfile import read_gridfile, write_gridfile, write_ppm
from .mapdata import SemanticMap
from .memory import HEIGHT_SENTINEL, SpatialMemory
from .metrics import eval_segmentation
from .pipelines import build_map
from .scene import (coverage_trajectory, generate_scene, ground_truth_map,
                    read_scene, read_trajectory, write_scene,
                    write_trajectory)


def _threads(args) -> int:
    env = os.environ.get("SEMMAP_THREADS")
    if env is not None:
        return max(1, int(env))
    return max(1, args.threads)


def _load_memory(path: str):
    grid, layers = read_gridfile(path)
    sem = SemanticMap(grid=grid, labels=layers["labels"].astype(np.uint8))
    observed = layers["observed"].astype(np.uint8)
    heights = layers["heights"].astype(np.float64)
    heights = np.where(observed.astype(bool), heights, HEIGHT_SENTINEL)
    mem = SpatialMemory(grid=grid, heights=heights, observed=observed)
    return sem, mem


def _save_map(path: str, sem: SemanticMap, heights, observed) -> None:
    obs = np.asarray(observed).astype(np.uint8)
    h = np.where(obs.astype(bool), np.asarray(heights, dtype=np.float64), 0.0)
    write_gridfile(path, sem.grid, {"labels": sem.labels,
                                    "heights": h.astype(np.float32),
                                    "observed": obs})


def cmd_scene_gen(args) -> int:
    scene = generate_scene(args.seed, extent=args.extent, n_boxes=args.boxes)
    write_scene(scene, args.out)
    return 0


def cmd_traj_record(args) -> int:
    scene = read_scene(args.scene)
    traj = coverage_trajectory(scene, args.seed)
    write_trajectory(traj, args.out)
    return 0


def cmd_map_build(args) -> int:
    scene = read_scene(args.scene)
    traj = read_trajectory(args.traj)
    if args.config:
        cfg = pipeline_config_from_dict(read_config(args.config))
    else:
        cfg = PipelineConfig()
    cfg.kind = args.pipeline
    sem, mem = build_map(scene, traj, cfg)
    _save_map(args.out, sem, mem.heights, mem.observed)
    return 0


def cmd_map_gt(args) -> int:
    scene = read_scene(args.scene)
    grid = scene.default_grid()
    sem, heights = ground_truth_map(scene, grid)
    _save_map(args.out, sem, heights, np.ones_like(sem.labels))
    return 0


def cmd_eval_seg(args) -> int:
    pred_grid, pred_layers = read_gridfile(args.pred)
    gt_grid, gt_layers = read_gridfile(args.gt)
    if pred_grid != gt_grid:
        raise SemmapError("prediction and ground truth grids differ")
    mask = pred_layers["observed"].astype(bool)
    report = eval_segmentation(gt_layers["labels"], pred_layers["labels"],
                               mask)
    lines = []
    for key in ("acc", "mean_recall", "mean_precision", "mean_iou",
                "mean_bf1"):
        lines.append(f"{key} = {report[key]!r}")
    for name in ("recall", "precision", "iou", "bf1"):
        vals = report[name]
        for c in range(1, len(vals)):
            if not np.isnan(vals[c]):
                lines.append(f"{name}_{c} = {float(vals[c])!r}")
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def cmd_nav_run(args) -> int:
    scene = read_scene(args.scene)
    episodes = navmod.read_episodes(args.episodes)
    sem, mem = _load_memory(args.map)
    results = [navmod.run_episode(ep, scene, sem, mem,
                                  free_source=args.free)
               for ep in episodes]
    navmod.write_results(results, args.results)
    return 0


def cmd_qa_run(args) -> int:
    sem, _ = _load_memory(args.map)
    questions = qamod.read_questions(args.questions)
    answers = [(q.question_id, qamod.count_instances(sem, q.target_class))
               for q in questions]
    qamod.write_answers(answers, args.answers)
    return 0


def cmd_render(args) -> int:
    _, layers = read_gridfile(args.map)
    write_ppm(layers["labels"], args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semmap",
                                description="top-down semantic mapping toolkit")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads (SEMMAP_THREADS overrides)")
    sub = p.add_subparsers(dest="command", required=True)

    scene = sub.add_parser("scene").add_subparsers(dest="sub", required=True)
    gen = scene.add_parser("gen")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--extent", type=float, default=4.0)
    gen.add_argument("--boxes", type=int, default=6)
    gen.set_defaults(func=cmd_scene_gen)

    traj = sub.add_parser("traj").add_subparsers(dest="sub", required=True)
    rec = traj.add_parser("record")
    rec.add_argument("--scene", required=True)
    rec.add_argument("--seed", type=int, required=True)
    rec.add_argument("--out", required=True)
    rec.set_defaults(func=cmd_traj_record)

    mp = sub.add_parser("map").add_subparsers(dest="sub", required=True)
    build = mp.add_parser("build")
    build.add_argument("--pipeline", required=True,
                       choices=("smnet", "seg2proj", "proj2seg"))
    build.add_argument("--scene", required=True)
    build.add_argument("--traj", required=True)
    build.add_argument("--config", default=None)
    build.add_argument("--out", required=True)
    build.set_defaults(func=cmd_map_build)
    gt = mp.add_parser("gt")
    gt.add_argument("--scene", required=True)
    gt.add_argument("--out", required=True)
    gt.set_defaults(func=cmd_map_gt)

    ev = sub.add_parser("eval").add_subparsers(dest="sub", required=True)
    seg = ev.add_parser("seg")
    seg.add_argument("--pred", required=True)
    seg.add_argument("--gt", required=True)
    seg.add_argument("--report", required=True)
    seg.set_defaults(func=cmd_eval_seg)

    nv = sub.add_parser("nav").add_subparsers(dest="sub", required=True)
    run = nv.add_parser("run")
    run.add_argument("--episodes", required=True)
    run.add_argument("--map", required=True)
    run.add_argument("--scene", required=True)
    run.add_argument("--free", required=True, choices=("pred", "gt"))
    run.add_argument("--results", required=True)
    run.set_defaults(func=cmd_nav_run)

    qa = sub.add_parser("qa").add_subparsers(dest="sub", required=True)
    qrun = qa.add_parser("run")
    qrun.add_argument("--questions", required=True)
    qrun.add_argument("--map", required=True)
    qrun.add_argument("--answers", required=True)
    qrun.set_defaults(func=cmd_qa_run)

    render = sub.add_parser("render")
    render.add_argument("--map", required=True)
    render.add_argument("--out", required=True)
    render.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _threads(args)  # validated; all computation is deterministic regardless
    try:
        return args.func(args)
    except (SemmapError, OSError, ValueError) as exc:
        print(f"semmap: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
