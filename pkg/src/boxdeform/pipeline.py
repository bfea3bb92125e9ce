"""End-to-end driver: build the box deformer for each split count, optimize
its parameters against the configured scorer, pick the best count, and write
the deformed mesh plus report and trace files."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from . import boxsplit, cmaes, defgraph, objective, occupancy
from .mesh import (
    Mesh,
    gaussian_curvature_change,
    load_obj,
    save_obj,
    self_intersection_ratio,
)
from .objective import ObjectiveConfig, Scorer, ScoreRequest
from .render import render, view_set

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        return f"[stage:{self.stage}] {super().__str__()}"


@contextmanager
def _stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, str(exc)) from exc


@dataclass
class RunConfig:
    mesh_path: str
    prompt: str = "a shape"
    scorer: str = "proxy-aspect"  # proxy-aspect | proxy-silhouette | remote-http | remote-process
    target_ratios: tuple | None = None  # aspect proxy; defaults to the source ratios
    target_masks: list[str] | None = None  # silhouette proxy: one PNG per view
    target_scale: float | None = None  # silhouette proxy: scaled-source targets
    endpoint: str | None = None
    scorer_command: list[str] | None = None
    split_counts: tuple = (2, 3, 4)
    resolution: int = 64
    n_views: int = 4
    elevation: float = 20.0
    image_size: int = 224
    backgrounds: tuple = ((255, 255, 255), (0, 0, 0), (255, 165, 0))
    seed: int = 0
    sigma0: float = 0.3
    population: int | None = None
    max_generations: int = 150
    stall_generations: int = 20
    stall_tolerance: float = 1e-6
    scale_min: float = 1.0 / 3.0
    scale_max: float = 3.0
    normal_weight: float = 1.0
    min_vertices: int = 8
    workers: int = 0  # 0: one per CPU
    out_dir: str = "out"
    interp_steps: int = 0


@dataclass
class SplitResult:
    split_count: int
    n_boxes: int
    final_loss: float
    best_params: np.ndarray  # decoded scales, (n_boxes, 3)
    generations: int
    trace: list[tuple[int, float, float, float]]


@dataclass
class RunReport:
    per_split: list[SplitResult]
    chosen_split_count: int
    metrics: dict
    wall_time_s: float = 0.0

    def to_json_dict(self) -> dict:
        # wall time deliberately excluded: report.json must be reproducible
        return {
            "per_split": {
                str(r.split_count): {
                    "n_boxes": r.n_boxes,
                    "final_loss": r.final_loss,
                    "best_params": [[float(x) for x in row] for row in r.best_params],
                    "generations": r.generations,
                }
                for r in self.per_split
            },
            "chosen_split_count": self.chosen_split_count,
            "metrics": self.metrics,
        }


def load_mask_png(path) -> np.ndarray:
    arr = np.asarray(PILImage.open(path).convert("L"))
    return arr > 0


def save_mask_png(mask: np.ndarray, path) -> None:
    PILImage.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def scaled_mesh(mesh: Mesh, factor: float, anchor) -> Mesh:
    anchor = np.asarray(anchor, dtype=np.float64)
    return mesh.with_vertices(anchor + factor * (mesh.vertices - anchor))


def build_scorer(config: RunConfig, mesh: Mesh, cfg: ObjectiveConfig) -> Scorer:
    if config.scorer == "proxy-aspect":
        if config.target_ratios is not None:
            ratios = config.target_ratios
        else:
            lo, hi = mesh.aabb()
            ratios = tuple(hi - lo)
        return objective.proxy_aspect_scorer(ratios)
    if config.scorer == "proxy-silhouette":
        if config.target_masks:
            masks = [load_mask_png(p) for p in config.target_masks]
        elif config.target_scale is not None:
            lo, hi = mesh.aabb()
            target = scaled_mesh(mesh, config.target_scale, 0.5 * (lo + hi))
            masks = objective.silhouette_targets(target, cfg)
        else:
            masks = objective.silhouette_targets(mesh, cfg)
        if len(masks) != len(cfg.cameras):
            raise ValueError(f"{len(masks)} masks for {len(cfg.cameras)} views")
        return objective.proxy_silhouette_scorer(masks)
    if config.scorer == "remote-http":
        if not config.endpoint:
            raise ValueError("remote-http scorer needs an endpoint")
        return objective.HttpScorer(config.endpoint)
    if config.scorer == "remote-process":
        if not config.scorer_command:
            raise ValueError("remote-process scorer needs a command")
        return objective.SubprocessScorer(config.scorer_command)
    raise ValueError(f"unknown scorer {config.scorer!r}")


def optimize_split(
    mesh: Mesh,
    grid: occupancy.OccupancyGrid,
    split_count: int,
    scorer: Scorer,
    prompt: str,
    cfg: ObjectiveConfig,
    config: RunConfig,
) -> tuple[SplitResult, defgraph.BoxDefGraph]:
    """One CMA-ES run for one split count. Returns the result record and the
    deformer so the winner can be re-applied."""
    boxes = boxsplit.generate_boxes(mesh, grid, split_count, config.min_vertices)
    graph = defgraph.build_deformer(mesh, boxes)
    n_boxes = len(boxes)
    encoding = cmaes.BoundedEncoding(config.scale_min, config.scale_max)
    state = cmaes.CmaState(
        3 * n_boxes,
        sigma0=config.sigma0,
        seed=config.seed + split_count,
        lam=config.population,
    )

    def eval_vector(x: np.ndarray) -> float:
        params = defgraph.DeformParams(
            encoding.decode(x).reshape(n_boxes, 3), config.scale_min, config.scale_max
        )
        return objective.evaluate(mesh, graph, params, scorer, prompt, cfg).total

    workers = config.workers if config.workers > 0 else (os.cpu_count() or 1)
    pool = (
        ThreadPoolExecutor(max_workers=workers)
        if workers > 1 and scorer.concurrent_safe
        else None
    )
    trace: list[tuple[int, float, float, float]] = []
    try:
        history: list[float] = []
        gens = 0
        for gen in range(config.max_generations):
            xs = state.ask()
            if pool is not None:
                fs = list(pool.map(eval_vector, xs))
            else:
                fs = [eval_vector(x) for x in xs]
            state.tell(xs, fs)
            gens = gen + 1
            history.append(state.best_f)
            trace.append((gen, state.best_f, float(np.mean(fs)), state.sigma))
            if (
                len(history) > config.stall_generations
                and history[-config.stall_generations - 1] - history[-1]
                < config.stall_tolerance
            ):
                break
    finally:
        if pool is not None:
            pool.shutdown()
    best_x, best_f = state.best()
    best_scales = encoding.decode(best_x).reshape(n_boxes, 3)
    log.info(
        "split=%d boxes=%d generations=%d best=%.6f", split_count, n_boxes, gens, best_f
    )
    return SplitResult(split_count, n_boxes, best_f, best_scales, gens, trace), graph


def interpolate(
    mesh: Mesh, graph: defgraph.BoxDefGraph, params_opt: defgraph.DeformParams, steps: int
) -> list[Mesh]:
    """Deformation spectrum from identity to the optimized parameters, with
    scales interpolated along log-space geodesics. Endpoints reuse the exact
    identity and optimized scale values."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    log_s = np.log(params_opt.scales)
    frames = []
    for t in np.linspace(0.0, 1.0, steps):
        if t == 0.0:
            scales = np.ones_like(params_opt.scales)
        elif t == 1.0:
            scales = params_opt.scales
        else:
            scales = np.exp(t * log_s)
        p = defgraph.DeformParams(scales, params_opt.s_min, params_opt.s_max)
        frames.append(defgraph.deform(mesh, graph, p))
    return frames


def report_metrics(
    original: Mesh,
    deformed: Mesh,
    scorer: Scorer,
    prompt: str,
    elevation: float = 20.0,
    size: int = 224,
) -> dict:
    """Front-right-view score of the deformed mesh plus curvature-change and
    self-intersection metrics."""
    cam = view_set(1, elevation, size=size)[0]
    img = render(deformed, cam, (255, 255, 255))
    lo, hi = deformed.aabb()
    request = ScoreRequest(
        prompt=prompt,
        images=[img.to_png()],
        metadata={
            "aabb_min": [float(x) for x in lo],
            "aabb_max": [float(x) for x in hi],
            "views": [0],
            "backgrounds": [(255, 255, 255)],
        },
    )
    response = objective.score_with_retry(scorer, request)
    return {
        "score": float(response.similarities[0]),
        "gc_change": gaussian_curvature_change(original, deformed),
        "si_ratio": self_intersection_ratio(deformed),
    }


def run(config: RunConfig) -> RunReport:
    t0 = time.perf_counter()
    with _stage("load"):
        mesh = load_obj(config.mesh_path)
    with _stage("voxelize"):
        grid = occupancy.voxelize(mesh, config.resolution)
    with _stage("objective-setup"):
        cfg = ObjectiveConfig.for_mesh(
            mesh,
            n_views=config.n_views,
            elevation=config.elevation,
            size=config.image_size,
            backgrounds=tuple(tuple(bg) for bg in config.backgrounds),
            normal_weight=config.normal_weight,
        )
        scorer = build_scorer(config, mesh, cfg)

    results: list[SplitResult] = []
    graphs: dict[int, defgraph.BoxDefGraph] = {}
    for count in config.split_counts:
        with _stage("optimize"):
            result, graph = optimize_split(mesh, grid, count, scorer, config.prompt, cfg, config)
        results.append(result)
        graphs[count] = graph

    with _stage("select"):
        chosen = min(results, key=lambda r: (r.final_loss, r.split_count))
        graph = graphs[chosen.split_count]
        params = defgraph.DeformParams(
            chosen.best_params, config.scale_min, config.scale_max
        )
        deformed = defgraph.deform(mesh, graph, params)

    with _stage("metrics"):
        metrics = report_metrics(
            mesh, deformed, scorer, config.prompt, config.elevation, config.image_size
        )

    with _stage("write"):
        out = config.out_dir
        os.makedirs(out, exist_ok=True)
        save_obj(deformed, os.path.join(out, "deformed.obj"))
        report = RunReport(results, chosen.split_count, metrics)
        with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(out, "trace.csv"), "w", encoding="utf-8") as fh:
            fh.write("generation,best_fitness,mean_fitness,sigma\n")
            for gen, best_f, mean_f, sigma in chosen.trace:
                fh.write(f"{gen},{best_f!r},{mean_f!r},{sigma!r}\n")
        if config.interp_steps >= 2:
            frames_dir = os.path.join(out, "frames")
            os.makedirs(frames_dir, exist_ok=True)
            for i, frame in enumerate(interpolate(mesh, graph, params, config.interp_steps)):
                save_obj(frame, os.path.join(frames_dir, f"frame_{i:03d}.obj"))

    report.wall_time_s = time.perf_counter() - t0
    return report
