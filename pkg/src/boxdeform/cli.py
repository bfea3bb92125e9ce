"""Command-line driver.

Configuration comes from an optional TOML file whose keys mirror RunConfig;
command-line flags override file values.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .pipeline import PipelineError, RunConfig, run


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="boxdeform",
        description="Deform a mesh toward a text prompt or geometric target "
        "using part-level box deformers and CMA-ES.",
    )
    p.add_argument("--config", help="TOML config file (keys mirror RunConfig)")
    p.add_argument("--mesh", help="input OBJ path")
    p.add_argument("--prompt", help="text prompt for remote scorers")
    p.add_argument(
        "--scorer",
        choices=["proxy-aspect", "proxy-silhouette", "remote-http", "remote-process"],
    )
    p.add_argument("--seed", type=int)
    p.add_argument("--splits", help="comma-separated split counts, e.g. 2,3,4")
    p.add_argument("--out", help="output directory")
    p.add_argument("--steps", type=int, help="interpolation frames to export")
    p.add_argument("--endpoint", help="remote scorer URL for --scorer remote-http")
    p.add_argument("--scorer-cmd", help="child-process scorer command line")
    p.add_argument("--target-ratios", help="aspect target extents, e.g. 1,1,1.5")
    p.add_argument("--target-scale", type=float, help="silhouette target scale factor")
    p.add_argument("--target-masks", help="comma-separated mask PNG paths, one per view")
    p.add_argument("--resolution", type=int, help="voxel resolution (longest axis)")
    p.add_argument("--views", type=int, help="number of render azimuths")
    p.add_argument("--image-size", type=int)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--population", type=int)
    p.add_argument("--max-generations", type=int)
    p.add_argument("--normal-weight", type=float)
    p.add_argument("--quiet", action="store_true")
    return p


_FLAG_TO_FIELD = {
    "mesh": "mesh_path",
    "prompt": "prompt",
    "scorer": "scorer",
    "seed": "seed",
    "out": "out_dir",
    "steps": "interp_steps",
    "endpoint": "endpoint",
    "target_scale": "target_scale",
    "resolution": "resolution",
    "views": "n_views",
    "image_size": "image_size",
    "sigma0": "sigma0",
    "population": "population",
    "max_generations": "max_generations",
    "normal_weight": "normal_weight",
}


def build_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        with open(args.config, "rb") as fh:
            file_values = tomllib.load(fh)
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(file_values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for flag, fieldname in _FLAG_TO_FIELD.items():
        v = getattr(args, flag)
        if v is not None:
            values[fieldname] = v
    if args.splits is not None:
        values["split_counts"] = tuple(int(s) for s in args.splits.split(","))
    if args.target_ratios is not None:
        values["target_ratios"] = tuple(float(s) for s in args.target_ratios.split(","))
    if args.target_masks is not None:
        values["target_masks"] = args.target_masks.split(",")
    if args.scorer_cmd is not None:
        values["scorer_command"] = args.scorer_cmd.split()
    if "split_counts" in values:
        values["split_counts"] = tuple(values["split_counts"])
    if "mesh_path" not in values:
        raise ValueError("an input mesh is required (--mesh or mesh_path in config)")
    bad = [c for c in values.get("split_counts", ()) if not 1 <= c <= 16]
    if bad:
        raise ValueError(f"split counts must be in [1, 16]: {bad}")
    return RunConfig(**values)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = build_config(args)
    except (ValueError, OSError) as exc:
        print(f"error [stage:config]: {exc}", file=sys.stderr)
        return 2
    try:
        report = run(config)
    except PipelineError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    print(
        f"chosen split count {report.chosen_split_count}; "
        f"metrics {report.metrics}; outputs in {config.out_dir}"
    )
    print(f"wall time {report.wall_time_s:.1f} s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
