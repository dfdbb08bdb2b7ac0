"""Command line entry point: ``lidaraug <command> ...``.

Exit codes: 0 success, 1 runtime failure (including any failed scan),
2 usage error (unknown flags, invalid config).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import scan_io
from .config import AugmentationConfig
from .manifest import build_manifest
from .prompts import PromptRecipe, build_prompt
from .remission import build_table

logger = logging.getLogger("lidaraug")


class UsageError(Exception):
    pass


def _cmd_build_remission(args) -> int:
    scans = sorted(Path(args.scans).glob("*.bin"))
    if not scans:
        raise RuntimeError(f"no .bin scans under {args.scans}")
    rng = np.random.default_rng(args.seed)
    clouds = (scan_io.read_point_cloud(p) for p in scans)
    table = build_table(clouds, args.bin_width, args.reservoir_size, rng)
    table.save(args.out)
    print(f"{args.out}: {len(table.bins)} bins from {len(scans)} scans")
    return 0


def _cmd_ingest_meshes(args) -> int:
    manifest = build_manifest(args.meshes, score_file=args.scores, up_axis=args.up,
                              forward_axis=args.forward)
    manifest.save(args.out)
    for name, count in manifest.counts().items():
        print(f"{name}: {count}")
    for skip in manifest.skipped:
        print(f"skipped {skip['path']}: {skip['reason']}", file=sys.stderr)
    return 0


def _cmd_gen_prompts(args) -> int:
    recipe = PromptRecipe.load(args.recipe) if args.recipe else PromptRecipe.default()
    if args.class_name not in recipe.classes:
        raise UsageError(f"class {args.class_name!r} is not in the recipe")
    rng = np.random.default_rng(args.seed)
    for _ in range(args.count):
        print(build_prompt(recipe, args.class_name, rng))
    return 0


def _load_config(args) -> AugmentationConfig:
    try:
        config = AugmentationConfig.load(args.config)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid config {args.config}: {exc}") from exc
    if args.seed is not None:
        config.seed = args.seed
        config.validate()
    return config


def _cmd_augment(args) -> int:
    from .pipeline import AugmentationDeps, augment_dataset, augment_file

    config = _load_config(args)
    deps = AugmentationDeps.from_config(config)
    out = Path(args.out)
    if args.scan:
        out.mkdir(parents=True, exist_ok=True)
        report = augment_file(args.scan, out, config, deps)
        print(json.dumps(report.to_dict(), indent=2))
        return 0
    report = augment_dataset(args.scans, out, config, deps, workers=args.workers)
    totals = report["totals"]
    print(f"{totals['scans'] - totals['scans_failed']}/{totals['scans']} scans, "
          f"{totals['instances_placed']}/{totals['instances_requested']} instances placed")
    for name, err in report["failed_scans"].items():
        print(f"failed {name}: {err}", file=sys.stderr)
    return 1 if report["failed_scans"] else 0


def _cmd_synth(args) -> int:
    from .sensor import preset_sensor
    from .synthetic import synthetic_scan, write_mesh_library

    rng = np.random.default_rng(args.seed)
    sensor = preset_sensor(args.sensor)
    out = Path(args.out)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    for k in range(args.scans):
        cloud = synthetic_scan(sensor, rng)
        scan_io.write_point_cloud(cloud, out / "scans" / f"{k:06d}.bin")
        scan_io.write_labels(np.zeros(cloud.shape[0], np.uint32),
                             out / "scans" / f"{k:06d}.label")
    write_mesh_library(out / "meshes", rng, per_class=args.meshes_per_class)
    print(f"wrote {args.scans} scans and meshes under {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lidaraug", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        return p

    p = add("build-remission", _cmd_build_remission, "learn a range-binned remission table")
    p.add_argument("--scans", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bin-width", type=float, default=1.0)
    p.add_argument("--reservoir-size", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)

    p = add("ingest-meshes", _cmd_ingest_meshes, "normalise meshes into a manifest")
    p.add_argument("--meshes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scores")
    p.add_argument("--up", choices=("y", "z"), default="z")
    p.add_argument("--forward", choices=("x", "y"), default="x")
    p.add_argument("--seed", type=int, default=0)  # accepted for uniformity; unused

    p = add("gen-prompts", _cmd_gen_prompts, "emit prompt strings for a class")
    p.add_argument("--recipe")
    p.add_argument("--class", dest="class_name", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = add("augment", _cmd_augment, "insert instances into scans")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--scans")
    target.add_argument("--scan")
    p.add_argument("--out", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)

    p = add("synth", _cmd_synth, "write a synthetic demo dataset and mesh library")
    p.add_argument("--out", required=True)
    p.add_argument("--scans", type=int, default=4)
    p.add_argument("--meshes-per-class", type=int, default=3)
    p.add_argument("--sensor", default="hdl64-like")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except Exception as exc:  # noqa: BLE001
        logger.debug("command failed", exc_info=True)
        print(f"lidaraug: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
