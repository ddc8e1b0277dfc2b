"""Command line: ``simulate``, ``run``, ``report`` and ``reconstruct``.

Every ``RunConfig`` field is also a flag (``n_steps`` -> ``--n-steps``).
Values come from, in increasing priority: built-in defaults, ``--config``
file, flags.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from .geometry import read_trajectory
from .harness import ErrorReport, PipelineError, RunConfig, report_csv, report_text, run_pipeline, write_artifacts
from .reconstruction import VoxelGridConfig, stitch, write_ply
from .simulator import ContactError, generate_trajectory, load_episode, save_episode

# fields that are verbs' own positional/required options rather than config flags
_OWN = {"seed", "episode", "output"}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file (flags override it)")
    g = p.add_argument_group("configuration")
    for f in fields(RunConfig):
        if f.name in _OWN:
            continue
        kind = type(f.default)
        if kind is bool:
            g.add_argument(_flag(f.name), dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        else:
            g.add_argument(_flag(f.name), dest=f.name, type=kind, default=None, metavar=kind.__name__.upper())


def _config(args, **extra) -> RunConfig:
    over = {f.name: getattr(args, f.name, None) for f in fields(RunConfig) if f.name not in _OWN}
    over.update(extra)
    over = {k: v for k, v in over.items() if v is not None}
    if args.config:
        return RunConfig.load(args.config, **over)
    return RunConfig.from_mapping(over)


def cmd_simulate(args) -> int:
    cfg = _config(args, seed=args.seed)
    episode = generate_trajectory(cfg.trajectory_config(), cfg.object(), cfg.sensor())
    root = save_episode(episode, args.output)
    print(f"wrote {len(episode)} steps to {root}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args, seed=args.seed, episode=args.episode, output=args.output)
    result = run_pipeline(cfg)
    print(report_text(result.report))
    if cfg.output:
        root = write_artifacts(result, cfg.output)
        print(f"artifacts in {root}")
    return 0


def cmd_report(args) -> int:
    paths = []
    for p in args.inputs:
        p = Path(p)
        paths.append(p / "errors.csv" if p.is_dir() else p)
    rep = ErrorReport.from_csv([p.read_text() for p in paths])
    print(report_text(rep))
    if args.csv:
        Path(args.csv).write_text(report_csv(rep))
    return 0


def cmd_reconstruct(args) -> int:
    episode = load_episode(args.episode)
    _, poses = read_trajectory(args.trajectory or Path(args.episode) / "gt_trajectory.txt")
    if len(poses) != len(episode.depths):
        raise ValueError(f"trajectory has {len(poses)} poses, episode has {len(episode.depths)} depth maps")
    cloud = stitch(episode.depths, poses, VoxelGridConfig(args.voxel_size))
    write_ply(args.output, cloud)
    print(f"wrote {len(cloud)} points to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vtslam", description="Visuo-tactile pose estimation and shape reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate an episode and save it to disk")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", required=True, help="episode directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run every method on a fresh or saved episode")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--episode", help="episode directory to load instead of simulating")
    p.add_argument("--output", help="directory for trajectories, reports, clouds and graph dumps")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="pool the errors of several runs into one table")
    p.add_argument("inputs", nargs="+", help="run directories or errors.csv files")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("reconstruct", help="stitch an episode's depth maps at given poses into a PLY cloud")
    p.add_argument("--episode", required=True)
    p.add_argument("--trajectory", help="pose file (default: the episode's ground truth)")
    p.add_argument("--output", required=True, help="PLY file")
    p.add_argument("--voxel-size", type=float, default=VoxelGridConfig().voxel_size)
    p.set_defaults(func=cmd_reconstruct)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, PipelineError, ContactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
