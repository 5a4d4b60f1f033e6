"""Command-line harness.

Subcommands::

    simulate     write an offline dataset as one CSV row per transition
    meta-train   solve the offline meta objective, write the parameter matrix
    adapt        train offline, then adapt online on one fresh test block
    lse          least-squares fit on one fresh test block
    bounds       evaluate every bound for the configured instance
    experiment   run a named Monte-Carlo experiment suite

All subcommands accept ``--config <path>`` (INI document, see `config`),
``--seed <u64>`` and ``--out <dir>`` (overriding the corresponding config
keys). Exit codes: 0 success, 1 configuration error, 2 numerical failure;
a one-line diagnostic goes to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .adapt import AdaptConfig, estimation_gap, lsa_adapt, lse_fit
from .bounds import render_report
from .config import ExperimentConfig, apply_experiment_defaults, parse_config
from .errors import ConfigError, NumericalError
from .experiments import report_from_config, run_experiment, write_csv
from .meta import generate_offline_dataset, meta_objective, meta_solve_closed_form
from .model import RngStream, sample_task, simulate_block

__all__ = ["main"]


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metasysid",
        description=(
            "Meta-learned identification of episodic linear systems: offline "
            "initialization, online adaptation, baselines, bound evaluation, "
            "and Monte-Carlo experiment suites."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("simulate", "simulate an offline dataset and write it as CSV"),
        ("meta-train", "solve the offline meta objective"),
        ("adapt", "online adaptation trace on a fresh test block"),
        ("lse", "least-squares baseline on a fresh test block"),
        ("bounds", "evaluate the theoretical bounds"),
        ("experiment", "run a named experiment suite"),
    ]
    for name, help_text in specs:
        cmd = sub.add_parser(name, help=help_text)
        if name == "experiment":
            cmd.add_argument("name", help="experiment name, e.g. fig-gap-vs-D")
        cmd.add_argument("--config", metavar="PATH", help="INI config document")
        cmd.add_argument("--seed", metavar="U64", type=int, help="override the master seed")
        cmd.add_argument("--out", metavar="DIR", help="override the output directory")
    return parser


def _load_config(args) -> ExperimentConfig:
    text = ""
    if args.config is not None:
        text = Path(args.config).read_text(encoding="utf-8")
    cfg = parse_config(text)
    explicit = set(cfg.explicit)
    updates = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {args.seed}")
        updates["seed"] = args.seed
        explicit.add(("experiment", "seed"))
    if args.out is not None:
        updates["out"] = args.out
        explicit.add(("experiment", "out"))
    if updates:
        cfg = dataclasses.replace(cfg, explicit=frozenset(explicit), **updates)
    return cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _matrix_rows(matrix: np.ndarray) -> tuple[list[str], list[list]]:
    header = ["row"] + [f"c{j}" for j in range(matrix.shape[1])]
    rows = [[i] + [float(v) for v in matrix[i]] for i in range(matrix.shape[0])]
    return header, rows


def _offline_dataset(cfg: ExperimentConfig, root: RngStream):
    return generate_offline_dataset(
        cfg.d, cfg.l, cfg.m_train, cfg.make_sampler(), cfg.noise(), root.child("offline", 0)
    )


def _fresh_test_block(cfg: ExperimentConfig, root: RngStream, length: int):
    task = sample_task(cfg.make_sampler(), 0, root.child("test-task", 0, 0))
    block = simulate_block(task, length, cfg.noise(), root.child("test-block", 0, 0))
    return task, block


def _cmd_simulate(cfg: ExperimentConfig) -> int:
    dataset = _offline_dataset(cfg, RngStream(cfg.seed))
    n, m = dataset.n, dataset.m
    header = (
        ["block", "t"]
        + [f"x{i}" for i in range(n)]
        + [f"u{j}" for j in range(m)]
        + [f"w{i}" for i in range(n)]
        + [f"x_next{i}" for i in range(n)]
    )
    rows = []
    for d, block in enumerate(dataset.blocks):
        for t in range(block.length):
            rows.append(
                [d, t]
                + [float(v) for v in block.states[t]]
                + [float(v) for v in block.inputs[t]]
                + [float(v) for v in block.noises[t]]
                + [float(v) for v in block.states[t + 1]]
            )
    path = _out_dir(cfg) / "dataset.csv"
    write_csv(path, header, rows)
    print(f"wrote {path} ({len(rows)} transitions)")
    return 0


def _cmd_meta_train(cfg: ExperimentConfig) -> int:
    dataset = _offline_dataset(cfg, RngStream(cfg.seed))
    phi_star = meta_solve_closed_form(dataset, cfg.meta_alpha, cfg.rcond)
    path = _out_dir(cfg) / "phi_star.csv"
    header, rows = _matrix_rows(phi_star)
    write_csv(path, header, rows)
    objective = meta_objective(dataset, cfg.meta_alpha, phi_star)
    print(f"objective = {objective!r}")
    print(f"wrote {path}")
    return 0


def _cmd_adapt(cfg: ExperimentConfig) -> int:
    root = RngStream(cfg.seed)
    dataset = _offline_dataset(cfg, root)
    phi_star = meta_solve_closed_form(dataset, cfg.meta_alpha, cfg.rcond)
    task, block = _fresh_test_block(cfg, root, max(cfg.steps, 1))
    adapt_cfg = AdaptConfig(
        alpha=cfg.adapt_alpha,
        steps=cfg.steps,
        c_phi=cfg.c_phi if cfg.c_phi is not None else float("inf"),
        c_z=cfg.c_z if cfg.c_z is not None else float("inf"),
    )
    trace = lsa_adapt(phi_star, block, adapt_cfg)
    rows = []
    for t in range(trace.iterates.shape[0]):
        gap = estimation_gap(trace.iterates[t], task.phi, cfg.norm)
        grad = float("nan") if t == 0 else float(trace.grad_norms[t - 1])
        rows.append([t, gap, grad])
    path = _out_dir(cfg) / "adapt_trace.csv"
    write_csv(path, ["step", "gap", "grad_norm"], rows)
    print(f"final gap = {rows[-1][1]!r}")
    print(f"wrote {path}")
    return 0


def _cmd_lse(cfg: ExperimentConfig) -> int:
    if cfg.steps < 1:
        raise ConfigError("lse needs adapt.steps >= 1 transitions to fit on")
    root = RngStream(cfg.seed)
    task, block = _fresh_test_block(cfg, root, cfg.steps)
    segment = (block.covariates(0, cfg.steps), block.states[1 : cfg.steps + 1].T)
    phi_lse = lse_fit(segment, cfg.rcond)
    path = _out_dir(cfg) / "lse_result.csv"
    header, rows = _matrix_rows(phi_lse)
    write_csv(path, header, rows)
    gap = estimation_gap(phi_lse, task.phi, cfg.norm)
    print(f"gap = {gap!r}")
    print(f"wrote {path}")
    return 0


def _cmd_bounds(cfg: ExperimentConfig) -> int:
    # The bare subcommand evaluates the curated reference instance; any key
    # set explicitly in the config document still wins.
    cfg = apply_experiment_defaults(cfg, "bounds-report")
    report = report_from_config(cfg)
    path = _out_dir(cfg) / "bounds_report.txt"
    path.write_text(render_report(report), encoding="utf-8")
    print(f"wrote {path}")
    return 0


def _cmd_experiment(cfg: ExperimentConfig, name: str) -> int:
    cfg = dataclasses.replace(cfg, name=name)
    paths = run_experiment(cfg)
    for path in paths:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return 0 if code in (0, None) else 1
    try:
        cfg = _load_config(args)
        if args.command == "simulate":
            return _cmd_simulate(cfg)
        if args.command == "meta-train":
            return _cmd_meta_train(cfg)
        if args.command == "adapt":
            return _cmd_adapt(cfg)
        if args.command == "lse":
            return _cmd_lse(cfg)
        if args.command == "bounds":
            return _cmd_bounds(cfg)
        return _cmd_experiment(cfg, args.name)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
