"""Monte-Carlo experiment suite and CSV emission.

Each experiment sweeps one or two knobs, pools estimation gaps over
``repetitions x test_blocks`` trials per cell, and writes a single CSV
whose bytes are a pure function of (config, seed). Gaps use the norm
selected by ``[adapt] norm``. Plotting is out of scope: the CSVs carry
sweep variables, means, standard errors, trial counts, and the seed,
which is enough to regenerate any figure externally.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .adapt import AdaptConfig, default_c_phi, default_c_z, estimation_gap, lsa_adapt, lse_fit
from .bounds import (
    bound_inputs_from_model,
    build_report,
    curvature_lower_bound,
    meta_gap_bound,
    render_report,
)
from .config import ExperimentConfig, apply_experiment_defaults
from .control import LqrWeights, cec_gain, is_stabilizing
from .errors import ConfigError
from .linalg import min_eig_sym, pinv
from .meta import assemble_design, generate_offline_dataset, meta_solve_closed_form
from .model import (
    IIDUniformSampler,
    RngStream,
    sample_task,
    simulate_block,
    task_sample,
)

__all__ = ["run_experiment", "write_csv", "mean_sem"]


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    """Write a rectangular CSV with LF line endings.

    Floats are rendered with ``repr`` (shortest round-trip form), so the
    file is byte-stable across runs and platforms for identical values.
    """
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row width {len(row)} does not match header {len(header)}")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                repr(float(cell)) if isinstance(cell, (float, np.floating)) else str(cell)
                for cell in row
            ])


def mean_sem(values) -> tuple[float, float]:
    """Sample mean and standard error (zero for a single observation)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("need at least one observation")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


# ---------------------------------------------------------------------------
# Shared pieces


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _test_tasks(cfg, sampler, root: RngStream, rep: int):
    return [
        sample_task(sampler, i, root.child("test-task", rep, i))
        for i in range(cfg.test_blocks)
    ]


def _offline_phi(cfg, sampler, root: RngStream, rep: int, *, d=None, length=None,
                 train_len=None):
    dataset = generate_offline_dataset(
        d if d is not None else cfg.d,
        length if length is not None else cfg.l,
        train_len if train_len is not None else cfg.m_train,
        sampler,
        cfg.noise(),
        root.child("offline", rep),
    )
    return meta_solve_closed_form(dataset, cfg.meta_alpha, cfg.rcond)


def _resolve_radii(cfg, sampler, root: RngStream) -> tuple[float, float]:
    """Fill ``auto`` projection radii from a task sample."""
    if cfg.c_phi is not None and cfg.c_z is not None:
        return cfg.c_phi, cfg.c_z
    tasks = task_sample(sampler, cfg.n_env, root.child("radii"))
    c_phi = cfg.c_phi if cfg.c_phi is not None else default_c_phi(tasks)
    c_z = cfg.c_z if cfg.c_z is not None else default_c_z(tasks, cfg.noise())
    return c_phi, c_z


# ---------------------------------------------------------------------------
# Offline-gap sweeps


def _run_gap_vs_d(cfg: ExperimentConfig, out: Path) -> list[Path]:
    sampler = cfg.make_sampler()
    root = RngStream(cfg.seed)
    rows = []
    for m_train in cfg.m_train_list:
        for d in cfg.d_list:
            gaps = []
            for rep in range(cfg.repetitions):
                phi_star = _offline_phi(cfg, sampler, root, rep, d=d, train_len=m_train)
                for task in _test_tasks(cfg, sampler, root, rep):
                    gaps.append(estimation_gap(phi_star, task.phi, cfg.norm))
            mean, sem = mean_sem(gaps)
            rows.append([d, m_train, mean, sem, len(gaps), cfg.seed])
    path = out / "gap_vs_d.csv"
    write_csv(path, ["d", "m_train", "mean_gap", "sem", "trials", "seed"], rows)
    return [path]


def _run_gap_vs_dim(cfg: ExperimentConfig, out: Path) -> list[Path]:
    if cfg.sampler != "uniform":
        raise ConfigError("fig-gap-vs-dim sweeps dimensions and needs model.sampler = uniform")
    root = RngStream(cfg.seed)
    rows = []
    for dim in cfg.dim_list:
        sampler = IIDUniformSampler(
            n=dim, m=dim, lo=cfg.lo, hi=cfg.hi, reject_unstable=cfg.reject_unstable
        )
        gaps = []
        for rep in range(cfg.repetitions):
            phi_star = _offline_phi(cfg, sampler, root.child("dim", dim), rep)
            for task in _test_tasks(cfg, sampler, root.child("dim", dim), rep):
                gaps.append(estimation_gap(phi_star, task.phi, cfg.norm))
        mean, sem = mean_sem(gaps)
        rows.append([dim, dim, mean, sem, len(gaps), cfg.seed])
    path = out / "gap_vs_dim.csv"
    write_csv(path, ["n", "m", "mean_gap", "sem", "trials", "seed"], rows)
    return [path]


def _run_gap_vs_l(cfg: ExperimentConfig, out: Path) -> list[Path]:
    sampler = cfg.make_sampler()
    root = RngStream(cfg.seed)
    rows = []
    for length in cfg.l_list:
        gaps = []
        for rep in range(cfg.repetitions):
            phi_star = _offline_phi(cfg, sampler, root.child("len", length), rep,
                                    length=length)
            for task in _test_tasks(cfg, sampler, root, rep):
                gaps.append(estimation_gap(phi_star, task.phi, cfg.norm))
        mean, sem = mean_sem(gaps)
        rows.append([length, mean, sem, len(gaps), cfg.seed])
    path = out / "gap_vs_l.csv"
    write_csv(path, ["l", "mean_gap", "sem", "trials", "seed"], rows)
    return [path]


# ---------------------------------------------------------------------------
# Online-adaptation sweeps


def _run_adapt_vs_d(cfg: ExperimentConfig, out: Path) -> list[Path]:
    sampler = cfg.make_sampler()
    root = RngStream(cfg.seed)
    c_phi, c_z = _resolve_radii(cfg, sampler, root)
    rows = []
    for m_train in cfg.m_train_list:
        adapt_cfg = AdaptConfig(alpha=cfg.adapt_alpha, steps=m_train, c_phi=c_phi, c_z=c_z)
        for d in cfg.d_list:
            gaps = []
            for rep in range(cfg.repetitions):
                phi_star = _offline_phi(cfg, sampler, root, rep, d=d, train_len=m_train)
                tasks = _test_tasks(cfg, sampler, root, rep)
                for i, task in enumerate(tasks):
                    block = simulate_block(
                        task, m_train, cfg.noise(), root.child("test-block", rep, i)
                    )
                    trace = lsa_adapt(phi_star, block, adapt_cfg)
                    gaps.append(estimation_gap(trace.final, task.phi, cfg.norm))
            mean, sem = mean_sem(gaps)
            rows.append([d, m_train, mean, sem, len(gaps), cfg.seed])
    path = out / "adapt_vs_d.csv"
    write_csv(path, ["d", "m_train", "mean_gap", "sem", "trials", "seed"], rows)
    return [path]


def _run_adapt_vs_m(cfg: ExperimentConfig, out: Path) -> list[Path]:
    sampler = cfg.make_sampler()
    root = RngStream(cfg.seed)
    c_phi, c_z = _resolve_radii(cfg, sampler, root)
    horizon = max(cfg.steps_list)
    if horizon < 1:
        raise ConfigError("adapt.steps_list must contain a positive sample count")
    cells = {(alpha, steps): [] for alpha in cfg.alpha_list for steps in cfg.steps_list}
    for rep in range(cfg.repetitions):
        phi_star = _offline_phi(cfg, sampler, root, rep)
        tasks = _test_tasks(cfg, sampler, root, rep)
        for i, task in enumerate(tasks):
            block = simulate_block(
                task, horizon, cfg.noise(), root.child("test-block", rep, i)
            )
            for alpha in cfg.alpha_list:
                adapt_cfg = AdaptConfig(alpha=alpha, steps=horizon, c_phi=c_phi, c_z=c_z)
                trace = lsa_adapt(phi_star, block, adapt_cfg)
                for steps in cfg.steps_list:
                    cells[(alpha, steps)].append(
                        estimation_gap(trace.iterates[steps], task.phi, cfg.norm)
                    )
    rows = []
    for alpha in cfg.alpha_list:
        for steps in cfg.steps_list:
            mean, sem = mean_sem(cells[(alpha, steps)])
            rows.append([alpha, steps, mean, sem, len(cells[(alpha, steps)]), cfg.seed])
    path = out / "adapt_vs_m.csv"
    write_csv(path, ["alpha", "steps", "mean_gap", "sem", "trials", "seed"], rows)
    return [path]


def _run_lse_vs_meta(cfg: ExperimentConfig, out: Path) -> list[Path]:
    sampler = cfg.make_sampler()
    root = RngStream(cfg.seed)
    c_phi, c_z = _resolve_radii(cfg, sampler, root)
    horizon = max(cfg.steps_list)
    if min(cfg.steps_list) < 1:
        raise ConfigError("fig-lse-vs-meta needs sample counts >= 1 in adapt.steps_list")
    meta_cells = {
        (steps, eps): [] for steps in cfg.steps_list for eps in cfg.epsilon_list
    }
    lse_cells = {steps: [] for steps in cfg.steps_list}
    for rep in range(cfg.repetitions):
        phi_star = _offline_phi(cfg, sampler, root, rep)
        inits = []
        for j, eps in enumerate(cfg.epsilon_list):
            if eps == 0.0:
                inits.append(phi_star)
            else:
                direction = root.child("perturb", rep, j).generator.standard_normal(
                    phi_star.shape
                )
                direction /= np.linalg.norm(direction)
                inits.append(phi_star + eps * direction)
        tasks = _test_tasks(cfg, sampler, root, rep)
        for i, task in enumerate(tasks):
            block = simulate_block(
                task, horizon, cfg.noise(), root.child("test-block", rep, i)
            )
            for eps, init in zip(cfg.epsilon_list, inits):
                adapt_cfg = AdaptConfig(
                    alpha=cfg.adapt_alpha, steps=horizon, c_phi=c_phi, c_z=c_z
                )
                trace = lsa_adapt(init, block, adapt_cfg)
                for steps in cfg.steps_list:
                    meta_cells[(steps, eps)].append(
                        estimation_gap(trace.iterates[steps], task.phi, cfg.norm)
                    )
            for steps in cfg.steps_list:
                segment = (block.covariates(0, steps), block.states[1 : steps + 1].T)
                phi_lse = lse_fit(segment, cfg.rcond)
                lse_cells[steps].append(estimation_gap(phi_lse, task.phi, cfg.norm))
    rows = []
    for steps in cfg.steps_list:
        for eps in cfg.epsilon_list:
            mean, sem = mean_sem(meta_cells[(steps, eps)])
            rows.append(
                [steps, eps, "meta", mean, sem, len(meta_cells[(steps, eps)]), cfg.seed]
            )
        mean, sem = mean_sem(lse_cells[steps])
        rows.append([steps, 0.0, "lse", mean, sem, len(lse_cells[steps]), cfg.seed])
    path = out / "lse_vs_meta.csv"
    write_csv(
        path, ["steps", "epsilon", "method", "mean_gap", "sem", "trials", "seed"], rows
    )
    return [path]


def _run_harmonic(cfg: ExperimentConfig, out: Path) -> list[Path]:
    if cfg.sampler != "harmonic":
        raise ConfigError("fig-harmonic needs model.sampler = harmonic")
    tasks = cfg.task_params()
    root = RngStream(cfg.seed)
    c_phi, c_z = _resolve_radii(cfg, cfg.make_sampler(), root)
    midpoint = np.mean([task.phi for task in tasks], axis=0)
    adapt_cfg = AdaptConfig(alpha=cfg.adapt_alpha, steps=cfg.steps, c_phi=c_phi, c_z=c_z)
    gaps = np.empty((cfg.repetitions, cfg.steps + 1))
    for trial in range(cfg.repetitions):
        active = tasks[trial % len(tasks)]
        block = simulate_block(active, cfg.steps, cfg.noise(), root.child("trial", trial))
        trace = lsa_adapt(midpoint, block, adapt_cfg)
        for t in range(cfg.steps + 1):
            gaps[trial, t] = estimation_gap(trace.iterates[t], active.phi, cfg.norm)
    rows = []
    for t in range(cfg.steps + 1):
        mean, sem = mean_sem(gaps[:, t])
        frac = float(np.mean(gaps[:, t] < 0.05))
        rows.append([t, mean, sem, frac, cfg.repetitions, cfg.seed])
    path = out / "harmonic.csv"
    write_csv(
        path, ["step", "mean_gap", "sem", "frac_within_0p05", "trials", "seed"], rows
    )
    return [path]


def _run_weighting(cfg: ExperimentConfig, out: Path) -> list[Path]:
    if (cfg.n, cfg.m) != (1, 1):
        raise ConfigError("fig-weighting is a scalar scatter and needs n = m = 1")
    sampler = cfg.make_sampler()
    root = RngStream(cfg.seed)
    dataset = generate_offline_dataset(
        cfg.d, cfg.l, cfg.m_train, sampler, cfg.noise(), root.child("offline", 0)
    )
    rows = []
    for index, task in enumerate(dataset.params):
        rows.append(["block", index, float(task.a[0, 0]), float(task.b[0, 0]),
                     0.0, 1, cfg.seed])
    phi_star = meta_solve_closed_form(dataset, cfg.meta_alpha, cfg.rcond)
    rows.append(["meta", 0, float(phi_star[0, 0]), float(phi_star[1, 0]), 0.0, 1, cfg.seed])
    z_all = np.hstack([blk.covariates(0, blk.length) for blk in dataset.blocks])
    x_all = np.hstack([blk.states[1:].T for blk in dataset.blocks])
    phi_lse = lse_fit((z_all, x_all), cfg.rcond)
    rows.append(["lse", 0, float(phi_lse[0, 0]), float(phi_lse[1, 0]), 0.0, 1, cfg.seed])
    path = out / "weighting.csv"
    write_csv(path, ["kind", "index", "a", "b", "sem", "trials", "seed"], rows)
    return [path]


def report_from_config(cfg: ExperimentConfig):
    """Evaluate the full bound report for a configuration.

    The reference task is the first task of the sample; the controller is
    the certainty-equivalent gain for it under identity weights, with
    ``rho`` halfway between the closed-loop radius and one unless set.
    """
    sampler = cfg.make_sampler()
    root = RngStream(cfg.seed)
    tasks = task_sample(sampler, cfg.n_env, root.child("envelopes"))
    inputs = bound_inputs_from_model(
        tasks,
        cfg.noise(),
        d=cfg.d,
        l=cfg.l,
        m_train=cfg.m_train,
        k=cfg.k,
        alpha=cfg.meta_alpha,
        delta=cfg.delta,
        p=cfg.p,
    )
    reference = tasks[0]
    gain = cec_gain(reference.a, reference.b, LqrWeights.identity(reference.n, reference.m))
    stable, radius = is_stabilizing(reference.a, reference.b, gain)
    if not stable:
        raise ConfigError(
            f"the synthesized gain does not stabilize the reference task "
            f"(spectral radius {radius:.6g})"
        )
    rho = cfg.rho if cfg.rho is not None else (radius + 1.0) / 2.0
    c_phi, c_z = _resolve_radii(cfg, sampler, root)
    adapt_cfg = AdaptConfig(alpha=cfg.adapt_alpha, steps=cfg.steps, c_phi=c_phi, c_z=c_z)
    return build_report(
        inputs,
        tasks,
        gain=gain,
        rho=rho,
        adapt_cfg=adapt_cfg,
        gap0_sq=cfg.gap0,
    )


def _run_bounds_report(cfg: ExperimentConfig, out: Path) -> list[Path]:
    report = report_from_config(cfg)
    report_path = out / "bounds_report.txt"
    report_path.write_text(render_report(report), encoding="utf-8")

    # Monte-Carlo verification of the probabilistic statements.
    sampler = cfg.make_sampler()
    root = RngStream(cfg.seed)
    inputs = report.inputs
    curvature_hits = 0
    fixed_hits = 0
    empirical_hits = 0
    lower = curvature_lower_bound(inputs)
    phi_ref = report.similarity.phi_ref
    for trial in range(cfg.repetitions):
        dataset = generate_offline_dataset(
            cfg.d, cfg.l, cfg.m_train, sampler, cfg.noise(), root.child("mc", trial)
        )
        design = assemble_design(dataset, cfg.meta_alpha)
        lam_min = min_eig_sym(design.z @ design.z.T)
        phi_star = pinv(design.z.T, cfg.rcond) @ design.w_tilde
        gap = estimation_gap(phi_star, phi_ref, "spectral")
        if lam_min >= lower:
            curvature_hits += 1
        if gap <= report.offline.gap_bound:
            fixed_hits += 1
        if lam_min > 0 and gap <= meta_gap_bound(inputs, report.similarity, lam_min).gap_bound:
            empirical_hits += 1
    trials = cfg.repetitions
    rows = [
        ["curvature_lower_bound", curvature_hits / trials, 1.0 - cfg.delta, trials, cfg.seed],
        ["gap_bound_fixed", fixed_hits / trials, 1.0 - 5.0 * cfg.delta, trials, cfg.seed],
        ["gap_bound_empirical", empirical_hits / trials, 1.0 - 5.0 * cfg.delta, trials,
         cfg.seed],
    ]
    csv_path = out / "bounds_mc.csv"
    write_csv(csv_path, ["check", "observed_freq", "target_freq", "trials", "seed"], rows)
    return [report_path, csv_path]


_RUNNERS = {
    "fig-gap-vs-D": _run_gap_vs_d,
    "fig-gap-vs-dim": _run_gap_vs_dim,
    "fig-gap-vs-L": _run_gap_vs_l,
    "fig-adapt-vs-D": _run_adapt_vs_d,
    "fig-adapt-vs-M": _run_adapt_vs_m,
    "fig-lse-vs-meta": _run_lse_vs_meta,
    "fig-harmonic": _run_harmonic,
    "fig-weighting": _run_weighting,
    "bounds-report": _run_bounds_report,
}


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Run the experiment named in ``cfg`` and return the written files.

    Experiment-specific defaults are applied here for keys the user never
    set, so a bare name runs the curated configuration.
    """
    if not cfg.name:
        raise ConfigError(
            f"no experiment selected; known: {', '.join(sorted(_RUNNERS))}"
        )
    if cfg.name not in _RUNNERS:
        raise ConfigError(
            f"unknown experiment {cfg.name!r}; known: {', '.join(sorted(_RUNNERS))}"
        )
    cfg = apply_experiment_defaults(cfg, cfg.name)
    return _RUNNERS[cfg.name](cfg, _out_dir(cfg))
