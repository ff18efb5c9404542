"""Experiment drivers: single runs, method comparisons and the figure presets."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import clipdsm
from clipdsm.algorithm import ScheduleSpec, run, validate_schedule
from clipdsm.baselines import SUMMARY_HEADER, CompareResult
from clipdsm.harness import plotting
from clipdsm.harness.config import (
    ExperimentConfig,
    build_instance,
    build_moreau,
    build_oracle,
    build_schedule,
    build_topology,
    desk_preset,
    mnist_preset,
    resolve_mnist_path,
)
from clipdsm.harness.idx import signal_image, write_pgm
from clipdsm.harness.output import write_json, write_metrics, write_run, write_table
from clipdsm.harness.study import noise_study
from clipdsm.objectives import OracleConfig, recovery_error, save_instance

PRESETS = ("fig1", "fig2", "fig3")


class DataMissingError(FileNotFoundError):
    pass


def base_meta(cfg: ExperimentConfig) -> dict:
    return {"config": cfg.to_dict(), "library_version": clipdsm.__version__}


def _run_one(cfg: ExperimentConfig, inst, method: str, seed: int, schedule: ScheduleSpec | None = None):
    s = schedule or build_schedule(cfg, inst)
    return run(
        inst,
        build_topology(cfg),
        s,
        cfg.run.rounds,
        build_moreau(cfg, inst),
        seed,
        oracle=build_oracle(cfg),
        method=method,
        measure_every=cfg.run.measure_every,
        moreau_every=cfg.run.moreau_every,
        workers=cfg.run.workers,
        override=cfg.schedule.override,
        init_radius=cfg.run.init_radius,
    )


def run_experiment(cfg: ExperimentConfig, out: str | Path, seed: int | None = None, inst=None):
    """One run of ``cfg.run.method``; writes metrics.csv, final_states.bin, meta.json, metrics.svg."""
    seed = cfg.run.seed if seed is None else seed
    inst = inst or build_instance(cfg)
    rec = _run_one(cfg, inst, cfg.run.method, seed)
    out = write_run(out, rec, base_meta(cfg))
    save_instance(inst, out / "instance.bin", cfg.problem.instance_seed)
    plotting.metrics_chart(out / "metrics.svg", rec.rows)
    return rec


def _compare_job(args):
    cfg, method, seed, out = args
    inst = build_instance(cfg)
    rec = _run_one(cfg, inst, method, seed)
    write_run(Path(out) / method / f"seed_{seed}", rec, base_meta(cfg))
    return method, seed, rec


def compare_experiment(
    cfg: ExperimentConfig,
    out: str | Path,
    methods=("clipped", "dpsm", "stodpsm"),
    n_seeds: int = 10,
    jobs: int = 1,
) -> CompareResult:
    """Every method on seeds run.seed .. run.seed + n_seeds - 1, one directory per run."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.run.seed + i for i in range(n_seeds)]
    tasks = [(cfg, m, s, out) for m in methods for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_compare_job, tasks))
    else:
        done = [_compare_job(t) for t in tasks]
    result = CompareResult(rows=[])
    for method, seed, rec in done:
        last = rec.rows[-1]
        result.rows.append(
            {
                "method": method,
                "seed": seed,
                "final_f": last.f_bar,
                "final_moreau": last.moreau_grad_norm,
                "final_recovery": last.recovery_err,
            }
        )
        result.records[(method, seed)] = rec
    write_table(out / "summary.csv", SUMMARY_HEADER, ([r[h] for h in SUMMARY_HEADER] for r in result.rows))
    med = result.medians()
    write_table(
        out / "medians.csv",
        ("method",) + SUMMARY_HEADER[2:],
        ([m] + [med[m][h] for h in SUMMARY_HEADER[2:]] for m in med),
    )
    write_json(out / "meta.json", {**base_meta(cfg), "methods": list(methods), "seeds": seeds})
    groups = {m: [r["final_f"] for r in result.rows if r["method"] == m] for m in methods}
    plotting.box_chart(out / "compare.svg", groups, "final f(x_bar)")
    return result


# ---------------------------------------------------------------------------
# figure presets


def preset_config(full_scale: bool = False, synthetic: bool = False, mnist_path: str | None = None) -> ExperimentConfig:
    cfg = mnist_preset() if full_scale else desk_preset()
    if synthetic:
        cfg.problem.signal = "random"
        return cfg
    path = resolve_mnist_path(mnist_path)
    if not path.exists():
        raise DataMissingError(
            f"MNIST images expected at {path} (set CLIPDSM_DATA_DIR or pass --mnist); "
            "use --synthetic to fall back to a random signal"
        )
    cfg.problem.signal = "mnist"
    cfg.problem.mnist_path = str(path)
    return cfg


def _curves(records: dict, field: str):
    ks = [r.k for r in next(iter(records.values())).rows]
    cols = {m: [getattr(r, field) for r in rec.rows] for m, rec in records.items()}
    return ks, cols


def reproduce(
    preset: str,
    out: str | Path,
    cfg: ExperimentConfig | None = None,
    full_scale: bool = False,
    synthetic: bool = False,
    mnist_path: str | None = None,
    n_draws: int = 10_000,
    rounds: int | None = None,
) -> Path:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")
    cfg = cfg or preset_config(full_scale, synthetic, mnist_path)
    if rounds is not None:
        cfg.run.rounds = rounds
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    inst = build_instance(cfg)
    meta = {**base_meta(cfg), "preset": preset}

    if preset == "fig1":
        batch = OracleConfig("minibatch", cfg.problem.batch_size)
        study = noise_study(inst, None, n_draws, out, oracle=batch, seed=cfg.run.seed)
        meta["hill"] = study.hill
        write_json(out / "meta.json", meta)
        return out

    methods = ("clipped", "dpsm", "stodpsm")
    if preset == "fig2":
        # constant step 30 / (N K) as used for the image figure; it does not
        # satisfy the convergence conditions, so the run is an override
        K = max(cfg.run.rounds, 1)
        base = build_schedule(cfg, inst)
        sched = dataclasses.replace(base, step_scale=30.0 / (inst.n_agents * K), step_exponent=0.0)
        cfg.schedule.override = True
        meta["schedule_note"] = "constant step, outside the convergence conditions"
        meta["schedule_verdict"] = validate_schedule(sched).conditions
    else:
        sched = build_schedule(cfg, inst)

    records = {m: _run_one(cfg, inst, m, cfg.run.seed, sched) for m in methods}
    for m, rec in records.items():
        write_metrics(out / f"{preset}_{m}_metrics.csv", rec.rows)

    if preset == "fig2":
        truth = inst.truth
        images = {"original": signal_image(truth)}
        summary = []
        for m, rec in records.items():
            xbar = rec.final_states.mean(axis=0)
            # undo the global sign ambiguity for display
            if xbar @ truth < 0:
                xbar = -xbar
            images[m] = signal_image(xbar)
            summary.append((m, recovery_error(xbar, truth), float(inst.value(xbar))))
        for name, img in images.items():
            write_pgm(out / f"{name}.pgm", img)
        write_table(out / "fig2_summary.csv", ("method", "recovery_err", "final_f"), summary)
        plotting.image_row(out / "fig2.svg", images)
    else:
        ks, f_cols = _curves(records, "f_bar")
        write_table(out / "fig3_objective.csv", ("k",) + methods, zip(ks, *(f_cols[m] for m in methods)))
        plotting.line_chart(out / "fig3.svg", ks, f_cols, "round k", "f(x_bar)")
        if inst.truth is not None:
            ks, r_cols = _curves(records, "recovery_err")
            write_table(out / "fig3_recovery.csv", ("k",) + methods, zip(ks, *(r_cols[m] for m in methods)))
            plotting.line_chart(out / "fig3_recovery.svg", ks, r_cols, "round k", "recovery error")
    write_json(out / "meta.json", meta)
    return out

