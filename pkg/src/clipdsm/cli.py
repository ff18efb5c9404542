"""Command line entry point: ``clipdsm <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from clipdsm.algorithm import ScheduleRejectedError, validate_schedule
from clipdsm.harness.config import (
    ConfigError,
    ExperimentConfig,
    build_instance,
    build_moreau,
    build_schedule,
    build_topology,
)
from clipdsm.harness.experiments import (
    PRESETS,
    DataMissingError,
    compare_experiment,
    reproduce,
    run_experiment,
)
from clipdsm.harness.output import METRICS_HEADER, fmt
from clipdsm.harness.study import noise_study
from clipdsm.objectives import OracleConfig
from clipdsm.topology import check_b_connectivity, validate_mixing

EXIT_CONFIG = 2
EXIT_SCHEDULE = 3
EXIT_DATA = 4


def _load(path: str | None) -> ExperimentConfig:
    return ExperimentConfig.load(path) if path else ExperimentConfig()


def cmd_run(a) -> int:
    cfg = _load(a.config)
    if a.method:
        cfg.run.method = a.method
    if a.rounds is not None:
        cfg.run.rounds = a.rounds
    if a.workers is not None:
        cfg.run.workers = a.workers
    if a.override:
        cfg.schedule.override = True
    if a.seed is not None:
        cfg.run.seed = a.seed
    rec = run_experiment(cfg, a.out)
    last = rec.rows[-1]
    print(",".join(METRICS_HEADER))
    print(",".join(fmt(getattr(last, h)) for h in METRICS_HEADER))
    print(f"wrote {a.out}", file=sys.stderr)
    return 0


def cmd_compare(a) -> int:
    cfg = _load(a.config)
    if a.rounds is not None:
        cfg.run.rounds = a.rounds
    methods = tuple(m.strip() for m in a.methods.split(",") if m.strip())
    bad = [m for m in methods if m not in ("clipped", "dpsm", "stodpsm")]
    if bad:
        print(f"unknown methods: {bad}", file=sys.stderr)
        return EXIT_CONFIG
    res = compare_experiment(cfg, a.out, methods, a.seeds, a.jobs)
    print("method,final_f,final_moreau,final_recovery")
    for m, med in res.medians().items():
        print(",".join([m] + [fmt(med[k]) for k in ("final_f", "final_moreau", "final_recovery")]))
    return 0


def cmd_noise_study(a) -> int:
    cfg = _load(a.config)
    inst = build_instance(cfg)
    oracle = OracleConfig("minibatch", a.batch_size or cfg.problem.batch_size)
    study = noise_study(inst, None, a.draws, a.out, oracle=oracle, seed=a.seed, agent=a.agent)
    print("hill,reference_hill,n_draws")
    print(f"{fmt(study.hill)},{fmt(study.reference_hill)},{a.draws}")
    return 0


def cmd_reproduce(a) -> int:
    cfg = _load(a.config) if a.config else None
    out = reproduce(
        a.preset,
        a.out,
        cfg=cfg,
        full_scale=a.full_scale,
        synthetic=a.synthetic,
        mnist_path=a.mnist,
        n_draws=a.draws,
        rounds=a.rounds,
    )
    for p in sorted(Path(out).iterdir()):
        print(p)
    return 0


def cmd_validate(a) -> int:
    cfg = _load(a.config)
    inst = build_instance(cfg)
    topo = build_topology(cfg)
    sched = build_schedule(cfg, inst)
    verdict = validate_schedule(sched)
    mix = validate_mixing(topo(0), topo(0).eta)
    conn = check_b_connectivity(topo, topo.period_B)
    report = {
        "constants": inst.constants.to_dict() if inst.constants else None,
        "mu": build_moreau(cfg, inst).mu,
        "schedule": vars(sched),
        "schedule_conditions": verdict.conditions,
        "schedule_accepted": verdict.accepted,
        "mixing_violations": mix.violations,
        "connectivity_violations": conn.violations,
    }
    print(yaml.safe_dump(report, sort_keys=False), end="")
    ok = mix.ok and conn.ok and (verdict.accepted or cfg.schedule.override)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clipdsm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="one run, metrics under --out")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True)
    r.add_argument("--method", choices=("clipped", "dpsm", "stodpsm"))
    r.add_argument("--rounds", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--override", action="store_true", help="run a schedule that fails validation")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="several methods over several seeds")
    c.add_argument("--config")
    c.add_argument("--methods", default="clipped,dpsm,stodpsm")
    c.add_argument("--seeds", type=int, default=10)
    c.add_argument("--rounds", type=int)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    n = sub.add_parser("noise-study", help="histogram and tail index of the oracle noise")
    n.add_argument("--config")
    n.add_argument("--out", required=True)
    n.add_argument("--draws", type=int, default=10_000)
    n.add_argument("--batch-size", type=int)
    n.add_argument("--agent", type=int)
    n.add_argument("--seed", type=int, default=0)
    n.set_defaults(func=cmd_noise_study)

    f = sub.add_parser("reproduce", help="regenerate a figure's data and rendering")
    f.add_argument("--preset", required=True, choices=PRESETS)
    f.add_argument("--out", required=True)
    f.add_argument("--config")
    f.add_argument("--mnist", help="path to train-images-idx3-ubyte")
    f.add_argument("--synthetic", action="store_true", help="random signal when MNIST is absent")
    f.add_argument("--full-scale", action="store_true", help="n = 784, N = 28, m = 84")
    f.add_argument("--rounds", type=int)
    f.add_argument("--draws", type=int, default=10_000)
    f.set_defaults(func=cmd_reproduce)

    v = sub.add_parser("validate-config", help="check a config without running it")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, yaml.YAMLError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ScheduleRejectedError as e:
        print(f"schedule rejected: {e}", file=sys.stderr)
        return EXIT_SCHEDULE
    except (DataMissingError, FileNotFoundError) as e:
        print(f"missing data: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
