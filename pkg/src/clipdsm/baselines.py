"""Unclipped comparison methods.

DPSM takes full deterministic subgradient steps; stoDPSM takes raw stochastic
steps. Both share the clipped method's round engine with the clip factor
forced to one, so the clip is the only behavioural difference.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from clipdsm.algorithm import RunRecord, RunState, ScheduleSpec, engine_step, run
from clipdsm.moreau import MoreauConfig
from clipdsm.objectives import ObjectiveInstance, OracleConfig
from clipdsm.topology import MixingMatrix, MixingSchedule


class BaselineKind(str, enum.Enum):
    DPSM = "dpsm"
    STODPSM = "stodpsm"


def baseline_step(
    kind: BaselineKind | str,
    rs: RunState,
    m: MixingMatrix,
    inst: ObjectiveInstance,
    alpha_k: float,
    oracle: OracleConfig = OracleConfig(),
) -> RunState:
    kind = BaselineKind(kind)
    orc = OracleConfig() if kind is BaselineKind.DPSM else oracle
    return engine_step(rs, m, inst, alpha_k, None, orc)


SUMMARY_HEADER = ("method", "seed", "final_f", "final_moreau", "final_recovery")


@dataclass
class CompareResult:
    rows: list[dict]
    records: dict[tuple[str, int], RunRecord] = field(default_factory=dict)

    def medians(self) -> dict[str, dict[str, float | None]]:
        out = {}
        for method in dict.fromkeys(r["method"] for r in self.rows):
            mine = [r for r in self.rows if r["method"] == method]
            med = {}
            for key in SUMMARY_HEADER[2:]:
                vals = [r[key] for r in mine if r[key] is not None]
                med[key] = float(np.median(vals)) if vals else None
            out[method] = med
        return out


def compare(
    inst: ObjectiveInstance,
    topology: MixingSchedule | MixingMatrix,
    schedules: ScheduleSpec | dict[str, ScheduleSpec],
    rounds: int,
    seeds: list[int],
    oracle: OracleConfig = OracleConfig(),
    moreau: MoreauConfig | None = None,
    methods=("clipped", "dpsm", "stodpsm"),
    override: bool = False,
    **run_kwargs,
) -> CompareResult:
    """Run every method on every seed from a shared random start."""
    result = CompareResult(rows=[])
    for method in methods:
        s = schedules[method] if isinstance(schedules, dict) else schedules
        for seed in seeds:
            rec = run(
                inst, topology, s, rounds, moreau, seed,
                oracle=oracle, method=method, override=override, **run_kwargs,
            )
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
    return result
