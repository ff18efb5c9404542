"""Empirical look at the stochastic subgradient noise of an instance.

Draws mini-batch subgradients at a fixed probe point, records each draw's
distance to the agent's full-batch subgradient, and summarises the sample
with a histogram, a log-log CCDF and a Hill tail-index estimate. A reference
sample built from squared symmetric stable variables is summarised alongside.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from clipdsm.harness import plotting
from clipdsm.harness.output import write_json, write_table
from clipdsm.noise import (
    DegenerateSampleError,
    NoiseSpec,
    ccdf_loglog_table,
    hill_tail_index,
    rng_stream,
    sample_noise,
    tail_slope,
)
from clipdsm.objectives import ObjectiveInstance, OracleConfig, draw_sample

HIST_BINS = 50


@dataclass
class NoiseStudy:
    distances: np.ndarray
    hill: float
    ccdf: np.ndarray
    histogram: tuple[np.ndarray, np.ndarray]
    reference: np.ndarray
    reference_hill: float


def default_probe(inst: ObjectiveInstance, seed: int = 0) -> np.ndarray:
    """A uniformly random point of the constraint set."""
    return inst.constraint.sample(rng_stream(seed, 0, "probe"), 1)[0]


def oracle_distances(
    inst: ObjectiveInstance,
    probe: np.ndarray,
    n_draws: int,
    oracle: OracleConfig,
    seed: int = 0,
    agent: int | None = None,
) -> np.ndarray:
    """Per-draw ||g - full subgradient||; agents are drawn uniformly unless fixed."""
    probe = np.asarray(probe, dtype=float)
    if not inst.constraint.contains(probe, tol=1e-9):
        raise ValueError("probe point must lie in the constraint set")
    rng = rng_stream(seed, 0, "noise-study")
    full = np.stack([inst.subgradient(i, probe) for i in range(inst.n_agents)])
    who = (
        np.full(n_draws, agent)
        if agent is not None
        else rng.integers(0, inst.n_agents, size=n_draws)
    )
    out = np.empty(n_draws)
    for t, i in enumerate(who):
        sample = draw_sample(inst, int(i), rng, oracle)
        g = inst.stochastic_subgradient(int(i), probe, sample)
        out[t] = np.linalg.norm(g - full[i])
    return out


def stable_reference(n_draws: int, dimension: int, alpha: float = 1.5, seed: int = 0) -> np.ndarray:
    """Sums of squared symmetric stable coordinates, one per draw."""
    spec = NoiseSpec("alpha_stable", alpha, 1.0, dimension)
    x = sample_noise(spec, rng_stream(seed, 0, "stable-reference"), size=n_draws)
    return np.sum(np.atleast_2d(x) ** 2, axis=1)


def _hist(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    counts, edges = np.histogram(x, bins=HIST_BINS)
    return edges, counts


def _summary(x: np.ndarray, top_fraction: float):
    nz = x[x > 0]
    if nz.size < 100 or np.ptp(nz) == 0:
        return float("nan"), np.empty((0, 2))
    return hill_tail_index(nz, top_fraction), ccdf_loglog_table(nz)


def _slope(table: np.ndarray) -> float | None:
    try:
        return tail_slope(table)
    except (DegenerateSampleError, ValueError):
        return None


def noise_study(
    inst: ObjectiveInstance,
    probe: np.ndarray | None,
    n_draws: int,
    out: str | Path | None = None,
    oracle: OracleConfig = OracleConfig("minibatch", 1),
    seed: int = 0,
    agent: int | None = None,
    top_fraction: float = 0.05,
    reference_alpha: float = 1.5,
) -> NoiseStudy:
    if probe is None:
        probe = default_probe(inst, seed)
    d = oracle_distances(inst, probe, n_draws, oracle, seed, agent)
    hill, ccdf = _summary(d, top_fraction)
    ref = stable_reference(n_draws, inst.dimension, reference_alpha, seed)
    ref_hill, ref_ccdf = _summary(ref, top_fraction)
    study = NoiseStudy(d, hill, ccdf, _hist(d), ref, ref_hill)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        edges, counts = study.histogram
        write_table(out / "noise_histogram.csv", ("bin_lo", "bin_hi", "count"), zip(edges[:-1], edges[1:], counts))
        write_table(out / "noise_ccdf.csv", ("log10_magnitude", "log10_ccdf"), ccdf)
        r_edges, r_counts = _hist(ref)
        write_table(out / "levy_histogram.csv", ("bin_lo", "bin_hi", "count"), zip(r_edges[:-1], r_edges[1:], r_counts))
        write_table(out / "levy_ccdf.csv", ("log10_magnitude", "log10_ccdf"), ref_ccdf)
        write_json(
            out / "noise_study.json",
            {
                "n_draws": n_draws,
                "batch_size": oracle.batch_size,
                "oracle": oracle.mode,
                "agent": "uniform" if agent is None else agent,
                "top_fraction": top_fraction,
                "hill": hill,
                "tail_slope": _slope(ccdf),
                "zero_fraction": float(np.mean(d == 0)),
                "reference_alpha": reference_alpha,
                "reference_hill": ref_hill,
                "probe": probe,
            },
        )
        plotting.noise_panels(out / "fig1.svg", study.histogram, ccdf, (r_edges, r_counts), ref_ccdf)
    return study
