"""Doubly stochastic communication matrices for the agent network.

A :class:`MixingMatrix` holds the weights a_ij used by every agent to average
its neighbours' iterates. A :class:`MixingSchedule` maps the round index to
the matrix in force at that round; static schedules return the same matrix
every round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

STOCHASTIC_TOL = 1e-12


class InvalidTopologyError(ValueError):
    """Raised when a requested network cannot be built."""


@dataclass(frozen=True)
class MixingMatrix:
    weights: np.ndarray
    eta: float | None = None

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InvalidTopologyError(f"weights must be square, got shape {w.shape}")
        if np.any(w < 0):
            raise InvalidTopologyError("weights must be nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.eta is None:
            object.__setattr__(self, "eta", float(w[w > 0].min()) if np.any(w > 0) else 0.0)

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0]

    def support(self) -> np.ndarray:
        """Boolean adjacency of the communication graph, self-loops removed."""
        adj = self.weights > 0
        np.fill_diagonal(adj, False)
        return adj


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class MixingSchedule:
    """Round-indexed mixing matrices with a bounded intercommunication interval."""

    generator: Callable[[int], MixingMatrix]
    period_B: int = 1
    static: bool = False

    def __post_init__(self) -> None:
        if self.period_B < 1:
            raise InvalidTopologyError("period_B must be >= 1")

    def __call__(self, k: int) -> MixingMatrix:
        return self.generator(k)

    @property
    def n_agents(self) -> int:
        return self.generator(0).n_agents


def static_schedule(m: MixingMatrix) -> MixingSchedule:
    return MixingSchedule(generator=lambda k: m, period_B=1, static=True)


def cyclic_schedule(matrices: list[MixingMatrix]) -> MixingSchedule:
    """Cycle through ``matrices``; the period is the list length."""
    if not matrices:
        raise InvalidTopologyError("cyclic schedule needs at least one matrix")
    mats = tuple(matrices)
    return MixingSchedule(
        generator=lambda k: mats[k % len(mats)], period_B=len(mats), static=len(mats) == 1
    )


def ring_mixing(n_agents: int) -> MixingMatrix:
    """Ring where each node averages itself and its two neighbours with weight 1/3."""
    if n_agents < 3:
        raise InvalidTopologyError(f"a ring needs at least 3 agents, got {n_agents}")
    w = np.zeros((n_agents, n_agents))
    for i in range(n_agents):
        for j in (i - 1, i, i + 1):
            w[i, j % n_agents] = 1.0 / 3.0
    return MixingMatrix(w)


def complete_mixing(n_agents: int) -> MixingMatrix:
    if n_agents < 1:
        raise InvalidTopologyError("need at least one agent")
    return MixingMatrix(np.full((n_agents, n_agents), 1.0 / n_agents))


def load_weights(path: str | Path) -> MixingMatrix:
    """Read a custom weights file: first line N, then N rows of N decimals."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 1:
        raise InvalidTopologyError(f"{path}: first line must hold the agent count")
    n = int(lines[0][0])
    rows = lines[1:]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise InvalidTopologyError(f"{path}: expected {n} rows of {n} weights")
    return MixingMatrix(np.array([[float(v) for v in r] for r in rows]))


def save_weights(m: MixingMatrix, path: str | Path) -> None:
    lines = [str(m.n_agents)]
    lines += [" ".join(repr(float(v)) for v in row) for row in m.weights]
    Path(path).write_text("\n".join(lines) + "\n")


def validate_mixing(m: MixingMatrix, eta: float, tol: float = STOCHASTIC_TOL) -> ValidationReport:
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = m.weights
    report = ValidationReport()
    row_err = np.abs(w.sum(axis=1) - 1.0)
    col_err = np.abs(w.sum(axis=0) - 1.0)
    report.details.update(max_row_error=float(row_err.max()), max_col_error=float(col_err.max()))
    if row_err.max() > tol:
        report.violations.append("row-stochasticity")
    if col_err.max() > tol:
        report.violations.append("column-stochasticity")
    positive = w[w > 0]
    if positive.size and positive.min() < eta:
        report.violations.append("eta-floor")
    if np.any(np.diag(w) <= 0):
        report.violations.append("self-loops")
    return report


def is_doubly_stochastic(m: MixingMatrix, tol: float = STOCHASTIC_TOL) -> bool:
    w = m.weights
    return bool(
        np.all(np.abs(w.sum(axis=1) - 1.0) <= tol) and np.all(np.abs(w.sum(axis=0) - 1.0) <= tol)
    )


def mix(m: MixingMatrix, states: np.ndarray) -> np.ndarray:
    """Row i of the result is sum_j a_ij * states[j]."""
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or states.shape[0] != m.n_agents:
        raise ValueError(
            f"states must have {m.n_agents} rows, got shape {states.shape}"
        )
    return m.weights @ states


def _deviation_operator(w: np.ndarray) -> np.ndarray:
    n = w.shape[0]
    return w - np.full((n, n), 1.0 / n)


def spectral_gap_power(m: MixingMatrix, iters: int = 5000, seed: int = 0) -> float:
    """Largest singular value of W - 11^T/N by power iteration on its Gram matrix."""
    d = _deviation_operator(m.weights)
    gram = d.T @ d
    v = np.random.default_rng(seed).standard_normal(m.n_agents)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        u = gram @ v
        nrm = np.linalg.norm(u)
        if nrm == 0.0:
            return 0.0
        v = u / nrm
        if abs(nrm - est) <= 1e-15 * max(nrm, 1.0):
            est = nrm
            break
        est = nrm
    return float(np.sqrt(est))


def spectral_gap(m: MixingMatrix) -> float:
    """Second-largest singular value of a doubly stochastic matrix.

    Equal to the operator norm of W - 11^T/N, i.e. the per-round contraction
    factor of the disagreement ||X - 1 xbar^T||. A value of 1 means the
    network does not mix.
    """
    if not is_doubly_stochastic(m):
        raise ValueError("spectral_gap requires a doubly stochastic matrix")
    return float(np.linalg.norm(_deviation_operator(m.weights), 2))


def schedule_lambda(s: MixingSchedule) -> float:
    """Worst per-round contraction factor over one period of the schedule."""
    return max(spectral_gap(s(k)) for k in range(s.period_B))


def _strongly_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    reach = adj.copy() | np.eye(n, dtype=bool)
    # boolean transitive closure, Floyd-Warshall order
    for k in range(n):
        reach |= reach[:, k : k + 1] & reach[k : k + 1, :]
    return bool(reach.all())


def check_b_connectivity(s: MixingSchedule, horizon: int) -> ValidationReport:
    """Check every window of ``period_B`` rounds has a strongly connected union graph."""
    B = s.period_B
    if horizon < B:
        raise ValueError("horizon must be at least period_B")
    report = ValidationReport()
    supports = [s(k).support() for k in range(horizon)]
    starts = range(1) if s.static else range(horizon - B + 1)
    bad = []
    for start in starts:
        union = np.logical_or.reduce(supports[start : start + B])
        if not _strongly_connected(union):
            bad.append(start)
    report.details["failing_windows"] = bad
    if bad:
        report.violations.append("disconnected-window")
    return report
