"""Weakly convex objective instances with subgradient oracles.

Three instance kinds are provided:

* :class:`PhaseRetrieval`: f_i(x) = (1/m) * || (W_i x)^2 - y_i ||_1, the robust
  phase retrieval loss, weakly convex as an l1 norm composed with a smooth map.
* :class:`QuadraticTest`: f_i(x) = 0.5 * ||x - c_i||^2, a smooth convex sanity
  problem whose constrained minimizer is the projected centroid of the c_i.
* :class:`ZeroObjective`: f = 0, used to isolate noise and mixing effects.

The global objective is always the agent average f = (1/N) sum_i f_i.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from clipdsm.containers import read_arrays, read_meta, write_arrays
from clipdsm.noise import NoiseSpec, sample_noise

SAFETY = 1.5
RESIDUAL_TOL = 1e-12


class RecoveryRegimeWarning(UserWarning):
    """Fewer than 3n measurements: recovery is not expected to succeed."""


class OracleError(RuntimeError):
    def __init__(self, agent: int, cause: Exception):
        super().__init__(f"oracle failure at agent {agent}: {cause}")
        self.agent = agent


# ---------------------------------------------------------------------------
# constraint sets


@dataclass(frozen=True)
class ConstraintSet:
    kind: str
    dimension: int
    radius: float = 1.0
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("ball", "box"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.kind == "ball" and not self.radius > 0:
            raise ValueError("ball radius must be positive")
        if self.kind == "box" and not self.lo <= self.hi:
            raise ValueError("box needs lo <= hi")

    @classmethod
    def unit_ball(cls, dimension: int) -> "ConstraintSet":
        return cls("ball", dimension, radius=1.0)

    @classmethod
    def ball(cls, dimension: int, radius: float) -> "ConstraintSet":
        return cls("ball", dimension, radius=float(radius))

    @classmethod
    def box(cls, dimension: int, lo: float, hi: float) -> "ConstraintSet":
        return cls("box", dimension, lo=float(lo), hi=float(hi))

    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean projection; accepts a vector or a stack of row vectors."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise ValueError(f"expected last dimension {self.dimension}, got {x.shape}")
        if self.kind == "box":
            return np.clip(x, self.lo, self.hi)
        nrm = np.linalg.norm(x, axis=-1, keepdims=True)
        scale = np.where(nrm > self.radius, self.radius / np.where(nrm > 0, nrm, 1.0), 1.0)
        return x * scale

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))
        return bool(np.all(np.linalg.norm(x, axis=-1) <= self.radius + tol))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform draws from the set."""
        if self.kind == "box":
            return rng.uniform(self.lo, self.hi, size=(size, self.dimension))
        d = rng.standard_normal((size, self.dimension))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=(size, 1)) ** (1.0 / self.dimension)
        return d * r

    def max_distance_from(self, c: np.ndarray) -> float:
        """sup over x in the set of ||x - c||."""
        c = np.asarray(c, dtype=float)
        if self.kind == "ball":
            return self.radius + float(np.linalg.norm(c))
        far = np.where(np.abs(c - self.lo) >= np.abs(c - self.hi), self.lo, self.hi)
        return float(np.linalg.norm(far - c))

    def to_dict(self) -> dict:
        if self.kind == "ball":
            return {"kind": "ball", "dimension": self.dimension, "radius": self.radius}
        return {"kind": "box", "dimension": self.dimension, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintSet":
        return cls(**d)


def project(c: ConstraintSet, x: np.ndarray) -> np.ndarray:
    return c.project(x)


# ---------------------------------------------------------------------------
# oracle plumbing


@dataclass(frozen=True)
class OracleConfig:
    """How an agent's stochastic subgradient is formed.

    ``exact`` returns the full-batch subgradient, ``minibatch`` averages
    ``batch_size`` measurement terms drawn uniformly without replacement and
    ``synthetic`` adds a draw of ``noise`` to the full-batch subgradient.
    """

    mode: str = "exact"
    batch_size: int = 1
    noise: NoiseSpec | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("exact", "minibatch", "synthetic"):
            raise ValueError(f"unknown oracle mode {self.mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.mode == "synthetic" and self.noise is None:
            raise ValueError("synthetic oracle needs a noise spec")


@dataclass(frozen=True)
class OracleSample:
    agent: int
    batch_indices: np.ndarray | None = None
    noise: np.ndarray | None = None


def draw_sample(
    inst: "ObjectiveInstance", agent: int, rng: np.random.Generator, cfg: OracleConfig
) -> OracleSample:
    if cfg.mode == "exact":
        return OracleSample(agent)
    if cfg.mode == "minibatch":
        m = inst.n_measurements
        if m == 0:
            raise ValueError(f"{inst.kind} instance has no measurements to subsample")
        idx = rng.choice(m, size=min(cfg.batch_size, m), replace=False)
        return OracleSample(agent, batch_indices=np.sort(idx))
    noise = sample_noise(cfg.noise, rng)
    if noise.shape != (inst.dimension,):
        raise ValueError(f"noise dimension {noise.shape} does not match instance {inst.dimension}")
    return OracleSample(agent, noise=noise)


# ---------------------------------------------------------------------------
# instances


@dataclass
class Constants:
    C0: float
    L_hat: float
    rho_hat: float

    def to_dict(self) -> dict:
        return {"C0": self.C0, "L_hat": self.L_hat, "rho_hat": self.rho_hat}


class ObjectiveInstance:
    kind = "abstract"
    n_agents: int
    dimension: int
    constraint: ConstraintSet
    constants: Constants | None = None
    truth: np.ndarray | None = None

    @property
    def n_measurements(self) -> int:
        return 0

    def _check(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.dimension:
            raise ValueError(f"expected dimension {self.dimension}, got shape {theta.shape}")
        return theta

    # per-agent pieces, overridden by subclasses
    def local_value(self, i: int, theta: np.ndarray) -> np.ndarray | float:
        raise NotImplementedError

    def subgradient(self, i: int, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def minibatch_subgradient(self, i: int, theta: np.ndarray, idx: np.ndarray) -> np.ndarray:
        raise ValueError(f"{self.kind} instance has no measurements to subsample")

    def value(self, theta: np.ndarray) -> np.ndarray | float:
        """Global objective (agent average); vectorized over leading axes."""
        theta = self._check(theta)
        return sum(self.local_value(i, theta) for i in range(self.n_agents)) / self.n_agents

    def global_subgradient(self, theta: np.ndarray) -> np.ndarray:
        """A subgradient of the global objective; accepts a stack of points."""
        theta = self._check(theta)
        if theta.ndim == 1:
            return sum(self.subgradient(i, theta) for i in range(self.n_agents)) / self.n_agents
        return np.stack([self.global_subgradient(t) for t in theta])

    def stochastic_subgradient(self, i: int, theta: np.ndarray, sample: OracleSample) -> np.ndarray:
        theta = self._check(theta)
        if sample.batch_indices is not None:
            if len(sample.batch_indices) == 0:
                raise ValueError("empty mini-batch")
            g = self.minibatch_subgradient(i, theta, sample.batch_indices)
        else:
            g = self.subgradient(i, theta)
        if sample.noise is not None:
            g = g + sample.noise
        return g

    def minimizer(self) -> np.ndarray | None:
        """Known global minimizer, when one is available in closed form."""
        return None


class PhaseRetrieval(ObjectiveInstance):
    kind = "phase_retrieval"

    def __init__(self, W, y, truth=None, constraint: ConstraintSet | None = None):
        W = np.asarray(W, dtype=float)
        y = np.asarray(y, dtype=float)
        if W.ndim != 3 or y.shape != W.shape[:2]:
            raise ValueError("W must be (N, m, n) and y must be (N, m)")
        self.W, self.y = W, y
        self.n_agents, self.m, self.dimension = W.shape
        self.truth = None if truth is None else np.asarray(truth, dtype=float)
        self.constraint = constraint or ConstraintSet.unit_ball(self.dimension)
        self._Wflat = W.reshape(-1, self.dimension)
        self._yflat = y.reshape(-1)

    @property
    def n_measurements(self) -> int:
        return self.m

    def local_value(self, i, theta):
        theta = self._check(theta)
        a = theta @ self.W[i].T
        return np.mean(np.abs(a * a - self.y[i]), axis=-1)

    def value(self, theta):
        theta = self._check(theta)
        a = theta @ self._Wflat.T
        return np.mean(np.abs(a * a - self._yflat), axis=-1)

    @staticmethod
    def _residual_sign(a: np.ndarray, y: np.ndarray) -> np.ndarray:
        # residuals at rounding level count as exact zeros, so sign(0) = 0 holds
        # at the true signal whatever the summation order of <w, theta>
        r = a * a - y
        return np.where(np.abs(r) > RESIDUAL_TOL * (a * a + y), np.sign(r), 0.0)

    @classmethod
    def _terms_grad(cls, Wrows: np.ndarray, yrows: np.ndarray, theta: np.ndarray) -> np.ndarray:
        a = theta @ Wrows.T
        coef = 2.0 * a * cls._residual_sign(a, yrows)
        return coef @ Wrows / Wrows.shape[0]

    def subgradient(self, i, theta):
        return self._terms_grad(self.W[i], self.y[i], self._check(theta))

    def minibatch_subgradient(self, i, theta, idx):
        idx = np.asarray(idx)
        if idx.size == 0:
            raise ValueError("empty mini-batch")
        if idx.min() < 0 or idx.max() >= self.m:
            raise IndexError("batch index out of range")
        return self._terms_grad(self.W[i, idx], self.y[i, idx], self._check(theta))

    def global_subgradient(self, theta):
        return self._terms_grad(self._Wflat, self._yflat, self._check(theta))

    def measurement_terms(self, i: int, theta: np.ndarray) -> np.ndarray:
        """Per-measurement subgradient terms of agent i, shape (m, n)."""
        a = self.W[i] @ self._check(theta)
        return (2.0 * a * self._residual_sign(a, self.y[i]))[:, None] * self.W[i]

    def minimizer(self):
        return self.truth


class QuadraticTest(ObjectiveInstance):
    kind = "quadratic"

    def __init__(self, centers, constraint: ConstraintSet | None = None):
        c = np.asarray(centers, dtype=float)
        if c.ndim != 2:
            raise ValueError("centers must be (N, n)")
        self.centers = c
        self.n_agents, self.dimension = c.shape
        self.constraint = constraint or ConstraintSet.unit_ball(self.dimension)

    def local_value(self, i, theta):
        d = self._check(theta) - self.centers[i]
        return 0.5 * np.sum(d * d, axis=-1)

    def subgradient(self, i, theta):
        return self._check(theta) - self.centers[i]

    def global_subgradient(self, theta):
        return self._check(theta) - self.centers.mean(axis=0)

    def minimizer(self):
        return self.constraint.project(self.centers.mean(axis=0))


class ZeroObjective(ObjectiveInstance):
    kind = "zero"

    def __init__(self, n_agents: int, dimension: int, constraint: ConstraintSet | None = None):
        self.n_agents, self.dimension = n_agents, dimension
        self.constraint = constraint or ConstraintSet.unit_ball(dimension)
        self.constants = Constants(0.0, 0.0, 0.0)

    def local_value(self, i, theta):
        theta = self._check(theta)
        return np.zeros(theta.shape[:-1]) if theta.ndim > 1 else 0.0

    def subgradient(self, i, theta):
        return np.zeros_like(self._check(theta))

    def global_subgradient(self, theta):
        return np.zeros_like(self._check(theta))


# ---------------------------------------------------------------------------
# generators and constants


def gen_phase_retrieval(
    n: int,
    n_agents: int,
    m: int,
    rng: np.random.Generator,
    signal="random",
    constraint: ConstraintSet | None = None,
    n_probe: int = 200,
) -> PhaseRetrieval:
    """Gaussian-measurement phase retrieval with exact observations y = <w, signal>^2."""
    if n_agents * m < 3 * n:
        warnings.warn(
            f"N*m = {n_agents * m} < 3n = {3 * n}: exact recovery is not expected",
            RecoveryRegimeWarning,
            stacklevel=2,
        )
    W = rng.standard_normal((n_agents, m, n))
    if isinstance(signal, str):
        if signal != "random":
            raise ValueError(f"unknown signal source {signal!r}")
        s = rng.standard_normal(n)
    else:
        s = np.asarray(signal, dtype=float).copy()
        if s.shape != (n,):
            raise ValueError(f"signal must have shape ({n},)")
        if np.linalg.norm(s) > 1.0 + 1e-12:
            raise ValueError("signal must satisfy ||signal|| <= 1")
    nrm = np.linalg.norm(s)
    if nrm > 0:
        s = s / nrm
    y = np.einsum("imn,n->im", W, s) ** 2
    inst = PhaseRetrieval(W, y, truth=s, constraint=constraint)
    inst.constants = estimate_constants(inst, n_probe, rng)
    return inst


def gen_quadratic_test(
    n: int,
    n_agents: int,
    rng: np.random.Generator,
    constraint: ConstraintSet | None = None,
    spread: float = 1.0,
    n_probe: int = 200,
) -> QuadraticTest:
    centers = rng.standard_normal((n_agents, n)) * (spread / math.sqrt(n))
    inst = QuadraticTest(centers, constraint)
    inst.constants = estimate_constants(inst, n_probe, rng)
    return inst


def analytic_C0(inst: ObjectiveInstance) -> float:
    """Uniform bound on ||subgradient f_i|| over the constraint set."""
    c = inst.constraint
    if isinstance(inst, PhaseRetrieval):
        # |<w, theta>| <= R ||w|| on a ball of radius R
        if c.kind == "ball":
            R = c.radius
        else:
            R = float(np.linalg.norm(np.maximum(abs(c.lo), abs(c.hi)) * np.ones(c.dimension)))
        sq = np.sum(inst.W**2, axis=2)
        return float(np.max(2.0 * R * sq.mean(axis=1)))
    if isinstance(inst, QuadraticTest):
        return max(c.max_distance_from(ci) for ci in inst.centers)
    return 0.0


def _probe_pairs(c: ConstraintSet, rng: np.random.Generator, n_probe: int):
    """Half uniform pairs, half nearby pairs at random separations."""
    half = n_probe // 2
    x = c.sample(rng, n_probe)
    y_far = c.sample(rng, n_probe - half)
    d = rng.standard_normal((half, c.dimension))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = 10.0 ** rng.uniform(-2, 0, size=(half, 1))
    scale = c.radius if c.kind == "ball" else (c.hi - c.lo)
    y_near = c.project(x[:half] + d * r * scale)
    y = np.concatenate((y_near, y_far))
    keep = np.linalg.norm(x - y, axis=1) > 1e-9
    return x[keep], y[keep]


def estimate_constants(inst: ObjectiveInstance, n_probe: int, rng: np.random.Generator) -> Constants:
    """C0 analytically, L and rho by sampling (each inflated by 1.5)."""
    if n_probe < 100:
        raise ValueError("n_probe must be at least 100")
    C0 = analytic_C0(inst)
    L = 0.0
    rho = 0.0
    for i in range(inst.n_agents):
        x, y = _probe_pairs(inst.constraint, rng, n_probe)
        fx, fy = inst.local_value(i, x), inst.local_value(i, y)
        dist = np.linalg.norm(x - y, axis=1)
        L = max(L, float(np.max(np.abs(fx - fy) / dist)))
        for t in (0.25, 0.5, 0.75):
            fz = inst.local_value(i, t * x + (1 - t) * y)
            gap = fz - t * fx - (1 - t) * fy
            rho = max(rho, float(np.max(2.0 * gap / (t * (1 - t) * dist**2))))
        g = np.stack([inst.subgradient(i, xi) for xi in x])
        lin = fx + np.sum(g * (y - x), axis=1) - fy
        rho = max(rho, float(np.max(2.0 * lin / dist**2)))
    return Constants(C0=C0, L_hat=SAFETY * L, rho_hat=SAFETY * max(rho, 0.0))


def recovery_error(theta: np.ndarray, truth: np.ndarray) -> float:
    """Sign-invariant relative error min(||theta - t||, ||theta + t||) / ||t||."""
    truth = np.asarray(truth, dtype=float)
    nt = float(np.linalg.norm(truth))
    if nt == 0.0:
        raise ValueError("recovery error undefined for a zero ground truth")
    theta = np.asarray(theta, dtype=float)
    return min(float(np.linalg.norm(theta - truth)), float(np.linalg.norm(theta + truth))) / nt


# ---------------------------------------------------------------------------
# persistence


def save_instance(inst: ObjectiveInstance, path, seed: int | None = None) -> None:
    meta = {
        "kind": inst.kind,
        "n_agents": inst.n_agents,
        "dimension": inst.dimension,
        "constraint": inst.constraint.to_dict(),
        "constants": inst.constants.to_dict() if inst.constants else None,
        "seed": seed,
    }
    if isinstance(inst, PhaseRetrieval):
        has_truth = inst.truth is not None
        arrays = [inst.W, inst.y] + ([inst.truth] if has_truth else [])
        meta["arrays"] = ["W", "y"] + (["truth"] if has_truth else [])
    elif isinstance(inst, QuadraticTest):
        arrays = [inst.centers]
        meta["arrays"] = ["centers"]
    else:
        arrays = []
        meta["arrays"] = []
    write_arrays(path, arrays, meta)


def load_instance(path) -> ObjectiveInstance:
    meta = read_meta(path)
    arrays = dict(zip(meta["arrays"], read_arrays(path)))
    constraint = ConstraintSet.from_dict(meta["constraint"])
    kind = meta["kind"]
    if kind == "phase_retrieval":
        inst = PhaseRetrieval(arrays["W"], arrays["y"], arrays.get("truth"), constraint)
    elif kind == "quadratic":
        inst = QuadraticTest(arrays["centers"], constraint)
    elif kind == "zero":
        inst = ZeroObjective(meta["n_agents"], meta["dimension"], constraint)
    else:
        raise ValueError(f"unknown instance kind {kind!r}")
    if meta.get("constants"):
        inst.constants = Constants(**meta["constants"])
    return inst
