"""Moreau envelope, proximal mapping and the stationarity measure.

For a rho-weakly convex f restricted to a convex set Omega and 0 < mu < 1/rho,

    prox(x)      = argmin_{y in Omega}  f(y) + ||y - x||^2 / (2 mu)
    envelope(x)  = min over the same objective
    grad env(x)  = (x - prox(x)) / mu

The inner problem is (1/mu - rho)-strongly convex and is solved by projected
subgradient steps 2 / (sigma (t + 2)) with averaging over the second half of
the iterates. Every result carries a certificate: the projected-gradient
residual ||y - P(y - s g)|| / s at probe step s. Where the final iterate sits
at a kink of f a single subgradient does not vanish, so the averaged iterate
is also certified with the averaged tail subgradient and the smaller of the
candidate certificates is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from clipdsm.objectives import ConstraintSet, ObjectiveInstance

CHECK_EVERY = 25


class ProxNotConvergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class MoreauConfig:
    mu: float
    inner_max_iters: int = 2000
    inner_tol: float = 1e-5
    solver: str = "projected_subgradient"
    probe_step: float = 1e-3

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.inner_max_iters < 1:
            raise ValueError("inner_max_iters must be >= 1")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if self.solver != "projected_subgradient":
            raise ValueError(f"unknown inner solver {self.solver!r}")


def auto_mu(rho_hat: float) -> float:
    """Default smoothing parameter, half the admissible 1 / (2 (rho + 1))."""
    return 1.0 / (4.0 * (rho_hat + 1.0))


def mu_margin(mu: float, rho_hat: float) -> float:
    """How far mu sits below 1/rho, as the factor (1/rho) / mu."""
    return np.inf if rho_hat <= 0 else 1.0 / (mu * rho_hat)


@dataclass
class ProxResult:
    x_hat: np.ndarray
    certificate: float
    iterations: int
    converged: bool
    distance_bound: float


@dataclass
class BatchProx:
    x_hat: np.ndarray
    certificate: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    sigma: float

    @property
    def distance_bound(self) -> np.ndarray:
        """Certificate converted to a bound on the distance to the exact prox."""
        return self.certificate / self.sigma

    def __getitem__(self, j: int) -> ProxResult:
        return ProxResult(
            x_hat=self.x_hat[j],
            certificate=float(self.certificate[j]),
            iterations=int(self.iterations[j]),
            converged=bool(self.converged[j]),
            distance_bound=float(self.certificate[j] / self.sigma),
        )


def _rho(inst: ObjectiveInstance, rho: float | None) -> float:
    if rho is not None:
        return rho
    return inst.constants.rho_hat if inst.constants is not None else 0.0


def _certificate(Y, G, omega: ConstraintSet, s: float) -> np.ndarray:
    return np.linalg.norm(Y - omega.project(Y - s * G), axis=1) / s


def prox_batch(
    X: np.ndarray,
    cfg: MoreauConfig,
    inst: ObjectiveInstance,
    omega: ConstraintSet | None = None,
    rho: float | None = None,
) -> BatchProx:
    """Proximal points of every row of ``X`` (solved jointly, results independent)."""
    omega = omega or inst.constraint
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(np.isfinite(X)):
        raise ValueError("prox base point must be finite")
    mu = cfg.mu
    sigma = 1.0 / mu - _rho(inst, rho)
    if sigma <= 0:
        raise ValueError(f"mu = {mu} is too large for rho = {_rho(inst, rho)}")
    s = cfg.probe_step
    T = cfg.inner_max_iters
    tail = T // 2

    def psi_grad(Y):
        return inst.global_subgradient(Y) + (Y - X) / mu

    B = X.shape[0]
    Y = omega.project(X)
    out = np.empty_like(X)
    cert = np.full(B, np.inf)
    iters = np.full(B, T)
    done = np.zeros(B, dtype=bool)
    sumY = np.zeros_like(X)
    sumG = np.zeros_like(X)
    count = 0
    for t in range(T):
        G = psi_grad(Y)
        if t % CHECK_EVERY == 0:
            c = _certificate(Y, G, omega, s)
            hit = ~done & (c <= cfg.inner_tol)
            if hit.any():
                out[hit], cert[hit], iters[hit] = Y[hit], c[hit], t
                done |= hit
                if done.all():
                    break
        if t >= tail:
            sumY += Y
            sumG += G
            count += 1
        Y = omega.project(Y - (2.0 / (sigma * (t + 2))) * G)

    rest = ~done
    if rest.any():
        Gl = psi_grad(Y)
        best_y = Y.copy()
        best_c = _certificate(Y, Gl, omega, s)
        if count:
            Ybar = sumY / count
            Gbar = sumG / count
            for cand_c in (_certificate(Ybar, psi_grad(Ybar), omega, s), _certificate(Ybar, Gbar, omega, s)):
                better = cand_c < best_c
                best_y[better] = Ybar[better]
                best_c = np.minimum(best_c, cand_c)
        out[rest], cert[rest] = best_y[rest], best_c[rest]
    converged = cert <= cfg.inner_tol
    return BatchProx(out, cert, iters, converged, sigma)


def prox(x, cfg: MoreauConfig, inst: ObjectiveInstance, omega: ConstraintSet | None = None, rho=None) -> ProxResult:
    return prox_batch(np.asarray(x, dtype=float)[None, :], cfg, inst, omega, rho)[0]


def _resolve(x, cfg, inst, omega, result):
    if result is None:
        result = prox(x, cfg, inst, omega)
    return result


def envelope_value(x, cfg, inst, omega=None, result: ProxResult | None = None, strict=False) -> float:
    x = np.asarray(x, dtype=float)
    r = _resolve(x, cfg, inst, omega, result)
    if strict and not r.converged:
        raise ProxNotConvergedError(f"prox certificate {r.certificate:.3g} above tolerance")
    d = r.x_hat - x
    return float(inst.value(r.x_hat) + d @ d / (2.0 * cfg.mu))


def envelope_gradient(x, cfg, inst, omega=None, result: ProxResult | None = None, strict=False) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = _resolve(x, cfg, inst, omega, result)
    if strict and not r.converged:
        raise ProxNotConvergedError(f"prox certificate {r.certificate:.3g} above tolerance")
    return (x - r.x_hat) / cfg.mu


@dataclass
class Stationarity:
    grad_norm: float
    dist_bound: float
    certificate: float
    converged: bool


def stationarity(x, cfg, inst, omega=None, result: ProxResult | None = None) -> Stationarity:
    x = np.asarray(x, dtype=float)
    r = _resolve(x, cfg, inst, omega, result)
    grad = envelope_gradient(x, cfg, inst, omega, r)
    return Stationarity(
        grad_norm=float(np.linalg.norm(grad)),
        dist_bound=float(np.linalg.norm(r.x_hat - x) / cfg.mu),
        certificate=r.certificate,
        converged=r.converged,
    )


def stationarity_batch(X, cfg, inst, omega=None) -> tuple[np.ndarray, np.ndarray]:
    """Moreau gradient norms and certificates for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = prox_batch(X, cfg, inst, omega)
    return np.linalg.norm(X - r.x_hat, axis=1) / cfg.mu, r.certificate


@dataclass
class ContractionReport:
    ratio: np.ndarray
    bound: float
    slack: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratio))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs))

    def __bool__(self) -> bool:
        return self.passed


def prox_contraction_check(x1, x2, cfg, inst, omega=None, rho=None) -> ContractionReport:
    """Check ||prox(x1) - prox(x2)|| <= ||x1 - x2|| / (1 - mu rho) + certificate slack.

    Accepts single points or matching stacks of points. The slack is the sum
    of the two distance bounds implied by the certificates.
    """
    X1 = np.atleast_2d(np.asarray(x1, dtype=float))
    X2 = np.atleast_2d(np.asarray(x2, dtype=float))
    if X1.shape != X2.shape:
        raise ValueError("x1 and x2 must have the same shape")
    r = _rho(inst, rho)
    both = prox_batch(np.concatenate((X1, X2)), cfg, inst, omega, r)
    B = X1.shape[0]
    P1, P2 = both.x_hat[:B], both.x_hat[B:]
    db = both.distance_bound
    slack = db[:B] + db[B:]
    bound = 1.0 / (1.0 - cfg.mu * r)
    gap = np.linalg.norm(X1 - X2, axis=1)
    lhs = np.linalg.norm(P1 - P2, axis=1)
    ratio = np.divide(lhs, gap, out=np.zeros_like(lhs), where=gap > 0)
    return ContractionReport(ratio=ratio, bound=bound, slack=slack, lhs=lhs, rhs=bound * gap + slack)
