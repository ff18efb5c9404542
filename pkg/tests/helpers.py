"""Small closed-form objectives used as oracles in the tests."""

import numpy as np

from clipdsm.objectives import ConstraintSet, Constants, ObjectiveInstance, QuadraticTest


def half_square(dim: int, radius: float = 1e3) -> QuadraticTest:
    """f(y) = ||y||^2 / 2 on a large ball: prox(x) = x / (1 + mu)."""
    inst = QuadraticTest(np.zeros((1, dim)), ConstraintSet.ball(dim, radius))
    inst.constants = Constants(C0=radius, L_hat=radius, rho_hat=0.0)
    return inst


class AbsValue(ObjectiveInstance):
    """f(y) = |y| in one dimension; prox is soft thresholding."""

    kind = "abs"

    def __init__(self, radius: float = 100.0):
        self.n_agents, self.dimension = 1, 1
        self.constraint = ConstraintSet.ball(1, radius)
        self.constants = Constants(1.0, 1.0, 0.0)

    def local_value(self, i, theta):
        return np.abs(self._check(theta)[..., 0])

    def subgradient(self, i, theta):
        return np.sign(self._check(theta))


class Constant(ObjectiveInstance):
    kind = "constant"

    def __init__(self, c: float, dim: int = 3):
        self.c = c
        self.n_agents, self.dimension = 2, dim
        self.constraint = ConstraintSet.unit_ball(dim)
        self.constants = Constants(0.0, 0.0, 0.0)

    def local_value(self, i, theta):
        theta = self._check(theta)
        return np.full(theta.shape[:-1], self.c) if theta.ndim > 1 else self.c

    def subgradient(self, i, theta):
        return np.zeros_like(self._check(theta))


class SmoothWeaklyConvex(ObjectiveInstance):
    """f(y) = sin y1 + sin y2 + y1 y2 / 2; Hessian eigenvalues >= -1.5, so rho = 1.5."""

    kind = "smooth2d"

    def __init__(self, radius: float = 10.0):
        self.n_agents, self.dimension = 1, 2
        self.constraint = ConstraintSet.ball(2, radius)
        self.constants = Constants(radius + 2.0, radius + 2.0, 1.5)

    def local_value(self, i, theta):
        t = self._check(theta)
        return np.sin(t[..., 0]) + np.sin(t[..., 1]) + 0.5 * t[..., 0] * t[..., 1]

    def subgradient(self, i, theta):
        t = self._check(theta)
        return np.stack((np.cos(t[..., 0]) + 0.5 * t[..., 1], np.cos(t[..., 1]) + 0.5 * t[..., 0]), axis=-1)
