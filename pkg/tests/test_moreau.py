import numpy as np
import pytest
from helpers import AbsValue, Constant, SmoothWeaklyConvex, half_square

from clipdsm.algorithm import ScheduleSpec, run
from clipdsm.moreau import (
    MoreauConfig,
    ProxNotConvergedError,
    auto_mu,
    envelope_gradient,
    envelope_value,
    prox,
    prox_batch,
    prox_contraction_check,
    stationarity,
)
from clipdsm.noise import NoiseSpec, rng_stream
from clipdsm.objectives import (
    ConstraintSet,
    OracleConfig,
    gen_phase_retrieval,
    gen_quadratic_test,
)
from clipdsm.topology import ring_mixing


@pytest.fixture(scope="module")
def desk():
    return gen_phase_retrieval(49, 7, 21, rng_stream(0, 0, "instance"))


@pytest.fixture(scope="module")
def desk_cfg(desk):
    return MoreauConfig(mu=auto_mu(desk.constants.rho_hat))


def test_auto_mu_inside_interval():
    for rho in (0.0, 0.5, 3.5, 40.0):
        mu = auto_mu(rho)
        assert 0 < mu < 1 / (2 * (rho + 1))


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        MoreauConfig(mu=0.0)
    with pytest.raises(ValueError):
        MoreauConfig(mu=0.1, solver="newton")


def test_mu_too_large_for_rho():
    with pytest.raises(ValueError):
        prox(np.zeros(2), MoreauConfig(mu=1.0), SmoothWeaklyConvex())


@pytest.mark.parametrize("mu", [0.05, 0.2, 0.5])
def test_prox_half_square_closed_form(mu):
    inst = half_square(4)
    cfg = MoreauConfig(mu=mu)
    x = np.array([0.3, -1.0, 2.0, 0.0])
    r = prox(x, cfg, inst)
    assert np.allclose(r.x_hat, x / (1 + mu), atol=cfg.inner_tol)
    assert np.allclose(envelope_gradient(x, cfg, inst), x / (1 + mu), atol=1e-6)


@pytest.mark.parametrize("x", [-2.0, -0.3, 0.05, 0.7, 3.0])
def test_prox_abs_soft_threshold(x):
    mu = 0.25
    r = prox(np.array([x]), MoreauConfig(mu=mu), AbsValue())
    want = np.sign(x) * max(abs(x) - mu, 0.0)
    assert r.x_hat[0] == pytest.approx(want, abs=1e-4)


def _oracle_prox(inst, x, mu, iters):
    """Long independent projected-subgradient solve with running average."""
    sigma = 1 / mu - inst.constants.rho_hat
    y = inst.constraint.project(x)
    avg = np.zeros_like(x)
    weight = 0.0
    for t in range(iters):
        g = inst.global_subgradient(y) + (y - x) / mu
        y = inst.constraint.project(y - g / (sigma * (t + 1)))
        # weights proportional to t favour late iterates
        avg += t * y
        weight += t
    return avg / weight


def test_prox_desk_matches_long_run_oracle(desk, desk_cfg):
    rng = np.random.default_rng(21)
    xs = desk.constraint.sample(rng, 1)
    got = prox_batch(xs, desk_cfg, desk)
    for j, x in enumerate(xs):
        ref = _oracle_prox(desk, x, desk_cfg.mu, 100 * desk_cfg.inner_max_iters)
        assert np.linalg.norm(got.x_hat[j] - ref) <= 1e-3


def test_prox_result_in_constraint(desk, desk_cfg):
    xs = desk.constraint.sample(np.random.default_rng(22), 20)
    r = prox_batch(xs, desk_cfg, desk)
    assert all(desk.constraint.contains(p) for p in r.x_hat)


def test_batch_equals_single(desk, desk_cfg):
    xs = desk.constraint.sample(np.random.default_rng(23), 3)
    b = prox_batch(xs, desk_cfg, desk)
    for j in range(3):
        s = prox(xs[j], desk_cfg, desk)
        assert np.allclose(s.x_hat, b.x_hat[j], atol=1e-12)


def test_envelope_constant():
    inst = Constant(2.5)
    cfg = MoreauConfig(mu=0.3)
    for x in np.random.default_rng(24).uniform(-0.5, 0.5, size=(5, 3)):
        assert envelope_value(x, cfg, inst) == pytest.approx(2.5)
        assert np.allclose(envelope_gradient(x, cfg, inst), 0.0)


def test_envelope_half_square_at_origin():
    assert envelope_value(np.zeros(3), MoreauConfig(mu=0.2), half_square(3)) == pytest.approx(0.0, abs=1e-12)


def test_envelope_below_objective(desk, desk_cfg):
    xs = desk.constraint.sample(np.random.default_rng(25), 10)
    for x in xs:
        assert envelope_value(x, desk_cfg, desk) <= desk.value(x) + desk_cfg.inner_tol


def test_gradient_zero_at_prox_fixed_point():
    inst = gen_quadratic_test(3, 4, rng_stream(1, 0, "q"))
    cfg = MoreauConfig(mu=0.2)
    xstar = inst.minimizer()
    st = stationarity(xstar, cfg, inst)
    assert st.grad_norm <= cfg.inner_tol / cfg.mu


def test_stationarity_at_truth(desk, desk_cfg):
    st = stationarity(desk.truth, desk_cfg, desk)
    assert st.grad_norm <= 10 * desk_cfg.inner_tol / desk_cfg.mu


def test_gradient_identity_by_construction(desk, desk_cfg):
    x = desk.constraint.sample(np.random.default_rng(26), 1)[0]
    r = prox(x, desk_cfg, desk)
    g = envelope_gradient(x, desk_cfg, desk, result=r)
    assert np.array_equal(g, (x - r.x_hat) / desk_cfg.mu)


def test_finite_difference_gradient_smooth():
    inst = SmoothWeaklyConvex()
    cfg = MoreauConfig(mu=0.2)
    h = 1e-3
    for x in np.random.default_rng(27).uniform(-2, 2, size=(5, 2)):
        g = envelope_gradient(x, cfg, inst)
        fd = np.array(
            [
                (envelope_value(x + h * e, cfg, inst) - envelope_value(x - h * e, cfg, inst)) / (2 * h)
                for e in np.eye(2)
            ]
        )
        assert np.linalg.norm(fd - g) <= 1e-3 * np.linalg.norm(g)


def test_strict_mode_raises_on_budget(desk):
    cfg = MoreauConfig(mu=auto_mu(desk.constants.rho_hat), inner_max_iters=3, inner_tol=1e-12)
    x = desk.constraint.sample(np.random.default_rng(28), 1)[0]
    with pytest.raises(ProxNotConvergedError):
        envelope_value(x, cfg, desk, strict=True)


def test_contraction_identical_points(desk, desk_cfg):
    x = desk.constraint.sample(np.random.default_rng(29), 1)[0]
    rep = prox_contraction_check(x, x, desk_cfg, desk)
    assert rep.max_ratio == 0.0


def test_contraction_small_sample(desk, desk_cfg):
    rng = np.random.default_rng(30)
    x1, x2 = desk.constraint.sample(rng, 20), desk.constraint.sample(rng, 20)
    assert prox_contraction_check(x1, x2, desk_cfg, desk).passed


def test_prox_idempotence_near_fixed_point():
    inst = gen_quadratic_test(3, 4, rng_stream(2, 0, "q"))
    cfg = MoreauConfig(mu=0.2)
    x = inst.minimizer() + 1e-7
    r = prox(x, cfg, inst)
    assert np.linalg.norm(envelope_gradient(x, cfg, inst, result=r)) <= cfg.inner_tol * 10
    again = prox(r.x_hat, cfg, inst)
    assert np.linalg.norm(again.x_hat - r.x_hat) <= 10 * cfg.inner_tol * cfg.mu


def test_certificates_in_standard_quadratic_run():
    inst = gen_quadratic_test(5, 6, rng_stream(3, 0, "q"), ConstraintSet.unit_ball(5))
    cfg = MoreauConfig(mu=auto_mu(inst.constants.rho_hat))
    s = ScheduleSpec(0.5, 0.9, 2 * max(inst.constants.C0, 1.0), 0.2, 1.5)
    oracle = OracleConfig("synthetic", 1, NoiseSpec("symmetric_pareto", 1.5, 0.5, 5))
    rec = run(inst, ring_mixing(6), s, 2000, cfg, 0, oracle=oracle, moreau_every=10)
    certs = np.array([r.moreau_cert for r in rec.rows if r.moreau_cert is not None])
    assert len(certs) >= 200
    assert np.mean(certs <= cfg.inner_tol) >= 0.99
