import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clipdsm.noise import NoiseSpec, rng_stream
from clipdsm.objectives import (
    ConstraintSet,
    OracleConfig,
    OracleSample,
    PhaseRetrieval,
    QuadraticTest,
    RecoveryRegimeWarning,
    analytic_C0,
    draw_sample,
    estimate_constants,
    gen_phase_retrieval,
    gen_quadratic_test,
    load_instance,
    project,
    recovery_error,
    save_instance,
)


@pytest.fixture(scope="module")
def desk():
    return gen_phase_retrieval(49, 7, 21, rng_stream(0, 0, "instance"))


def single(y=1.0):
    return PhaseRetrieval(np.array([[[1.0, 0.0]]]), np.array([[y]]))


def test_desk_sizes(desk):
    assert desk.W.shape == (7, 21, 49)
    assert desk.n_agents * desk.m == 3 * desk.dimension
    assert np.linalg.norm(desk.truth) == pytest.approx(1.0)


def test_mnist_scale_shape():
    inst = gen_phase_retrieval(784, 28, 84, rng_stream(0, 0, "big"), n_probe=100)
    assert inst.W.shape == (28, 84, 784)
    assert np.isfinite(inst.constants.C0)
    assert inst.constants.C0 == pytest.approx(analytic_C0(inst))


def test_below_threshold_warns():
    with pytest.warns(RecoveryRegimeWarning):
        gen_phase_retrieval(10, 2, 5, rng_stream(0, 0, "t"))


def test_zero_signal():
    inst = gen_phase_retrieval(6, 3, 6, rng_stream(0, 0, "t"), signal=np.zeros(6))
    assert not np.any(inst.y)
    for i in range(3):
        assert inst.local_value(i, np.zeros(6)) == 0.0


def test_signal_outside_ball_rejected():
    with pytest.raises(ValueError):
        gen_phase_retrieval(3, 3, 3, rng_stream(0, 0, "t"), signal=np.array([2.0, 0, 0]))


def test_value_at_truth_and_negated(desk):
    for i in range(desk.n_agents):
        assert desk.local_value(i, desk.truth) == pytest.approx(0.0, abs=1e-14)
        assert desk.local_value(i, -desk.truth) == pytest.approx(0.0, abs=1e-14)


def test_single_measurement_value():
    assert single().local_value(0, np.array([0.0, 1.0])) == 1.0


def test_subgradient_at_truth_is_zero():
    inst = gen_phase_retrieval(8, 3, 8, rng_stream(5, 0, "t"), signal=np.full(8, 1 / np.sqrt(8)))
    # dyadic signal so <w, s>^2 - y is exactly zero and sign(0) = 0
    for i in range(3):
        g = inst.subgradient(i, inst.truth)
        assert np.allclose(g, 0.0, atol=1e-12)


def test_single_measurement_gradient():
    inst = single(y=0.0)
    for t in (0.1, 0.5, 1.0):
        assert np.allclose(inst.subgradient(0, np.array([t, 0.0])), [2 * t, 0.0])


def test_full_batch_equals_subgradient(desk):
    theta = desk.constraint.sample(np.random.default_rng(1), 1)[0]
    s = OracleSample(2, batch_indices=np.arange(desk.m))
    assert np.array_equal(desk.stochastic_subgradient(2, theta, s), desk.subgradient(2, theta))


def test_minibatch_is_unbiased():
    inst = gen_phase_retrieval(4, 2, 10, rng_stream(2, 0, "t"))
    theta = np.array([0.3, -0.2, 0.5, 0.1])
    rng = rng_stream(2, 1, "oracle")
    cfg = OracleConfig("minibatch", 1)
    draws = np.stack([inst.stochastic_subgradient(0, theta, draw_sample(inst, 0, rng, cfg)) for _ in range(10_000)])
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - inst.subgradient(0, theta)) <= 3 * se)


def test_synthetic_none_is_deterministic(desk):
    theta = desk.truth * 0.5
    cfg = OracleConfig("synthetic", 1, NoiseSpec("none", dimension=49))
    s = draw_sample(desk, 1, np.random.default_rng(0), cfg)
    assert np.array_equal(desk.stochastic_subgradient(1, theta, s), desk.subgradient(1, theta))


def test_synthetic_needs_noise():
    with pytest.raises(ValueError):
        OracleConfig("synthetic")


def test_synthetic_dimension_mismatch(desk):
    cfg = OracleConfig("synthetic", 1, NoiseSpec("gaussian", dimension=3))
    with pytest.raises(ValueError):
        draw_sample(desk, 0, np.random.default_rng(0), cfg)


def test_project_examples():
    assert np.allclose(project(ConstraintSet.unit_ball(2), np.array([3.0, 4.0])), [0.6, 0.8])
    x = np.array([0.1, 0.2])
    assert np.array_equal(project(ConstraintSet.unit_ball(2), x), x)
    assert np.array_equal(project(ConstraintSet.box(2, 0.0, 1.0), np.array([-1.0, 2.0])), [0.0, 1.0])


@settings(max_examples=40, deadline=None)
@given(
    kind=st.sampled_from(["ball", "box"]),
    dim=st.integers(1, 8),
    seed=st.integers(0, 2**31 - 1),
)
def test_projection_nonexpansive_and_idempotent(kind, dim, seed):
    c = ConstraintSet.ball(dim, 1.5) if kind == "ball" else ConstraintSet.box(dim, -0.5, 2.0)
    rng = np.random.default_rng(seed)
    x, y = rng.normal(scale=3, size=(2, 50, dim))
    px, py = c.project(x), c.project(y)
    assert np.all(np.linalg.norm(px - py, axis=1) <= np.linalg.norm(x - y, axis=1) + 1e-12)
    assert np.allclose(c.project(px), px)
    assert all(c.contains(p) for p in px)


def test_single_measurement_C0():
    assert analytic_C0(single()) == pytest.approx(2.0)


def test_quadratic_is_convex():
    inst = gen_quadratic_test(5, 4, rng_stream(3, 0, "t"))
    assert inst.constants.rho_hat <= 1e-9


def test_quadratic_minimizers():
    c = np.array([0.2, -0.1])
    same = QuadraticTest(np.tile(c, (3, 1)))
    assert np.allclose(same.minimizer(), c)
    two = QuadraticTest(np.array([[1.0, 0.0], [0.0, 1.0]]), ConstraintSet.box(2, -10, 10))
    assert np.allclose(two.minimizer(), [0.5, 0.5])


def _fresh_pairs(c, n, seed):
    rng = np.random.default_rng(seed)
    return c.sample(rng, n), c.sample(rng, n)


def test_weak_convexity_on_fresh_pairs(desk):
    rho = desk.constants.rho_hat
    x, y = _fresh_pairs(desk.constraint, 1000, 101)
    fx, fy = desk.value(x), desk.value(y)
    d2 = np.sum((x - y) ** 2, axis=1)
    for t in (0.25, 0.5, 0.75):
        lhs = desk.value(t * x + (1 - t) * y)
        assert np.all(lhs <= t * fx + (1 - t) * fy + 0.5 * rho * t * (1 - t) * d2 + 1e-12)


def test_subgradient_inequality_on_fresh_pairs(desk):
    rho = desk.constants.rho_hat
    x, y = _fresh_pairs(desk.constraint, 1000, 102)
    g = desk.global_subgradient(x)
    lower = desk.value(x) + np.sum(g * (y - x), axis=1) - 0.5 * rho * np.sum((y - x) ** 2, axis=1)
    assert np.all(desk.value(y) >= lower - 1e-12)


def test_lipschitz_on_fresh_pairs(desk):
    x, y = _fresh_pairs(desk.constraint, 1000, 103)
    ratio = np.abs(desk.value(x) - desk.value(y)) / np.linalg.norm(x - y, axis=1)
    assert np.all(ratio <= desk.constants.L_hat)


def test_subgradient_norm_below_C0(desk):
    thetas = desk.constraint.sample(np.random.default_rng(104), 1000)
    # include boundary points where the bound is tightest
    thetas[:200] /= np.linalg.norm(thetas[:200], axis=1, keepdims=True)
    for i in range(desk.n_agents):
        norms = [np.linalg.norm(desk.subgradient(i, t)) for t in thetas]
        assert max(norms) <= desk.constants.C0


def test_estimate_constants_probe_floor(desk):
    with pytest.raises(ValueError):
        estimate_constants(desk, 10, np.random.default_rng(0))


def test_recovery_error_examples():
    t = np.array([0.6, 0.8])
    assert recovery_error(t, t) == 0.0
    assert recovery_error(-t, t) == 0.0
    assert recovery_error(np.zeros(2), t) == 1.0


def test_instance_round_trip(tmp_path, desk):
    save_instance(desk, tmp_path / "inst.bin", seed=0)
    back = load_instance(tmp_path / "inst.bin")
    assert np.array_equal(back.W, desk.W)
    assert np.array_equal(back.y, desk.y)
    assert np.array_equal(back.truth, desk.truth)
    assert back.constants == desk.constants


def test_generation_is_deterministic():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = gen_phase_retrieval(6, 2, 9, rng_stream(9, 0, "t"))
        b = gen_phase_retrieval(6, 2, 9, rng_stream(9, 0, "t"))
    assert np.array_equal(a.W, b.W) and a.constants == b.constants
