import numpy as np
import pytest

from samkit.errors import ConfigError, StateError
from samkit.optimizers import (
    BaseSpec,
    OptimizerSpec,
    base_update,
    combine_gradients,
    grad_eval_count,
    init_base_state,
    optgd_init,
    optgd_step,
    optsam_init,
    optsam_step,
    perturb_along,
    randsam_step,
    sam_step,
    sampa_init,
    sampa_step,
)
from samkit.problems import random_psd_quadratic, toy_quadratic
from samkit.vecmath import SeededRng


class CountingOracle:
    def __init__(self, oracle):
        self.oracle = oracle
        self.calls = 0

    def __getattr__(self, name):
        return getattr(self.oracle, name)

    def value(self, x, batch=None):
        return self.oracle.value(x, batch)

    def gradient(self, x, batch=None):
        self.calls += 1
        return self.oracle.gradient(x, batch)


class TestBaseUpdate:
    def test_plain_gradient_step(self):
        m = init_base_state(BaseSpec(), 2)
        x, _ = base_update(m, np.array([1.0, 0.0]), np.array([2.0, 0.0]), 0.1, BaseSpec())
        assert np.allclose(x, [0.8, 0.0], atol=1e-15)

    def test_momentum_one_step(self):
        base = BaseSpec(momentum=0.9)
        m = init_base_state(base, 2)
        x, m2 = base_update(m, np.array([1.0, 0.0]), np.array([1.0, 0.0]), 0.1, base)
        assert np.allclose(m2.velocity, [1.0, 0.0], atol=1e-15)
        assert np.allclose(x, [0.9, 0.0], atol=1e-15)

    def test_momentum_accumulates(self):
        # second step with the same gradient: v = 0.9*1 + 1 = 1.9
        base = BaseSpec(momentum=0.9)
        m = init_base_state(base, 1)
        g = np.array([1.0])
        x, m = base_update(m, np.array([1.0]), g, 0.1, base)
        x, m = base_update(m, x, g, 0.1, base)
        assert np.allclose(m.velocity, [1.9], atol=1e-15)

    def test_coupled_weight_decay_sgd(self):
        base = BaseSpec(weight_decay=0.5)
        m = init_base_state(base, 1)
        # effective gradient = g + wd*x = 1 + 0.5*2 = 2
        x, _ = base_update(m, np.array([2.0]), np.array([1.0]), 0.1, base)
        assert np.allclose(x, [2.0 - 0.2], atol=1e-15)

    def test_peek_is_read_only_and_repeatable(self):
        base = BaseSpec(momentum=0.9)
        m = init_base_state(base, 2)
        x = np.array([1.0, 2.0])
        g = np.array([0.5, -0.5])
        x1, m1 = base_update(m, x, g, 0.1, base, peek=True)
        x2, m2 = base_update(m, x, g, 0.1, base, peek=True)
        assert np.array_equal(x1, x2)
        assert m1 is m and m2 is m

    def test_adamw_one_step_reference(self):
        base = BaseSpec(kind="adamw_like", weight_decay=0.01,
                        beta1=0.9, beta2=0.999, eps=1e-8)
        m = init_base_state(base, 2)
        x = np.array([1.0, -2.0])
        g = np.array([0.3, 0.7])
        got, m2 = base_update(m, x, g, 0.01, base)
        # independent elementwise reference
        m1 = 0.1 * g
        v1 = 0.001 * g * g
        mhat = m1 / (1 - 0.9)
        vhat = v1 / (1 - 0.999)
        want = x - 0.01 * (mhat / (np.sqrt(vhat) + 1e-8)) - 0.01 * 0.01 * x
        assert np.allclose(got, want, rtol=1e-14)
        assert m2.count == 1

    def test_adamw_decoupled_decay_ignores_gradient_scale(self):
        # with zero gradient the update is exactly the decay shrinkage
        base = BaseSpec(kind="adamw_like", weight_decay=0.1)
        m = init_base_state(base, 1)
        x, _ = base_update(m, np.array([5.0]), np.array([0.0]), 0.5, base)
        assert np.allclose(x, [5.0 * (1 - 0.05)], atol=1e-14)


class TestPerturbation:
    def test_radius_equals_rho(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.standard_normal(6)
            d = rng.standard_normal(6)
            rho = float(10 ** rng.uniform(-3, 0))
            assert abs(np.linalg.norm(perturb_along(x, d, rho) - x) - rho) <= 1e-12

    def test_zero_direction_keeps_point(self):
        x = np.array([1.0, 2.0])
        assert np.array_equal(perturb_along(x, np.zeros(2), 0.3), x)

    def test_combine_order(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])
        assert np.allclose(combine_gradients(0.25, a, b), [0.75, 0.25], atol=1e-15)


class TestSamStep:
    def test_hand_worked_step(self):
        o = toy_quadratic(2)
        x = sam_step(np.array([1.0, 0.0]), 0.1, 0.1, o)
        assert np.allclose(x, [0.78, 0.0], atol=1e-12)

    def test_zero_rho_is_plain_descent(self):
        o = toy_quadratic(2)
        x0 = np.array([1.0, -0.5])
        assert np.allclose(sam_step(x0, 0.1, 0.0, o), x0 - 0.1 * o.gradient(x0),
                           atol=1e-15)

    def test_stationary_point_stays(self):
        o = toy_quadratic(2)
        assert np.array_equal(sam_step(np.zeros(2), 0.1, 0.1, o), np.zeros(2))

    def test_two_evaluations(self):
        o = CountingOracle(toy_quadratic(2))
        sam_step(np.array([1.0, 0.0]), 0.1, 0.1, o)
        assert o.calls == 2


class TestRandsamStep:
    def test_perturbation_norm_is_rho(self):
        # recover x_tilde from the gradient of the toy objective: g = 2*x_tilde
        o = toy_quadratic(3)
        x = np.array([0.3, -0.2, 0.9])
        rng = SeededRng(3)
        x_new = randsam_step(x, 0.05, 0.1, o, None, rng)
        g_tilde = (x - x_new) / 0.05
        x_tilde = g_tilde / 2.0
        assert abs(np.linalg.norm(x_tilde - x) - 0.1) <= 1e-12

    def test_zero_rho_is_plain_descent(self):
        o = toy_quadratic(2)
        x0 = np.array([0.4, 0.1])
        got = randsam_step(x0, 0.1, 0.0, o, None, SeededRng(0))
        assert np.allclose(got, x0 - 0.1 * o.gradient(x0), atol=1e-15)

    def test_stationary_second_moment(self):
        # closed-form fixed point of E||x||^2 under the noise recursion:
        # eta*rho^2/(1-eta) = 5.2631...e-4; checked by a 1e5-step average
        o = toy_quadratic(2)
        rng = SeededRng(11).split("mc")
        x = np.array([1.0, 0.0])
        burn, total = 20_000, 100_000
        acc = 0.0
        for i in range(total):
            x = randsam_step(x, 0.05, 0.1, o, None, rng)
            if i >= burn:
                acc += float(x @ x)
        mean = acc / (total - burn)
        predicted = 0.05 * 0.1**2 / (1.0 - 0.05)
        assert mean == pytest.approx(predicted, rel=0.1)

    def test_one_evaluation(self):
        o = CountingOracle(toy_quadratic(2))
        randsam_step(np.array([1.0, 0.0]), 0.1, 0.1, o, None, SeededRng(1))
        assert o.calls == 1


class TestOptsamStep:
    def test_one_evaluation_per_step(self):
        o = CountingOracle(toy_quadratic(2))
        st = optsam_init(np.array([1.0, 0.0]), o)
        assert o.calls == 1
        for _ in range(5):
            st = optsam_step(st, 0.05, 0.1, o)
        assert o.calls == 6

    def test_zero_rho_matches_plain_descent_trajectory(self):
        o = toy_quadratic(2)
        st = optsam_init(np.array([1.0, -0.3]), o)
        x = np.array([1.0, -0.3])
        for _ in range(10):
            st = optsam_step(st, 0.05, 0.0, o)
            x = x - 0.05 * o.gradient(x)
            assert np.allclose(st.x, x, atol=1e-14)

    def test_fails_where_the_two_pass_method_converges(self):
        o = toy_quadratic(2)
        x_sam = np.array([1.0, 0.0])
        st = optsam_init(x_sam.copy(), o)
        for _ in range(2000):
            x_sam = sam_step(x_sam, 0.05, 0.1, o)
            st = optsam_step(st, 0.05, 0.1, o)
        assert o.value(st.x) >= 10.0 * o.value(x_sam)


class TestOptgdStep:
    def test_hand_worked_step(self):
        o = toy_quadratic(2)
        st = optgd_init(np.array([1.0, 0.0]))
        st = optgd_step(st, 0.1, o)
        assert np.allclose(st.y, [0.8, 0.0], atol=1e-15)
        assert np.allclose(st.x, [0.84, 0.0], atol=1e-15)

    def test_fixed_at_minimizer(self):
        o = toy_quadratic(2)
        st = optgd_init(np.zeros(2))
        st = optgd_step(st, 0.1, o)
        assert np.array_equal(st.x, np.zeros(2))

    def test_two_evaluations(self):
        o = CountingOracle(toy_quadratic(2))
        st = optgd_init(np.array([1.0, 0.0]))
        optgd_step(st, 0.1, o)
        assert o.calls == 2


class TestSampaStep:
    def test_first_step_matches_two_pass_method(self):
        o = toy_quadratic(2)
        st = sampa_init(np.array([1.0, 0.0]), o)
        st = sampa_step(st, 0.1, 0.1, 0.0, o)
        assert np.allclose(st.x, [0.78, 0.0], atol=1e-12)
        assert np.allclose(st.y, [0.8, 0.0], atol=1e-15)
        x_sam = sam_step(np.array([1.0, 0.0]), 0.1, 0.1, o)
        assert np.array_equal(st.x, x_sam)

    def test_lambda_one_direction_is_next_aux_gradient(self):
        o, _ = random_psd_quadratic(5, 2.0, seed=3)
        st = sampa_init(np.linspace(0.2, 1.0, 5), o)
        eta = 0.1
        new = sampa_step(st, eta, 0.05, 1.0, o)
        direction = (st.x - new.x) / eta
        assert np.allclose(direction, o.gradient(new.y), atol=1e-12)

    def test_lambda_zero_direction_is_perturbed_gradient(self):
        o, _ = random_psd_quadratic(5, 2.0, seed=3)
        x0 = np.linspace(0.2, 1.0, 5)
        st = sampa_init(x0, o)
        eta = 0.1
        new = sampa_step(st, eta, 0.05, 0.0, o)
        from samkit.vecmath import unit_direction
        x_tilde = x0 + 0.05 * unit_direction(st.g)
        assert np.allclose((st.x - new.x) / eta, o.gradient(x_tilde), atol=1e-12)

    def test_cache_contract_audit(self):
        o = toy_quadratic(2)
        st = sampa_init(np.array([1.0, 0.0]), o)
        sampa_step(st, 0.1, 0.1, 0.0, o, audit=True)  # clean state passes
        from dataclasses import replace
        bad = replace(st, g=st.g + 1.0)
        with pytest.raises(StateError):
            sampa_step(bad, 0.1, 0.1, 0.0, o, audit=True)

    def test_two_evaluations_per_step(self):
        o = CountingOracle(toy_quadratic(2))
        st = sampa_init(np.array([1.0, 0.0]), o)
        assert o.calls == 1
        sampa_step(st, 0.1, 0.1, 0.2, o)
        assert o.calls == 3


class TestGradEvalCount:
    @pytest.mark.parametrize("method,expected", [
        ("sgd", (1, 1)), ("sam", (2, 2)), ("randsam", (1, 1)),
        ("optsam", (1, 1)), ("optgd", (2, 2)), ("sampa", (2, 1)),
    ])
    def test_table(self, method, expected):
        assert grad_eval_count(method) == expected

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            grad_eval_count("nope")


class TestSpecValidation:
    def test_rho_range(self):
        with pytest.raises(ConfigError, match="rho must be >= 0"):
            OptimizerSpec("sam", rho=-0.1)

    def test_lambda_range(self):
        with pytest.raises(ConfigError):
            OptimizerSpec("sampa", lam=1.5)

    def test_momentum_range(self):
        with pytest.raises(ConfigError):
            BaseSpec(momentum=1.0)
