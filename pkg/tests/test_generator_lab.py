import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levy_exploration._sweep import exp_integral
from levy_exploration.generator_lab import (
    EstimatorReport,
    F_of,
    GeneratorFunctional,
    K_of,
    K_truncated_of,
    f0_zero_target,
    duality_test,
    excursion_batch,
    lambda_identity,
    martingale_test,
    resolvent_mc,
    resolvent_target,
)
from levy_exploration.levy_model import LevyMechanism, psi_eval, tilt, truncate
from levy_exploration.measure import AtomicMeasure, TestFunction

STABLE = LevyMechanism.stable(1.5)
ONE_MINUS_EXP = TestFunction.exponential(1.0, -1.0)
F_POS = TestFunction.exponential(0.2, 0.3)
E1 = math.exp(-1)


class TestClosedForms:
    def test_F(self):
        gf = GeneratorFunctional(ONE_MINUS_EXP, STABLE)
        assert F_of(gf, AtomicMeasure()) == 1.0
        assert F_of(gf, AtomicMeasure([1.0], [2.0])) == pytest.approx(math.exp(-2 * (1 - E1)), rel=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 5)), max_size=5), st.floats(0, 1), st.floats(0, 1))
    def test_F_in_unit_interval(self, atoms, c0, c1):
        gf = GeneratorFunctional(TestFunction.exponential(c0, c1), STABLE)
        assert 0.0 <= F_of(gf, AtomicMeasure.from_atoms(atoms)) <= 1.0

    def test_K_at_zero(self):
        gf = GeneratorFunctional(ONE_MINUS_EXP, STABLE)
        assert K_of(gf, AtomicMeasure()) == pytest.approx(-1.0)

    def test_K_example(self):
        gf = GeneratorFunctional(ONE_MINUS_EXP, STABLE)
        want = math.exp(-2 * (1 - E1)) * ((1 - E1) ** 1.5 - E1)
        assert K_of(gf, AtomicMeasure([1.0], [2.0])) == pytest.approx(want, rel=1e-14)

    def test_K_infinite_height(self):
        gf = GeneratorFunctional(F_POS, STABLE)
        mu = AtomicMeasure([1.0, math.inf], [0.5, 0.2])
        assert K_of(gf, mu) == pytest.approx(F_of(gf, mu) * 0.2 ** 1.5)

    def test_K_truncated_tends_to_K(self):
        gf = GeneratorFunctional(ONE_MINUS_EXP, STABLE)
        mu = AtomicMeasure([1.0], [2.0])
        gaps = [abs(K_truncated_of(gf, truncate(STABLE, e), mu) - K_of(gf, mu)) for e in (1e-2, 1e-3, 1e-4)]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_targets(self):
        kappa = 0.3
        gf = GeneratorFunctional(TestFunction.constant(kappa), STABLE, 1.0)
        assert resolvent_target(gf, AtomicMeasure()) == pytest.approx(1 - kappa / gf.gamma)
        gf = GeneratorFunctional(TestFunction.exponential(0.3, -0.3), STABLE, 1.0)
        mu = AtomicMeasure([1.0], [0.5])
        assert resolvent_target(gf, mu) == pytest.approx(f0_zero_target(gf, mu), abs=1e-16)
        gf = GeneratorFunctional(F_POS, STABLE, 1.0)
        assert gf.gamma == pytest.approx(1.0)
        want = math.exp(-0.5 * (0.2 + 0.3 * E1)) - 0.5 * math.exp(-0.5)
        assert resolvent_target(gf, mu) == pytest.approx(want, rel=1e-14)
        with pytest.raises(ValueError):
            f0_zero_target(gf, mu)

    def test_target_linear_in_f0(self):
        # the correction term is linear in f(0) at fixed <mu, f>
        mu = AtomicMeasure([1.0], [0.5])
        vals = []
        for c0 in (0.1, 0.2, 0.3):
            gf = GeneratorFunctional(TestFunction.exponential(c0, 0.5 - c0, 0.0), STABLE, 1.0)
            vals.append(resolvent_target(gf, mu))
        assert vals[1] - vals[0] == pytest.approx(vals[2] - vals[1], abs=1e-15)


class TestLambdaIdentity:
    def test_f_equals_gamma(self):
        gf = GeneratorFunctional(TestFunction.constant(1.0), STABLE, 1.0)
        lhs, rhs, err = lambda_identity(gf, 0.7)
        assert lhs == pytest.approx(0.0, abs=1e-12) and rhs == pytest.approx(0.0, abs=1e-12)

    def test_y_zero(self):
        gf = GeneratorFunctional(F_POS, STABLE, 1.0)
        lhs, rhs, err = lambda_identity(gf, 0.0)
        assert rhs == pytest.approx(0.5)
        assert abs(lhs - 0.5) <= 1e-6

    def test_y_infinite(self):
        gf = GeneratorFunctional(F_POS, STABLE, 1.0)
        lhs, rhs, err = lambda_identity(gf, math.inf)
        assert rhs == pytest.approx(0.8) and err <= 1e-6

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0, 5), st.floats(0.05, 1.0), st.floats(-0.3, 0.3), st.floats(0.3, 3))
    def test_grid(self, y, c0, c1, lam):
        f = TestFunction.exponential(c0, min(c1, 1.0 - c0) if c1 > 0 else max(c1, -c0))
        gf = GeneratorFunctional(f, LevyMechanism.stable(1.3, alpha0=0.5), lam)
        assert lambda_identity(gf, y)[2] <= 1e-6


class TestReport:
    def test_schema(self):
        rep = EstimatorReport("x", 1.0, 0.1, 1.2, 0.05, 10, 1e-2, 3.0, {"a": np.float64(1.5)})
        d = json.loads(rep.to_json())
        assert set(d) == {"test", "params", "estimate", "se", "target", "z", "bias_budget", "pass"}
        assert d["z"] == pytest.approx(-2.0) and d["pass"] is True
        assert d["params"]["n_paths"] == 10 and d["params"]["a"] == 1.5

    def test_failure_flag(self):
        rep = EstimatorReport("x", 1.0, 0.1, 1.0, 0.0, 10, None, None, failure="censored")
        assert not rep.passed and json.loads(rep.to_json())["failure"] == "censored"

    def test_exact_check_z(self):
        assert EstimatorReport("x", 1e-13, 0.0, 0.0, 1e-12, 0, None, None).z == 0.0
        assert EstimatorReport("x", 1e-11, 0.0, 0.0, 1e-12, 0, None, None).z == math.inf


class TestResolvent:
    def test_small_run(self):
        gf = GeneratorFunctional(F_POS, STABLE, 1.0)
        rep = resolvent_mc(gf, AtomicMeasure([1.0], [0.5]), 1000, 14.0, seed=1)
        assert rep.passed, rep.line()
        assert rep.params["matched_pass"]
        assert rep.params["tail_bound"] < 1e-5

    def test_needs_positive_lambda(self):
        with pytest.raises(ValueError):
            resolvent_mc(GeneratorFunctional(F_POS, STABLE, 0.0), AtomicMeasure(), 10, 1.0, seed=0)

    def test_needs_exponential_f(self):
        f = TestFunction(lambda x: np.exp(-x * x), lambda x: -2 * x * np.exp(-x * x), 0.0)
        with pytest.raises(ValueError):
            resolvent_mc(GeneratorFunctional(f, STABLE, 1.0), AtomicMeasure(), 10, 1.0, seed=0)


class TestMartingale:
    def test_unstopped_needs_f0_zero(self):
        with pytest.raises(ValueError):
            martingale_test(GeneratorFunctional(F_POS, STABLE, 1.0), AtomicMeasure([1.0], [0.5]), 10, [0.1], seed=0)

    def test_stopped_from_zero_is_degenerate(self):
        reps = martingale_test(GeneratorFunctional(F_POS, STABLE, 0.0), AtomicMeasure(), 50, [0.1, 0.2], seed=0, stopped=True)
        assert all(r.estimate == 0.0 and r.se == 0.0 and r.passed for r in reps)

    def test_example_grid(self):
        gf = GeneratorFunctional(TestFunction.exponential(0.3, -0.3), STABLE, 0.5)
        reps = martingale_test(gf, AtomicMeasure([1.0], [0.5]), 2000, [0.1, 0.2, 0.4, 0.8], seed=2)
        assert all(r.passed for r in reps), [r.line() for r in reps]
        assert reps[0].params["increments_pass"]

    def test_tilted_stopped(self):
        gf = GeneratorFunctional(F_POS, tilt(STABLE, 1.0), 0.0)
        reps = martingale_test(gf, AtomicMeasure([1.0], [0.5]), 2000, [0.1, 0.2, 0.4, 0.8], seed=3, stopped=True)
        assert all(r.passed for r in reps), [r.line() for r in reps]


class TestDuality:
    def test_constant_F_closed_form(self):
        # F = 1: N_eps[int_0^sigma exp(-psi_eps(g) t) dt] = g / psi_eps(g) - 1/c, and the eta side agrees
        tm = truncate(STABLE, 1e-2)
        g, r0 = 1.0, 0.3
        pe = tm.psi(g)

        def per_path(P, mask):
            a = exp_integral(P, lam=pe, t_ref=P.alpha)[mask].sum()
            b = exp_integral(P, gamma=g)[mask].sum()
            return np.array([a, b]) / r0

        rows, censored, n_exc = excursion_batch(tm, (0.0, 0.0, 1.0), r0, 1000, 5, per_path)
        assert censored == 0
        want = g / pe - 1 / tm.drift_rate
        for j in (0, 1):
            se = rows[:, j].std(ddof=1) / math.sqrt(rows.shape[0])
            assert abs(rows[:, j].mean() - want) < 4 * se

    def test_gamma_zero_pathwise(self):
        tm = truncate(STABLE, 1e-2)

        def per_path(P, mask):
            a = exp_integral(P, lam=0.0, t_ref=P.alpha)[mask]
            b = exp_integral(P, gamma=0.0)[mask]
            return np.array([np.max(np.abs(a - b)) if a.size else 0.0])

        rows, _, _ = excursion_batch(tm, (0.0, 0.0, 1.0), 0.3, 50, 6, per_path)
        assert np.all(rows == 0.0)

    def test_small_run_and_batches(self):
        a = duality_test(STABLE, F_POS, 1.0, 300, 0.3, seed=7)
        b = duality_test(STABLE, F_POS, 1.0, 300, 0.3, seed=8)
        assert a.passed and b.passed, (a.line(), b.line())
        assert a.params["matched_pass"] and b.params["matched_pass"]
        assert abs(a.estimate - b.estimate) < 4 * math.hypot(a.se, b.se)
