import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levy_exploration.levy_model import LevyMechanism, truncate
from levy_exploration.path_sim import (
    HorizonExhausted,
    LevyPath,
    excursions,
    future_infimum,
    inverse_local_time,
    path_rng,
    simulate_path,
)

STABLE = LevyMechanism.stable(1.5)
TM2 = truncate(STABLE, 1e-2)


def _grid_path(path, n=10 ** 6):
    t = np.linspace(0.0, path.T, n + 1)
    return t, path.X(t)


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    return x.mean(), x.std(ddof=1) / math.sqrt(x.size)


paths = st.builds(
    lambda seed, T: simulate_path(TM2, T, seed),
    st.integers(0, 2 ** 32),
    st.floats(0.05, 2.0),
)


class TestRng:
    def test_streams_independent_of_order(self):
        a = path_rng(5, 3).random(4)
        path_rng(5, 2).random(100)
        assert np.array_equal(a, path_rng(5, 3).random(4))
        assert not np.array_equal(a, path_rng(5, 4).random(4))
        assert not np.array_equal(a, path_rng(6, 3).random(4))


class TestSimulate:
    def test_jump_rate(self):
        T = 0.5
        counts = np.array([simulate_path(TM2, T, 1, i).n_jumps for i in range(10_000)])
        m, se = _mean_se(counts / T)
        assert abs(m - TM2.jump_rate) < 4 * se

    def test_centred(self):
        tm = truncate(LevyMechanism.truncated_stable(1.5, 10.0), 1e-2)
        x = np.array([simulate_path(tm, 1.0, 2, i).X_T for i in range(10_000)])
        m, se = _mean_se(x)
        assert abs(m) < 4 * se

    def test_drift_shifts_mean(self):
        tm = truncate(LevyMechanism.truncated_stable(1.5, 10.0, alpha0=0.5), 1e-2)
        x = np.array([simulate_path(tm, 1.0, 3, i).X_T for i in range(10_000)])
        m, se = _mean_se(x)
        assert abs(m + 0.5) < 4 * se

    def test_laplace(self):
        lam, T = 0.5, 1.0
        v = np.array([math.exp(-lam * simulate_path(TM2, T, 4, i).X_T) for i in range(10_000)])
        m, se = _mean_se(v)
        assert abs(m - math.exp(T * TM2.psi(lam))) < 4 * se

    def test_prefix(self):
        short = simulate_path(TM2, 20.0, 7, 1)
        long = simulate_path(TM2, 50.0, 7, 1)
        n = short.n_jumps
        assert n > 4096  # spans several blocks
        assert np.array_equal(long.times[:n], short.times)
        assert np.array_equal(long.sizes[:n], short.sizes)
        assert long.times[n] > 20.0

    def test_deterministic(self):
        a, b = simulate_path(TM2, 1.0, 9, 2), simulate_path(TM2, 1.0, 9, 2)
        assert a.to_csv() == b.to_csv()

    def test_stop_level(self):
        full = simulate_path(TM2, 50.0, 11, 0)
        r = 0.2
        if -full.I_T <= r:
            pytest.skip("level not reached")
        tau = inverse_local_time(full, r)
        cut = simulate_path(TM2, 50.0, 11, 0, stop_level=r)
        assert cut.stopped
        assert cut.T == pytest.approx(tau, abs=1e-12)
        assert cut.I_T == pytest.approx(-r, abs=1e-12)
        assert np.array_equal(cut.times, full.times[: cut.n_jumps])

    def test_csv_roundtrip(self):
        p = simulate_path(TM2, 1.0, 12, 0)
        q = LevyPath.from_csv(p.to_csv())
        assert np.array_equal(p.times, q.times) and np.array_equal(p.sizes, q.sizes)
        assert (q.c, q.T, q.epsilon, q.seed) == (p.c, p.T, p.epsilon, p.seed)

    def test_bad_path(self):
        with pytest.raises(ValueError):
            LevyPath(np.array([0.5, 0.2]), np.array([1.0, 1.0]), 1.0, 1.0)


class TestInfimum:
    def test_no_jump(self):
        p = LevyPath(np.empty(0), np.empty(0), 2.0, 1.0)
        t = np.linspace(0, 1, 11)
        assert np.allclose(p.I(t), -2.0 * t)

    def test_single_jump_against_grid(self):
        p = LevyPath(np.array([0.2]), np.array([0.5]), 1.0, 1.0)
        t, x = _grid_path(p)
        brute = np.minimum.accumulate(x)
        assert np.max(np.abs(p.I(t) - brute)) < 2e-6
        # I stays at -0.2 until t* = 0.7 when X comes back down
        assert p.I(0.6) == pytest.approx(-0.2)
        assert p.I(0.8) == pytest.approx(-0.3)

    @settings(max_examples=30, deadline=None)
    @given(paths)
    def test_below_X(self, p):
        t = np.linspace(0, p.T, 101)
        assert np.all(p.I(t) <= p.X(t) + 1e-15)
        assert p.I_T <= p.X_T


class TestFutureInfimum:
    def test_diagonal(self):
        p = simulate_path(TM2, 1.0, 13)
        for t in (0.1, 0.5, 1.0):
            assert future_infimum(p, t, t) == p.X(t)

    def test_order(self):
        p = simulate_path(TM2, 1.0, 13)
        with pytest.raises(ValueError):
            future_infimum(p, 0.5, 0.4)
        with pytest.raises(HorizonExhausted):
            future_infimum(p, 0.5, 2.0)

    def test_monotone_in_s(self):
        p = simulate_path(TM2, 1.0, 14)
        rng = path_rng(14, 1)
        u = np.sort(rng.uniform(0, 1, (1000, 3)), axis=1)
        a = future_infimum(p, u[:, 0], u[:, 2])
        b = future_infimum(p, u[:, 1], u[:, 2])
        assert np.all(a <= b)

    def test_against_grid(self):
        p = simulate_path(TM2, 1.0, 15)
        t, x = _grid_path(p)
        rng = path_rng(15, 1)
        dt = t[1]
        for s, e in np.sort(rng.uniform(0, 1, (100, 2)), axis=1):
            i, j = int(math.ceil(s / dt)), int(e / dt)
            brute = min(x[i : j + 1].min(), p.X(s), p.X(e)) if j >= i else min(p.X(s), p.X(e))
            assert future_infimum(p, s, e) == pytest.approx(brute, abs=p.c * dt + 1e-12)


class TestExcursions:
    def test_no_jump(self):
        assert excursions(LevyPath(np.empty(0), np.empty(0), 1.0, 1.0)) == []

    def test_single_jump(self):
        p = LevyPath(np.array([0.2]), np.array([0.5]), 2.0, 1.0)
        (e,) = excursions(p)
        assert e.complete and e.length == pytest.approx(0.25)
        assert e.depth == pytest.approx(0.4)

    @settings(max_examples=30, deadline=None)
    @given(paths)
    def test_depths_increase_and_partition(self, p):
        ex = excursions(p)
        d = [e.depth for e in ex]
        assert all(b > a for a, b in zip(d, d[1:]))
        assert all(b.alpha >= a.beta for a, b in zip(ex, ex[1:]))
        # time is split between excursions and the descent of I
        assert sum(e.length for e in ex) + (-p.I_T) / p.c == pytest.approx(p.T, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(paths)
    def test_X_equals_I_outside(self, p):
        ex = [e for e in excursions(p) if e.complete]
        for e in ex[:20]:
            assert p.X(e.beta) == pytest.approx(p.I(e.beta), abs=1e-12)
            mid = 0.5 * (e.alpha + e.beta)
            assert p.X(mid) > p.I(mid)


class TestInverseLocalTime:
    def test_zero(self):
        p = simulate_path(TM2, 1.0, 16)
        assert inverse_local_time(p, 0.0) == 0.0

    def test_no_jump(self):
        p = LevyPath(np.empty(0), np.empty(0), 2.0, 1.0)
        assert inverse_local_time(p, 0.5) == pytest.approx(0.25)
        with pytest.raises(HorizonExhausted):
            inverse_local_time(p, 2.0)

    @settings(max_examples=30, deadline=None)
    @given(paths)
    def test_monotone_and_exact(self, p):
        r = np.linspace(0, -p.I_T, 50, endpoint=False)
        tau = inverse_local_time(p, r)
        assert np.all(np.diff(tau) > 0)
        assert np.allclose(p.X(tau), -r, atol=1e-12)
        assert np.allclose(p.I(tau), -r, atol=1e-12)

    def test_laplace_law(self):
        tm = truncate(STABLE, 1e-3)
        r, lam, T = 0.1, 1.0, 20.0
        v = []
        for i in range(4000):
            p = simulate_path(tm, T, 17, i, stop_level=r)
            v.append(math.exp(-lam * p.T) if p.stopped else 0.5 * math.exp(-lam * T))
        m, se = _mean_se(v)
        assert abs(m - math.exp(-r * tm.psi_inverse(lam))) < 4 * se + math.exp(-lam * T)
