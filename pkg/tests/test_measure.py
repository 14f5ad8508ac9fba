import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from levy_exploration.measure import (
    AtomicMeasure,
    TestFunction,
    WeightFunction,
    concat,
    distance,
    erase,
    height,
    integrate,
    occupation_integral,
    partial_height,
)

MU = AtomicMeasure([1.0, 3.0], [0.5, 0.2])

heights = st.floats(0.0, 10.0, allow_nan=False)
masses = st.floats(1e-3, 5.0)


@st.composite
def measures(draw, allow_inf=False, min_size=0):
    n = draw(st.integers(min_size, 6))
    h = [draw(heights) for _ in range(n)]
    m = [draw(masses) for _ in range(n)]
    if allow_inf and n and draw(st.booleans()):
        h[-1] = math.inf
    return AtomicMeasure(h, m)


def _cdf_erase(mu, a):
    """Oracle: clip the CDF r -> mu([0, r]) at <mu,1> - a and difference it."""
    keep = max(mu.total_mass - a, 0.0)
    cdf = np.minimum(np.cumsum(mu.masses), keep)
    m = np.diff(np.concatenate([[0.0], cdf]))
    return AtomicMeasure(mu.heights, m)


class TestAtomicMeasure:
    def test_merge_and_drop(self):
        mu = AtomicMeasure([2.0, 1.0, 2.0, 4.0], [0.1, 0.2, 0.3, 0.0])
        assert list(mu) == [(1.0, 0.2), (2.0, pytest.approx(0.4))]

    def test_zero_unique(self):
        assert AtomicMeasure([1.0], [0.0]) == AtomicMeasure.zero()
        assert AtomicMeasure.zero().is_zero

    def test_rejects_negative_height(self):
        with pytest.raises(ValueError):
            AtomicMeasure([-1.0], [1.0])

    def test_json_roundtrip_with_inf(self):
        mu = AtomicMeasure([0.5, math.inf], [1.0, 2.0])
        assert AtomicMeasure.from_json(mu.to_json()) == mu

    def test_immutable(self):
        with pytest.raises(ValueError):
            MU.masses[0] = 3.0


class TestHeight:
    def test_examples(self):
        assert height(AtomicMeasure()) == 0.0
        assert height(MU) == 3.0
        assert height(AtomicMeasure([1.0, math.inf], [1.0, 1.0])) == math.inf


class TestErase:
    def test_examples(self):
        assert erase(MU, 0.0) == MU
        assert erase(MU, 0.3).allclose(AtomicMeasure([1.0], [0.4]))
        assert erase(MU, 0.7).is_zero
        assert erase(MU, 5.0).is_zero

    def test_negative(self):
        with pytest.raises(ValueError):
            erase(MU, -0.1)

    @settings(max_examples=200, deadline=None)
    @given(measures(allow_inf=True), st.floats(0.0, 1.0))
    def test_cdf_oracle(self, mu, frac):
        a = frac * mu.total_mass
        assert erase(mu, a).allclose(_cdf_erase(mu, a), atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(measures(), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_semigroup(self, mu, x, y):
        a, b = x * mu.total_mass, y * mu.total_mass
        assert distance(erase(erase(mu, a), b), erase(mu, a + b)) < 1e-12

    @settings(max_examples=200, deadline=None)
    @given(measures(), st.floats(0.0, 1.0))
    def test_mass(self, mu, frac):
        a = frac * 1.5 * mu.total_mass
        assert erase(mu, a).total_mass == pytest.approx(max(mu.total_mass - a, 0.0), abs=1e-12)


class TestConcat:
    def test_identity(self):
        assert concat(AtomicMeasure(), MU) == MU
        assert concat(MU, AtomicMeasure()) == MU

    def test_example(self):
        out = concat(AtomicMeasure([1.0], [0.5]), AtomicMeasure([2.0], [0.3]))
        assert out == AtomicMeasure([1.0, 3.0], [0.5, 0.3])

    @settings(max_examples=100, deadline=None)
    @given(measures(), measures(), st.floats(0.1, 3.0), st.floats(-1.0, 1.0))
    def test_integration_identity(self, mu, nu, k, c1):
        f = TestFunction.exponential(0.5, c1, k)
        shifted = TestFunction(lambda x: f(mu.height + x), lambda x: 0 * x, f.f_inf)
        want = integrate(mu, f) + integrate(nu, shifted)
        assert integrate(concat(mu, nu), f) == pytest.approx(want, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(measures(), measures(min_size=1), st.floats(0.0, 1.0))
    def test_erase_within_top(self, mu, nu, frac):
        a = frac * nu.total_mass
        assert distance(erase(concat(mu, nu), a), concat(mu, erase(nu, a))) < 1e-12


class TestPartialHeight:
    def test_examples(self):
        assert partial_height(MU, 0.1) == 3.0
        assert partial_height(MU, 0.25) == 1.0
        assert partial_height(MU, 0.7) == 0.0
        assert partial_height(MU, 10.0) == 0.0

    def test_against_v_scan(self):
        # oracle: H_r = sup{v : mu((v, inf]) > r} scanned over a fine v grid
        v = np.linspace(0, 4, 40001)
        above = np.array([MU.masses[MU.heights > x].sum() for x in v])
        for r in (0.05, 0.1, 0.19, 0.25, 0.6):
            scan = v[above > r].max() if np.any(above > r) else 0.0
            assert partial_height(MU, r) == pytest.approx(scan, abs=1e-4)

    @settings(max_examples=200, deadline=None)
    @given(measures(allow_inf=True), st.floats(0.0, 12.0), st.floats(0.0, 1.2))
    def test_equivalence(self, mu, v, frac):
        r = frac * mu.total_mass
        above = mu.masses[mu.heights > v].sum()
        assume(abs(above - r) > 1e-12)
        assert (v < partial_height(mu, r)) == (above > r)


class TestIntegrals:
    def test_constant(self):
        assert integrate(MU, TestFunction.constant(1.0)) == pytest.approx(0.7)

    @settings(max_examples=200, deadline=None)
    @given(measures(allow_inf=True), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 3))
    def test_occupation(self, mu, c0, c1, k):
        h = TestFunction.exponential(c0, c1, k)
        assert occupation_integral(mu, h) == pytest.approx(integrate(mu, h), abs=1e-12 * max(1, mu.total_mass))

    @settings(max_examples=200, deadline=None)
    @given(measures(allow_inf=True), st.floats(-2, 2), st.floats(0.1, 3), st.floats(0, 50))
    def test_occupation_vanishing_at_zero(self, mu, kappa, k, extra):
        h = TestFunction.exponential(kappa, -kappa, k)
        got = occupation_integral(mu, h, upper=mu.total_mass + extra)
        assert got == pytest.approx(integrate(mu, h), abs=1e-12 * max(1, mu.total_mass))


class TestDistance:
    def test_identity(self):
        assert distance(MU, MU) == 0.0

    def test_closed_form(self):
        # H_r: 3 on [0,0.2), 1 on [0.2,0.7); against zero: 0.7 + 0.2 G(3) + 0.5 G(1)
        want = 0.7 + 0.2 * (1 - math.exp(-3)) + 0.5 * (1 - math.exp(-1))
        assert distance(AtomicMeasure(), MU) == pytest.approx(want, abs=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(measures(allow_inf=True), measures(allow_inf=True), measures(allow_inf=True))
    def test_metric(self, a, b, c):
        assert distance(a, b) == distance(b, a)
        assert distance(a, b) <= distance(a, c) + distance(c, b) + 1e-12
        if a != b:
            assert distance(a, b) > 0

    @settings(max_examples=200, deadline=None)
    @given(measures(allow_inf=True))
    def test_mass_bounds(self, mu):
        d = distance(AtomicMeasure(), mu)
        m = mu.total_mass
        assert m - 1e-12 <= d <= 2 * m + 1e-12

    @settings(max_examples=200, deadline=None)
    @given(measures(allow_inf=True), measures(allow_inf=True), st.floats(0, 1.2))
    def test_contraction(self, mu, nu, frac):
        a = frac * max(mu.total_mass, nu.total_mass)
        assert distance(erase(mu, a), erase(nu, a)) <= distance(mu, nu) + 1e-12

    def test_other_weight(self):
        G = WeightFunction(lambda x: np.arctan(x) * 2 / np.pi, 1.0)
        assert distance(AtomicMeasure(), MU, G) == pytest.approx(0.7 + 0.2 * G(3.0) + 0.5 * G(1.0))

    def test_weak_convergence_witness(self):
        ds = [distance(MU + AtomicMeasure([2.0], [1 / n]), MU) for n in range(1, 101)]
        assert all(b < a for a, b in zip(ds, ds[1:]))
        assert ds[-1] <= 2 / 100
        far = [distance(AtomicMeasure(), AtomicMeasure([1.0], [n])) for n in (1, 10, 100)]
        assert far[0] < far[1] < far[2] and far[2] >= 100
