"""
Deterministic check suites.

Each function returns :class:`~levy_exploration.generator_lab.EstimatorReport`
objects so exact identities and Monte Carlo estimates share one report
format.  For an exact identity the ``estimate`` is the worst error seen,
the target is 0, ``se`` is 0 and the ``bias_budget`` is the tolerance.
"""
from __future__ import annotations

import math

import numpy as np

from .exploration import explore, ladder_height
from .generator_lab import EstimatorReport, GeneratorFunctional, _mean_se, lambda_identity
from .levy_model import LevyMechanism, psi_eval, psi_inverse, tilt, truncate, truncation_bias
from .measure import (
    DEFAULT_G,
    AtomicMeasure,
    TestFunction,
    concat,
    distance,
    erase,
    integrate,
    occupation_integral,
    partial_height,
)
from .path_sim import inverse_local_time, path_rng, simulate_path

__all__ = [
    "random_measure",
    "exact_report",
    "tilt_algebra",
    "psi_roundtrip",
    "psi_convexity",
    "tilt_composition",
    "truncation_bias_monotone",
    "occupation_identities",
    "erase_algebra",
    "metric_suite",
    "mass_identity",
    "height_consistency",
    "subordinator_law",
    "lambda_grid",
]


def random_measure(rng, max_atoms=8, allow_inf=False, scale=1.0):
    """Random atomic measure with up to ``max_atoms`` atoms on ``[0, 5]`` (plus maybe one at infinity)."""
    n = int(rng.integers(1, max_atoms + 1))
    h = rng.uniform(0.0, 5.0, n)
    m = rng.exponential(scale, n)
    if allow_inf and rng.random() < 0.2:
        h[-1] = math.inf
    return AtomicMeasure(h, m)


def _random_h(rng):
    """Bounded test function ``a + b sin(w x) + d exp(-k x)`` with its value at infinity set to ``a``."""
    a, b, d = rng.normal(size=3)
    w, k = rng.uniform(0.1, 3.0, 2)
    return TestFunction(lambda x: a + b * np.sin(w * x) * np.exp(-0.1 * x) + d * np.exp(-k * x), lambda x: 0 * x, a)


def exact_report(name, err, tol, **params):
    return EstimatorReport(name, float(err), 0.0, 0.0, float(tol), 0, None, None, params)


# ---------------------------------------------------------------------------
# mechanism


def tilt_algebra(mech=None, lambdas=None, thetas=(0.1, 0.5, 1.0, 2.0, 5.0), tol=1e-9):
    """``psi_eval(tilt(mech, theta), lam) = psi(lam + theta) - psi(theta)`` on a grid."""
    mech = LevyMechanism.stable(1.5) if mech is None else mech
    lambdas = np.linspace(0.25, 10.0, 20) if lambdas is None else lambdas
    worst = 0.0
    for th in thetas:
        tm = tilt(mech, th)
        for lam in lambdas:
            want = psi_eval(mech, lam + th) - psi_eval(mech, th)
            worst = max(worst, abs(psi_eval(tm, lam) - want))
    return exact_report("tilt_algebra", worst, tol, n_lambda=len(lambdas), thetas=list(thetas))


def psi_roundtrip(mech=None, n=200, seed=0, tol=1e-9):
    mech = LevyMechanism.stable(1.5) if mech is None else mech
    rng = path_rng(seed, 1)
    lam = np.concatenate([[0.0, 1e3], rng.uniform(0.0, 1e3, n)])
    worst = max(abs(psi_eval(mech, psi_inverse(mech, x)) - x) / max(1.0, x) for x in lam)
    return exact_report("psi_inverse_roundtrip", worst, tol, n=n)


def psi_convexity(mech=None, n=1000, seed=0):
    """Count of random triples whose chord slopes decrease (should be 0)."""
    mech = LevyMechanism.stable(1.5) if mech is None else mech
    rng = path_rng(seed, 2)
    x = np.sort(rng.uniform(0.0, 20.0, (n, 3)), axis=1)
    p = psi_eval(mech, x)
    s1 = (p[:, 1] - p[:, 0]) / (x[:, 1] - x[:, 0])
    s2 = (p[:, 2] - p[:, 1]) / (x[:, 2] - x[:, 1])
    bad = int(np.sum(s1 > s2 * (1 + 1e-12) + 1e-14)) + int(np.sum(np.diff(psi_eval(mech, np.linspace(0, 20, 200))) < 0))
    return exact_report("psi_convex_increasing", bad, 0, n=n)


def tilt_composition(mech=None, t1=0.7, t2=1.3, n=20, seed=0, tol=1e-9):
    mech = LevyMechanism.stable(1.5) if mech is None else mech
    a, b = tilt(tilt(mech, t1), t2), tilt(mech, t1 + t2)
    lam = path_rng(seed, 3).uniform(0.0, 10.0, n)
    worst = max(abs(psi_eval(a, x) - psi_eval(b, x)) for x in lam)
    return exact_report("tilt_composition", worst, tol, theta1=t1, theta2=t2)


def truncation_bias_monotone(mech=None, eps=(1e-2, 1e-3, 1e-4), grid=None):
    mech = LevyMechanism.stable(1.5) if mech is None else mech
    grid = np.linspace(0.0, 10.0, 41) if grid is None else grid
    sups = [truncation_bias(truncate(mech, e), grid) for e in eps]
    bad = int(np.sum(np.diff(sups) >= 0))
    return exact_report("truncation_bias_monotone", bad, 0, eps=list(eps), sup_bias=sups)


# ---------------------------------------------------------------------------
# measures


def occupation_identities(n_measures=100, n_funcs=20, n_pairs=1000, seed=0, tol=1e-12):
    """Occupation formulas and the ``v < H_r  <=>  mu((v, inf]) > r`` equivalence."""
    rng = path_rng(seed, 4)
    err1 = err2 = 0.0
    mismatches = 0
    funcs = [_random_h(rng) for _ in range(n_funcs)]
    for _ in range(n_measures):
        mu = random_measure(rng, allow_inf=True)
        for h in funcs:
            want = integrate(mu, h)
            err1 = max(err1, abs(occupation_integral(mu, h) - want) / max(1.0, abs(want)))
            h0 = TestFunction(lambda x, h=h: h.f(x) - h.f(0.0 * x), lambda x: 0 * x, h.f_inf - float(h.f(0.0)))
            want0 = integrate(mu, h0)
            got0 = occupation_integral(mu, h0, upper=mu.total_mass + 10.0)
            err2 = max(err2, abs(got0 - want0) / max(1.0, abs(want0)))
        m = mu.total_mass
        v = rng.uniform(0.0, 6.0, n_pairs // n_measures + 1)
        r = rng.uniform(0.0, 1.2 * m, v.size)
        H = partial_height(mu, r)
        above = np.array([mu.masses[mu.heights > vv].sum() for vv in v])
        mismatches += int(np.sum((v < H) != (above > r)))
    return [
        exact_report("occupation_identity", err1, tol, n_measures=n_measures, n_funcs=n_funcs),
        exact_report("occupation_identity_h0", err2, tol, n_measures=n_measures, n_funcs=n_funcs),
        exact_report("partial_height_equivalence", mismatches, 0, n_pairs=n_pairs),
    ]


def erase_algebra(n=1000, seed=0, tol=1e-12):
    """Erase semigroup and ``k_a [mu, nu] = [mu, k_a nu]`` for ``a <= <nu,1>``."""
    rng = path_rng(seed, 5)
    e1 = e2 = 0.0
    for _ in range(n):
        mu, nu = random_measure(rng), random_measure(rng)
        a, b = rng.uniform(0.0, mu.total_mass, 2)
        x, y = erase(erase(mu, a), b), erase(mu, a + b)
        e1 = max(e1, distance(x, y))
        a = rng.uniform(0.0, nu.total_mass)
        e2 = max(e2, distance(erase(concat(mu, nu), a), concat(mu, erase(nu, a))))
    return [
        exact_report("erase_semigroup", e1, tol, n=n),
        exact_report("erase_concat", e2, tol, n=n),
    ]


def metric_suite(n=1000, seed=0, tol=1e-12, G=DEFAULT_G):
    """Metric axioms, the two-sided bound on ``D(0, mu)``, contraction under ``k_a`` and weak-convergence witnesses."""
    rng = path_rng(seed, 6)
    zero = AtomicMeasure()
    sym = tri = ident = bound = contr = 0.0
    for _ in range(n):
        mu, nu, xi = (random_measure(rng, allow_inf=True) for _ in range(3))
        d_mn, d_nm = distance(mu, nu, G=G), distance(nu, mu, G=G)
        sym = max(sym, abs(d_mn - d_nm))
        tri = max(tri, d_mn - distance(mu, xi, G=G) - distance(xi, nu, G=G))
        ident = max(ident, distance(mu, mu, G=G))
        m = mu.total_mass
        d0 = distance(zero, mu, G=G)
        bound = max(bound, m - d0, d0 - 2 * m)
        a = rng.uniform(0.0, 1.2 * max(m, nu.total_mass))
        contr = max(contr, distance(erase(mu, a), erase(nu, a), G=G) - d_mn)
    # weak convergence witnesses
    mu = random_measure(rng)
    h = float(rng.uniform(0.0, 5.0))
    ds = np.array([distance(mu + AtomicMeasure([h], [1.0 / k]), mu, G=G) for k in range(1, 101)])
    funcs = [_random_h(rng) for _ in range(20)]
    gaps = np.array([[abs(integrate(mu + AtomicMeasure([h], [1.0 / k]), f) - integrate(mu, f)) for k in (1, 10, 100)] for f in funcs])
    weak_ok = bool(np.all(np.diff(ds) < 0) and ds[-1] < 2.0 / 100 + tol and np.all(gaps[:, 2] <= gaps[:, 0] + tol))
    grow = [distance(zero, AtomicMeasure([1.0], [float(k)])) for k in (1, 10, 100)]
    escape_ok = bool(all(g >= k for g, k in zip(grow, (1, 10, 100))))
    return [
        exact_report("metric_symmetry", sym, 0.0, n=n),
        exact_report("metric_triangle", max(tri, 0.0), tol, n=n),
        exact_report("metric_identity", ident, 0.0, n=n),
        exact_report("metric_mass_bounds", max(bound, 0.0), tol, n=n),
        exact_report("metric_contraction", max(contr, 0.0), tol, n=n),
        exact_report("metric_weak_convergence", 0 if weak_ok and escape_ok else 1, 0, D_last=float(ds[-1]), D_escape=grow),
    ]


# ---------------------------------------------------------------------------
# trajectories


def _chain_mass(tr, t):
    return math.fsum(m for _, m in tr._chain(t))


def mass_identity(tm, n_paths=100, T=0.01, mu=None, seed=0, tol=1e-9):
    """``<rho_t,1> = (<mu,1> + I_t)_+ + X_t - I_t`` at every event time, from the stack contents."""
    mu = AtomicMeasure() if mu is None else mu
    worst, n_events = 0.0, []
    m = mu.total_mass
    for i in range(n_paths):
        p = simulate_path(tm, T, seed, i)
        tr = explore(p, mu)
        n_events.append(p.n_jumps)
        for k in range(p.n_jumps):
            t = float(p.times[k])
            want = max(m + p.Ipre[k], 0.0) + p.Xp[k] - p.Ipre[k]
            worst = max(worst, abs(_chain_mass(tr, t) - want))
    return exact_report("mass_identity", worst, tol, n_paths=n_paths, min_events=int(min(n_events)), mu=mu.to_json(), epsilon=tm.epsilon)


def height_consistency(tm, n_paths=100, T=0.01, mu=None, n_times=1000, seed=0, tol=1e-9):
    """Stack height against the open-jump count at random times."""
    mu = AtomicMeasure() if mu is None else mu
    worst = 0.0
    for i in range(n_paths):
        p = simulate_path(tm, T, seed, i)
        tr = explore(p, mu)
        ts = path_rng(seed, 10_000 + i).uniform(0.0, T, n_times)
        for t in ts.tolist():
            a, b = tr.H(t), ladder_height(p, t, mu)
            if a != b:
                worst = max(worst, abs(a - b))
    return exact_report("height_consistency", worst, tol, n_paths=n_paths, n_times=n_times, mu=mu.to_json(), epsilon=tm.epsilon)


def subordinator_law(tm, rs=(0.05, 0.1), lams=(0.5, 1.0, 2.0), n_paths=10_000, seed=0, T_cap=4.0):
    """``E exp(-lam tau_r)`` against ``exp(-r psi_eps^{-1}(lam))``.

    Paths are cut at ``tau_{max r}`` or ``T_cap``.  A censored ``tau`` is
    only known to exceed ``T_cap``; it is scored at the midpoint of
    ``[0, exp(-lam T_cap)]`` and the half-width, times the censored
    fraction, goes into the bias budget.
    """
    rs = tuple(rs)
    r_max = max(rs)
    taus = np.full((n_paths, len(rs)), np.inf)
    for i in range(n_paths):
        p = simulate_path(tm, T_cap, seed, i, stop_level=r_max)
        ok = np.array(rs) < -p.I_T
        if np.any(ok):
            taus[i, ok] = inverse_local_time(p, np.array(rs)[ok])
        if p.stopped:
            # the path ends exactly at tau_{r_max}
            taus[i, np.array(rs) == r_max] = p.T
    reports = []
    for j, r in enumerate(rs):
        cens = ~np.isfinite(taus[:, j])
        for lam in lams:
            half = 0.5 * math.exp(-lam * T_cap)
            vals = np.where(cens, half, np.exp(-lam * np.where(cens, 0.0, taus[:, j])))
            m, se = _mean_se(vals)
            target = math.exp(-r * tm.psi_inverse(lam))
            reports.append(
                EstimatorReport(
                    "subordinator_law",
                    float(m),
                    float(se),
                    target,
                    half * float(cens.mean()),
                    n_paths,
                    tm.epsilon,
                    T_cap,
                    {"r": r, "lambda": lam, "censored": int(cens.sum()), "seed": seed},
                )
            )
    return reports


def lambda_grid(mechs=None, fs=None, ys=None, tol=1e-6):
    """``Lambda(y) = gamma - f(y)`` by nested quadrature on a grid of heights."""
    mechs = mechs or [LevyMechanism.stable(1.5), LevyMechanism.stable(1.3, alpha0=0.5)]
    fs = fs or [TestFunction.exponential(0.2, 0.3), TestFunction.exponential(0.3, -0.3), TestFunction.exponential(0.1, 0.8, 2.0)]
    ys = ys if ys is not None else [0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, math.inf]
    worst = 0.0
    for mech in mechs:
        for f in fs:
            gf = GeneratorFunctional(f, mech, 1.0)
            for y in ys:
                worst = max(worst, lambda_identity(gf, y)[2])
    return exact_report("lambda_identity", worst, tol, n_mech=len(mechs), n_f=len(fs), n_y=len(ys))
