"""
Poisson representation of the excursion measure of ``(rho, eta)``.

Given marks ``(x, l, u)`` of a Poisson point measure with intensity
``dx l pi(dl) du`` on ``[0, a] x (delta, inf) x [0, 1]``, put

    mu_a = sum u l delta_x,      nu_a = sum (1 - u) l delta_x.

With ``M = int_0^inf da exp(-alpha0 a) M_a`` (``M_a`` the law of
``(mu_a, nu_a)``) the representation reads

    N[int_0^sigma F(rho_t, eta_t) dt] = int M(dmu dnu) F(mu, nu).

For ``F(mu, nu) = 1{H^mu <= A} exp(-<mu,f> - gamma <nu,1>)`` both sides
have closed forms: with ``q`` the secant slope of the exponent between
``f(x)`` and ``gamma``,

    continuous:  int_0^A exp(-int_0^a q(f(x)) dx) da,
    lattice:     (1/c) sum_{n <= cA} prod_{k=1}^n (1 - q_eps(f(k/c)) / c),

the second one being exact for the truncated process that the path
simulator produces (one atom per generation ``k/c``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _integrate
from scipy import stats

from ._sweep import exp_integral
from .generator_lab import N_SIGMA, EstimatorReport, _mean_se, _need_params, excursion_batch
from .levy_model import psi_eval, psi_prime, truncate
from .measure import AtomicMeasure, TestFunction
from .path_sim import path_rng

__all__ = [
    "MarkedPoissonConfig",
    "sample_pair",
    "sample_functionals",
    "secant_slope",
    "continuous_closed_form",
    "lattice_closed_form",
    "representation_test",
    "campbell_check",
    "exchangeability_check",
    "variance_check",
]


@dataclass(frozen=True)
class MarkedPoissonConfig:
    """Height horizon ``a``, mechanism, small-mark cutoff ``delta`` and seed."""

    a: float
    mech: object
    delta: float = 1e-4
    seed: int = 0
    max_dropped: float = 0.1

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("height horizon must be non-negative")
        if not self.delta > 0:
            raise ValueError("the l pi(dl) intensity is not integrable at 0: delta must be positive")
        if self.dropped_mass > self.max_dropped:
            raise ValueError(
                f"expected dropped mass {self.dropped_mass:.3g} exceeds {self.max_dropped}; lower delta"
            )

    @property
    def mark_rate(self):
        """``int_(delta, inf) l pi(dl)``: marks per unit height."""
        return self.mech.jumps.tail_mean(self.delta)

    @property
    def dropped_mass(self):
        """``a int_(0, delta) l^2 pi(dl) / 2``."""
        j = self.mech.jumps
        below = _integrate.quad(lambda x: x * x * float(j.density(x)), 0.0, self.delta, limit=200)[0]
        return self.a * below / 2.0


def sample_pair(cfg, rng=None):
    """One draw of ``(mu_a, nu_a)``."""
    rng = path_rng(cfg.seed) if rng is None else rng
    n = rng.poisson(cfg.a * cfg.mark_rate)
    x = rng.uniform(0.0, cfg.a, n)
    ell = cfg.mech.jumps.sample(rng, n, cfg.delta, size_power=1)
    u = rng.random(n)
    return AtomicMeasure(x, u * ell), AtomicMeasure(x, (1.0 - u) * ell)


def sample_functionals(cfg, n, f=None, rng=None):
    """``n`` independent draws reduced to ``<mu,f>``, ``<mu,1>``, ``<nu,1>`` and ``H^mu``.

    Per-mark sums are exact: ``mu + nu`` has atom masses ``l`` by construction.
    """
    rng = path_rng(cfg.seed) if rng is None else rng
    f = TestFunction.constant(0.0) if f is None else f
    counts = rng.poisson(cfg.a * cfg.mark_rate, n)
    total = int(counts.sum())
    x = rng.uniform(0.0, cfg.a, total)
    ell = cfg.mech.jumps.sample(rng, total, cfg.delta, size_power=1)
    u = rng.random(total)
    owner = np.repeat(np.arange(n), counts)
    mu_m = u * ell
    nu_m = (1.0 - u) * ell
    out = {
        "mu_f": np.bincount(owner, mu_m * np.asarray(f(x)), minlength=n),
        "mu_1": np.bincount(owner, mu_m, minlength=n),
        "nu_1": np.bincount(owner, nu_m, minlength=n),
        "H": np.zeros(n),
        "count": counts,
    }
    if total:
        np.maximum.at(out["H"], owner, x)
    return out


# ---------------------------------------------------------------------------
# closed forms


def secant_slope(psi, dpsi, v, gamma, tol=1e-8):
    """``(psi(v) - psi(gamma)) / (v - gamma)``; ``psi'`` at the midpoint when ``|v - gamma| < tol``."""
    if abs(v - gamma) < tol:
        return dpsi(0.5 * (v + gamma))
    return (psi(v) - psi(gamma)) / (v - gamma)


def _exponent(mech, delta):
    """``(psi, psi')`` of the mechanism with jumps below ``delta`` removed (no compensation)."""
    if delta > 0:
        tm = truncate(mech, delta)
        return tm.psi, tm.psi_prime
    return (lambda v: psi_eval(mech, v)), (lambda v: psi_prime(mech, v))


def continuous_closed_form(mech, f, gamma, A, delta=0.0, n_gl=None):
    """``int_0^A exp(-int_0^a q(f(x)) dx) da``.

    ``delta > 0`` removes marks below ``delta`` (the law the sampler
    draws from).  With ``n_gl`` the outer integral uses that many
    Gauss-Legendre nodes instead of adaptive quadrature.
    """
    psi, dpsi = _exponent(mech, delta)
    q = lambda x: secant_slope(psi, dpsi, float(f(x)), gamma)
    opts = dict(epsabs=1e-13, epsrel=1e-11, limit=200)

    def inner(a):
        return _integrate.quad(q, 0.0, a, **opts)[0] if a > 0 else 0.0

    if n_gl:
        nodes, weights = np.polynomial.legendre.leggauss(n_gl)
        a = 0.5 * A * (nodes + 1.0)
        return float(np.dot(0.5 * A * weights, [math.exp(-inner(x)) for x in a]))
    return _integrate.quad(lambda a: math.exp(-inner(a)), 0.0, A, **opts)[0]


def lattice_closed_form(tm, f, gamma, A):
    """Exact value of ``N[int_0^sigma F(rho, eta) dt]`` for the truncated process."""
    c = tm.drift_rate
    n_max = int(math.floor(c * A * (1 + 1e-14)))
    if n_max < 1:
        return 0.0
    k = np.arange(1, n_max + 1)
    fv = np.asarray(f(k / c), dtype=float)
    q = np.array([secant_slope(tm.psi, tm.psi_prime, v, gamma) for v in fv.tolist()])
    phi = 1.0 - q / c
    return float(np.cumprod(phi).sum() / c)


# ---------------------------------------------------------------------------
# the representation test


def representation_test(
    mech,
    f,
    gamma,
    A_max,
    r0,
    n_paths,
    seed,
    n_quad=32,
    n_per_node=2000,
    delta=1e-4,
    eps=1e-2,
    T0=64.0,
    T_max=1e5,
):
    """Excursion side against the Poisson side for ``F = 1{H <= A} exp(-<mu,f> - gamma <nu,1>)``.

    The left side comes from excursions of simulated paths (local time
    window ``r0``); the right side from ``n_quad`` Gauss-Legendre nodes in
    ``a``, each estimated with ``n_per_node`` draws of ``(mu_a, nu_a)``.
    The bias budget is the gap between the exact values of the two
    estimators (lattice versus ``delta``-cut continuous form) plus the
    Gauss-Legendre error.
    """
    if not (math.isfinite(A_max) and A_max > 0):
        raise ValueError("F needs a finite height cap A_max > 0")
    params = _need_params(f)
    if gamma < 0 or f.sup == math.inf:
        raise ValueError("F must be bounded: need gamma >= 0 and bounded f")
    if min(f(0.0), f.f_inf) < 0:
        raise ValueError("f must be non-negative")
    tm = truncate(mech, eps)

    def per_path(P, mask):
        keep = mask & (P.h <= A_max)
        return np.array([exp_integral(P, gamma=gamma)[keep].sum() / r0])

    rows, censored, n_exc = excursion_batch(tm, params, r0, n_paths, seed, per_path, T0, T_max)
    lhs, lhs_se = _mean_se(rows[:, 0])

    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    a_nodes = 0.5 * A_max * (nodes + 1.0)
    w = 0.5 * A_max * weights * np.exp(-mech.alpha0 * a_nodes)
    rng = path_rng(seed, 1 << 40)
    means, vars_ = np.empty(n_quad), np.empty(n_quad)
    for j, a in enumerate(a_nodes):
        cfg = MarkedPoissonConfig(float(a), mech, delta, seed)
        s = sample_functionals(cfg, n_per_node, f, rng)
        vals = np.where(s["H"] <= A_max, np.exp(-s["mu_f"] - gamma * s["nu_1"]), 0.0)
        means[j] = vals.mean()
        vars_[j] = vals.var(ddof=1)
    rhs = float(np.dot(w, means))
    rhs_se = float(math.sqrt(np.dot(w * w, vars_) / n_per_node))

    lattice = lattice_closed_form(tm, f, gamma, A_max)
    cont_delta = continuous_closed_form(mech, f, gamma, A_max, delta)
    cont_delta_gl = continuous_closed_form(mech, f, gamma, A_max, delta, n_gl=n_quad)
    cont = continuous_closed_form(mech, f, gamma, A_max, 0.0)
    quad_err = abs(cont_delta_gl - cont_delta)
    se = math.sqrt(float(lhs_se) ** 2 + rhs_se**2)
    budget = abs(lattice - cont_delta) + quad_err
    rep = EstimatorReport(
        "poisson_representation",
        float(lhs) - rhs,
        se,
        0.0,
        budget,
        n_paths,
        eps,
        T_max,
        {
            "gamma": gamma,
            "f": list(params),
            "A_max": A_max,
            "r0": r0,
            "delta": delta,
            "n_quad": n_quad,
            "n_per_node": n_per_node,
            "seed": seed,
            "n_excursions": n_exc,
            "censored_paths": censored,
            "lhs": float(lhs),
            "lhs_se": float(lhs_se),
            "rhs": rhs,
            "rhs_se": rhs_se,
            "lattice_closed_form": lattice,
            "continuous_closed_form_delta": cont_delta,
            "continuous_closed_form": cont,
            "quadrature_error": quad_err,
            "lhs_vs_lattice_pass": bool(abs(lhs - lattice) <= N_SIGMA * lhs_se),
            "rhs_vs_continuous_pass": bool(abs(rhs - cont_delta_gl) <= N_SIGMA * rhs_se),
        },
    )
    if censored:
        rep.failure = f"{censored} path(s) reached T_max before tau_r0"
    return rep


# ---------------------------------------------------------------------------
# sampler checks


def campbell_check(cfg, n, f=None, seed=None):
    """Sampler moments against Campbell's formula.

    Returns reports for ``E<mu_a,1>`` and ``E<nu_a,1>`` (both
    ``a int_(delta,inf) l^2 pi(dl) / 2``, which needs a finite second
    moment) and for the Laplace functional ``E exp(-<mu_a, f>)``.
    """
    seed = cfg.seed if seed is None else seed
    f = TestFunction.exponential(0.2, 0.3) if f is None else f
    rng = path_rng(seed, 7)
    s = sample_functionals(cfg, n, f, rng)
    reports = []
    second = cfg.mech.jumps.power_moment(2, cfg.delta)
    if math.isfinite(second):
        target = cfg.a * second / 2.0
        for key in ("mu_1", "nu_1"):
            m, se = _mean_se(s[key])
            reports.append(
                EstimatorReport(f"campbell_mean_{key}", float(m), float(se), target, 0.0, n, None, None, {"a": cfg.a, "delta": cfg.delta})
            )
    jumps = cfg.mech.jumps

    def rate(x):
        v = float(f(x))
        return jumps.compensated(v, cfg.delta) / v if v > 0 else 0.0

    expo = _integrate.quad(rate, 0.0, cfg.a, epsabs=1e-13, epsrel=1e-11)[0]
    m, se = _mean_se(np.exp(-s["mu_f"]))
    reports.append(
        EstimatorReport("campbell_laplace", float(m), float(se), math.exp(-expo), 0.0, n, None, None, {"a": cfg.a, "delta": cfg.delta, "f": list(f.params or ())})
    )
    return reports


def exchangeability_check(cfg, n, seed=None, level=1e-3):
    """Two-sample KS test of ``<mu_a,1>`` against ``<nu_a,1>`` from disjoint draws."""
    seed = cfg.seed if seed is None else seed
    s1 = sample_functionals(cfg, n, rng=path_rng(seed, 11))
    s2 = sample_functionals(cfg, n, rng=path_rng(seed, 12))
    res = stats.ks_2samp(s1["mu_1"], s2["nu_1"])
    return {"statistic": float(res.statistic), "pvalue": float(res.pvalue), "level": level, "pass": bool(res.pvalue >= level)}


def variance_check(mech, delta, a_values, n, seed=0):
    """``Var <mu_a, 1> = a int_(delta,inf) l^3 pi(dl) / 3`` for each ``a``.

    The standard error of the sample variance uses the sample fourth
    central moment.
    """
    third = mech.jumps.power_moment(3, delta)
    if not math.isfinite(third):
        raise ValueError("variance check needs a finite third moment of pi (use a truncated stable measure)")
    reports = []
    for i, a in enumerate(a_values):
        cfg = MarkedPoissonConfig(float(a), mech, delta, seed)
        x = sample_functionals(cfg, n, rng=path_rng(seed, 100 + i))["mu_1"]
        v = x.var(ddof=1)
        m4 = np.mean((x - x.mean()) ** 4)
        se = math.sqrt(max(m4 - v * v, 0.0) / n)
        reports.append(EstimatorReport("variance_linear_in_a", float(v), se, a * third / 3.0, 0.0, n, None, None, {"a": a, "delta": delta}))
    return reports
