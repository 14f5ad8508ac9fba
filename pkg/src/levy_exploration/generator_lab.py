"""
Exponential functionals, the resolvent identity and the related martingales.

For a test function ``f`` and a mechanism ``psi`` put

    F(mu) = exp(-<mu, f>)
    K(mu) = F(mu) [psi(f(H^mu)) - f'(H^mu) 1{H^mu < inf}]

Monte Carlo runs on the truncated process, whose exact generator on ``F``
is known in closed form::

    K_eps(mu) = F(mu) [psi_eps(f(H + 1/c)) - c (f(H + 1/c) - f(H))],
    L F      = K_eps - c f(0) 1{mu = 0}.

Every estimator is therefore computed twice on the same paths: once with
``K`` (the quantity of interest) and once with ``K_eps`` (for which the
identity is exact up to the time-horizon tail).  The gap between the two,
corrected by the gap between the two closed forms, is the truncation
allowance that enters the bias budget.

Time integrals are exact: on every piece of the stack sweep the integrand
is an exponential in ``t`` (see :mod:`levy_exploration._sweep`).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate as _integrate

from ._sweep import exp_integral, sweep
from .levy_model import psi_eval, psi_inverse, psi_prime, truncate
from .measure import AtomicMeasure, TestFunction, integrate
from .path_sim import simulate_path

__all__ = [
    "GeneratorFunctional",
    "EstimatorReport",
    "F_of",
    "K_of",
    "K_truncated_of",
    "resolvent_target",
    "f0_zero_target",
    "resolvent_mc",
    "martingale_test",
    "lambda_identity",
    "duality_test",
    "excursion_batch",
    "N_SIGMA",
]

N_SIGMA = 4.0


@dataclass(frozen=True)
class GeneratorFunctional:
    """``(f, psi, lam)`` with ``gamma = psi^{-1}(lam)`` cached."""

    f: TestFunction
    mech: object
    lam: float = 1.0
    gamma: float = field(init=False)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        object.__setattr__(self, "gamma", psi_inverse(self.mech, self.lam))


@dataclass
class EstimatorReport:
    """Monte Carlo estimate against a closed-form target.

    ``passed`` is ``|estimate - target| <= 4 se + bias_budget``.
    """

    test: str
    estimate: float
    se: float
    target: float
    bias_budget: float
    n_paths: int
    epsilon: float | None
    T: float | None
    params: dict = field(default_factory=dict)
    failure: str = ""  # set when the estimate is unusable regardless of its value

    @property
    def z(self):
        if self.se > 0:
            return (self.estimate - self.target) / self.se
        # exact checks: no sampling error, only the tolerance
        gap = self.estimate - self.target
        return 0.0 if abs(gap) <= self.bias_budget else math.copysign(math.inf, gap)

    @property
    def passed(self):
        if self.failure:
            return False
        return abs(self.estimate - self.target) <= N_SIGMA * self.se + self.bias_budget

    def to_dict(self):
        out = {
            "test": self.test,
            "params": {**self.params, "n_paths": self.n_paths, "epsilon": self.epsilon, "T": self.T},
            "estimate": self.estimate,
            "se": self.se,
            "target": self.target,
            "z": self.z,
            "bias_budget": self.bias_budget,
            "pass": bool(self.passed),
        }
        if self.failure:
            out["failure"] = self.failure
        return _jsonable(out)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return (
            f"{flag} {self.test}: estimate={self.estimate:.6g} target={self.target:.6g} "
            f"se={self.se:.3g} budget={self.bias_budget:.3g} z={self.z:.2f}"
        )


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    m = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(m)
    return m, se


# ---------------------------------------------------------------------------
# F and K


def F_of(gf, mu):
    return math.exp(-integrate(mu, gf.f))


def K_of(gf, mu):
    """``K(mu) = F(mu)[psi(f(H)) - f'(H) 1{H < inf}]``."""
    H = mu.height
    fh = gf.f(H)
    d = gf.f.deriv(H) if math.isfinite(H) else 0.0
    return F_of(gf, mu) * (psi_eval(gf.mech, fh) - d)


def K_truncated_of(gf, tm, mu):
    """Generator of the truncated process on ``F`` away from ``mu = 0``."""
    H = mu.height
    up = H + 1.0 / tm.drift_rate
    f_up, f_h = gf.f(up), gf.f(H)
    return F_of(gf, mu) * (tm.psi(f_up) - tm.drift_rate * (f_up - f_h))


def resolvent_target(gf, mu, gamma=None):
    """``exp(-<mu,f>) - f(0)/gamma exp(-gamma <mu,1>)``."""
    g = gf.gamma if gamma is None else gamma
    return F_of(gf, mu) - gf.f(0.0) / g * math.exp(-g * mu.total_mass)


def f0_zero_target(gf, mu):
    """``F(mu)``; valid when ``f(0) = 0``."""
    if gf.f(0.0) != 0.0:
        raise ValueError("this form needs f(0) = 0")
    return F_of(gf, mu)


# ---------------------------------------------------------------------------
# per-piece integrands


def _unique_heights(h):
    uniq, inv = np.unique(h, return_inverse=True)
    return uniq, inv


def _psi_list(fn, values):
    return np.array([fn(v) for v in values.tolist()])


def _k_limit(gf, mech, h):
    """``psi(f(H)) - f'(H)`` on each piece height (``f'(inf) = 0``)."""
    uniq, inv = _unique_heights(h)
    vals = _psi_list(lambda v: psi_eval(mech, v), np.asarray(gf.f(uniq))) - np.asarray(gf.f.deriv(uniq))
    return vals[inv]


def _k_matched(gf, tm, h):
    """``psi_eps(f(H + 1/c)) - c (f(H + 1/c) - f(H))`` on each piece height."""
    c = tm.drift_rate
    uniq, inv = _unique_heights(h)
    up = np.asarray(gf.f(uniq + 1.0 / c))
    vals = _psi_list(tm.psi, up) - c * (up - np.asarray(gf.f(uniq)))
    return vals[inv]


def _need_params(f):
    if f.params is None:
        raise ValueError("Monte Carlo estimators need f = c0 + c1 exp(-k x) (TestFunction.exponential)")
    return f.params


# ---------------------------------------------------------------------------
# resolvent


def resolvent_mc(gf, mu, n_paths, T, seed, eps=1e-2, scale=1.0):
    """Estimate ``E_mu int_0^T exp(-lam t) (lam F - K)(rho_t) dt``.

    The target is the closed form for the untruncated process.  The bias
    budget is the horizon tail ``exp(-lam T) (lam + sup psi(f) + sup|f'|) / lam``
    plus the truncation allowance measured with the exact generator of the
    simulated process.
    """
    lam = gf.lam
    if not lam > 0:
        raise ValueError("the resolvent needs lambda > 0")
    params = _need_params(gf.f)
    tm = truncate(gf.mech, eps)
    ys = np.empty((n_paths, 2))
    for i in range(n_paths):
        path = simulate_path(tm, T, seed, i)
        P = sweep(path, mu, params)
        w = exp_integral(P, lam=lam)
        ys[i, 0] = scale * np.dot(w, lam - _k_limit(gf, gf.mech, P.h))
        ys[i, 1] = scale * np.dot(w, lam - _k_matched(gf, tm, P.h))
    (est, est_m), (se, se_m) = _mean_se(ys)
    target = scale * resolvent_target(gf, mu)
    gamma_eps = tm.psi_inverse(lam)
    target_m = scale * resolvent_target(gf, mu, gamma_eps)
    diff = ys[:, 0] - ys[:, 1]
    kappa = abs(diff.mean() - (target - target_m))
    sup_psi = psi_eval(gf.mech, gf.f.sup)
    tail = abs(scale) * math.exp(-lam * T) * (lam + sup_psi + gf.f.sup_deriv) / lam
    return EstimatorReport(
        "resolvent",
        float(est),
        float(se),
        float(target),
        float(tail + kappa),
        n_paths,
        eps,
        T,
        {
            "lambda": lam,
            "gamma": gf.gamma,
            "f": list(params),
            "mu": json.loads(mu.to_json()),
            "seed": seed,
            "scale": scale,
            "tail_bound": tail,
            "truncation_allowance": kappa,
            "matched_estimate": float(est_m),
            "matched_se": float(se_m),
            "matched_target": target_m,
            "matched_pass": bool(abs(est_m - target_m) <= N_SIGMA * se_m + tail),
        },
    )


# ---------------------------------------------------------------------------
# martingales


def _value_at(P, t):
    """``<rho_t, f>`` from the piece containing ``t``."""
    j = min(int(np.searchsorted(P.t1, t, side="left")), P.t0.size - 1)
    return P.A0[j] + P.rho_rate[j] * (t - P.t0[j])


def martingale_test(gf, mu, n_paths, time_grid, seed, stopped=False, eps=1e-3):
    """Check that ``E[M_t] = M_0`` on ``time_grid``.

    Unstopped (needs ``f(0) = 0``)::

        M_t = exp(-lam t) F(rho_t) + int_0^t exp(-lam s) (lam F - K)(rho_s) ds

    Stopped at ``sigma`` (no condition on ``f``; ``lam`` is ignored)::

        M_t = F(rho_{t^sigma}) - int_0^{t^sigma} K(rho_s) ds

    Returns one report per grid time plus a matrix of pairwise increment
    z-scores under ``params["increment_z"]`` of the first report.
    """
    params = _need_params(gf.f)
    if not stopped and gf.f(0.0) != 0.0:
        raise ValueError("the unstopped martingale needs f(0) = 0")
    grid = np.asarray(sorted(time_grid), dtype=float)
    lam = 0.0 if stopped else gf.lam
    tm = truncate(gf.mech, eps)
    T = float(grid[-1])
    m = mu.total_mass
    M0 = F_of(gf, mu)
    Ms = np.empty((n_paths, grid.size, 2))
    for i in range(n_paths):
        if stopped and m == 0:
            Ms[i] = M0
            continue
        path = simulate_path(tm, T, seed, i, stop_level=m if stopped else None)
        P = sweep(path, mu, params)
        kp = _k_limit(gf, gf.mech, P.h)
        km = _k_matched(gf, tm, P.h)
        for j, t in enumerate(grid):
            tt = min(t, path.T)
            w = exp_integral(P, lam=lam, upto=tt)
            end = math.exp(-lam * tt - _value_at(P, tt))
            Ms[i, j, 0] = end + np.dot(w, lam - kp)
            Ms[i, j, 1] = end + np.dot(w, lam - km)
    inc = Ms[:, :, 0] - M0
    est, se = _mean_se(inc)
    est_m, se_m = _mean_se(Ms[:, :, 1] - M0)
    kappa = np.abs(np.mean(Ms[:, :, 0] - Ms[:, :, 1], axis=0))
    # pairwise increments M_{t_b} - M_{t_a}
    k = grid.size
    inc_z = np.zeros((k, k))
    for a in range(k):
        for b in range(a + 1, k):
            d = Ms[:, b, 0] - Ms[:, a, 0]
            mm, ss = _mean_se(d)
            kab = abs(np.mean(d - (Ms[:, b, 1] - Ms[:, a, 1])))
            inc_z[a, b] = inc_z[b, a] = (abs(mm) - kab) / ss if ss > 0 else 0.0
    name = "martingale_stopped" if stopped else "martingale"
    reports = []
    for j, t in enumerate(grid):
        reports.append(
            EstimatorReport(
                name,
                float(est[j]),
                float(se[j]),
                0.0,
                float(kappa[j]),
                n_paths,
                eps,
                T,
                {
                    "t": float(t),
                    "lambda": lam,
                    "f": list(params),
                    "mu": json.loads(mu.to_json()),
                    "mechanism": gf.mech.describe(),
                    "seed": seed,
                    "M0": M0,
                    "truncation_allowance": float(kappa[j]),
                    "matched_estimate": float(est_m[j]),
                    "matched_se": float(se_m[j]),
                    "matched_pass": bool(abs(est_m[j]) <= N_SIGMA * se_m[j]),
                },
            )
        )
    reports[0].params["increment_z"] = inc_z.tolist()
    reports[0].params["increments_pass"] = bool(np.all(inc_z <= N_SIGMA))
    return reports


# ---------------------------------------------------------------------------
# the Lambda / g identity


def _secant(mech, v, gamma, psi_gamma, tol=1e-8):
    """``(psi(v) - psi(gamma)) / (v - gamma)``, with ``psi'`` at the midpoint near the diagonal."""
    if abs(v - gamma) < tol:
        return psi_prime(mech, 0.5 * (v + gamma))
    return (psi_eval(mech, v) - psi_gamma) / (v - gamma)


def lambda_identity(gf, y, quad_tol=1e-10):
    """Nested quadrature of ``Lambda(y)`` against ``gamma - f(y)``.

    ``Lambda(y) = int_0^inf (psi(gamma) - psi(f(a+y)) + f'(a+y)) exp(-g(a,y)) da``
    with ``g(a,y) = int_0^a q(f(x+y)) dx`` and ``q`` the secant slope of
    ``psi`` between ``f`` and ``gamma``.  Returns ``(lhs, rhs, |lhs - rhs|)``.
    """
    mech, f, gamma = gf.mech, gf.f, gf.gamma
    pg = psi_eval(mech, gamma)
    rhs = gamma - f(y)
    opts = dict(epsabs=1e-14, epsrel=quad_tol, limit=400)

    if math.isinf(y):
        v = f.f_inf
        q = _secant(mech, v, gamma, pg)
        head = pg - psi_eval(mech, v)
        # constant integrand head * exp(-q a)
        lhs, err = _integrate.quad(lambda a: head * math.exp(-q * a), 0.0, math.inf, **opts)
        return lhs, rhs, abs(lhs - rhs)

    q_of = lambda x: _secant(mech, f(x + y), gamma, pg)
    q_inf = _secant(mech, f.f_inf, gamma, pg)
    if not q_inf > 0:
        raise ArithmeticError("g(a, y) does not grow: the secant slope at infinity is not positive")

    def g(a):
        return _integrate.quad(q_of, 0.0, a, **opts)[0]

    # upper limit with exp(-g(A)) <= 1e-14
    A = 1.0
    while g(A) < 33.0:
        A *= 2.0

    def integrand(a):
        x = a + y
        return (pg - psi_eval(mech, f(x)) + f.deriv(x)) * math.exp(-g(a))

    pts = [p for p in (1.0, 4.0, 16.0) if p < A]
    lhs, err = _integrate.quad(integrand, 0.0, A, points=pts or None, **opts)
    if err > 1e-8:
        raise ArithmeticError(f"Lambda quadrature error estimate {err:.2e}")
    return lhs, rhs, abs(lhs - rhs)


# ---------------------------------------------------------------------------
# excursion harness (shared with poisson_rep)


def _simulate_to_level(tm, r0, seed, i, T0, T_max):
    T = T0
    while True:
        path = simulate_path(tm, T, seed, i, stop_level=r0)
        if path.stopped or T >= T_max:
            return path
        T = min(2.0 * T, T_max)


def excursion_batch(tm, f_params, r0, n_paths, seed, per_path, T0=64.0, T_max=1e5):
    """Run ``per_path(pieces, mask)`` on paths cut at ``tau_{r0}``.

    ``mask`` selects the pieces inside excursions; dividing sums over them
    by ``r0`` realises the excursion measure.  Returns the stacked results
    and the number of paths that reached ``T_max`` before ``tau_{r0}``
    (their running excursion is cut at the horizon).
    """
    rows = []
    censored = 0
    n_exc = 0
    for i in range(n_paths):
        path = _simulate_to_level(tm, r0, seed, i, T0, T_max)
        censored += not path.stopped
        P = sweep(path, None, f_params)
        mask = P.alpha >= 0
        n_exc += int(np.unique(P.alpha[mask]).size)
        rows.append(per_path(P, mask))
    return np.asarray(rows, dtype=float), censored, n_exc


def duality_test(mech, f, gamma, n_paths, r0, seed, eps=1e-2, T0=64.0, T_max=1e5):
    """Compare ``N[int_0^sigma exp(-psi(gamma) t) F(rho_t) dt]`` with
    ``N[int_0^sigma exp(-gamma <eta_t,1>) F(rho_t) dt]``.

    Both sides come from the same excursions.  The truncated process
    satisfies the identity exactly with ``psi_eps(gamma)``; the gap
    between the ``psi`` and ``psi_eps`` versions of the left side is the
    truncation allowance.  Paths still running at ``T_max`` make the
    report fail (their excursions cannot be completed).
    """
    params = _need_params(f)
    tm = truncate(mech, eps)
    pg, pg_eps = psi_eval(mech, gamma), tm.psi(gamma)

    def per_path(P, mask):
        lhs = exp_integral(P, lam=pg, t_ref=P.alpha)[mask].sum()
        lhs_m = exp_integral(P, lam=pg_eps, t_ref=P.alpha)[mask].sum()
        rhs = exp_integral(P, gamma=gamma)[mask].sum()
        return np.array([lhs, lhs_m, rhs]) / r0

    rows, censored, n_exc = excursion_batch(tm, params, r0, n_paths, seed, per_path, T0, T_max)
    d = rows[:, 0] - rows[:, 2]
    est, se = _mean_se(d)
    dm, sem = _mean_se(rows[:, 1] - rows[:, 2])
    kappa = abs(np.mean(rows[:, 0] - rows[:, 1]))
    rep = EstimatorReport(
        "duality",
        float(est),
        float(se),
        0.0,
        float(kappa),
        n_paths,
        eps,
        T_max,
        {
            "gamma": gamma,
            "f": list(params),
            "r0": r0,
            "seed": seed,
            "n_excursions": n_exc,
            "censored_paths": censored,
            "lhs": float(rows[:, 0].mean()),
            "rhs": float(rows[:, 2].mean()),
            "truncation_allowance": float(kappa),
            "matched_estimate": float(dm),
            "matched_se": float(sem),
            "matched_pass": bool(abs(dm) <= N_SIGMA * sem),
        },
    )
    if censored:
        rep.failure = f"{censored} path(s) reached T_max before tau_r0"
    return rep
