"""
Branching mechanisms of spectrally positive Lévy processes.

A mechanism is the Laplace exponent

    psi(lam) = alpha0 * lam + int (exp(-lam * l) - 1 + lam * l) pi(dl)

of a Lévy process with no negative jumps and no Brownian part.  The jump
measure ``pi`` is one of

* :class:`StableJumps` -- ``C(alpha) l^(-1-alpha) dl`` with the normalisation
  ``C(alpha) = alpha (alpha - 1) / Gamma(2 - alpha)`` so that the pure stable
  mechanism is exactly ``lam ** alpha``.  An optional upper cutoff and an
  optional exponential tilt ``exp(-theta l)`` cover truncated-stable and
  tilted mechanisms.
* :class:`TabulatedJumps` -- a density given on a grid, interpolated
  log-log, extrapolated as a power law below the grid and zero above it.

Simulation uses a finite-activity :class:`TruncatedMechanism`: jumps below
``eps`` are dropped and their compensator is folded into the drift.
"""
from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "QuadratureError",
    "StableJumps",
    "TabulatedJumps",
    "LevyMechanism",
    "TruncatedMechanism",
    "ValidationReport",
    "psi_eval",
    "psi_prime",
    "psi_inverse",
    "tilt",
    "validate",
    "truncate",
    "truncation_bias",
    "load_mechanism",
]

QUAD_RTOL = 1e-10


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def _compensated(x):
    """exp(-x) - 1 + x, accurate for small x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    out = np.where(small, x * x / 2 - x ** 3 / 6 + x ** 4 / 24, 0.0)
    big = ~small
    out[big] = x[big] + np.expm1(-x[big])
    return out if out.ndim else float(out)


def _one_minus_exp(x):
    return -np.expm1(-x)


def _compensated_scalar(x):
    if abs(x) < 1e-3:
        return x * x / 2 - x ** 3 / 6 + x ** 4 / 24
    return x + math.expm1(-x)


def _quad(g, lo, hi, rtol=QUAD_RTOL, what="integral"):
    """Integrate ``g`` over (lo, hi) with a split at 1 (Gauss-Kronrod)."""
    if hi <= lo:
        return 0.0
    cuts = [lo]
    if lo < 1.0 < hi:
        cuts.append(1.0)
    cuts.append(hi)
    total = 0.0
    err = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        v, e = integrate.quad(g, a, b, epsabs=1e-15, epsrel=1e-12, limit=500)
        total += v
        err += e
    if err > max(rtol * abs(total), 1e-13):
        raise QuadratureError(f"{what} did not converge", err)
    return total


# ---------------------------------------------------------------------------
# jump measures


@dataclass(frozen=True)
class StableJumps:
    """Stable-type jump measure ``C(alpha) exp(-theta l) l^(-1-alpha)`` on (0, ell_max)."""

    alpha: float
    theta: float = 0.0
    ell_max: float = math.inf

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValueError(f"stable index must lie in (1, 2), got {self.alpha}")
        if self.theta < 0:
            raise ValueError("tilt must be non-negative")
        if not self.ell_max > 0:
            raise ValueError("ell_max must be positive")

    @property
    def const(self):
        a = self.alpha
        return a * (a - 1) / math.gamma(2 - a)

    @property
    def is_pure(self):
        return self.theta == 0.0 and math.isinf(self.ell_max)

    def _dens(self, x):
        """Scalar density, used inside quadrature."""
        if x >= self.ell_max:
            return 0.0
        return self.const * x ** (-1 - self.alpha) * math.exp(-self.theta * x)

    def density(self, ell):
        ell = np.asarray(ell, dtype=float)
        d = self.const * ell ** (-1 - self.alpha) * np.exp(-self.theta * ell)
        return np.where(ell < self.ell_max, d, 0.0)

    def tilted(self, theta):
        return StableJumps(self.alpha, self.theta + theta, self.ell_max)

    # moments over (lo, ell_max) -------------------------------------------
    def _power_moment(self, k, lo):
        """int_lo^ell_max l^k pi(dl)."""
        a, L = self.alpha, self.ell_max
        if self.theta == 0.0:
            p = k - a
            top = 0.0 if math.isinf(L) else L ** p
            if p >= 0 and math.isinf(L):
                return math.inf
            return self.const * (top - lo ** p) / p
        return _quad(lambda x: x ** k * self._dens(x), lo, L, what="moment")

    def power_moment(self, k, lo):
        """``int_lo^inf l^k pi(dl)`` (may be infinite)."""
        return self._power_moment(k, lo)

    def tail_mass(self, lo):
        return self._power_moment(0, lo)

    def tail_mean(self, lo):
        return self._power_moment(1, lo)

    def tail_second_moment(self, lo):
        return self._power_moment(2, lo)

    def compensated(self, lam, lo=0.0):
        """int_lo^inf (exp(-lam l) - 1 + lam l) pi(dl)."""
        if lam == 0:
            return 0.0
        g = lambda x: _compensated_scalar(lam * x) * self._dens(x)
        if self.is_pure:
            full = lam ** self.alpha
            return full - _quad(g, 0.0, lo, what="psi") if lo > 0 else full
        return _quad(g, lo, self.ell_max, what="psi")

    def compensated_prime(self, lam, lo=0.0):
        """int_lo^inf l (1 - exp(-lam l)) pi(dl)."""
        if lam == 0:
            return 0.0
        g = lambda x: -x * math.expm1(-lam * x) * self._dens(x)
        if self.is_pure:
            full = self.alpha * lam ** (self.alpha - 1)
            return full - _quad(g, 0.0, lo, what="psi'") if lo > 0 else full
        return _quad(g, lo, self.ell_max, what="psi'")

    def sample(self, rng, n, lo, size_power=0):
        """Draw ``n`` values from ``l^size_power pi(dl)`` restricted to (lo, ell_max), normalised."""
        p = self.alpha - size_power
        hi = self.ell_max
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = n - filled
            u = rng.random(m)
            lo_p = lo ** (-p)
            hi_p = 0.0 if math.isinf(hi) else hi ** (-p)
            x = (lo_p - u * (lo_p - hi_p)) ** (-1.0 / p)
            if self.theta > 0:
                keep = rng.random(m) < np.exp(-self.theta * (x - lo))
                x = x[keep]
            out[filled:filled + x.size] = x
            filled += x.size
        return out

    def infinite_variation(self):
        return True

    def describe(self):
        d = {"kind": "stable", "alpha": self.alpha}
        if self.theta:
            d["theta"] = self.theta
        if not math.isinf(self.ell_max):
            d["kind"] = "truncated_stable"
            d["ell_max"] = self.ell_max
        return d


@dataclass(frozen=True)
class TabulatedJumps:
    """Jump density tabulated on a grid of jump sizes.

    Log-log linear interpolation between nodes, power-law extrapolation
    below the first node, zero above the last node.  ``theta`` multiplies
    the density by ``exp(-theta l)``.
    """

    ell: tuple
    dens: tuple
    theta: float = 0.0

    def __post_init__(self):
        ell = np.asarray(self.ell, dtype=float)
        dens = np.asarray(self.dens, dtype=float)
        if ell.ndim != 1 or ell.size < 2 or ell.shape != dens.shape:
            raise ValueError("need at least two (ell, density) pairs")
        if np.any(ell <= 0) or np.any(np.diff(ell) <= 0):
            raise ValueError("grid must be positive and strictly increasing")
        if np.any(dens <= 0):
            raise ValueError("tabulated densities must be positive")

    @property
    def ell_max(self):
        return float(self.ell[-1])

    @property
    def _logs(self):
        return np.log(np.asarray(self.ell)), np.log(np.asarray(self.dens))

    def density(self, ell):
        x = np.asarray(ell, dtype=float)
        lx, ld = self._logs
        slope = (ld[1] - ld[0]) / (lx[1] - lx[0])
        with np.errstate(divide="ignore"):
            lxx = np.log(np.where(x > 0, x, np.nan))
        inner = np.interp(lxx, lx, ld)
        below = ld[0] + slope * (lxx - lx[0])
        out = np.exp(np.where(lxx < lx[0], below, inner))
        out = np.where(x <= self.ell[-1], out, 0.0) * np.exp(-self.theta * x)
        return np.where(x > 0, out, 0.0)

    def tilted(self, theta):
        return TabulatedJumps(self.ell, self.dens, self.theta + theta)

    def _integrate(self, g, lo, hi=None):
        hi = self.ell_max if hi is None else min(hi, self.ell_max)
        if hi <= lo:
            return 0.0
        nodes = [lo] + [e for e in self.ell if lo < e < hi] + [hi]
        return _cached_piecewise(self, g, tuple(nodes))

    def power_moment(self, k, lo):
        return self._integrate(("pow", k), lo)

    def tail_mass(self, lo):
        return self._integrate(_G_ONE, lo)

    def tail_mean(self, lo):
        return self._integrate(_G_ELL, lo)

    def tail_second_moment(self, lo):
        return self._integrate(_G_ELL2, lo)

    def compensated(self, lam, lo=0.0):
        if lam == 0:
            return 0.0
        return self._integrate(("comp", lam), lo)

    def compensated_prime(self, lam, lo=0.0):
        if lam == 0:
            return 0.0
        return self._integrate(("compp", lam), lo)

    def sample(self, rng, n, lo, size_power=0):
        hi = self.ell_max
        if lo >= hi:
            raise ValueError("empty jump tail")
        grid = np.geomspace(lo, hi, 4097)
        w = grid ** size_power * self.density(grid)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(grid))])
        cdf /= cdf[-1]
        return np.interp(rng.random(n), cdf, grid)

    def shell_integrals(self, power, kmax=60):
        """int over dyadic shells [2^(-k-1), 2^(-k)] of l^power pi(dl), k = 0..kmax."""
        g = {1: _G_ELL, 2: _G_ELL2}[power]
        return np.array([self._integrate(g, 2.0 ** (-k - 1), 2.0 ** (-k)) for k in range(kmax + 1)])

    def infinite_variation(self, threshold=1e6, kmax=60):
        shells = self.shell_integrals(1, kmax)
        if np.cumsum(shells).max() > threshold:
            return True
        # Cauchy criterion: shell contributions that stop shrinking never sum to a finite value
        tail = shells[-10:]
        return bool(np.all(tail[1:] >= 0.999 * tail[:-1]) and tail[-1] > 0)

    def describe(self):
        d = {"kind": "tabulated", "n_nodes": len(self.ell)}
        if self.theta:
            d["theta"] = self.theta
        return d


_G_ONE, _G_ELL, _G_ELL2 = ("pow", 0), ("pow", 1), ("pow", 2)


def _integrand(jumps, g):
    kind, par = g
    if kind == "pow":
        return lambda x: x ** par * float(jumps.density(x))
    if kind == "comp":
        return lambda x: float(_compensated(par * x)) * float(jumps.density(x))
    return lambda x: x * float(_one_minus_exp(par * x)) * float(jumps.density(x))


@lru_cache(maxsize=4096)
def _cached_piecewise(jumps, g, nodes):
    f = _integrand(jumps, g)
    total = 0.0
    err = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        v, e = integrate.quad(f, a, b, epsabs=1e-15, epsrel=1e-12, limit=200)
        total += v
        err += e
    if err > max(QUAD_RTOL * abs(total), 1e-13):
        raise QuadratureError("tabulated integral did not converge", err)
    return total


# ---------------------------------------------------------------------------
# mechanisms


@dataclass(frozen=True)
class LevyMechanism:
    """Branching mechanism ``psi`` given by its linear coefficient and jump measure."""

    alpha0: float
    jumps: StableJumps | TabulatedJumps

    @classmethod
    def stable(cls, alpha, alpha0=0.0):
        return cls(alpha0, StableJumps(alpha))

    @classmethod
    def truncated_stable(cls, alpha, ell_max, alpha0=0.0):
        return cls(alpha0, StableJumps(alpha, ell_max=ell_max))

    @classmethod
    def tabulated(cls, ell, density, alpha0=0.0):
        return cls(alpha0, TabulatedJumps(tuple(map(float, ell)), tuple(map(float, density))))

    def psi(self, lam):
        return psi_eval(self, lam)

    def describe(self):
        return {"alpha0": self.alpha0, **self.jumps.describe()}


def psi_eval(mech, lam):
    """Evaluate ``psi(lam)``; closed form ``lam**alpha`` for the pure stable measure."""
    if np.ndim(lam):
        return np.array([psi_eval(mech, float(x)) for x in np.ravel(lam)]).reshape(np.shape(lam))
    lam = float(lam)
    if lam < 0 or math.isnan(lam):
        raise ValueError(f"psi is defined on [0, inf), got {lam}")
    if math.isinf(lam):
        return math.inf
    return _psi_cached(mech, lam)


@lru_cache(maxsize=1 << 16)
def _psi_cached(mech, lam):
    return mech.alpha0 * lam + mech.jumps.compensated(lam)


def psi_prime(mech, lam):
    """Derivative ``alpha0 + int l (1 - exp(-lam l)) pi(dl)``."""
    lam = float(lam)
    if lam < 0:
        raise ValueError("psi' is defined on [0, inf)")
    return mech.alpha0 + mech.jumps.compensated_prime(lam)


def _bracket_inverse(f, lam, rtol=1e-10):
    if lam == 0:
        return 0.0
    hi = max(1.0, lam)
    while f(hi) < lam:
        hi *= 2.0
    tol = rtol * max(1.0, lam)
    root = optimize.brentq(lambda x: f(x) - lam, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    if abs(f(root) - lam) > tol:
        raise QuadratureError("psi inverse missed tolerance", abs(f(root) - lam))
    return root


def psi_inverse(mech, lam):
    """Return ``gamma >= 0`` with ``psi(gamma) = lam`` to relative accuracy 1e-10."""
    lam = float(lam)
    if lam < 0:
        raise ValueError("psi^-1 is defined on [0, inf)")
    if isinstance(mech.jumps, StableJumps) and mech.jumps.is_pure and mech.alpha0 == 0:
        guess = lam ** (1.0 / mech.jumps.alpha)
        if abs(psi_eval(mech, guess) - lam) <= 1e-10 * max(1.0, lam):
            return guess
    return _bracket_inverse(lambda x: psi_eval(mech, x), lam)


def tilt(mech, theta):
    """Mechanism with exponent ``psi(lam + theta) - psi(theta)``.

    The jump measure becomes ``exp(-theta l) pi(dl)`` and the linear
    coefficient gains ``int l (1 - exp(-theta l)) pi(dl)``.
    """
    theta = float(theta)
    if theta < 0:
        raise ValueError("tilt parameter must be non-negative")
    if theta == 0:
        return mech
    extra = mech.jumps.compensated_prime(theta)
    return LevyMechanism(mech.alpha0 + extra, mech.jumps.tilted(theta))


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, name, passed, value):
        self.checks.append({"check": name, "pass": bool(passed), "value": value})

    @property
    def ok(self):
        return all(c["pass"] for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c["check"] == name:
                return c
        raise KeyError(name)


def validate(mech):
    """Check ``alpha0 >= 0``, ``int (l ^ l^2) pi < inf`` and ``int_(0,1) l pi = inf``."""
    rep = ValidationReport()
    rep.add("alpha0_nonnegative", mech.alpha0 >= 0, mech.alpha0)
    j = mech.jumps
    if isinstance(j, StableJumps):
        a = j.alpha
        # int_0^1 l^2 l^(-1-a) = 1/(2-a); int_1^inf l l^(-1-a) = 1/(a-1)
        rep.add("integrability", True, j.const * (1 / (2 - a) + 1 / (a - 1)))
        rep.add("infinite_variation", True, "int_0^1 l^(-a) dl diverges for a > 1")
        return rep
    small = j.shell_integrals(2)
    big = j.tail_mean(1.0)
    conv = np.all(small[-10:][1:] < 0.999 * small[-10:][:-1]) or small[-1] == 0
    rep.add("integrability", bool(conv) and math.isfinite(big), float(small.sum() + big))
    iv = j.infinite_variation()
    rep.add("infinite_variation", iv, float(j.shell_integrals(1).sum()))
    return rep


# ---------------------------------------------------------------------------
# finite-activity truncation


@dataclass(frozen=True)
class TruncatedMechanism:
    """Compound Poisson jumps above ``eps`` plus downward drift ``c``.

    ``X_t = -c t + sum of jumps``; its Laplace exponent is
    ``psi_eps(lam) = alpha0 lam + int_(eps, inf) (exp(-lam l) - 1 + lam l) pi(dl)``.
    """

    mech: LevyMechanism
    epsilon: float
    drift_rate: float
    jump_rate: float

    def sample_jumps(self, rng, n):
        return self.mech.jumps.sample(rng, n, self.epsilon)

    @property
    def mean_jump(self):
        return self.mech.jumps.tail_mean(self.epsilon) / self.jump_rate

    def psi(self, lam):
        if np.ndim(lam):
            return np.array([self.psi(float(x)) for x in np.ravel(lam)]).reshape(np.shape(lam))
        return _psi_eps_cached(self.mech, self.epsilon, float(lam))

    def psi_prime(self, lam):
        return self.mech.alpha0 + self.mech.jumps.compensated_prime(float(lam), self.epsilon)

    def psi_inverse(self, lam):
        return _bracket_inverse(self.psi, float(lam))

    def describe(self):
        return {
            "mechanism": self.mech.describe(),
            "epsilon": self.epsilon,
            "drift_rate": self.drift_rate,
            "jump_rate": self.jump_rate,
        }


@lru_cache(maxsize=1 << 16)
def _psi_eps_cached(mech, eps, lam):
    if lam < 0:
        raise ValueError("psi is defined on [0, inf)")
    if math.isinf(lam):
        return math.inf
    return mech.alpha0 * lam + mech.jumps.compensated(lam, eps)


def truncate(mech, eps):
    """Drop jumps below ``eps``; the compensator of the dropped jumps goes into the drift."""
    eps = float(eps)
    if not eps > 0:
        raise ValueError("truncation level must be positive")
    rate = mech.jumps.tail_mass(eps)
    if not rate > 1e-300:
        raise ValueError(f"empty jump tail above eps={eps}")
    c = mech.alpha0 + mech.jumps.tail_mean(eps)
    return TruncatedMechanism(mech, eps, c, rate)


def truncation_bias(tm, grid):
    """``sup |psi_eps - psi|`` over a grid of lambda values."""
    grid = np.asarray(grid, dtype=float)
    return float(np.max(np.abs(tm.psi(grid) - psi_eval(tm.mech, grid))))


# ---------------------------------------------------------------------------
# config files


def load_mechanism(path):
    """Read a key-value mechanism file.

    ``kind = stable`` with ``alpha`` (and optionally ``alpha0``, ``ell_max``), or ``kind = tabulated`` with ``csv`` pointing at a file of
    ``ell,density`` rows.  An optional ``tilt`` applies :func:`tilt`.  A ``[mechanism]`` section header is optional.
    """
    path = Path(path)
    text = path.read_text()
    if not text.lstrip().startswith("["):
        text = "[mechanism]\n" + text
    cp = configparser.ConfigParser()
    cp.read_string(text)
    sec = cp["mechanism"]
    return mechanism_from_dict(dict(sec), base=path.parent)


def mechanism_from_dict(d, base=Path(".")):
    kind = d.get("kind", "stable").strip()
    alpha0 = float(d.get("alpha0", 0.0))
    if kind in ("stable", "truncated_stable"):
        jumps = StableJumps(float(d["alpha"]), ell_max=float(d.get("ell_max", math.inf)))
        mech = LevyMechanism(alpha0, jumps)
    elif kind == "tabulated":
        csv_path = Path(d["csv"])
        if not csv_path.is_absolute():
            csv_path = Path(base) / csv_path
        ell, dens = [], []
        with open(csv_path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    e, p = float(row[0]), float(row[1])
                except ValueError:
                    continue  # header
                ell.append(e)
                dens.append(p)
        mech = LevyMechanism.tabulated(ell, dens, alpha0)
    else:
        raise ValueError(f"unknown mechanism kind {kind!r}")
    theta = float(d.get("tilt", 0.0))
    return tilt(mech, theta) if theta else mech
