"""
Finite atomic measures on E = [0, inf].

Everything the exploration process needs lives here: the height ``H^mu``,
the erasure ``k_a mu`` (remove mass ``a`` from the top down), the
concatenation ``[mu, nu]`` (stack ``nu`` on top of ``mu``), the partial
heights ``H^mu_r = H^(k_r mu)`` and the weak-convergence distance ``D``.

An atomic measure is a piecewise-constant object in ``r`` once it is
read from the top: ``r -> H^mu_r`` is a non-increasing step function whose
steps are the atom masses.  All integrals in ``r`` below are therefore
finite sums.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "AtomicMeasure",
    "TestFunction",
    "WeightFunction",
    "height",
    "erase",
    "concat",
    "partial_height",
    "height_profile",
    "integrate",
    "occupation_integral",
    "distance",
]


class AtomicMeasure:
    """Finite sum of point masses at heights in [0, inf].

    Heights are kept sorted and unique (equal heights are merged, no
    tolerance); non-positive masses are dropped, so the zero measure has
    a single representation.
    """

    __slots__ = ("heights", "masses")

    def __init__(self, heights=(), masses=()):
        h = np.asarray(heights, dtype=float).ravel()
        m = np.asarray(masses, dtype=float).ravel()
        if h.shape != m.shape:
            raise ValueError("heights and masses differ in length")
        if np.any(np.isnan(h)) or np.any(h < 0):
            raise ValueError("heights must lie in [0, inf]")
        if np.any(~np.isfinite(m)):
            raise ValueError("masses must be finite")
        keep = m > 0
        h, m = h[keep], m[keep]
        if h.size:
            order = np.argsort(h, kind="stable")
            h, m = h[order], m[order]
            if np.any(h[1:] == h[:-1]):
                h, inv = np.unique(h, return_inverse=True)
                m = np.bincount(inv, weights=m)
        h.setflags(write=False)
        m.setflags(write=False)
        self.heights = h
        self.masses = m

    @classmethod
    def from_atoms(cls, atoms):
        atoms = list(atoms)
        if not atoms:
            return cls()
        h, m = zip(*atoms)
        return cls(h, m)

    @classmethod
    def zero(cls):
        return cls()

    @property
    def total_mass(self):
        return float(self.masses.sum())

    @property
    def height(self):
        return float(self.heights[-1]) if self.heights.size else 0.0

    @property
    def is_zero(self):
        return self.heights.size == 0

    def __len__(self):
        return self.heights.size

    def __iter__(self):
        return iter(zip(self.heights.tolist(), self.masses.tolist()))

    def __eq__(self, other):
        if not isinstance(other, AtomicMeasure):
            return NotImplemented
        return np.array_equal(self.heights, other.heights) and np.array_equal(self.masses, other.masses)

    def __hash__(self):
        return hash((self.heights.tobytes(), self.masses.tobytes()))

    def __repr__(self):
        atoms = ", ".join(f"({h:g}, {m:g})" for h, m in self)
        return f"AtomicMeasure([{atoms}])"

    def allclose(self, other, atol=1e-12):
        return (
            self.heights.shape == other.heights.shape
            and np.array_equal(np.isinf(self.heights), np.isinf(other.heights))
            and np.allclose(self.heights, other.heights, rtol=0, atol=atol, equal_nan=False)
            and np.allclose(self.masses, other.masses, rtol=0, atol=atol)
        )

    def to_json(self):
        return json.dumps([{"h": "inf" if math.isinf(h) else h, "m": m} for h, m in self])

    @classmethod
    def from_json(cls, text):
        rows = json.loads(text)
        return cls([math.inf if r["h"] == "inf" else float(r["h"]) for r in rows], [r["m"] for r in rows])

    def shifted(self, by):
        """Heights moved up by ``by`` (with x + inf = inf)."""
        return AtomicMeasure(self.heights + by, self.masses)

    def scaled(self, factor):
        return AtomicMeasure(self.heights, self.masses * factor)

    def __add__(self, other):
        return AtomicMeasure(
            np.concatenate([self.heights, other.heights]),
            np.concatenate([self.masses, other.masses]),
        )


@dataclass(frozen=True)
class TestFunction:
    """Bounded C^1 function on [0, inf) with its derivative and limit at infinity.

    ``f'(inf)`` is taken to be 0.
    """

    __test__ = False  # not a pytest class

    f: Callable
    df: Callable
    f_inf: float
    params: tuple | None = None  # (c0, c1, k) when f = c0 + c1 exp(-k x)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        fin = np.isfinite(x)
        out = np.full(x.shape, self.f_inf, dtype=float)
        if np.any(fin):
            out[fin] = self.f(x[fin])
        return out if out.ndim else float(out)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        fin = np.isfinite(x)
        out = np.zeros(x.shape, dtype=float)
        if np.any(fin):
            out[fin] = self.df(x[fin])
        return out if out.ndim else float(out)

    @classmethod
    def exponential(cls, c0, c1, k=1.0):
        """``f(x) = c0 + c1 exp(-k x)``."""
        c0, c1, k = float(c0), float(c1), float(k)
        return cls(
            lambda x: c0 + c1 * np.exp(-k * x),
            lambda x: -k * c1 * np.exp(-k * x),
            c0 if k > 0 else c0 + c1,
            (c0, c1, k),
        )

    @classmethod
    def constant(cls, kappa):
        return cls.exponential(kappa, 0.0, 0.0)

    @property
    def sup(self):
        if self.params is not None:
            c0, c1, k = self.params
            return max(c0, c0 + c1) if k > 0 else c0 + c1
        grid = np.concatenate([np.linspace(0, 10, 2001), np.geomspace(10, 1e6, 500)])
        return float(max(np.max(self(grid)), self.f_inf))

    @property
    def sup_deriv(self):
        if self.params is not None:
            c0, c1, k = self.params
            return abs(k * c1)
        grid = np.concatenate([np.linspace(0, 10, 2001), np.geomspace(10, 1e6, 500)])
        return float(np.max(np.abs(self.deriv(grid))))


@dataclass(frozen=True)
class WeightFunction:
    """Increasing C^1 weight ``G`` with ``G(0) = 0`` and limit ``G(inf) <= 1``."""

    g: Callable = None
    g_inf: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        fin = np.isfinite(x)
        out = np.full(x.shape, self.g_inf, dtype=float)
        fn = self.g if self.g is not None else (lambda t: -np.expm1(-t))
        if np.any(fin):
            out[fin] = fn(x[fin])
        return out if out.ndim else float(out)


DEFAULT_G = WeightFunction()


def height(mu):
    """Top of the support; 0 for the zero measure."""
    return mu.height


def erase(mu, a):
    """``k_a mu``: remove mass ``a`` from the top of ``mu`` downward."""
    if a < 0:
        raise ValueError("erasure amount must be non-negative")
    if a == 0 or mu.is_zero:
        return mu
    if a >= mu.total_mass:
        return AtomicMeasure()
    m = mu.masses[::-1]
    above = np.concatenate([[0.0], np.cumsum(m)[:-1]])  # mass strictly above each atom
    left = np.minimum(m, np.maximum(m - (a - above), 0.0))
    keep = left > 0
    h = mu.heights[::-1][keep][::-1]
    return AtomicMeasure(h, left[keep][::-1])


def concat(mu, nu):
    """``[mu, nu]``: ``nu`` shifted by ``H^mu`` and stacked on ``mu``."""
    if nu.is_zero:
        return mu
    if mu.is_zero:
        return nu
    return mu + nu.shifted(mu.height)


def height_profile(mu):
    """Step representation of ``r -> H^mu_r``.

    Returns ``(breaks, values)`` with ``H^mu_r = values[j]`` for
    ``breaks[j] <= r < breaks[j + 1]``; the last value is 0 on
    ``[<mu,1>, inf)``.
    """
    m = mu.masses[::-1]
    breaks = np.concatenate([[0.0], np.cumsum(m)])
    values = np.concatenate([mu.heights[::-1], [0.0]])
    return breaks, values


def partial_height(mu, r):
    """``H^mu_r``: the height after erasing mass ``r`` (right-continuous in r)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be non-negative")
    breaks, values = height_profile(mu)
    idx = np.searchsorted(breaks, r, side="right") - 1
    out = values[np.minimum(idx, values.size - 1)]
    return out if out.ndim else float(out)


def integrate(mu, f):
    """``<mu, f>``, using ``f(inf)`` for an atom at infinity."""
    if mu.is_zero:
        return 0.0
    return float(np.dot(mu.masses, np.asarray(f(mu.heights), dtype=float)))


def occupation_integral(mu, h, upper=None):
    """``int_0^upper h(H^mu_r) dr`` computed from the step profile."""
    breaks, values = height_profile(mu)
    upper = breaks[-1] if upper is None else upper
    edges = np.minimum(np.append(breaks, max(upper, breaks[-1])), upper)
    lengths = np.diff(edges)
    hv = np.asarray(h(values), dtype=float)
    return float(np.dot(lengths, hv))


def distance(mu, nu, G=DEFAULT_G):
    """``D(mu, nu) = |<mu,1> - <nu,1>| + int_0^inf |G(H^mu_r) - G(H^nu_r)| dr``."""
    bm, vm = height_profile(mu)
    bn, vn = height_profile(nu)
    edges = np.union1d(bm, bn)
    mids_left = edges[:-1]
    gm = G(vm[np.searchsorted(bm, mids_left, side="right") - 1])
    gn = G(vn[np.searchsorted(bn, mids_left, side="right") - 1])
    integral = float(np.dot(np.diff(edges), np.abs(gm - gn)))
    return abs(mu.total_mass - nu.total_mass) + integral
