"""
Compiled stack sweep used by the Monte Carlo estimators.

Between two consecutive "stack events" (a jump, a frame running empty,
the horizon) the height is constant, ``<rho_t, f>`` is affine in ``t``
with slope ``-c f(H)`` and ``<eta_t, 1>`` is affine with slope ``c`` (or 0
while the initial measure is being eaten).  The sweep returns one row per
such piece, so any time integral of ``exp(-lam t - <rho_t,f> - g <eta_t,1>)
k(H_t)`` is a sum of closed-form exponential integrals.

This is a second, independent implementation of the stack in
:mod:`levy_exploration.exploration`; the two are cross-checked in tests.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy.special import exprel

__all__ = ["Pieces", "sweep", "exp_integral"]


class Pieces(NamedTuple):
    t0: np.ndarray
    t1: np.ndarray
    h: np.ndarray  # height H on the piece (absolute)
    A0: np.ndarray  # <rho, f> at t0
    fh: np.ndarray  # f(H); <rho,f> decreases at rate c*fh
    E0: np.ndarray  # <eta, 1> at t0
    econs: np.ndarray  # 1.0 when a jump frame is being consumed (eta grows at rate c)
    empty: np.ndarray  # True when rho = 0 on the piece
    alpha: np.ndarray  # start time of the current excursion, -1 outside excursions
    c: float

    @property
    def dt(self):
        return self.t1 - self.t0

    @property
    def rho_rate(self):
        """Slope of ``<rho_t, f>``."""
        return np.where(self.empty, 0.0, -self.c * self.fh)


@njit(cache=True)
def _f(h, c0, c1, k):
    if math.isinf(h):
        return c0 if k > 0 else c0 + c1
    return c0 + c1 * math.exp(-k * h)


@njit(cache=True)
def _sweep(times, sizes, c, T, mu_h, mu_m, c0, c1, k):
    n = times.size
    m0 = mu_h.size
    cap = n + m0 + 1
    base = np.empty(cap)
    gen = np.empty(cap, dtype=np.int64)
    rem = np.empty(cap)
    orig = np.empty(cap)
    init = np.empty(cap, dtype=np.bool_)
    npc = 2 * n + m0 + 2
    t0 = np.empty(npc)
    t1 = np.empty(npc)
    hh = np.empty(npc)
    A0 = np.empty(npc)
    fh = np.empty(npc)
    E0 = np.empty(npc)
    ec = np.empty(npc)
    em = np.empty(npc, dtype=np.bool_)
    al = np.empty(npc)

    top = -1
    A = 0.0
    for i in range(m0):
        top += 1
        base[top] = mu_h[i]
        gen[top] = 0
        rem[top] = mu_m[i]
        orig[top] = mu_m[i]
        init[top] = True
        A += mu_m[i] * _f(mu_h[i], c0, c1, k)
    E = 0.0
    alpha = -1.0
    p = 0
    t = 0.0
    for j in range(n + 1):
        t_end = times[j] if j < n else T
        # drift until t_end, one piece per top frame
        while t < t_end:
            if top < 0:
                t0[p] = t
                t1[p] = t_end
                hh[p] = 0.0
                A0[p] = 0.0
                fh[p] = 0.0
                E0[p] = 0.0
                ec[p] = 0.0
                em[p] = True
                al[p] = -1.0
                p += 1
                t = t_end
                A = 0.0
                break
            h = base[top] + gen[top] / c
            fv = _f(h, c0, c1, k)
            consuming = 0.0 if init[top] else 1.0
            t0[p] = t
            hh[p] = h
            A0[p] = A
            fh[p] = fv
            E0[p] = E
            ec[p] = consuming
            em[p] = False
            al[p] = alpha
            need = rem[top] / c
            if t + need > t_end:
                d = t_end - t
                rem[top] -= c * d
                A -= c * d * fv
                E += consuming * c * d
                t1[p] = t_end
                t = t_end
                p += 1
                break
            t1[p] = t + need
            p += 1
            A -= rem[top] * fv
            if not init[top]:
                E += rem[top] - orig[top]
            t = t + need
            top -= 1
            if top < 0 or init[top]:
                alpha = -1.0
                E = 0.0
            if top < 0:
                A = 0.0
        if j == n:
            break
        ell = sizes[j]
        if top < 0 or init[top]:
            alpha = times[j]
            E = 0.0
        if top >= 0:
            b, g = base[top], gen[top] + 1
        else:
            b, g = 0.0, 1
        top += 1
        base[top] = b
        gen[top] = g
        rem[top] = ell
        orig[top] = ell
        init[top] = False
        A += ell * _f(b + g / c, c0, c1, k)
    return t0[:p], t1[:p], hh[:p], A0[:p], fh[:p], E0[:p], ec[:p], em[:p], al[:p]


def sweep(path, mu=None, f_params=(0.0, 0.0, 0.0)):
    """Piece decomposition of ``path`` started from ``mu`` for ``f = c0 + c1 exp(-k x)``."""
    if mu is None or mu.is_zero:
        mu_h, mu_m = np.empty(0), np.empty(0)
    else:
        mu_h, mu_m = np.asarray(mu.heights, dtype=float), np.asarray(mu.masses, dtype=float)
    c0, c1, k = (float(x) for x in f_params)
    out = _sweep(path.times, path.sizes, float(path.c), float(path.T), mu_h, mu_m, c0, c1, k)
    return Pieces(*out, c=float(path.c))


def exp_integral(pieces, lam=0.0, gamma=0.0, t_ref=0.0, upto=None):
    """Per-piece ``int exp(-lam (t - t_ref) - <rho_t,f> - gamma <eta_t,1>) dt``.

    ``t_ref`` may be an array (one origin per piece); ``upto`` clips every
    piece at that time.
    """
    t0 = pieces.t0
    t1 = pieces.t1 if upto is None else np.minimum(pieces.t1, upto)
    d = np.maximum(t1 - t0, 0.0)
    slope_A = pieces.rho_rate
    slope_E = pieces.c * pieces.econs
    r = -lam - slope_A - gamma * slope_E
    start = -lam * (t0 - t_ref) - pieces.A0 - gamma * pieces.E0
    return np.exp(start) * d * exprel(r * d)
