"""
The exploration process of a simulated path.

The stack algorithm
-------------------
Read the path forward in time.  A jump of size ``l`` pushes a frame of
mass ``l``; a drift segment of length ``d`` removes mass ``c d`` from the
top of the stack, popping frames that run empty and, once the frames of
the current excursion are gone, eating into the initial measure ``mu``.
The remaining masses are the atoms ``I_t^s - X_{s-}`` of ``rho_t`` and the
consumed masses ``X_s - I_t^s`` are the atoms of the dual ``eta_t``.

Heights
-------
A frame is born one generation above the frame it lands on: its height is
``H^{rho_{s-}} + 1/c`` (``1/c`` when the stack is empty).  So ``H_t`` is
``H^{k_{-I_t} mu}`` plus ``1/c`` times the number of open jumps

    #{s <= t : X_{s-} < I_t^s},

which :func:`ladder_height` computes straight from the path.  With this
lattice the occupation measure of ``rho`` per unit height is exactly
``exp(-alpha0 a)``, as for the untruncated process.

Storage
-------
Frames live in a persistent (parent-pointer) stack, so the state after an
event is just ``(top node, mass left in it)``.  A query at time ``t``
starts from the last event snapshot and replays one drift segment.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .measure import AtomicMeasure, erase, partial_height
from .path_sim import HorizonExhausted, excursions

__all__ = [
    "ExplorationError",
    "ExplorationTrajectory",
    "ExcursionView",
    "explore",
    "ladder_height",
    "dual_eta",
    "excursion_decomposition",
    "MASS_TOL",
]

MASS_TOL = 1e-9


class ExplorationError(RuntimeError):
    """Mass bookkeeping went wrong beyond :data:`MASS_TOL`."""


class _Neumaier:
    __slots__ = ("s", "comp")

    def __init__(self, s=0.0):
        self.s, self.comp = float(s), 0.0

    def add(self, x):
        t = self.s + x
        if abs(self.s) >= abs(x):
            self.comp += (self.s - t) + x
        else:
            self.comp += (x - t) + self.s
        self.s = t

    @property
    def value(self):
        return self.s + self.comp


class ExplorationTrajectory:
    """``(rho_t, eta_t, H_t)`` along one path, queryable at any ``t`` in ``[0, T]``."""

    def __init__(self, path, initial, nodes, snap_top, snap_rem, snap_mass, init_state):
        self.path = path
        self.initial = initial
        (self._base, self._gen, self._mass, self._parent, self._orig, self._init, self._depth) = nodes
        self._snap_top = snap_top
        self._snap_rem = snap_rem
        self.event_mass = snap_mass
        self._init_state = init_state

    # --- state reconstruction ---------------------------------------------

    def _consume(self, amount, top, rem):
        parent, mass = self._parent, self._mass
        while amount > 0 and top >= 0:
            if rem > amount:
                return top, rem - amount
            amount -= rem
            top = parent[top]
            rem = mass[top] if top >= 0 else 0.0
        return top, rem

    def state(self, t, left=False):
        """``(top node, remaining mass of top)`` at ``t`` (or at ``t-``)."""
        p = self.path
        if t < 0 or t > p.T * (1 + 1e-15):
            raise HorizonExhausted(f"t={t} outside [0, {p.T}]")
        k = int(np.searchsorted(p.times, t, side="left" if left else "right")) - 1
        if k < 0:
            top, rem = self._init_state
            return self._consume(p.c * t, top, rem)
        return self._consume(p.c * (t - p.times[k]), int(self._snap_top[k]), float(self._snap_rem[k]))

    def _height_of(self, node):
        return 0.0 if node < 0 else self._base[node] + self._gen[node] / self.path.c

    def _chain(self, t, left=False):
        top, rem = self.state(t, left)
        node, m = top, rem
        while node >= 0:
            yield node, m
            node = self._parent[node]
            m = self._mass[node] if node >= 0 else 0.0

    def rho(self, t, left=False):
        """``rho_t = [k_{-I_t} mu, rho^0_t]``."""
        atoms = [(self._height_of(n), m) for n, m in self._chain(t, left)]
        return AtomicMeasure.from_atoms(atoms)

    def rho0(self, t, relative=False, left=False):
        """The part of ``rho_t`` built from jumps; ``relative`` drops the shift by ``H^{k_{-I_t} mu}``."""
        atoms = [
            (self._gen[n] / self.path.c if relative else self._height_of(n), m)
            for n, m in self._chain(t, left)
            if not self._init[n]
        ]
        return AtomicMeasure.from_atoms(atoms)

    def eta(self, t, relative=False):
        """Dual measure: the consumed part ``orig - rem`` of every open frame."""
        atoms = [
            (self._gen[n] / self.path.c if relative else self._height_of(n), self._orig[n] - m)
            for n, m in self._chain(t)
            if not self._init[n]
        ]
        return AtomicMeasure.from_atoms(atoms)

    def H(self, t):
        top, _ = self.state(t)
        return self._height_of(top)

    def n_atoms(self, t):
        top, _ = self.state(t)
        return 0 if top < 0 else int(self._depth[top])

    # --- event-time views --------------------------------------------------

    @property
    def event_heights(self):
        top = self._snap_top
        base = np.asarray(self._base)[top]
        gen = np.asarray(self._gen)[top]
        return base + gen / self.path.c

    @property
    def event_n_atoms(self):
        return np.asarray(self._depth)[self._snap_top]

    def summary_csv(self):
        """Rows ``(t, total_mass, H, n_atoms)`` at every event time."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "total_mass", "H", "n_atoms"])
        for row in zip(
            self.path.times.tolist(),
            np.asarray(self.event_mass).tolist(),
            self.event_heights.tolist(),
            self.event_n_atoms.tolist(),
        ):
            w.writerow([repr(row[0]), repr(row[1]), repr(row[2]), row[3]])
        return buf.getvalue()

    def snapshot_json(self, t):
        rho, eta = self.rho(t), self.eta(t)
        return json.dumps(
            {
                "t": t,
                "H": self.H(t) if math.isfinite(self.H(t)) else "inf",
                "rho": json.loads(rho.to_json()),
                "eta": json.loads(eta.to_json()),
            }
        )


def explore(path, mu0=None, check=True):
    """Run the stack algorithm on ``path`` started from ``mu0``.

    Raises :class:`ExplorationError` if the total mass drifts from
    ``(<mu,1> + I_t)_+ + X_t - I_t`` by more than :data:`MASS_TOL` at an
    event time.
    """
    mu0 = AtomicMeasure() if mu0 is None else mu0
    c = path.c
    base, gen, mass, parent, orig, init, depth = [], [], [], [], [], [], []

    def new(b, g, m, par, o, ini):
        base.append(b)
        gen.append(g)
        mass.append(m)
        parent.append(par)
        orig.append(o)
        init.append(ini)
        depth.append(1 + (depth[par] if par >= 0 else 0))
        return len(base) - 1

    top = -1
    for h, m in mu0:
        top = new(h, 0, m, top, m, True)
    rem = mass[top] if top >= 0 else 0.0
    init_state = (top, rem)
    mu_mass = mu0.total_mass

    n = path.n_jumps
    snap_top = np.empty(n, dtype=np.int64)
    snap_rem = np.empty(n)
    snap_mass = np.empty(n)
    total = _Neumaier(mu_mass)
    t_prev = 0.0
    times, sizes, Xp, Ipre = path.times, path.sizes, path.Xp, path.Ipre

    for k in range(n):
        s, ell = float(times[k]), float(sizes[k])
        amount = c * (s - t_prev)
        eaten = 0.0
        while amount > 0 and top >= 0:
            if rem > amount:
                rem -= amount
                eaten += amount
                amount = 0.0
                break
            amount -= rem
            eaten += rem
            top = parent[top]
            rem = mass[top] if top >= 0 else 0.0
        total.add(-eaten)
        if top >= 0 and rem < mass[top]:
            top = new(base[top], gen[top], rem, parent[top], orig[top], init[top])
        if top >= 0:
            top = new(base[top], gen[top] + 1, ell, top, ell, False)
        else:
            top = new(0.0, 1, ell, -1, ell, False)
        rem = ell
        total.add(ell)
        t_prev = s
        snap_top[k], snap_rem[k] = top, rem
        snap_mass[k] = total.value
        if check:
            want = max(mu_mass + Ipre[k], 0.0) + (Xp[k] - Ipre[k])
            if abs(total.value - want) > MASS_TOL:
                raise ExplorationError(f"mass drift {total.value - want:.3e} at event {k}")

    nodes = (
        np.asarray(base, dtype=float),
        np.asarray(gen, dtype=np.int64),
        np.asarray(mass, dtype=float),
        np.asarray(parent, dtype=np.int64),
        np.asarray(orig, dtype=float),
        np.asarray(init, dtype=bool),
        np.asarray(depth, dtype=np.int64),
    )
    # plain lists are faster for the scalar walks in queries
    nodes = tuple(a.tolist() for a in nodes)
    return ExplorationTrajectory(path, mu0, nodes, snap_top, snap_rem, snap_mass, init_state)


def ladder_height(path, t, mu0=None):
    """``H^{k_{-I_t} mu} + (1/c) #{jumps s <= t : X_{s-} < I_t^s}``.

    Computed from the event list alone, without any stack.
    """
    mu0 = AtomicMeasure() if mu0 is None else mu0
    n = int(path.count(t))
    xt = path.X(t)
    if n:
        later = np.minimum.accumulate(np.append(path.Xm[1:n], xt)[::-1])[::-1]
        n_open = int(np.count_nonzero(path.Xm[:n] < later))
    else:
        n_open = 0
    I_t = path.I(t)
    under = partial_height(mu0, -I_t) if mu0.total_mass > 0 else 0.0
    return under + n_open / path.c


def dual_eta(trajectory, t):
    return trajectory.eta(t)


@dataclass(frozen=True)
class ExcursionView:
    """One excursion ``rho^i_t = rho^0_{(alpha_i + t) ^ beta_i}`` with heights relative to its base."""

    trajectory: ExplorationTrajectory
    alpha: float
    beta: float
    depth: float
    complete: bool

    def rho(self, t):
        return self.trajectory.rho0(min(self.alpha + t, self.beta), relative=True)

    def eta(self, t):
        return self.trajectory.eta(min(self.alpha + t, self.beta), relative=True)

    @property
    def length(self):
        return self.beta - self.alpha


def excursion_decomposition(trajectory, tol=MASS_TOL):
    """Split a trajectory into its excursions above the erased initial measure.

    Checks ``rho_{alpha_i -} = k_{-I_{alpha_i}} mu`` for every excursion.
    """
    out = []
    mu = trajectory.initial
    for ex in excursions(trajectory.path):
        before = trajectory.rho(ex.alpha, left=True)
        want = erase(mu, ex.depth)
        if not before.allclose(want, atol=tol):
            raise ExplorationError(f"state at excursion start {ex.alpha} is not k_r mu")
        out.append((ex.depth, ExcursionView(trajectory, ex.alpha, ex.beta, ex.depth, ex.complete)))
    return out
