"""
Event-driven simulation of the truncated Lévy path.

A path is ``X_t = -c t + sum_{s <= t} l_s``: straight downward segments
between jumps.  Every query (``X``, the running infimum ``I``, the future
infimum ``I_t^s``, excursions of ``X - I``, the inverse local time ``tau``)
is answered from the event arrays; there is no time grid anywhere.

Notation used throughout::

    Xm[k] = X_{s_k -}      value just before jump k
    Xp[k] = X_{s_k}        value just after jump k
    Ipre[k] = min(0, Xm[0..k])   running infimum at s_k
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HorizonExhausted",
    "LevyPath",
    "ExcursionInterval",
    "path_rng",
    "simulate_path",
    "infimum_process",
    "future_infimum",
    "excursions",
    "inverse_local_time",
]

_MASK64 = (1 << 64) - 1


class HorizonExhausted(RuntimeError):
    """Raised when a query needs more path than was simulated."""


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def path_rng(seed, index=0):
    """Counter-based generator for path ``index`` of a run seeded by ``seed``.

    The Philox key is a splitmix64 mix of ``(seed, index)``, so every path
    has its own reproducible stream regardless of the order paths are
    simulated in.
    """
    k0 = _splitmix64(int(seed) & _MASK64)
    k1 = _splitmix64(k0 ^ (int(index) & _MASK64))
    return np.random.Generator(np.random.Philox(key=[k0, k1]))


@dataclass(frozen=True)
class ExcursionInterval:
    """Excursion of ``X - I`` away from 0 on ``(alpha, beta)``.

    ``depth`` is ``-I_alpha``, the local time at which the excursion starts.
    ``complete`` is False when the path ends before the excursion does; in
    that case ``beta`` is the horizon.
    """

    alpha: float
    beta: float
    depth: float
    first_jump: int
    last_jump: int  # index of the last jump inside the excursion
    complete: bool = True

    @property
    def length(self):
        return self.beta - self.alpha


@dataclass(eq=False)
class LevyPath:
    """Jumps ``(times[k], sizes[k])`` of a path with drift ``-c`` on ``[0, T]``."""

    times: np.ndarray
    sizes: np.ndarray
    c: float
    T: float
    seed: int | None = None
    stream: int = 0
    epsilon: float | None = None
    stopped: bool = False
    Xm: np.ndarray = field(init=False, repr=False)
    Xp: np.ndarray = field(init=False, repr=False)
    Ipre: np.ndarray = field(init=False, repr=False)
    _table: list | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=float)
        self.sizes = np.ascontiguousarray(self.sizes, dtype=float)
        if self.times.shape != self.sizes.shape:
            raise ValueError("times and sizes differ in length")
        if self.times.size:
            if np.any(np.diff(self.times) <= 0) or self.times[0] <= 0 or self.times[-1] > self.T:
                raise ValueError("jump times must be strictly increasing in (0, T]")
            if np.any(self.sizes <= 0):
                raise ValueError("jump sizes must be positive")
        before = np.concatenate([[0.0], np.cumsum(self.sizes)[:-1]]) if self.sizes.size else np.empty(0)
        self.Xm = before - self.c * self.times
        self.Xp = self.Xm + self.sizes
        self.Ipre = np.minimum.accumulate(np.minimum(self.Xm, 0.0)) if self.sizes.size else np.empty(0)
        for a in (self.times, self.sizes, self.Xm, self.Xp, self.Ipre):
            a.setflags(write=False)

    @property
    def n_jumps(self):
        return self.times.size

    def count(self, t):
        """Number of jumps in ``(0, t]``."""
        return np.searchsorted(self.times, t, side="right")

    def X(self, t):
        t = np.asarray(t, dtype=float)
        n = self.count(t)
        base = np.where(n > 0, self.Xp[np.maximum(n - 1, 0)] if self.n_jumps else 0.0, 0.0)
        start = np.where(n > 0, self.times[np.maximum(n - 1, 0)] if self.n_jumps else 0.0, 0.0)
        out = base - self.c * (t - start)
        return out if out.ndim else float(out)

    def I(self, t):
        """Running infimum ``I_t = inf_{[0,t]} X``."""
        t = np.asarray(t, dtype=float)
        n = self.count(t)
        pre = np.where(n > 0, self.Ipre[np.maximum(n - 1, 0)] if self.n_jumps else 0.0, 0.0)
        out = np.minimum(pre, self.X(t))
        return out if out.ndim else float(out)

    @property
    def X_T(self):
        return float(self.X(self.T))

    @property
    def I_T(self):
        return float(self.I(self.T))

    def to_csv(self, handle=None):
        """Dump ``(s, ell)`` rows; the header lines carry ``c``, ``eps``, ``T`` and the seed."""
        own = handle is None
        handle = io.StringIO() if own else handle
        handle.write(f"# c={self.c!r}\n# eps={self.epsilon!r}\n# T={self.T!r}\n# seed={self.seed!r}\n")
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(["s", "ell"])
        for s, ell in zip(self.times.tolist(), self.sizes.tolist()):
            w.writerow([repr(s), repr(ell)])
        return handle.getvalue() if own else None

    @classmethod
    def from_csv(cls, text):
        meta, rows = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                k, v = line[1:].strip().split("=", 1)
                meta[k] = None if v == "None" else float(v)
            elif line and not line.startswith("s,"):
                s, ell = line.split(",")
                rows.append((float(s), float(ell)))
        times, sizes = (np.array(x) for x in zip(*rows)) if rows else (np.empty(0), np.empty(0))
        seed = meta.get("seed")
        return cls(times, sizes, meta["c"], meta["T"], None if seed is None else int(seed), epsilon=meta.get("eps"))

    # --- range minima over pre-jump values ---------------------------------

    def _sparse(self):
        if self._table is None:
            levels = [np.asarray(self.Xm)]
            span = 1
            while 2 * span <= self.n_jumps:
                prev = levels[-1]
                levels.append(np.minimum(prev[:-span], prev[span:]))
                span *= 2
            self._table = levels
        return self._table

    def range_min_Xm(self, lo, hi):
        """``min Xm[lo:hi]`` (``+inf`` when empty), vectorised over index arrays."""
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        out = np.full(np.broadcast(lo, hi).shape, np.inf)
        ok = hi > lo
        if not np.any(ok) or self.n_jumps == 0:
            return out
        table = self._sparse()
        lo_, hi_ = np.broadcast_to(lo, out.shape)[ok], np.broadcast_to(hi, out.shape)[ok]
        width = hi_ - lo_
        lev = np.floor(np.log2(width)).astype(int)
        lev = np.minimum(lev, len(table) - 1)
        vals = np.empty(lev.size)
        for j in np.unique(lev):
            sel = lev == j
            row = table[j]
            vals[sel] = np.minimum(row[lo_[sel]], row[hi_[sel] - (1 << j)])
        out[ok] = vals
        return out


SIM_BLOCK = 4096


def simulate_path(tm, T, seed, stream=0, stop_level=None, block=SIM_BLOCK):
    """Simulate the truncated path on ``[0, T]``.

    Jump times form a Poisson process of rate ``tm.jump_rate``; sizes are
    i.i.d. from the normalised tail ``pi|(eps, inf)``.  With ``stop_level``
    the path is cut at ``tau = inf{t : X_t < -stop_level}`` when that
    happens before ``T`` (the horizon becomes ``tau``) and ``path.stopped``
    is set.  Random numbers are drawn in fixed blocks, so the path on
    ``[0, T]`` is a prefix of the path simulated with any larger horizon.
    """
    if not T > 0:
        raise ValueError("horizon must be positive")
    rng = path_rng(seed, stream)
    rate, c = tm.jump_rate, tm.drift_rate
    times, sizes = [], []
    t_last, x_last, inf_last = 0.0, 0.0, 0.0
    horizon = T
    while True:
        gaps = rng.exponential(1.0 / rate, block)
        t = t_last + np.cumsum(gaps)
        ell = tm.sample_jumps(rng, block)
        inside = t <= horizon
        if stop_level is not None:
            xm = x_last + np.concatenate([[0.0], np.cumsum(ell)[:-1]]) - c * (t - t_last)
            below = np.flatnonzero(inside & (xm < -stop_level))
            if below.size:
                k = below[0]
                prev_t = t[k - 1] if k else t_last
                prev_x = xm[k - 1] + ell[k - 1] if k else x_last
                horizon = prev_t + (prev_x + stop_level) / c
                inside[k:] = False
        m = int(inside.sum())
        times.append(t[:m])
        sizes.append(ell[:m])
        if m < block:
            break
        x_last = x_last + ell[:m].sum() - c * (t[m - 1] - t_last)
        t_last = t[m - 1]
    if stop_level is not None and horizon == T:
        # the cut may also fall in the final drift segment
        n = sum(a.size for a in times)
        tt = np.concatenate(times) if n else np.empty(0)
        ll = np.concatenate(sizes) if n else np.empty(0)
        x_end = (ll.sum() if n else 0.0) - c * T
        if x_end < -stop_level:
            t0 = tt[-1] if n else 0.0
            x0 = (ll.sum() - c * tt[-1]) if n else 0.0
            horizon = t0 + (x0 + stop_level) / c
        return LevyPath(tt, ll, c, horizon, seed, stream, tm.epsilon, stopped=horizon < T)
    tt = np.concatenate(times)
    ll = np.concatenate(sizes)
    return LevyPath(tt, ll, c, horizon, seed, stream, tm.epsilon, stopped=stop_level is not None)


def infimum_process(path):
    """Callable ``t -> I_t``; the running minima are precomputed on the path."""
    return path.I


def future_infimum(path, s, t):
    """``I_t^s = inf_{[s,t]} X``; vectorised over ``s`` and ``t``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s > t):
        raise ValueError("future infimum needs s <= t")
    if np.any(s < 0) or np.any(t > path.T * (1 + 1e-15)):
        raise HorizonExhausted("query outside [0, T]")
    lo, hi = path.count(s), path.count(t)
    inner = path.range_min_Xm(lo, hi)
    out = np.minimum(np.minimum(path.X(s), path.X(t)), inner)
    return out if out.ndim else float(out)


def excursions(path):
    """Excursion intervals of ``X - I`` away from 0, in time order.

    An excursion starts at a jump taken from the running infimum and ends
    when the path comes back down to the pre-jump level.  The last one is
    marked incomplete if it is still running at ``T``.
    """
    n = path.n_jumps
    if n == 0:
        return []
    prev_inf = np.concatenate([[0.0], path.Ipre[:-1]])
    starts = np.flatnonzero(path.Xm <= prev_inf)
    out = []
    ends = np.append(starts[1:], n)
    for k, nxt in zip(starts.tolist(), ends.tolist()):
        level = path.Xm[k]
        last = nxt - 1
        beta = path.times[last] + (path.Xp[last] - level) / path.c
        complete = beta <= path.T
        out.append(ExcursionInterval(float(path.times[k]), float(min(beta, path.T)), float(-level), k, last, bool(complete)))
    return out


def inverse_local_time(path, r):
    """``tau_r = inf{t : -I_t > r}``, vectorised over ``r``.

    Raises :class:`HorizonExhausted` when ``r >= -I_T``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("local time must be non-negative")
    if np.any(r >= -path.I_T):
        raise HorizonExhausted("r >= -I_T: extend the horizon")
    j = np.searchsorted(-path.Ipre, r, side="right")  # first segment ending below -r
    has_prev = j > 0
    jj = np.maximum(j - 1, 0)
    t0 = np.where(has_prev, path.times[jj] if path.n_jumps else 0.0, 0.0)
    x0 = np.where(has_prev, path.Xp[jj] if path.n_jumps else 0.0, 0.0)
    out = t0 + (x0 + r) / path.c
    return out if out.ndim else float(out)
