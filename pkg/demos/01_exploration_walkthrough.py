"""
Walk through one truncated path and the measure-valued exploration built on it.

Run with ``python3 demos/01_exploration_walkthrough.py``.
"""
# %%
import numpy as np

from levy_exploration import AtomicMeasure, LevyMechanism, explore, simulate_path, truncate
from levy_exploration.exploration import excursion_decomposition, ladder_height
from levy_exploration.path_sim import excursions

mech = LevyMechanism.stable(1.5)
tm = truncate(mech, 1e-2)
print(f"drift c = {tm.drift_rate:.3f}, jump rate = {tm.jump_rate:.1f}")

# %% a path on [0, 2]
p = simulate_path(tm, 2.0, seed=1)
print(f"{p.n_jumps} jumps, X_T = {p.X_T:.4f}, I_T = {p.I_T:.4f}")

# %% the exploration with an initial measure
mu = AtomicMeasure([0.5, 1.0], [0.05, 0.1])
tr = explore(p, mu)
for t in np.linspace(0, 2, 9):
    rho = tr.rho(t)
    # heights sit on the lattice k/c and agree with the ladder count
    print(f"t={t:4.2f}  <rho,1>={rho.total_mass:.4f}  H={tr.H(t):.4f}  ladder={ladder_height(p, t, mu):.4f}  atoms={len(rho)}")

# %% mass identity: <rho_t,1> = (<mu,1> + I_t)^+ + X_t - I_t
t = 1.3
print("mass:", tr.rho(t).total_mass, max(mu.total_mass + p.I(t), 0) + p.X(t) - p.I(t))

# %% excursions above the running infimum
ex = excursions(p)
print(f"{len(ex)} excursions, longest {max(e.length for e in ex):.4f}")
for depth, view in excursion_decomposition(tr)[:3]:
    print(f"depth {depth:.4f}: length {view.length:.4f}")
