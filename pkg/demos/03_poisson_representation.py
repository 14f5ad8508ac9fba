"""
The Poisson representation of the excursion measure.

Draw the marked point measure, compare sampler moments with Campbell's
formula, then put excursion averages next to the Poisson side.
"""
# %%
from levy_exploration import LevyMechanism, TestFunction, truncate
from levy_exploration.poisson_rep import (
    MarkedPoissonConfig,
    campbell_check,
    continuous_closed_form,
    lattice_closed_form,
    representation_test,
    sample_pair,
)

mech = LevyMechanism.stable(1.5)
f = TestFunction.exponential(0.2, 0.3)

# %% one draw of (mu_a, nu_a)
cfg = MarkedPoissonConfig(1.0, mech, delta=1e-3, seed=4)
mu, nu = sample_pair(cfg)
print(f"{len(mu)} marks, <mu,1>={mu.total_mass:.4f}, <nu,1>={nu.total_mass:.4f}")

# %% Campbell on a truncated stable measure (finite second moment)
for rep in campbell_check(MarkedPoissonConfig(1.0, LevyMechanism.truncated_stable(1.5, 10.0), 1e-3, 1), 20_000):
    print(rep.line())

# %% closed forms: lattice (truncated process) against continuous
for eps in (1e-2, 1e-3, 1e-4):
    print(f"eps={eps:g}: lattice {lattice_closed_form(truncate(mech, eps), f, 0.5, 2.0):.6f}")
print(f"continuous: {continuous_closed_form(mech, f, 0.5, 2.0):.6f}")

# %% both sides by simulation
rep = representation_test(mech, f, 0.5, 2.0, 0.3, 300, seed=3, n_per_node=500)
print(rep.line())
print({k: rep.params[k] for k in ("lhs", "rhs", "lattice_closed_form", "continuous_closed_form")})
