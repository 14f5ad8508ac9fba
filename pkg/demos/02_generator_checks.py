"""
Monte Carlo checks of the generator: resolvent identity, martingales and duality.

Small path counts so the script finishes in about a minute.  Each report
prints estimate, target, z score and the bias budget.
"""
# %%
from levy_exploration import AtomicMeasure, GeneratorFunctional, LevyMechanism, TestFunction
from levy_exploration.generator_lab import duality_test, martingale_test, resolvent_mc

mech = LevyMechanism.stable(1.5)
f = TestFunction.exponential(0.2, 0.3)  # f(x) = 0.2 + 0.3 exp(-x)
mu = AtomicMeasure([1.0], [0.5])

# %% resolvent: lambda E int e^{-lambda t} F(rho_t) dt - F(mu) against its closed form
gf = GeneratorFunctional(f, mech, 1.0)
print(resolvent_mc(gf, mu, 2000, 14.0, seed=1).line())

# %% martingale on a time grid, stopped at the first zero of <rho,1>
gf0 = GeneratorFunctional(f, mech, 0.0)
for rep in martingale_test(gf0, mu, 2000, [0.1, 0.2, 0.4, 0.8], seed=2, stopped=True):
    print(rep.line())

# %% excursion duality between rho and eta
print(duality_test(mech, f, 1.0, 500, 0.3, seed=3).line())
