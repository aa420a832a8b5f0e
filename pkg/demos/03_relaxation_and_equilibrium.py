# %% [markdown]
# # Relaxation to a critical point
#
# With the flow switched off the order parameter follows a pure gradient
# flow. The run is then checked against the equilibrium criteria: vanishing
# molecular field, settled snapshots and an energy at its limit. The decay
# of E(t) - E_inf is classified as exponential or algebraic.

# %%
import numpy as np

from qtensorflow import PotentialParams, SimState, StepperConfig, make_grid, run
from qtensorflow.equilibrium import critical_point_residual, lojasiewicz_fit, omega_limit_check
from qtensorflow.rng import random_qtensor_field

grid = make_grid((32, 32))
params = PotentialParams(a=-1.0, b=0.0, c=1.0, epsilon=0.1)
snaps = []
final, ledger = run(
    SimState.initial(grid, random_qtensor_field(grid, seed=1, max_norm=1.0)),
    StepperConfig(dt=0.01, params=params, flow=False),
    t_end=40.0,
    callbacks=[lambda s: snaps.append(s.Q.copy())],
    every=100,
)

# %%
report = omega_limit_check(grid, ledger, snaps, final.u, params)
print("converged:", report.converged, report.criteria)
print(f"critical residual {report.critical_residual:.2e}, E_inf {report.e_infinity:.10f}")
print("decay class:", report.theta_fit)

# %% [markdown]
# The end state sits on the nematic branch: |Q|^2 = -a/c pointwise.

# %%
print("range of |Q|^2:", np.ptp(np.einsum("...ij,...ij->...", final.Q, final.Q)))
print("residual recomputed:", critical_point_residual(grid, final.Q, params))

# %% [markdown]
# ## The decay fit on constructed data

# %%
t = np.linspace(0, 10, 201)
print(lojasiewicz_fit(t, 2.0 + np.exp(-t), 2.0))
print(lojasiewicz_fit(t, 2.0 + 1.0 / (1.0 + t), 2.0))
