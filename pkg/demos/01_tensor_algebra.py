# %% [markdown]
# # Order-parameter algebra
#
# A nematic state at a point is a symmetric traceless 3x3 matrix Q.
# This walk-through builds a few of them and checks the identity that makes
# the coupled energy law close: the elastic stress sigma(H, Q) does exactly
# as much work on the flow as the stretching term S(grad u, Q) takes from Q.

# %%
import numpy as np

from qtensorflow import algebra as al
from qtensorflow.energy import compute_mu

Q_uni = al.uniaxial(1.0, [0.0, 0.0, 1.0])
Q_bi = al.biaxial(1.0, 0.4, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
print("uniaxial eigenvalues:", np.linalg.eigvalsh(Q_uni))
print("biaxial eigenvalues: ", np.linalg.eigvalsh(Q_bi))

# %% [markdown]
# The same tensor arises as the deviation of a second moment from isotropy.

# %%
Q_moment = al.second_moment_deviation([[0, 0, 1.0], [0, 0, -1.0]], [0.5, 0.5])
print("all mass on +-e3 equals uniaxial(1, e3):", np.allclose(Q_moment, Q_uni))

# %% [markdown]
# ## Bulk potential and its shift
#
# The quartic potential is not bounded below by a multiple of |Q|^4 without a
# constant shift mu. `compute_mu` finds the smallest one from a scalar bound.

# %%
for a, b, c in [(1, 0, 1), (-1, 0, 1), (-0.5, 1.5, 1)]:
    print(f"a={a:5}, b={b:4}, c={c}: mu = {compute_mu(a, b, c):.6f}")

# %% [markdown]
# ## The cancellation identity

# %%
rng = np.random.default_rng(0)
G = rng.standard_normal((1000, 3, 3))
H = rng.standard_normal((1000, 3, 3))
Q = al.deviator(al.sym(rng.standard_normal((1000, 3, 3))))
lhs = al.contract(al.sigma_stress(H, Q), G)
rhs = al.contract(al.stretching_S(G, Q, "full"), H)
print("max |sigma:G - S:H| =", np.max(np.abs(lhs - rhs)))
