"""Transfer operators on a grid and their composition along a random path.

Run with ``python demos/01_transfer_operators.py``.
"""
# %%
import numpy as np

from quenchedlab.driving import BaseSpec, sample_path
from quenchedlab.maps import MapFamily, doubling, sine_mod, tripling
from quenchedlab.transfer import Cocycle, build_backend, duality_residual

# %% The doubling map on two bins mixes everything in one step.
b = build_backend(doubling(), 2, "exact_markov")
print("doubling, 2 bins:\n", b.to_dense())
print("L(2, 0) =", b.apply([2.0, 0.0]))

# %% A smooth non-Markov map needs the Ulam projection.  Mass is still conserved.
f = sine_mod(2, 0.5)
u = build_backend(f, 256, "ulam")
g = np.random.default_rng(0).uniform(0, 3, 256)
print(f"mass before {g.mean():.12f}, after {u.apply(g).mean():.12f}")

# %% Duality holds to rounding because compositions are taken on the backend pieces.
phi, psi = np.random.default_rng(1).normal(size=(2, 256))
print("duality defect:", duality_residual(u, f, phi, psi))

# %% A cocycle applies one operator per time step, chosen by the driving symbol.
path = sample_path(BaseSpec("iid", [0.5, 0.5]), 0, 20, seed=3)
c = Cocycle(MapFamily([doubling(), tripling()]), path, 64)
print("symbols:", path.window(0, 10))
x = (np.arange(64) + 0.5) / 64
v = 1 + 0.5 * np.cos(2 * np.pi * x)
for n in (0, 1, 2, 5):
    print(f"n={n}: ||L^(n) v - 1||_1 = {np.mean(np.abs(c.apply(0, n, v) - 1)):.3e}")
