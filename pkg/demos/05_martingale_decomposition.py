"""Martingale approximation along a single driving path.

Run with ``python demos/05_martingale_decomposition.py``.
"""
# %%
import numpy as np

from quenchedlab.acim import solve_equivariant
from quenchedlab.driving import BaseSpec, sample_path
from quenchedlab.maps import MapFamily, doubling, tripling
from quenchedlab.martingale import (
    center_observable,
    decompose,
    martingale_residual,
    orthogonality_matrix,
    sprindzuk_diagnostic,
    telescoping_residual,
)
from quenchedlab.sampling import trajectory_bins
from quenchedlab.stats import Observable
from quenchedlab.transfer import Cocycle

# %% Setup: random doubling/tripling, exact Markov backend, observable psi(x) = x.
path = sample_path(BaseSpec("iid", [0.5, 0.5]), 40, 2001, seed=0)
c = Cocycle(MapFamily([doubling(), tripling()]), path, 1024)
h = solve_equivariant(c, range(0, 2001), depth=40)
psi = center_observable(Observable.from_function(lambda x: x, 1024), h, c)
print("backend:", c.method)

# %% The corrector G_k by recursion and by the closed-form sum agree to rounding.
s = decompose(c, psi, h, 50, mode="both")
print(f"recursion vs closed form: {s.closed_form_gap:.1e}")

# %% M_k are reverse martingale differences: L(h_k M_k) = 0 and increments are orthogonal.
print(f"max ||L(h M)||_1 = {martingale_residual(c, s, h):.1e}")
E = orthogonality_matrix(c, s, h, 30)
print(f"max |E(X_i X_j)|, i<j<=30: {np.abs(np.triu(E, 1)).max():.1e}")

# %% Along sampled orbits, Birkhoff sums minus martingale sums equal the corrector at time n.
bins = trajectory_bins(c, h, 50, 1000)
print(f"telescoping defect: {telescoping_residual(s, bins):.1e}")

# %% Fluctuations of conditional variances grow like sqrt(n).
full = decompose(c, psi, h, 2000)
rep = sprindzuk_diagnostic(c, full, h, 2000, 4000)
print(f"log-log slope of max|D_m| = {rep.slope:.3f}, CI ({rep.slope_ci[0]:.3f}, {rep.slope_ci[1]:.3f})")
