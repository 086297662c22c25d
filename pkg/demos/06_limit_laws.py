"""Monte Carlo checks of the central limit theorem, plus the ASIP diagnostic.

Run with ``python demos/06_limit_laws.py``.
"""
# %%
import numpy as np

from quenchedlab.acim import solve_equivariant
from quenchedlab.driving import BaseSpec, sample_path
from quenchedlab.limits import asip_error_scaling, birkhoff_samples, clt_test
from quenchedlab.maps import MapFamily, doubling
from quenchedlab.martingale import center_observable
from quenchedlab.stats import Observable
from quenchedlab.transfer import Cocycle

# %% Orbits of the doubling map start from the density and follow the exact map.
n = 4096
c = Cocycle(MapFamily([doubling()]), sample_path(BaseSpec("iid", [1.0]), 40, 1001), n)
h = solve_equivariant(c, range(0, 1001), depth=40)
psi = center_observable(Observable.from_function(lambda x: np.cos(2 * np.pi * x), n), h, c)
samples = birkhoff_samples(c, psi, h, 1000, 5000, seed=0)

# %% S_k / sqrt(k/2) should look standard normal.
for k in (10, 100, 300, 1000):
    r = clt_test(samples, 0.5, k)
    print(f"k={k:5d}: Var S_k / k = {r.sample_variance / k:.4f}, KS p = {r.p_value:.3f}")

# %% Distance to a Gaussian surrogate with matched variances.  This is not a coupling.
a = asip_error_scaling(samples, 0.5)
print(f"exponent {a.exponent_hat:.3f}, CI ({a.ci[0]:.3f}, {a.ci[1]:.3f})")
print(a.label)
