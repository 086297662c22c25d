"""Asymptotic variance and the coboundary dichotomy.

Run with ``python demos/04_variance_and_coboundaries.py``.
"""
# %%
import numpy as np

from quenchedlab.acim import solve_equivariant
from quenchedlab.driving import BaseSpec, sample_path
from quenchedlab.limits import coboundary_test
from quenchedlab.maps import MapFamily, doubling, tripling
from quenchedlab.martingale import center_observable
from quenchedlab.stats import Observable, fiberwise_variance, green_kubo_sigma2
from quenchedlab.transfer import Cocycle

n = 1024
cos1 = Observable.from_function(lambda x: np.cos(2 * np.pi * x), n, name="cos")
cob = Observable.from_function(lambda x: np.cos(4 * np.pi * x) - np.cos(2 * np.pi * x), n, name="cos2-cos")

# %% Doubling alone: cos(2 pi x) has variance 1/2, the difference cos(4 pi x) - cos(2 pi x) none.
c = Cocycle(MapFamily([doubling()]), sample_path(BaseSpec("iid", [1.0]), 40, 2001), n)
h = solve_equivariant(c, range(0, 2001), depth=40)
for obs in (cos1, cob):
    s2 = green_kubo_sigma2(c, obs, h, 20).sigma2
    verdict = coboundary_test(c, center_observable(obs, h, c), h).verdict
    print(f"doubling, {obs.name:8s}: Sigma^2 = {s2:.4f}, verdict {verdict}")

# %% tau_n^2 grows linearly in one case and stays bounded in the other.
for obs in (cos1, cob):
    tau = fiberwise_variance(c, center_observable(obs, h, c), h, 2000)
    print(f"{obs.name:8s} tau_n^2 at n=10, 100, 1000, 2000:", np.round(tau[[9, 99, 999, 1999]], 3))

# %% With random doubling/tripling, ensemble Green-Kubo over independent driving paths.
base = BaseSpec("iid", [0.5, 0.5])
pc = Cocycle(MapFamily([doubling(), tripling()]), sample_path(base, 40, 2001, seed=7), n)
ph = solve_equivariant(pc, range(0, 2001), depth=40)
x = Observable.from_function(lambda t: t, n, name="x")
rep = green_kubo_sigma2(pc, x, ph, 20, ensemble=16, base=base)
print(f"random pair, psi = x: Sigma^2 = {rep.sigma2:.4f} over {rep.ensemble} paths")
