"""Cones of bounded variation and contraction of the Hilbert metric.

Run with ``python demos/03_cones_and_contraction.py``.
"""
# %%
import numpy as np

from quenchedlab.acim import cone_contraction_check, sample_cone_element
from quenchedlab.driving import BaseSpec, sample_path
from quenchedlab.maps import MapFamily, quadratic_mod, sine_mod
from quenchedlab.spaces import cone_contains, hilbert_metric
from quenchedlab.transfer import Cocycle, lasota_yorke_fit

# %% A two-bin example where the metric can be worked out by hand: Theta = log 3.
r = hilbert_metric(np.ones(2), np.array([0.5, 1.5]), 4)
print(f"Xi={r.xi:.6f} Upsilon={r.upsilon:.6f} Theta={r.theta:.6f} (log 3 = {np.log(3):.6f})")

# %% Random cone elements before and after ten steps of the smooth family.
family = MapFamily([sine_mod(2, 0.5), quadratic_mod(2.6, 0.2)])
c = Cocycle(family, sample_path(BaseSpec("iid", [0.5, 0.5]), 0, 100, seed=1), 1024)
rng = np.random.default_rng(2)
phi, psi = (sample_cone_element(rng, 1024, 8) for _ in range(2))
Lphi, Lpsi = c.apply(0, 10, phi), c.apply(0, 10, psi)
print("inside C_4 after 10 steps:", cone_contains(Lphi, 4), cone_contains(Lpsi, 4))
print(f"Theta before {hilbert_metric(phi, psi, 8).theta:.3f}, after {hilbert_metric(Lphi, Lpsi, 8).theta:.2e}")

# %% Over many pairs: the worst contraction ratio against Birkhoff's tanh(Delta/4).
rep = cone_contraction_check(c, 8, R=1, N=10, pairs=50)
print(f"kappa_hat {rep.kappa_hat:.2e}, tanh(Delta/4) {rep.birkhoff_bound:.2e}, inclusion {rep.inclusion_rate:.2f}")

# %% An empirical Lasota-Yorke inequality for five-step compositions.
ly = lasota_yorke_fit(c, N=5)
print(f"var(L^5 g) <= {ly.alpha:.4f} var(g) + {ly.K:.3f} ||g||_1")
