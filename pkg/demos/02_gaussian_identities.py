"""
Extended coherent states
========================

A Gaussian state is fixed by its means and one complex number eta. Its
covariances always saturate the Heisenberg bound, but the joint
characteristic function of position and momentum only factorizes when
eta is real.
"""

import numpy as np

from ecsim.grid import GridSpec, moments
from ecsim.oracle import grid_characteristic_fn
from ecsim.states import (
    ExtendedCoherentState,
    characteristic_fn,
    covariances,
    sample_wavefunction,
    uncertainty_product,
    weyl_independence_defect,
)

hbar = 1.0
coherent = ExtendedCoherentState(0.0, 0.0, 2.0)
chirped = ExtendedCoherentState(0.0, 0.0, 1.0, 1.0)

for name, st in [("coherent", coherent), ("chirped", chirped)]:
    c = covariances(st, hbar)
    print(f"{name:9s} C_qq={c.c_qq:.3f} C_qp={c.c_qp:+.3f} C_pp={c.c_pp:.3f} "
          f"det={uncertainty_product(st, hbar):.3f} "
          f"Weyl defect at (1,1)={weyl_independence_defect(st, hbar, 1.0, 1.0):.4f}")

# Sampling the wavefunction and integrating on a grid recovers the same numbers.
grid = GridSpec(-25.0, 25.0, 2048)
st = ExtendedCoherentState(0.5, -1.0, 1.5, -0.7)
psi = sample_wavefunction(st, hbar, grid)
print("grid moments:   ", np.round(moments(psi, hbar), 10))
c = covariances(st, hbar)
print("closed form:    ", np.round([st.q_bar, st.p_bar, c.c_qq, c.c_qp, c.c_pp], 10))

r, s = 0.7, -0.4
print("chi(r, s) grid: ", grid_characteristic_fn(psi, hbar, r, s))
print("chi(r, s) exact:", characteristic_fn(st, hbar, r, s))
