"""
Relaxation of the inverse variance
==================================

Under continuous position and momentum monitoring the complex inverse
variance eta forgets its starting value and settles at a fixed point.
With the potential tuned to the measurement strengths the fixed point is
the real value 2 m omega / hbar, i.e. an ordinary coherent state.
"""

import numpy as np

from ecsim.filtering import eta_fixed_point, fit_relaxation_rate, integrate_riccati, uniform_grid
from ecsim.states import PhysicalParams

# Tuned harmonic case in natural units: kappa = mu = kappa_tilde = 1.
params = PhysicalParams.tuned_harmonic(omega=1.0, kappa_tilde=1.0)
eta_inf = eta_fixed_point(params)
print("fixed point:", eta_inf)

# A handful of very different starting states, integrated together.
starts = np.array([0.05 + 0j, 1.0 + 0j, 30.0 + 30j, 0.5 - 40j])
traj = integrate_riccati(starts, params, uniform_grid(20.0, 1e-3))
for k in (0, 1000, 5000, 20000):
    dist = np.abs(traj.eta[k] - eta_inf)
    print(f"t = {traj.times[k]:5.1f}   |eta - eta_inf| = " + "  ".join(f"{d:.2e}" for d in dist))

# The approach is exponential; fit the rate from the unit start.
single = integrate_riccati(1.0, params, uniform_grid(20.0, 1e-3))
print("fitted relaxation rate:", round(fit_relaxation_rate(single, eta_inf), 4))

# Detuned parameters give a squeezed, chirped steady state.
detuned = PhysicalParams.natural(mu=1.0, kappa=3.0, kappa_tilde=0.2)
print("detuned fixed point:", eta_fixed_point(detuned))
