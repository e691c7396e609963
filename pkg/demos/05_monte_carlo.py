"""
Monte Carlo check of the value function
=======================================

Simulate the closed loop on many independent innovation paths. The mean
cost should match S(0, x0) up to sampling error and a small
time-discretization bias, and a detuned gain should do no better.
"""

import numpy as np

from ecsim.control import (
    LinearDynamics,
    QuadraticCost,
    diffusion_matrix_K,
    expected_cost_discrete,
    lqg_value_function,
    monte_carlo_value,
    value_function,
)
from ecsim.filtering import eta_fixed_point, uniform_grid
from ecsim.states import ExtendedCoherentState, PhysicalParams

params = PhysicalParams.natural(mu=1.0, kappa=1.0, kappa_tilde=1.0)
eta_inf = eta_fixed_point(params)
cost = QuadraticCost(A=np.diag([2.0, 1.0]), E=np.diag([1.0, 0.5]), R=np.diag([0.5, 0.0]), T=2.0)
dyn = LinearDynamics.from_params(params)
vf = lqg_value_function(cost, dyn, diffusion_matrix_K(params, eta_inf), uniform_grid(2.0, 1e-3))

# Control runs start from the relaxed eta.
state0 = ExtendedCoherentState.from_eta(1.0, 0.5, eta_inf)
print("S(0, x0)               :", round(value_function(0.0, [1.0, 0.5], vf), 5))
print("discrete-time expected :", round(expected_cost_discrete(state0, params, cost, dyn, vf), 5))

for scale in (0.5, 1.0, 1.5):
    mc = monte_carlo_value(state0, params, cost, dyn, vf, n_traj=10000, master_seed=123, gain_scale=scale)
    print(f"gain x{scale}: mean cost {mc.mean_J:.5f} +- {mc.stderr:.5f}")
