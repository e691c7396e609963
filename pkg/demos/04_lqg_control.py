"""
Optimal feedback on the filtered means
======================================

Once eta has relaxed, the filter means obey a linear SDE with constant
noise loading, so quadratic costs lead to a matrix Riccati equation and
a linear feedback law. The value function is checked against the
Bellman equation at random points.
"""

import numpy as np

from ecsim.control import (
    LinearDynamics,
    QuadraticCost,
    diffusion_matrix_K,
    hjb_residual,
    lqg_value_function,
    optimal_u,
    value_function,
)
from ecsim.filtering import eta_fixed_point, uniform_grid
from ecsim.states import PhysicalParams

params = PhysicalParams.natural(mu=1.0, kappa=1.0, kappa_tilde=1.0)
eta_inf = eta_fixed_point(params)
K = diffusion_matrix_K(params, eta_inf)
print("innovation covariance K:\n", K.K)

cost = QuadraticCost(A=np.diag([2.0, 1.0]), E=np.diag([1.0, 0.5]), R=np.diag([0.5, 0.0]), T=2.0)
dyn = LinearDynamics.from_params(params)
vf = lqg_value_function(cost, dyn, K, uniform_grid(2.0, 1e-3))

x0 = np.array([1.0, 0.5])
print("Sigma(0):\n", vf.Sigma[0].round(5))
print("noise offset a(0):", round(vf.a[0], 5))
print("S(0, x0):", round(value_function(0.0, x0, vf), 5))
u = optimal_u(0.0, vf.Sigma[0] @ x0, cost, dyn)
print(f"optimal controls at t=0: force f = {u.f:+.4f}, velocity kick v = {u.v:+.4f}")

rng = np.random.default_rng(0)
res = [hjb_residual(t, x, vf, cost, dyn, K) for t, x in zip(rng.uniform(0, 2, 200), rng.uniform(-2, 2, (200, 2)))]
print("largest Bellman residual over 200 points:", f"{np.abs(res).max():.1e}")
