"""Linear-quadratic feedback control of the relaxed filtered means.

With ``x = (q_bar, p_bar)`` and ``u = (f, v)`` the filter means obey
``dx = (F x + M u) dt + D dW`` where ``D`` is the filter diffusion matrix
at the relaxed ``eta``. For running cost ``x'Ax/2 + u'Eu/2`` and terminal
cost ``x'Rx/2`` the value function is ``S(t, x) = x'Sigma(t)x/2 + a(t)``
with the matrix Riccati equation for ``Sigma`` solved backward from
``Sigma(T) = R`` and ``a`` accumulating the noise contribution.

``K = D D'`` is the Ito quadratic-variation matrix, so the Bellman
generator carries ``tr(K Hess S) / 2`` and ``a(t) = int_t^T tr(K Sigma)/2``.
:func:`solve_a` integrates ``tr(Q Sigma)`` for whatever weight ``Q`` it is
given; :func:`lqg_value_function` passes ``Q = K/2``.

The optimal Markov policy is ``u*(t, x) = -E^{-1} M' Sigma(t) x``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from .errors import DomainError, GridMismatchError, RiccatiBlowUpError, SingularCostError
from .filtering import (
    FilterTrajectory,
    NoisePath,
    _check_uniform,
    _riccati_path,
    eta_fixed_point,
    make_noise_path,
    path_seed,
    propagate_filter,
)
from .states import Controls, ExtendedCoherentState, PhysicalParams, covariance_values

MatrixLike = Union[np.ndarray, Callable[[float], np.ndarray]]

#: Start states must match the relaxed eta this closely for control runs.
RELAXED_ETA_TOL = 1e-9
#: Sigma entries beyond this magnitude count as finite-time escape.
SIGMA_ESCAPE = 1e12


def _sym(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def _at(m, t):
    return np.asarray(m(t) if callable(m) else m, dtype=float)


@dataclass(frozen=True)
class QuadraticCost:
    """Running state cost ``A``, control cost ``E``, terminal cost ``R``, horizon ``T``.

    ``A`` and ``E`` may be constant 2x2 arrays or callables of time.
    """

    A: MatrixLike
    E: MatrixLike
    R: np.ndarray
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError("horizon T must be positive")
        object.__setattr__(self, "R", _sym(self.R))
        for name in ("A", "E"):
            m = getattr(self, name)
            if not callable(m):
                object.__setattr__(self, name, _sym(m))
        if not callable(self.E):
            _inv(self.E)

    def A_at(self, t):
        return _sym(_at(self.A, t))

    def E_at(self, t):
        return _sym(_at(self.E, t))

    def running(self, t, x, u):
        x = np.asarray(x, float)
        u = np.asarray(u, float)
        return 0.5 * x @ self.A_at(t) @ x + 0.5 * u @ self.E_at(t) @ u

    def terminal(self, x):
        x = np.asarray(x, float)
        return 0.5 * x @ self.R @ x


@dataclass(frozen=True)
class LinearDynamics:
    """``dx/dt = F x + M u``; ``F`` and ``M`` may be arrays or callables of time."""

    F: MatrixLike
    M: MatrixLike

    @classmethod
    def from_params(cls, params: PhysicalParams):
        """Free Heisenberg dynamics of ``(q_bar, p_bar)`` driven by ``u = (f, v)``."""
        F = np.array([[0.0, 1.0 / params.mass], [-params.hbar * params.mu, 0.0]])
        M = np.array([[0.0, 1.0], [1.0, 0.0]])
        return cls(F, M)

    def F_at(self, t):
        return _at(self.F, t)

    def M_at(self, t):
        return _at(self.M, t)


@dataclass(frozen=True)
class ValueFunction:
    times: np.ndarray
    Sigma: np.ndarray
    a: np.ndarray

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    def sigma_at(self, t):
        _check_range(self, t)
        flat = self.Sigma.reshape(len(self.times), 4)
        return np.array([np.interp(t, self.times, flat[:, j]) for j in range(4)]).reshape(2, 2)

    def a_at(self, t):
        _check_range(self, t)
        return float(np.interp(t, self.times, self.a))


@dataclass(frozen=True)
class DiffusionMatrixK:
    K: np.ndarray


def _check_range(vf, t):
    lo, hi = vf.times[0], vf.times[-1]
    eps = 1e-12 * max(1.0, abs(hi))
    if not (lo - eps <= t <= hi + eps):
        raise DomainError(f"t = {t} outside value-function range [{lo}, {hi}]")


def _inv(E):
    E = np.asarray(E, float)
    if not np.all(np.isfinite(E)) or abs(np.linalg.det(E)) < 1e-14 * max(1.0, np.abs(E).max() ** 2):
        raise SingularCostError("control-cost matrix E is singular")
    return np.linalg.inv(E)


def diffusion_matrix(params: PhysicalParams, eta) -> np.ndarray:
    """Filter diffusion matrix ``D``; columns multiply ``dW`` and ``dW_tilde``."""
    eta = complex(eta)
    if not eta.real > 0:
        raise DomainError("eta must have positive real part")
    c_qq, c_qp, c_pp = covariance_values(eta, params.hbar)
    sk = math.sqrt(2 * params.kappa)
    skt = math.sqrt(2 * params.kappa_tilde)
    return np.array([[sk * c_qq, skt * c_qp], [sk * c_qp, skt * c_pp]])


def diffusion_matrix_K(params: PhysicalParams, eta) -> DiffusionMatrixK:
    """``K = D D'`` for the filter diffusion matrix at ``eta``."""
    D = diffusion_matrix(params, eta)
    return DiffusionMatrixK(_sym(D @ D.T))


def _K_array(K):
    return np.asarray(K.K if isinstance(K, DiffusionMatrixK) else K, dtype=float)


def optimal_u(t, y, cost: QuadraticCost, dyn: LinearDynamics) -> Controls:
    """Pointwise minimizer ``u* = -E^{-1} M' y`` of ``u'Eu/2 + y'Mu``."""
    u = -_inv(cost.E_at(t)) @ dyn.M_at(t).T @ np.asarray(y, float)
    return Controls(float(u[0]), float(u[1]))


def bracket(t, x, y, u, cost: QuadraticCost, dyn: LinearDynamics) -> float:
    """Quantity minimized over ``u``: ``l(t, x, u) + y'(F x + M u)``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    u = np.asarray(u, float)
    return float(cost.running(t, x, u) + y @ (dyn.F_at(t) @ x + dyn.M_at(t) @ u))


def hamiltonian_fn(t, x, y, cost: QuadraticCost, dyn: LinearDynamics) -> float:
    """Minimized bracket ``x'Ax/2 + y'Fx - y'M E^{-1} M'y/2``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    M = dyn.M_at(t)
    val = 0.5 * x @ cost.A_at(t) @ x + y @ dyn.F_at(t) @ x - 0.5 * y @ M @ _inv(cost.E_at(t)) @ M.T @ y
    u = optimal_u(t, y, cost, dyn)
    at_min = bracket(t, x, y, (u.f, u.v), cost, dyn)
    if not math.isclose(val, at_min, rel_tol=1e-9, abs_tol=1e-12 * (1 + abs(val))):
        raise ArithmeticError(f"Hamiltonian closed form {val} != bracket at argmin {at_min}")
    return float(val)


def _sigma_rhs(t, S, cost, dyn):
    F = dyn.F_at(t)
    M = dyn.M_at(t)
    B = M @ _inv(cost.E_at(t)) @ M.T
    return -S @ F - F.T @ S + S @ B @ S - cost.A_at(t)


def solve_sigma(cost: QuadraticCost, dyn: LinearDynamics, t_grid) -> ValueFunction:
    """RK4 sweep of the matrix Riccati equation backward from ``Sigma(T) = R``.

    The returned value function has ``a = 0``; see :func:`solve_a`.
    """
    t_grid, h = _check_uniform(t_grid)
    if abs(t_grid[-1] - cost.T) > 1e-9 * max(1.0, cost.T):
        raise GridMismatchError("time grid must end at the cost horizon T")
    n = t_grid.size
    S = np.empty((n, 2, 2))
    S[-1] = cost.R
    cur = cost.R.copy()
    for k in range(n - 1, 0, -1):
        t = t_grid[k]
        # Integrate in reversed time s = T - t, so dSigma/ds = -dSigma/dt.
        k1 = -_sigma_rhs(t, cur, cost, dyn)
        k2 = -_sigma_rhs(t - 0.5 * h, cur + 0.5 * h * k1, cost, dyn)
        k3 = -_sigma_rhs(t - 0.5 * h, cur + 0.5 * h * k2, cost, dyn)
        k4 = -_sigma_rhs(t - h, cur + h * k3, cost, dyn)
        cur = _sym(cur + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
        if not np.all(np.isfinite(cur)) or np.abs(cur).max() > SIGMA_ESCAPE:
            raise RiccatiBlowUpError(f"Sigma escapes to infinity near t = {t_grid[k - 1]:.6g}",
                                     time=float(t_grid[k - 1]))
        S[k - 1] = cur
    return ValueFunction(t_grid, S, np.zeros(n))


def solve_a(K, sigma: ValueFunction, t_grid) -> ValueFunction:
    """``a(t) = int_t^T tr(K Sigma(s)) ds`` by the trapezoid rule, ``a(T) = 0``."""
    t_grid = np.asarray(t_grid, float)
    if t_grid.shape != sigma.times.shape or np.max(np.abs(t_grid - sigma.times)) > 1e-12 * max(1.0, sigma.T):
        raise GridMismatchError("t_grid does not match the Sigma grid")
    Kq = _K_array(K)
    tr = np.einsum("ij,kji->k", Kq, sigma.Sigma)
    seg = 0.5 * (tr[1:] + tr[:-1]) * np.diff(t_grid)
    a = np.zeros_like(tr)
    a[:-1] = np.cumsum(seg[::-1])[::-1]
    return replace(sigma, a=a)


def lqg_value_function(cost: QuadraticCost, dyn: LinearDynamics, K, t_grid) -> ValueFunction:
    """Quadratic-plus-offset value function for Ito diffusion matrix ``K = D D'``."""
    vf = solve_sigma(cost, dyn, t_grid)
    return solve_a(0.5 * _K_array(K), vf, t_grid)


def value_function(t, x, vf: ValueFunction) -> float:
    x = np.asarray(x, float)
    return float(0.5 * x @ vf.sigma_at(t) @ x + vf.a_at(t))


def _dSdt(t, x, vf):
    h = vf.dt
    lo, hi = vf.times[0], vf.times[-1]
    if t - h >= lo and t + h <= hi:
        return (value_function(t + h, x, vf) - value_function(t - h, x, vf)) / (2 * h)
    if t + 2 * h <= hi:
        s0, s1, s2 = (value_function(t + j * h, x, vf) for j in range(3))
        return (-3 * s0 + 4 * s1 - s2) / (2 * h)
    s0, s1, s2 = (value_function(t - j * h, x, vf) for j in range(3))
    return (3 * s0 - 4 * s1 + s2) / (2 * h)


def hjb_residual(t, x, vf: ValueFunction, cost: QuadraticCost, dyn: LinearDynamics, K) -> float:
    """``dS/dt + H(t, x, grad S) + tr(K Hess S)/2`` at a relaxed state.

    The time derivative is a second-order finite difference with the grid
    step (one-sided within one step of either end); gradient ``Sigma x``
    and Hessian ``Sigma`` are exact for the interpolated ``Sigma(t)``.
    """
    x = np.asarray(x, float)
    Sg = vf.sigma_at(t)
    return float(_dSdt(t, x, vf) + hamiltonian_fn(t, x, Sg @ x, cost, dyn)
                 + 0.5 * np.trace(_K_array(K) @ Sg))


# -- closed loop ------------------------------------------------------------

def _gains(vf, cost, dyn, gain_scale):
    return np.array([gain_scale * _inv(cost.E_at(t)) @ dyn.M_at(t).T @ S
                     for t, S in zip(vf.times, vf.Sigma)])


def _check_relaxed(state0, params, allow_transient):
    eta_inf = eta_fixed_point(params)
    if abs(state0.eta - eta_inf) > RELAXED_ETA_TOL:
        msg = f"start eta {state0.eta} is not relaxed (eta_inf = {eta_inf})"
        if not allow_transient:
            raise DomainError(msg + "; pass allow_transient=True to run anyway")
        warnings.warn(msg + "; eta transients bias the cost", RuntimeWarning, stacklevel=3)


def _check_noise(noise, vf):
    if noise.n_steps != len(vf.times) - 1 or not math.isclose(noise.dt, vf.dt, rel_tol=1e-9):
        raise GridMismatchError("noise path and value-function grid differ")


def closed_loop_run(state0: ExtendedCoherentState, params: PhysicalParams, cost: QuadraticCost,
                    dyn: LinearDynamics, vf: ValueFunction, noise: NoisePath,
                    gain_scale: float = 1.0, allow_transient: bool = False):
    """Run the filter under ``u = -gain_scale * E^{-1} M' Sigma(t) x``.

    Returns the trajectory and the realized cost
    ``sum_k l(t_k, x_k, u_k) dt + x_N' R x_N / 2`` (left-endpoint rule).
    """
    _check_relaxed(state0, params, allow_transient)
    _check_noise(noise, vf)
    G = _gains(vf, cost, dyn, gain_scale)
    t0 = float(vf.times[0])

    def policy(t, s):
        k = int(round((t - t0) / noise.dt))
        u = -G[k] @ np.array([s.q_bar, s.p_bar])
        return Controls(float(u[0]), float(u[1]))

    traj = propagate_filter(state0, params, policy, noise, t0=t0)
    running = [
        cost.running(t, (q, p), (f, v))
        for t, q, p, f, v in zip(traj.times[:-1], traj.q_bar[:-1], traj.p_bar[:-1], traj.f[:-1], traj.v[:-1])
    ]
    J = math.fsum(running) * noise.dt + cost.terminal((traj.q_bar[-1], traj.p_bar[-1]))
    return traj, float(J)


@dataclass(frozen=True)
class MonteCarloResult:
    mean_J: float
    stderr: float
    costs: np.ndarray
    master_seed: int

    @property
    def n_traj(self):
        return self.costs.size


def _batch_costs(args):
    """Vectorized closed loop for a block of path indices (elementwise only,
    so each path's result is independent of the block it runs in)."""
    (x0, eta, params, A, E, R, F, M, G, dt, n_steps, master_seed, indices) = args
    n = len(indices)
    dW = np.empty((n, n_steps))
    dWt = np.empty((n, n_steps))
    for j, i in enumerate(indices):
        path = make_noise_path(path_seed(master_seed, i), dt, n_steps)
        dW[j], dWt[j] = path.dW, path.dW_tilde
    q = np.full(n, float(x0[0]))
    p = np.full(n, float(x0[1]))
    acc = np.zeros((n_steps, n))
    for k in range(n_steps):
        D = diffusion_matrix(params, eta[k])
        g = G[k]
        f = -(g[0, 0] * q + g[0, 1] * p)
        v = -(g[1, 0] * q + g[1, 1] * p)
        a, e = A[k], E[k]
        acc[k] = 0.5 * (a[0, 0] * q * q + 2 * a[0, 1] * q * p + a[1, 1] * p * p) \
            + 0.5 * (e[0, 0] * f * f + 2 * e[0, 1] * f * v + e[1, 1] * v * v)
        fk, mk = F[k], M[k]
        dq = fk[0, 0] * q + fk[0, 1] * p + mk[0, 0] * f + mk[0, 1] * v
        dp = fk[1, 0] * q + fk[1, 1] * p + mk[1, 0] * f + mk[1, 1] * v
        q, p = (q + dq * dt + D[0, 0] * dW[:, k] + D[0, 1] * dWt[:, k],
                p + dp * dt + D[1, 0] * dW[:, k] + D[1, 1] * dWt[:, k])
    term = 0.5 * (R[0, 0] * q * q + 2 * R[0, 1] * q * p + R[1, 1] * p * p)
    return np.array([math.fsum(acc[:, j]) * dt + term[j] for j in range(n)])


def _riccati_eta(state0, params, vf):
    return _riccati_path(state0.eta, params, vf.dt, len(vf.times) - 1, t0=float(vf.times[0]))


def monte_carlo_value(state0: ExtendedCoherentState, params: PhysicalParams, cost: QuadraticCost,
                      dyn: LinearDynamics, vf: ValueFunction, n_traj: int, master_seed: int,
                      gain_scale: float = 1.0, workers: int = 1, allow_transient: bool = False,
                      chunk: int = 2500) -> MonteCarloResult:
    """Average realized cost over closed-loop paths seeded ``master_seed + i``.

    The dynamics must be the filter's own (``F``, ``M`` as in
    :meth:`LinearDynamics.from_params`) for the estimate to target
    ``S(t0, x0)``. Results are identical for any ``workers``/``chunk``.
    """
    if n_traj < 2:
        raise ValueError("n_traj must be at least 2")
    _check_relaxed(state0, params, allow_transient)
    times = vf.times
    dt = vf.dt
    n_steps = len(times) - 1
    G = _gains(vf, cost, dyn, gain_scale)
    A = np.array([cost.A_at(t) for t in times[:-1]])
    E = np.array([cost.E_at(t) for t in times[:-1]])
    F = np.array([dyn.F_at(t) for t in times[:-1]])
    M = np.array([dyn.M_at(t) for t in times[:-1]])
    eta = _riccati_eta(state0, params, vf)
    x0 = (state0.q_bar, state0.p_bar)
    blocks = [list(range(i, min(i + chunk, n_traj))) for i in range(0, n_traj, chunk)]
    jobs = [(x0, eta, params, A, E, cost.R, F, M, G, dt, n_steps, master_seed, b) for b in blocks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_batch_costs, jobs))
    else:
        parts = [_batch_costs(j) for j in jobs]
    costs = np.concatenate(parts)
    mean = math.fsum(costs) / n_traj
    var = math.fsum((costs - mean) ** 2) / (n_traj - 1)
    return MonteCarloResult(mean, math.sqrt(var / n_traj), costs, master_seed)


def expected_cost_discrete(state0: ExtendedCoherentState, params: PhysicalParams, cost: QuadraticCost,
                           dyn: LinearDynamics, vf: ValueFunction, gain_scale: float = 1.0) -> float:
    """Exact expectation of the Euler-discretized closed-loop cost.

    Propagates the second-moment matrix ``P_k = E[x_k x_k']`` through
    ``x_{k+1} = (I + (F - M G_k) dt) x_k + D_k xi_k``; this is the value
    :func:`monte_carlo_value` estimates, so ``|this - S(t0, x0)|`` is the
    time-discretization bias.
    """
    times = vf.times
    dt = vf.dt
    G = _gains(vf, cost, dyn, gain_scale)
    eta = _riccati_eta(state0, params, vf)
    x0 = np.array([state0.q_bar, state0.p_bar])
    P = np.outer(x0, x0)
    run = []
    for k, t in enumerate(times[:-1]):
        Q = cost.A_at(t) + G[k].T @ cost.E_at(t) @ G[k]
        run.append(0.5 * np.sum(Q * P) * dt)
        Phi = np.eye(2) + (dyn.F_at(t) - dyn.M_at(t) @ G[k]) * dt
        D = diffusion_matrix(params, eta[k])
        P = Phi @ P @ Phi.T + D @ D.T * dt
    return math.fsum(run) + 0.5 * float(np.sum(cost.R * P))
