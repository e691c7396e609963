"""Filtered-state propagation in the extended-coherent-state parameterization.

The inverse variance ``eta`` obeys a deterministic complex Riccati equation,
integrated here with classical RK4. The means ``(q_bar, p_bar)`` diffuse
with noise amplitudes set by the current covariances and are stepped by
Euler-Maruyama on the same uniform grid. Controls are held constant over
each step at their left-endpoint value.

RK4 stability needs roughly ``h * |kappa_tilde*hbar**2 + 1j*hbar/m| * |eta| < 2``
along the trajectory; steps that violate it show up as a
:class:`RiccatiBlowUpError`.
"""

from __future__ import annotations

import csv
import cmath
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateParametersError, DomainError, GridMismatchError, RiccatiBlowUpError
from .states import (
    ETA_RE_MIN,
    ZERO_CONTROLS,
    Controls,
    ExtendedCoherentState,
    PhysicalParams,
    covariance_values,
)

Policy = Callable[[float, ExtendedCoherentState], Controls]


@dataclass(frozen=True)
class NoisePath:
    """Innovation increments for the position (``dW``) and momentum
    (``dW_tilde``) channels, each i.i.d. ``N(0, dt)``."""

    dt: float
    n_steps: int
    dW: np.ndarray
    dW_tilde: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        if self.dW.shape != (self.n_steps,) or self.dW_tilde.shape != (self.n_steps,):
            raise DomainError("increment arrays must have length n_steps")

    @classmethod
    def zeros(cls, dt, n_steps):
        z = np.zeros(n_steps)
        return cls(dt, n_steps, z, z.copy(), seed=None)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


def make_noise_path(seed: int, dt: float, n_steps: int) -> NoisePath:
    """Reproducible two-channel Gaussian increments.

    The draws come from ``numpy.random.default_rng(seed)``: first the
    ``n_steps`` position-channel normals, then the ``n_steps``
    momentum-channel normals, each scaled by ``sqrt(dt)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError("n_steps must be a positive integer")
    n_steps = int(n_steps)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, n_steps)) * math.sqrt(dt)
    dW, dWt = z[0].copy(), z[1].copy()
    dW.flags.writeable = False
    dWt.flags.writeable = False
    return NoisePath(dt, n_steps, dW, dWt, seed=seed)


def path_seed(master_seed: int, index: int) -> int:
    """Seed for path ``index`` of an ensemble: ``master_seed + index``."""
    return int(master_seed) + int(index)


def coarsen(noise: NoisePath, factor: int) -> NoisePath:
    """Sum consecutive blocks of ``factor`` increments (same Brownian path, larger dt)."""
    if noise.n_steps % factor:
        raise ValueError("n_steps must be divisible by factor")
    n = noise.n_steps // factor
    return NoisePath(
        noise.dt * factor,
        n,
        noise.dW.reshape(n, factor).sum(axis=1),
        noise.dW_tilde.reshape(n, factor).sum(axis=1),
        seed=noise.seed,
    )


# -- Riccati flow ---------------------------------------------------------

def riccati_rhs(eta, params: PhysicalParams):
    """Time derivative of eta: ``2k + 2i mu - (k~ hbar**2 + i hbar/m) eta**2 / 2``."""
    p = params
    return (2.0 * p.kappa + 2j * p.mu) - 0.5 * (p.kappa_tilde * p.hbar**2 + 1j * p.hbar / p.mass) * eta**2


def riccati_rhs_real(eta_re, eta_im, params: PhysicalParams):
    """The same flow written as a pair of real equations for ``(eta_re, eta_im)``."""
    p = params
    kh2 = p.kappa_tilde * p.hbar**2
    diff = eta_re**2 - eta_im**2
    d_re = 2.0 * p.kappa + (p.hbar / p.mass) * eta_re * eta_im - 0.5 * kh2 * diff
    d_im = 2.0 * p.mu - (p.hbar / (2.0 * p.mass)) * diff - kh2 * eta_re * eta_im
    return d_re, d_im


def eta_fixed_point(params: PhysicalParams) -> complex:
    """Unique fixed point of the Riccati flow in the half-plane ``eta_re > 0``."""
    p = params
    num = p.kappa + 1j * p.mu
    den = p.kappa_tilde + 1j / (p.mass * p.hbar)
    if num == 0:
        raise DegenerateParametersError("kappa + i*mu = 0: no relaxed state in the half-plane")
    root = cmath.sqrt(num / den)
    if root.real < 0:
        root = -root
    if root.real <= 0:
        raise DegenerateParametersError(
            "fixed point lies on the boundary eta_re = 0 (kappa = kappa_tilde = 0 with mu < 0?)"
        )
    return (2.0 / p.hbar) * root


@dataclass(frozen=True)
class RiccatiTrajectory:
    times: np.ndarray
    eta: np.ndarray


def uniform_grid(T, h, t0=0.0):
    n = int(round((T - t0) / h))
    if n < 1 or abs(n * h - (T - t0)) > 1e-9 * max(1.0, abs(T)):
        raise ValueError("horizon must be an integer multiple of the step")
    return t0 + h * np.arange(n + 1)


def _check_uniform(t_grid):
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2:
        raise ValueError("time grid needs at least two nodes")
    steps = np.diff(t_grid)
    h = steps[0]
    if not h > 0 or np.max(np.abs(steps - h)) > 1e-9 * max(1.0, abs(t_grid[-1])):
        raise ValueError("time grid must be uniform and strictly increasing")
    return t_grid, float(h)


def rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _riccati_path(eta0, params, h, n_steps, t0=0.0):
    """RK4 values of eta at ``t0 + k*h``; works elementwise on arrays of starts."""
    eta = np.asarray(eta0, dtype=complex)
    out = np.empty((n_steps + 1,) + eta.shape, dtype=complex)
    out[0] = eta

    def f(e):
        return riccati_rhs(e, params)

    for k in range(n_steps):
        eta = rk4_step(f, eta, h)
        bad = ~np.isfinite(eta) | (eta.real < ETA_RE_MIN)
        if np.any(bad):
            raise RiccatiBlowUpError(
                f"eta left the half-plane eta_re > {ETA_RE_MIN:g} at t = {t0 + (k + 1) * h:.6g}; "
                "reduce the step",
                time=t0 + (k + 1) * h,
            )
        out[k + 1] = eta
    return out


def integrate_riccati(eta0, params: PhysicalParams, t_grid) -> RiccatiTrajectory:
    """RK4 solution of the eta flow on a uniform grid.

    ``eta0`` may be an array of starting values; ``eta`` then has shape
    ``(len(t_grid),) + eta0.shape``.
    """
    t_grid, h = _check_uniform(t_grid)
    eta0 = np.asarray(eta0, dtype=complex)
    if np.any(eta0.real <= ETA_RE_MIN):
        raise DomainError("eta0 must have positive real part")
    eta = _riccati_path(eta0, params, h, t_grid.size - 1, t0=t_grid[0])
    return RiccatiTrajectory(t_grid, eta)


def fit_relaxation_rate(traj: RiccatiTrajectory, eta_inf: complex, floor: float = 1e-10) -> float:
    """Least-squares exponential rate of ``|eta(t) - eta_inf|``.

    Only samples where the distance exceeds ``floor`` enter the fit, so
    round-off near convergence does not bias the slope.
    """
    dist = np.abs(np.asarray(traj.eta) - eta_inf)
    mask = dist > floor
    if mask.sum() < 3:
        raise ValueError("not enough unconverged samples to fit a rate")
    slope = np.polyfit(traj.times[mask], np.log(dist[mask]), 1)[0]
    return float(-slope)


# -- means ----------------------------------------------------------------

def _drift_diffusion_values(q, p, eta, params, f, v):
    c_qq, c_qp, c_pp = covariance_values(eta, params.hbar)
    drift = (p / params.mass + v, -params.hbar * params.mu * q + f)
    sk = math.sqrt(2.0 * params.kappa)
    skt = math.sqrt(2.0 * params.kappa_tilde)
    diff = ((sk * c_qq, skt * c_qp), (sk * c_qp, skt * c_pp))
    return drift, diff


def filter_drift_diffusion(state: ExtendedCoherentState, params: PhysicalParams,
                           u: Controls = ZERO_CONTROLS):
    """Drift vector and diffusion matrix of ``(q_bar, p_bar)``.

    Column 0 of the diffusion matrix multiplies ``dW``, column 1 ``dW_tilde``.
    """
    drift, diff = _drift_diffusion_values(state.q_bar, state.p_bar, state.eta, params, u.f, u.v)
    return np.array(drift, dtype=float), np.array(diff, dtype=float)


@dataclass(frozen=True)
class FilterTrajectory:
    times: np.ndarray
    q_bar: np.ndarray
    p_bar: np.ndarray
    eta: np.ndarray
    noise: NoisePath
    f: np.ndarray
    v: np.ndarray

    @property
    def states(self):
        return [ExtendedCoherentState.from_eta(q, p, e) for q, p, e in zip(self.q_bar, self.p_bar, self.eta)]

    def state(self, k) -> ExtendedCoherentState:
        return ExtendedCoherentState.from_eta(self.q_bar[k], self.p_bar[k], self.eta[k])

    def to_csv(self, path, provenance=None):
        """Write ``t, q_bar, p_bar, eta_re, eta_im, dW, dW_tilde`` (increments
        are those applied over ``[t_k, t_{k+1}]``; blank on the last row)."""
        write_series_csv(
            path,
            ["t", "q_bar", "p_bar", "eta_re", "eta_im", "dW", "dW_tilde"],
            [
                self.times,
                self.q_bar,
                self.p_bar,
                self.eta.real,
                self.eta.imag,
                np.append(self.noise.dW, np.nan),
                np.append(self.noise.dW_tilde, np.nan),
            ],
            provenance,
        )


def write_series_csv(path, columns, arrays, provenance=None):
    """CSV with ``# key=value`` provenance comment lines, then a header row."""
    with open(path, "w", newline="") as fh:
        for key, val in (provenance or {}).items():
            fh.write(f"# {key}={val}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in zip(*arrays):
            writer.writerow(["" if isinstance(x, float) and math.isnan(x) else repr(float(x)) for x in row])


def propagate_filter(state0: ExtendedCoherentState, params: PhysicalParams,
                     policy: Optional[Policy], noise: NoisePath, t0: float = 0.0,
                     n_steps: Optional[int] = None) -> FilterTrajectory:
    """Euler-Maruyama for the means, RK4 for eta, on the grid ``t0 + k*noise.dt``.

    ``policy(t, state)`` returns the :class:`Controls` applied over the
    step that starts at ``t``; ``None`` means zero controls.
    """
    n = noise.n_steps if n_steps is None else n_steps
    if n != noise.n_steps:
        raise GridMismatchError(f"noise path has {noise.n_steps} steps, expected {n}")
    dt = noise.dt
    eta = _riccati_path(state0.eta, params, dt, n, t0=t0)
    times = t0 + dt * np.arange(n + 1)
    q = np.empty(n + 1)
    p = np.empty(n + 1)
    fs = np.zeros(n + 1)
    vs = np.zeros(n + 1)
    q[0], p[0] = state0.q_bar, state0.p_bar
    dW, dWt = noise.dW, noise.dW_tilde
    for k in range(n):
        if policy is None:
            f = v = 0.0
        else:
            u = policy(times[k], ExtendedCoherentState.from_eta(q[k], p[k], eta[k]))
            f, v = u.f, u.v
        fs[k], vs[k] = f, v
        (dq, dp), ((a, b), (c, d)) = _drift_diffusion_values(q[k], p[k], eta[k], params, f, v)
        q[k + 1] = q[k] + dq * dt + a * dW[k] + b * dWt[k]
        p[k + 1] = p[k] + dp * dt + c * dW[k] + d * dWt[k]
    fs[n], vs[n] = np.nan, np.nan
    return FilterTrajectory(times, q, p, eta, noise, fs, vs)
