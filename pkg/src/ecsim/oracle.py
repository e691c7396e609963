"""Brute-force integration of the position/momentum stochastic Schrodinger
equation on a periodic grid, and comparison with the parametric filter.

One step from ``t`` to ``t + dt`` (means ``<q>``, ``<p>`` frozen at ``t``):

1. compute ``<q>`` and ``<p>`` from the current wavefunction;
2. multiply in position space by the potential/force phase and the
   position-measurement factor;
3. transform, multiply by the kinetic/velocity phase and the
   momentum-measurement factor, transform back;
4. renormalize.

With ``scheme="exponential"`` (default) the measurement factors are the
exact solution of the step's frozen-mean linear Ito equation,
``exp(-(k/2) X**2 dt + sqrt(k/2) X dW)`` with ``X = q - <q>`` (and the
momentum analogue). Every factor is then Gaussian-preserving and
unconditionally stable. ``scheme="euler"`` applies the Hamiltonian as exact
phases but adds the measurement terms as a plain Euler-Maruyama increment
``(-(k/4) X**2 dt + sqrt(k/2) X dW) psi``; it is only stable while
``kappa_tilde * p_max**2 * dt`` is well below one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .errors import GridCoverageError, NormCollapseError
from .filtering import (
    NoisePath,
    Policy,
    _riccati_path,
    propagate_filter,
    write_series_csv,
)
from .grid import (
    GridSpec,
    GridWavefunction,
    _moments_from,
    check_boundary,
    check_momentum_boundary,
    moments,
)
from .states import (
    ZERO_CONTROLS,
    Controls,
    ExtendedCoherentState,
    PhysicalParams,
    covariance_values,
    ecs_amplitudes,
    sample_wavefunction,
    support_halfwidth,
)

SCHEMES = ("exponential", "euler")
MOMENT_NAMES = ("q_mean", "p_mean", "c_qq", "c_qp", "c_pp")


class _Stepper:
    """Caches grid-dependent arrays so repeated steps avoid recomputation."""

    def __init__(self, grid: GridSpec, params: PhysicalParams, scheme="exponential", guard=True):
        if scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        self.grid = grid
        self.params = params
        self.scheme = scheme
        self.guard = guard
        self.x = grid.x
        self.p = grid.momenta(params.hbar)
        self.dx = grid.dx
        hb = params.hbar
        self.v_q = 0.5 * hb * params.mu * self.x**2
        self.t_p = self.p**2 / (2.0 * params.mass)

    def step(self, amp, u: Controls, dW, dWt, dt):
        prm = self.params
        hb = prm.hbar
        x, p, dx = self.x, self.p, self.dx
        phi = np.fft.fft(amp)
        prob = np.abs(amp) ** 2
        q_mean = np.sum(x * prob) * dx
        p_mean = np.sum(p * np.abs(phi) ** 2) * dx / amp.size
        X = x - q_mean
        P = p - p_mean
        pot = (self.v_q - u.f * x) * (dt / hb)
        kin = (self.t_p + u.v * p) * (dt / hb)
        ck = math.sqrt(0.5 * prm.kappa)
        ckt = math.sqrt(0.5 * prm.kappa_tilde)
        if self.scheme == "exponential":
            amp = amp * np.exp(-1j * pot - 0.5 * prm.kappa * dt * X**2 + ck * dW * X)
            phi = np.fft.fft(amp) * np.exp(-1j * kin - 0.5 * prm.kappa_tilde * dt * P**2 + ckt * dWt * P)
            new = np.fft.ifft(phi)
        else:
            free = np.fft.ifft(phi * np.exp(-1j * kin)) * np.exp(-1j * pot)
            meas_q = (-0.25 * prm.kappa * dt * X**2 + ck * dW * X) * amp
            meas_p = np.fft.ifft((-0.25 * prm.kappa_tilde * dt * P**2 + ckt * dWt * P) * phi)
            new = free + meas_q + meas_p
        norm = math.sqrt(np.sum(np.abs(new) ** 2) * dx)
        if not norm >= 0.5:
            raise NormCollapseError(
                f"pre-normalization norm {norm:.3g} < 0.5; reduce dt"
            )
        new = new / norm
        if self.guard:
            check_boundary(new)
        return new, norm


def sse_step(psi: GridWavefunction, params: PhysicalParams, u: Controls, dW, dW_tilde, dt,
             scheme: str = "exponential") -> GridWavefunction:
    """Advance a normalized grid wavefunction by one stochastic step."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    stepper = _Stepper(psi.grid, params, scheme)
    amp, _ = stepper.step(np.asarray(psi.amplitudes, dtype=complex), u, dW, dW_tilde, dt)
    return GridWavefunction(psi.grid, amp)


def grid_characteristic_fn(psi: GridWavefunction, hbar: float, r: float, s: float) -> complex:
    """Quadrature of ``<psi| exp(i r q + i s p) |psi>``.

    Uses ``exp(i r q + i s p) = exp(i r s hbar / 2) exp(i r q) exp(i s p)``
    with ``exp(i s p)`` applied as a spectral translation.
    """
    g = psi.grid
    shifted = np.fft.ifft(np.fft.fft(psi.amplitudes) * np.exp(1j * s * g.momenta(hbar)))
    val = np.vdot(psi.amplitudes, np.exp(1j * r * g.x) * shifted) * g.dx
    return complex(np.exp(0.5j * r * s * hbar) * val)


def suggest_grid(state0: ExtendedCoherentState, params: PhysicalParams, T: float,
                 n_points: int = 2048, n_sd: float = 10.0) -> GridSpec:
    """Grid heuristic: ``n_sd`` position standard deviations plus drift range.

    The drift range is the excursion of the noise-free, uncontrolled mean
    orbit plus five standard deviations of the accumulated innovation
    noise on ``q_bar``. Raises :class:`GridCoverageError` if ``n_points``
    is too few to resolve the momentum spread on the resulting window.
    """
    n_eval = 2000
    h = T / n_eval
    eta = _riccati_path(state0.eta, params, h, n_eval)
    c_qq, c_qp, c_pp = covariance_values(eta, params.hbar)
    sd_q = float(np.sqrt(c_qq).max())
    sd_p = float(np.sqrt(c_pp).max())
    innov = np.sum((2 * params.kappa * c_qq**2 + 2 * params.kappa_tilde * c_qp**2)[:-1]) * h
    innov_p = np.sum((2 * params.kappa * c_qp**2 + 2 * params.kappa_tilde * c_pp**2)[:-1]) * h
    orbit = propagate_filter(state0, params, None, NoisePath.zeros(h, n_eval))
    excursion = float(np.abs(orbit.q_bar - state0.q_bar).max())
    half = max(n_sd * sd_q + excursion + 5.0 * math.sqrt(innov), support_halfwidth(state0))
    grid = GridSpec(state0.q_bar - half, state0.q_bar + half, n_points)
    p_need = float(np.abs(orbit.p_bar).max()) + 5.0 * math.sqrt(innov_p) + n_sd * sd_p
    if grid.p_max(params.hbar) < p_need:
        raise GridCoverageError(
            f"{n_points} points give p_max = {grid.p_max(params.hbar):.3g} < required {p_need:.3g}"
        )
    return grid


def _scales(ecs):
    q, p, cqq, cqp, cpp = ecs.T
    return np.array([
        max(np.abs(q).max(), np.sqrt(cqq).max()),
        max(np.abs(p).max(), np.sqrt(cpp).max()),
        np.abs(cqq).max(),
        max(np.abs(cqp).max(), np.sqrt(cqq * cpp).max()),
        np.abs(cpp).max(),
    ])


@dataclass
class ComparisonReport:
    """Grid-vs-parametric time series and their worst-case disagreement.

    Relative deviations divide the maximum absolute deviation of each
    moment by a scale: for the means, the larger of the mean's range and
    its standard deviation; for ``c_qp``, the larger of its range and
    ``sqrt(c_qq c_pp)``; for the variances, their range.
    """

    times: np.ndarray
    grid_moments: np.ndarray
    ecs_moments: np.ndarray
    fidelity: np.ndarray
    params: PhysicalParams
    dt: float
    seed: Optional[int]
    n_points: int
    scheme: str
    max_abs_deviation: dict = field(init=False)
    max_rel_deviation: dict = field(init=False)

    def __post_init__(self):
        dev = np.abs(self.grid_moments - self.ecs_moments).max(axis=0)
        rel = dev / _scales(self.ecs_moments)
        self.max_abs_deviation = dict(zip(MOMENT_NAMES, map(float, dev)))
        self.max_rel_deviation = dict(zip(MOMENT_NAMES, map(float, rel)))

    @property
    def min_fidelity(self) -> float:
        return float(self.fidelity.min())

    @property
    def worst_rel_deviation(self) -> float:
        return max(self.max_rel_deviation.values())

    def to_dict(self):
        return {
            "schema_version": 1,
            "artifact_version": __version__,
            "params": vars(self.params),
            "seed": self.seed,
            "dt": self.dt,
            "n_points": self.n_points,
            "scheme": self.scheme,
            "horizon": float(self.times[-1]),
            "min_fidelity": self.min_fidelity,
            "max_abs_deviation": self.max_abs_deviation,
            "max_rel_deviation": self.max_rel_deviation,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def write_csv(self, path):
        cols = ["t"] + [f"grid_{n}" for n in MOMENT_NAMES] + [f"ecs_{n}" for n in MOMENT_NAMES] + ["fidelity"]
        arrays = [self.times, *self.grid_moments.T, *self.ecs_moments.T, self.fidelity]
        prov = {"seed": self.seed, "dt": self.dt, "version": __version__}
        write_series_csv(path, cols, arrays, prov)


def run_oracle_comparison(state0: ExtendedCoherentState, params: PhysicalParams,
                          policy: Optional[Policy], noise: NoisePath, grid: GridSpec,
                          record_every: Optional[int] = None,
                          scheme: str = "exponential") -> ComparisonReport:
    """Integrate the grid equation and the parametric filter on one noise path.

    The controls are computed once, from the parametric filter state, and
    applied identically to both integrations.
    """
    hb = params.hbar
    traj = propagate_filter(state0, params, policy, noise)
    if record_every is None:
        record_every = max(1, noise.n_steps // 200)
    psi = sample_wavefunction(state0, hb, grid)
    stepper = _Stepper(grid, params, scheme)
    amp = np.asarray(psi.amplitudes, dtype=complex)
    x, p, dx = grid.x, grid.momenta(hb), grid.dx

    rec_t, rec_g, rec_e, rec_f = [], [], [], []

    def record(k, amp):
        phi = np.fft.fft(amp)
        check_momentum_boundary(phi)
        rec_t.append(traj.times[k])
        rec_g.append(_moments_from(amp, phi, x, p, dx))
        eta = traj.eta[k]
        rec_e.append((traj.q_bar[k], traj.p_bar[k], *covariance_values(eta, hb)))
        ecs = ecs_amplitudes(traj.q_bar[k], traj.p_bar[k], eta, hb, x)
        ov = abs(np.vdot(ecs, amp)) * dx
        rec_f.append(ov / math.sqrt(np.sum(np.abs(ecs) ** 2) * dx))

    record(0, amp)
    dW, dWt, dt = noise.dW, noise.dW_tilde, noise.dt
    for k in range(noise.n_steps):
        u = Controls(traj.f[k], traj.v[k]) if policy is not None else ZERO_CONTROLS
        amp, _ = stepper.step(amp, u, dW[k], dWt[k], dt)
        if (k + 1) % record_every == 0 or k + 1 == noise.n_steps:
            record(k + 1, amp)

    return ComparisonReport(
        times=np.array(rec_t),
        grid_moments=np.array(rec_g, dtype=float),
        ecs_moments=np.array(rec_e, dtype=float),
        fidelity=np.array(rec_f),
        params=params,
        dt=dt,
        seed=noise.seed,
        n_points=grid.n_points,
        scheme=scheme,
    )


def grid_trajectory(psi0: GridWavefunction, params: PhysicalParams, noise: NoisePath,
                    controls=None, scheme="exponential"):
    """Grid moments after every step (shape ``(n_steps + 1, 5)``).

    ``controls`` is an optional ``(n_steps, 2)`` array of ``(f, v)`` per step.
    """
    stepper = _Stepper(psi0.grid, params, scheme)
    amp = np.asarray(psi0.amplitudes, dtype=complex)
    out = np.empty((noise.n_steps + 1, 5))
    out[0] = moments(psi0, params.hbar)
    for k in range(noise.n_steps):
        u = ZERO_CONTROLS if controls is None else Controls(*controls[k])
        amp, _ = stepper.step(amp, u, noise.dW[k], noise.dW_tilde[k], noise.dt)
        out[k + 1] = moments(GridWavefunction(psi0.grid, amp), params.hbar, check=False)
    return out, GridWavefunction(psi0.grid, amp)
