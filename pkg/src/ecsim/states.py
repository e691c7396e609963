"""Extended coherent states: Gaussian pure states with complex inverse variance.

A state is parameterized by its mean position ``q_bar``, mean momentum
``p_bar`` and a complex ``eta = eta_re + 1j*eta_im`` with ``eta_re > 0``.
Its position-space wavefunction is::

    psi(x) = (eta_re / 2pi)**(1/4) * exp(-eta/4 * (x - q_bar)**2 + 1j*p_bar*x/hbar)

Real ``eta`` gives an ordinary coherent state; ``eta_im != 0`` correlates
position and momentum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridCoverageError
from .grid import GridSpec, GridWavefunction, check_momentum_boundary

#: States with ``eta_re`` at or below this value are rejected as degenerate.
ETA_RE_MIN = 1e-12


@dataclass(frozen=True)
class PhysicalParams:
    """Particle and measurement constants.

    The Hamiltonian is ``p**2/(2m) + hbar*mu*q**2/2 - f*q + v*p``;
    ``kappa`` and ``kappa_tilde`` are the position and momentum measurement
    strengths. ``mu`` may be negative (inverted potential).
    """

    mass: float = 1.0
    hbar: float = 1.0
    mu: float = 0.0
    kappa: float = 0.0
    kappa_tilde: float = 0.0

    def __post_init__(self):
        for name in ("mass", "hbar", "mu", "kappa", "kappa_tilde"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.mass <= 0:
            raise DomainError("mass must be positive")
        if self.hbar <= 0:
            raise DomainError("hbar must be positive")
        if self.kappa < 0 or self.kappa_tilde < 0:
            raise DomainError("measurement strengths must be non-negative")

    @classmethod
    def natural(cls, mu=0.0, kappa=0.0, kappa_tilde=0.0):
        """Natural units ``hbar = m = 1``."""
        return cls(mass=1.0, hbar=1.0, mu=mu, kappa=kappa, kappa_tilde=kappa_tilde)

    @classmethod
    def tuned_harmonic(cls, omega=1.0, kappa_tilde=1.0, mass=1.0, hbar=1.0):
        """Harmonic oscillator with ``kappa = m**2 omega**2 kappa_tilde``.

        The relaxed state of this family is a coherent state.
        """
        return cls(
            mass=mass,
            hbar=hbar,
            mu=mass * omega**2 / hbar,
            kappa=mass**2 * omega**2 * kappa_tilde,
            kappa_tilde=kappa_tilde,
        )


@dataclass(frozen=True)
class ExtendedCoherentState:
    q_bar: float
    p_bar: float
    eta_re: float
    eta_im: float = 0.0

    def __post_init__(self):
        validate_eta(complex(self.eta_re, self.eta_im))
        if not (math.isfinite(self.q_bar) and math.isfinite(self.p_bar)):
            raise DomainError("q_bar and p_bar must be finite")

    @property
    def eta(self) -> complex:
        return complex(self.eta_re, self.eta_im)

    @classmethod
    def from_eta(cls, q_bar, p_bar, eta):
        eta = complex(eta)
        return cls(float(q_bar), float(p_bar), eta.real, eta.imag)

    def with_eta(self, eta) -> "ExtendedCoherentState":
        return ExtendedCoherentState.from_eta(self.q_bar, self.p_bar, eta)


@dataclass(frozen=True)
class CovarianceTriple:
    c_qq: float
    c_qp: float
    c_pp: float

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.c_qq, self.c_qp], [self.c_qp, self.c_pp]])


@dataclass(frozen=True)
class Controls:
    """External force ``f`` and velocity field ``v``."""

    f: float = 0.0
    v: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.f) and math.isfinite(self.v)):
            raise DomainError("controls must be finite")


ZERO_CONTROLS = Controls()


def validate_eta(eta):
    if not np.isfinite(eta) or eta.real <= ETA_RE_MIN:
        raise DomainError(
            f"eta_re must exceed {ETA_RE_MIN:g} (got eta = {eta!r})"
        )


def covariance_values(eta, hbar):
    """``(c_qq, c_qp, c_pp)`` for a complex eta (scalar or array)."""
    er = np.real(eta)
    ei = np.imag(eta)
    # Adding 0.0 turns the -0.0 of a real eta into +0.0.
    return 1.0 / er, -hbar * ei / (2.0 * er) + 0.0, 0.25 * hbar**2 * (er + ei**2 / er)


def covariances(state: ExtendedCoherentState, hbar: float) -> CovarianceTriple:
    """Variances and symmetrized covariance of position and momentum.

    >>> covariances(ExtendedCoherentState(0.0, 0.0, 1.0, 1.0), hbar=1.0)
    CovarianceTriple(c_qq=1.0, c_qp=-0.5, c_pp=0.5)
    """
    validate_eta(state.eta)
    c_qq, c_qp, c_pp = covariance_values(state.eta, hbar)
    return CovarianceTriple(float(c_qq), float(c_qp), float(c_pp))


def characteristic_fn(state: ExtendedCoherentState, hbar: float, r, s):
    """Expectation of the Weyl operator ``exp(i r q + i s p)``.

    ``r`` and ``s`` may be arrays; they broadcast against each other.
    """
    cov = covariances(state, hbar)
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    quad = cov.c_qq * r * r + 2.0 * cov.c_qp * r * s + cov.c_pp * s * s
    out = np.exp(1j * (r * state.q_bar + s * state.p_bar) - 0.5 * quad)
    return complex(out) if out.ndim == 0 else out


def weyl_independence_defect(state: ExtendedCoherentState, hbar: float, r, s):
    """``|G(r, s) - G(r, 0) G(0, s)|``; zero for every ``(r, s)`` iff eta is real."""
    joint = characteristic_fn(state, hbar, r, s)
    split = characteristic_fn(state, hbar, r, 0.0) * characteristic_fn(state, hbar, 0.0, s)
    out = np.abs(joint - split)
    return float(out) if np.ndim(out) == 0 else out


def uncertainty_product(state: ExtendedCoherentState, hbar: float) -> float:
    """``c_qq c_pp - c_qp**2``, which equals ``hbar**2 / 4`` for every state."""
    cov = covariances(state, hbar)
    return cov.c_qq * cov.c_pp - cov.c_qp**2


def support_halfwidth(state: ExtendedCoherentState) -> float:
    """Half-width ``8 / sqrt(eta_re)`` a grid must cover around ``q_bar``."""
    return 8.0 / math.sqrt(state.eta_re)


def ecs_amplitudes(q_bar, p_bar, eta, hbar, x):
    eta = complex(eta)
    return (eta.real / (2.0 * np.pi)) ** 0.25 * np.exp(
        -0.25 * eta * (x - q_bar) ** 2 + 1j * p_bar * x / hbar
    )


def sample_wavefunction(state: ExtendedCoherentState, hbar: float, grid: GridSpec,
                        norm_tol: float = 1e-10) -> GridWavefunction:
    """Evaluate the defining formula at the grid nodes.

    No renormalization is applied; a discrete norm further than
    ``norm_tol`` from one means the grid under-resolves the state and
    raises :class:`GridCoverageError`, as does a window narrower than
    ``support_halfwidth(state)`` on either side of ``q_bar``, or momentum
    content reaching the Nyquist bins.
    """
    w = support_halfwidth(state)
    if state.q_bar - w < grid.x_min or state.q_bar + w > grid.x_max:
        raise GridCoverageError(
            f"grid [{grid.x_min}, {grid.x_max}] does not cover "
            f"q_bar +/- {w:.4g} = [{state.q_bar - w:.4g}, {state.q_bar + w:.4g}]"
        )
    psi = GridWavefunction(grid, ecs_amplitudes(state.q_bar, state.p_bar, state.eta, hbar, grid.x))
    norm = psi.norm()
    if abs(norm - 1.0) > norm_tol:
        raise GridCoverageError(
            f"sampled norm {norm:.12f} deviates from 1 by more than {norm_tol:g}; refine the grid"
        )
    # A chirp too steep for dx aliases without changing the norm.
    check_momentum_boundary(np.fft.fft(psi.amplitudes))
    return psi
