"""Uniform periodic position grids and wavefunctions sampled on them.

Momentum-space quantities use the discrete Fourier transform, so the
momentum values attached to a grid are ``hbar * 2*pi * fftfreq(n, dx)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridCoverageError

#: Boundary amplitudes must stay below this fraction of the peak modulus.
BOUNDARY_GUARD = 1e-6
#: Number of nodes at each grid edge inspected by the guard.
GUARD_WIDTH = 4


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid ``x_j = x_min + j*dx`` for ``j = 0..n_points-1``."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise DomainError("x_max must exceed x_min")
        n = int(self.n_points)
        if n < 256 or n & (n - 1):
            raise DomainError("n_points must be a power of two >= 256")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    def momenta(self, hbar: float) -> np.ndarray:
        """Momentum value of each FFT bin, in FFT order."""
        return hbar * 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def p_max(self, hbar: float) -> float:
        return np.pi * hbar / self.dx


@dataclass(frozen=True)
class GridWavefunction:
    grid: GridSpec
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx))

    def normalized(self) -> "GridWavefunction":
        return GridWavefunction(self.grid, self.amplitudes / self.norm())


def check_boundary(amplitudes, what="position"):
    """Raise :class:`GridCoverageError` when mass reaches the grid edges.

    Periodic spectral operations silently wrap any amplitude that reaches
    the edge, so this is checked rather than tolerated.
    """
    mod = np.abs(amplitudes)
    peak = mod.max()
    edge = max(mod[:GUARD_WIDTH].max(), mod[-GUARD_WIDTH:].max())
    if not np.isfinite(peak) or peak == 0.0:
        raise GridCoverageError(f"{what}-space amplitudes are zero or non-finite")
    if edge > BOUNDARY_GUARD * peak:
        raise GridCoverageError(
            f"{what}-space amplitude at grid edge is {edge / peak:.2e} of peak "
            f"(guard {BOUNDARY_GUARD:.0e}); enlarge or refine the grid"
        )


def check_momentum_boundary(phi):
    """Momentum-space counterpart of :func:`check_boundary` (FFT order)."""
    mod = np.abs(phi)
    peak = mod.max()
    mid = mod.size // 2
    edge = mod[mid - GUARD_WIDTH:mid + GUARD_WIDTH].max()
    if edge > BOUNDARY_GUARD * peak:
        raise GridCoverageError(
            f"momentum-space amplitude near p_max is {edge / peak:.2e} of peak; "
            "refine the grid (smaller dx)"
        )


def moments(psi: GridWavefunction, hbar: float, check: bool = True):
    """Means and symmetrized central second moments of a grid wavefunction.

    Position moments come from real-space quadrature; the momentum operator
    is applied spectrally, ``p psi = ifft(p_k * fft(psi))``.

    Returns
    -------
    tuple of float
        ``(q_mean, p_mean, c_qq, c_qp, c_pp)`` where ``c_qp`` is the
        covariance of the symmetrized product ``(qp + pq)/2``.
    """
    grid = psi.grid
    amp = np.asarray(psi.amplitudes)
    dx = grid.dx
    norm2 = np.sum(np.abs(amp) ** 2) * dx
    if abs(norm2 - 1.0) > 1e-6:
        raise DomainError(f"wavefunction not normalized (norm^2 = {norm2:.8f})")
    phi = np.fft.fft(amp)
    if check:
        check_boundary(amp)
        check_momentum_boundary(phi)
    return _moments_from(amp, phi, grid.x, grid.momenta(hbar), dx)


def _moments_from(amp, phi, x, p, dx):
    prob = np.abs(amp) ** 2 * dx
    q_mean = float(np.sum(x * prob))
    dq = x - q_mean
    c_qq = float(np.sum(dq * dq * prob))
    p_psi = np.fft.ifft(p * phi)
    p_mean = float(np.real(np.vdot(amp, p_psi)) * dx)
    dp_psi = p_psi - p_mean * amp
    c_pp = float(np.sum(np.abs(dp_psi) ** 2) * dx)
    c_qp = float(np.real(np.vdot(amp, dq * dp_psi)) * dx)
    return q_mean, p_mean, c_qq, c_qp, c_pp


def overlap(a: GridWavefunction, b: GridWavefunction) -> complex:
    """Discrete inner product ``<a|b>``."""
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.dx)


def fidelity(a: GridWavefunction, b: GridWavefunction) -> float:
    """Modulus of the overlap of two normalized wavefunctions."""
    return abs(overlap(a, b)) / (a.norm() * b.norm())
