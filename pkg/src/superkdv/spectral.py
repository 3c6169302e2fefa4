"""Periodic grid and Fourier kernels shared by the solver and the observables.

All kernels act on the last axis, so channel arrays ``(dim, N)`` of
algebra-valued fields are handled channel by channel.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# boundary decay contract for line-approximation quantities
DECAY_TOL = 1e-10


class DecayContractError(ValueError):
    """Field is not negligible at the edge of the periodic box."""


@dataclass(frozen=True)
class Grid:
    L: float
    N: int

    def __post_init__(self):
        if self.N < 64 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 64, got {self.N}")
        if self.L <= 0:
            raise ValueError("L must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @cached_property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.N)

    @cached_property
    def k(self) -> np.ndarray:
        return np.fft.rfftfreq(self.N, d=self.dx) * 2.0 * np.pi

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kmax = np.pi / self.dx
        return (np.abs(self.k) < 2.0 / 3.0 * kmax).astype(float)

    def multiplier(self, order: int) -> np.ndarray:
        m = (1j * self.k) ** order
        if order % 2:
            m[-1] = 0.0  # Nyquist mode has no odd derivative
        return m

    def to_dict(self) -> dict:
        return {"L": self.L, "N": self.N}


def spectral_dx(f: np.ndarray, grid: Grid, order: int = 1) -> np.ndarray:
    """k-th derivative along the last axis via the Fourier multiplier (ik)^k."""
    if order == 0:
        return np.array(f, dtype=float, copy=True)
    return np.fft.irfft(grid.multiplier(order) * np.fft.rfft(f, axis=-1), n=grid.N, axis=-1)


def integrate(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Periodic trapezoid rule over the box (spectrally accurate for smooth data)."""
    return grid.dx * np.sum(f, axis=-1)


def boundary_max(f: np.ndarray, cells: int = 2) -> float:
    f = np.asarray(f)
    if f.size == 0:
        return 0.0
    edge = np.concatenate([f[..., :cells], f[..., -cells:]], axis=-1)
    return float(np.max(np.abs(edge)))


def check_decay(f: np.ndarray, tol: float = DECAY_TOL, what: str = "field"):
    b = boundary_max(f)
    if b > tol:
        raise DecayContractError(f"{what} is {b:.3e} at the box edge (limit {tol:.1e})")


def antiderivative(f: np.ndarray, grid: Grid, tol: float | None = DECAY_TOL) -> np.ndarray:
    """Integral from the left edge, F(-L) = 0.

    The zero-mean part is integrated in Fourier space and the mean is carried
    by a linear ramp, so F is exact to spectral accuracy at the nodes.
    """
    f = np.asarray(f, dtype=float)
    if tol is not None:
        check_decay(f, tol, "antiderivative integrand")
    fh = np.fft.rfft(f, axis=-1)
    mean = fh[..., :1].real / grid.N
    gh = fh.copy()
    gh[..., 0] = 0.0
    k = grid.k.copy()
    k[0] = 1.0
    gh = gh / (1j * k)
    gh[..., -1] = 0.0
    g = np.fft.irfft(gh, n=grid.N, axis=-1)
    return g - g[..., :1] + mean * (grid.x + grid.L)


def spectral_shift(f: np.ndarray, grid: Grid, tau: float) -> np.ndarray:
    """Translate f(x) -> f(x - tau) with a Fourier phase."""
    ph = np.exp(-1j * grid.k * tau)
    ph[-1] = np.cos(grid.k[-1] * tau)
    return np.fft.irfft(ph * np.fft.rfft(f, axis=-1), n=grid.N, axis=-1)
