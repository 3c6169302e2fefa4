"""Method-of-lines solvers for KdV, super-KdV, super-Gardner and the
Clifford-valued broken system on a periodic box.

Fields are channel arrays ``(dim, N)`` in a common algebra; ``u`` is even
(body only for the broken system) and ``xi`` is odd.  Each system is
``field_t = c * field''' + nonlinear``; the third-derivative part is
integrated exactly in Fourier space by the default IFRK4 scheme.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .algebra import Algebra, get_algebra
from .spectral import DECAY_TOL, DecayContractError, Grid, boundary_max, check_decay, spectral_dx

# plain RK4 is stable on the imaginary axis up to 2√2; |λ| <= (π/dx)^3
RK4_CFL = 2.0 * math.sqrt(2.0) / math.pi ** 3
BLOWUP_LIMIT = 1e8


class BlowUpError(RuntimeError):
    def __init__(self, message, t_last):
        super().__init__(message)
        self.t_last = t_last


class ConfigurationError(ValueError):
    pass


class ConstraintError(RuntimeError):
    pass


class ParityError(ValueError):
    pass


@dataclass(frozen=True)
class FieldState:
    grid: Grid
    t: float
    u: np.ndarray
    xi: np.ndarray
    algebra: Algebra

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        dim = self.algebra.dim
        shape = (dim, self.grid.N)
        if u.shape != shape or xi.shape != shape:
            raise ValueError(f"fields must have shape {shape}, got {u.shape} and {xi.shape}")
        grades = self.algebra.grades
        if np.any(u[grades % 2 == 1]):
            raise ParityError("u must be even")
        if np.any(xi[grades % 2 == 0]):
            raise ParityError("xi must be odd")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "xi", xi)

    @classmethod
    def zeros(cls, grid, algebra, t=0.0):
        return cls(grid, t, algebra.zeros(grid.N), algebra.zeros(grid.N), algebra)

    def with_fields(self, u=None, xi=None, t=None) -> "FieldState":
        return replace(self, u=self.u if u is None else u, xi=self.xi if xi is None else xi,
                       t=self.t if t is None else t)

    def boundary_residual(self) -> float:
        return max(boundary_max(self.u), boundary_max(self.xi))

    def check_decay(self, tol=DECAY_TOL):
        check_decay(self.u, tol, "u")
        check_decay(self.xi, tol, "xi")


@dataclass(frozen=True)
class SchemeConfig:
    dt: float = 1e-3
    method: str = "IFRK4"
    dealias: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.method not in ("RK4", "IFRK4"):
            raise ConfigurationError(f"unknown method {self.method!r}")

    def check_cfl(self, grid: Grid):
        if self.method == "RK4" and self.dt > RK4_CFL * grid.dx ** 3:
            raise ConfigurationError(
                f"RK4 needs dt <= {RK4_CFL:.4f}*dx^3 = {RK4_CFL * grid.dx ** 3:.3e}, got {self.dt}")

    def to_dict(self) -> dict:
        return {"dt": self.dt, "method": self.method, "dealias": self.dealias}


# -- systems -------------------------------------------------------------------

class System:
    """field_t = lin * field''' + N(u, xi), with N returned in Fourier space."""

    name = "system"
    lin_u = 1.0
    lin_xi = 1.0

    def u_channels(self, alg: Algebra):
        return alg.channels("even")

    def xi_channels(self, alg: Algebra):
        return alg.channels("odd")

    def check_algebra(self, alg: Algebra):
        pass

    def nonlinear_hat(self, grid, alg, u, xi):
        raise NotImplementedError

    def rhs(self, state: FieldState) -> FieldState:
        self.check_algebra(state.algebra)
        g = state.grid
        nu, nxi = self.nonlinear_hat(g, state.algebra, state.u, state.xi)
        m3 = g.multiplier(3)
        uh = np.fft.rfft(state.u, axis=-1)
        xih = np.fft.rfft(state.xi, axis=-1)
        du = np.fft.irfft(self.lin_u * m3 * uh + nu, n=g.N, axis=-1)
        dxi = np.fft.irfft(self.lin_xi * m3 * xih + nxi, n=g.N, axis=-1)
        return _derivative_state(state, du, dxi)


def _derivative_state(state, du, dxi):
    alg = state.algebra
    du[alg.grades % 2 == 1] = 0.0
    dxi[alg.grades % 2 == 0] = 0.0
    return FieldState(state.grid, state.t, du, dxi, alg)


def _dhat(grid, f):
    return grid.multiplier(1) * np.fft.rfft(f, axis=-1)


class KdV(System):
    """u_t = u''' + 6 u u'."""

    name = "kdv"

    def check_algebra(self, alg):
        if alg.kind != "real":
            raise ConfigurationError("KdV runs on real fields")

    def xi_channels(self, alg):
        return []

    def nonlinear_hat(self, grid, alg, u, xi):
        return _dhat(grid, 3.0 * u * u), np.zeros_like(np.fft.rfft(xi, axis=-1))


class SKdV(System):
    """u_t = u''' + 6uu' - 3ξξ'',  ξ_t = ξ''' + 3(ξu)'.

    The u flux uses 3(u² - ξξ'), equal to the above because ξ'ξ' = 0.
    """

    name = "skdv"

    def check_algebra(self, alg):
        if alg.kind == "clifford":
            raise ConfigurationError("super-KdV needs Grassmann (or real) coefficients")

    def nonlinear_hat(self, grid, alg, u, xi):
        dxi = spectral_dx(xi, grid, 1)
        flux_u = 3.0 * (alg.mul_arrays(u, u, "even", "even") - alg.mul_arrays(xi, dxi, "odd", "odd"))
        flux_xi = 3.0 * alg.mul_arrays(xi, u, "odd", "even")
        return _dhat(grid, flux_u), _dhat(grid, flux_xi)


class Broken(System):
    """u_t = -u''' - uu' - ¼(P(ξξ̄))',  ξ_t = -ξ''' - ½(ξu)'."""

    name = "broken"
    lin_u = -1.0
    lin_xi = -1.0

    def check_algebra(self, alg):
        if alg.kind == "grassmann":
            raise ConfigurationError("the broken system takes Clifford (or real) coefficients")

    def u_channels(self, alg):
        return [0]

    def nonlinear_hat(self, grid, alg, u, xi):
        if alg.kind == "clifford":
            p = alg.body_projection_arrays(xi)
        else:
            p = np.zeros(grid.N)
        flux_u = alg.zeros(grid.N)
        flux_u[0] = -(0.5 * u[0] * u[0] + 0.25 * p)
        flux_xi = -0.5 * xi * u[0]
        return _dhat(grid, flux_u), _dhat(grid, flux_xi)


class Gardner(System):
    """Component super-Gardner system compiled from the superfield equation."""

    name = "gardner"

    def __init__(self, eps: float, components=None):
        if components is None:
            components = gardner_components()
        if components is None or getattr(components, "lower", None) is None:
            raise ConfigurationError("missing compiled super-Gardner system")
        self.eps = float(eps)
        self.xi_lin, self.xi_rest = _split_linear(components.lower, "xi")
        self.u_lin, self.u_rest = _split_linear(components.upper, "u")
        self.lin_u, self.lin_xi = 1.0, 1.0

    def check_algebra(self, alg):
        if alg.kind == "clifford":
            raise ConfigurationError("super-Gardner needs Grassmann (or real) coefficients")

    def nonlinear_hat(self, grid, alg, u, xi):
        from .symbolics.components import FieldEnv

        env = FieldEnv(grid, u, xi, alg, eps=self.eps, decay_tol=None)
        nu = env.evaluate(self.u_rest)
        nxi = env.evaluate(self.xi_rest)
        return np.fft.rfft(nu, axis=-1), np.fft.rfft(nxi, axis=-1)


def _split_linear(expr, field_name):
    from .symbolics.components import ComponentExpr

    lin = {}
    rest = {}
    for (e, atoms), c in expr.terms.items():
        if e == 0 and len(atoms) == 1 and atoms[0] == (field_name, 3):
            lin[(e, atoms)] = c
        else:
            rest[(e, atoms)] = c
    if set(lin.values()) - {1}:
        raise ConfigurationError("unexpected third-derivative coefficient")
    return ComponentExpr(lin), ComponentExpr(rest)


@lru_cache(maxsize=1)
def gardner_components():
    from .symbolics.superexpr import gardner_equation_rhs, to_components

    return to_components(gardner_equation_rhs())


@lru_cache(maxsize=1)
def gardner_map_components():
    from .symbolics.superexpr import chi, gardner_forward, to_components

    return to_components(gardner_forward(chi()))


SYSTEMS = {"kdv": KdV, "skdv": SKdV, "broken": Broken}


def make_system(name: str, eps: float | None = None) -> System:
    if name == "gardner":
        if eps is None:
            raise ConfigurationError("the gardner system needs eps")
        return Gardner(eps)
    try:
        return SYSTEMS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown system {name!r}") from None


def rhs_kdv(s: FieldState) -> FieldState:
    return KdV().rhs(s)


def rhs_skdv(s: FieldState) -> FieldState:
    return SKdV().rhs(s)


def rhs_gardner(s: FieldState, eps: float, components=None) -> FieldState:
    return Gardner(eps, components).rhs(s)


def rhs_broken(s: FieldState) -> FieldState:
    return Broken().rhs(s)


def gardner_map(s: FieldState, eps: float) -> FieldState:
    """Φ = χ + ε D²χ - ε² χ Dχ applied to a state holding χ."""
    from .symbolics.components import FieldEnv

    pair = gardner_map_components()
    env = FieldEnv(s.grid, s.u, s.xi, s.algebra, eps=eps, decay_tol=None)
    return s.with_fields(u=env.evaluate(pair.upper), xi=env.evaluate(pair.lower))


# -- time stepping ---------------------------------------------------------------

class _Packed:
    """Active channels of (u, xi) stacked into one real array."""

    def __init__(self, system: System, alg: Algebra, grid: Grid):
        self.uc = list(system.u_channels(alg))
        self.xc = list(system.xi_channels(alg))
        self.alg, self.grid, self.system = alg, grid, system
        lin = np.array([system.lin_u] * len(self.uc) + [system.lin_xi] * len(self.xc))
        self.linear = lin[:, None] * grid.multiplier(3)[None, :]

    def pack(self, u, xi):
        return np.concatenate([u[self.uc], xi[self.xc]], axis=0)

    def unpack(self, y):
        u = self.alg.zeros(self.grid.N)
        xi = self.alg.zeros(self.grid.N)
        nu = len(self.uc)
        u[self.uc] = y[:nu]
        xi[self.xc] = y[nu:]
        return u, xi


def integrate(s: FieldState, system: System, scheme: SchemeConfig, T: float,
              sample_interval: float | None = None, callback=None) -> list[FieldState]:
    """Advance ``s`` by T (negative T runs backwards) and return sampled states.

    Samples are taken at t0 and every ``sample_interval`` (default: only the
    endpoints).  ``callback(state)`` is invoked on each sample as it is taken.
    """
    if isinstance(system, str):
        system = make_system(system)
    system.check_algebra(s.algebra)
    scheme.check_cfl(s.grid)
    grid, alg = s.grid, s.algebra
    nsteps = int(round(abs(T) / scheme.dt))
    if not math.isclose(nsteps * scheme.dt, abs(T), rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigurationError("T must be a multiple of dt")
    dt = math.copysign(scheme.dt, T) if T else scheme.dt
    every = nsteps if not sample_interval else int(round(sample_interval / scheme.dt))
    if every <= 0 or (sample_interval and not math.isclose(every * scheme.dt, sample_interval, rel_tol=1e-9)):
        raise ConfigurationError("sample_interval must be a positive multiple of dt")

    pk = _Packed(system, alg, grid)
    mask = grid.dealias_mask if scheme.dealias else None

    def nonlinear(yh):
        y = np.fft.irfft(yh, n=grid.N, axis=-1)
        u, xi = pk.unpack(y)
        nu, nxi = system.nonlinear_hat(grid, alg, u, xi)
        out = np.concatenate([nu[pk.uc], nxi[pk.xc]], axis=0)
        if mask is not None:
            out *= mask
        return out

    yh = np.fft.rfft(pk.pack(s.u, s.xi), axis=-1)
    t0 = s.t
    samples = []

    def record(i, yh):
        u, xi = pk.unpack(np.fft.irfft(yh, n=grid.N, axis=-1))
        st = FieldState(grid, t0 + i * dt, u, xi, alg)
        samples.append(st)
        if callback is not None:
            callback(st)

    record(0, yh)
    lin = pk.linear
    # IFRK4 steps v = exp(-L s) ŷ with RK4; the phases are recomputed from s at
    # every stage, so their rounding does not compound into amplitude drift
    v = yh

    def phase(s):
        return np.exp(lin * s)

    def f(s, w):
        p = phase(s)
        return np.conj(p) * nonlinear(p * w)

    for i in range(1, nsteps + 1):
        if scheme.method == "IFRK4":
            s = (i - 1) * dt
            k1 = dt * f(s, v)
            k2 = dt * f(s + dt / 2, v + k1 / 2)
            k3 = dt * f(s + dt / 2, v + k2 / 2)
            k4 = dt * f(s + dt, v + k3)
            v = v + (k1 + 2 * k2 + 2 * k3 + k4) / 6
            yh = phase(i * dt) * v
        else:
            f = lambda z: lin * z + nonlinear(z)  # noqa: E731
            k1 = f(yh)
            k2 = f(yh + dt / 2 * k1)
            k3 = f(yh + dt / 2 * k2)
            k4 = f(yh + dt * k3)
            yh = yh + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(yh)) or np.max(np.abs(yh)) > BLOWUP_LIMIT * grid.N:
            raise BlowUpError(f"{system.name} blew up near t={t0 + i * dt:.6g}", t0 + (i - 1) * dt)
        if i % every == 0 or i == nsteps:
            record(i, yh)
    return samples


# -- initial data ------------------------------------------------------------------

def soliton_profile(C: float, x, t: float = 0.0) -> np.ndarray:
    """3C sech²(½√C (x - Ct)), the one-soliton of u_t + u''' + uu' = 0."""
    z = 0.5 * math.sqrt(C) * (np.asarray(x) - C * t)
    return 3.0 * C / np.cosh(z) ** 2


def kdv6_soliton_profile(kappa: float, x, t: float = 0.0) -> np.ndarray:
    """2κ² sech²(κ(x + 4κ²t)), the one-soliton of u_t = u''' + 6uu'."""
    return 2.0 * kappa ** 2 / np.cosh(kappa * (np.asarray(x) + 4.0 * kappa ** 2 * t)) ** 2


def soliton_state(C: float, grid: Grid, algebra: Algebra | None = None) -> FieldState:
    if not C > 0:
        raise ValueError("soliton speed C must be positive")
    algebra = algebra or get_algebra("real")
    prof = soliton_profile(C, grid.x)
    if boundary_max(prof) > DECAY_TOL:
        raise DecayContractError(f"box half-length {grid.L} too small for C={C}")
    u = algebra.zeros(grid.N)
    u[0] = prof
    return FieldState(grid, 0.0, u, algebra.zeros(grid.N), algebra)


def bump_field(rng, x, bumps=3, centre=4.0, width=(1.0, 2.0)):
    f = np.zeros_like(x)
    for _ in range(bumps):
        a, c, w = rng.uniform(-1, 1), rng.uniform(-centre, centre), rng.uniform(*width)
        f += a * np.exp(-0.5 * ((x - c) / w) ** 2)
    return f


def h1_norm_sq(f: np.ndarray, grid: Grid) -> float:
    df = spectral_dx(f, grid, 1)
    return float(grid.dx * (np.sum(f * f) + np.sum(df * df)))


def broken_V(u, xi, alg, grid) -> float:
    p = alg.body_projection_arrays(xi) if alg.kind == "clifford" else 0.0
    return float(0.5 * grid.dx * np.sum(u[0] ** 2 + p))


def perturb(s: FieldState, seed: int, delta: float, mode: str = "constrained",
            xi_grade1: bool = True, width=(1.0, 2.0), centre: float = 4.0) -> FieldState:
    """Add a seeded smooth decaying perturbation of H¹ size ``delta``.

    Constrained mode removes the mass of every ξ channel with a fixed
    unit-mass Gaussian and rescales u so that V equals V of the input state.
    """
    if mode not in ("constrained", "free"):
        raise ValueError(f"unknown perturbation mode {mode!r}")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return s
    grid, alg = s.grid, s.algebra
    rng = np.random.default_rng(seed)
    x = grid.x
    du = alg.zeros(grid.N)
    dxi = alg.zeros(grid.N)
    u_ch = [0] if alg.kind in ("real", "clifford") else alg.channels("even")
    xi_ch = [m for m in alg.channels("odd") if not xi_grade1 or alg.grades[m] == 1]
    for m in u_ch:
        du[m] = bump_field(rng, x, centre=centre, width=width)
    for m in xi_ch:
        dxi[m] = bump_field(rng, x, centre=centre, width=width)
    norm = math.sqrt(sum(h1_norm_sq(f, grid) for f in du) + sum(h1_norm_sq(f, grid) for f in dxi))
    u = s.u + delta / norm * du
    xi = s.xi + delta / norm * dxi
    if mode == "constrained":
        if alg.kind == "grassmann":
            raise ConstraintError("V-constraint is defined for the broken system only")
        g = np.exp(-0.5 * (x / 1.5) ** 2)
        g /= grid.dx * g.sum()
        for m in xi_ch:
            xi[m] = xi[m] - grid.dx * xi[m].sum() * g
        target = broken_V(s.u, s.xi, alg, grid)
        v_xi = broken_V(alg.zeros(grid.N), xi, alg, grid)
        v_u = broken_V(u, alg.zeros(grid.N), alg, grid)
        if target - v_xi <= 0 or v_u <= 0:
            raise ConstraintError("cannot match V: ξ perturbation carries too much V")
        u = u * math.sqrt((target - v_xi) / v_u)
    out = s.with_fields(u=u, xi=xi)
    return out
