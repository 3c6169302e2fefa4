"""Component-level expressions over u, xi and their x-derivatives.

Atoms are ``("u", k)`` (even), ``("xi", k)`` (odd) for the k-th x-derivative
and ``("int", P)`` for the antiderivative of a component monomial ``P``
taken from the left edge.  Derivatives of ``("int", P)`` collapse back to
``P`` so antiderivative atoms only ever appear underived.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..spectral import Grid, antiderivative, integrate, spectral_dx
from .poly import GradedPoly

FIELDS = ("u", "xi")
_FIELD_PARITY = {"u": 0, "xi": 1}


class ComponentExpr(GradedPoly):
    __slots__ = ()

    @staticmethod
    def atom_parity(atom) -> int:
        if atom[0] == "int":
            return atom[1].parity or 0
        return _FIELD_PARITY[atom[0]]

    @staticmethod
    def atom_key(atom):
        if atom[0] == "int":
            return (1, atom[1].key)
        return (0, atom[0], atom[1])

    # -- calculus ----------------------------------------------------------
    def dx(self, order: int = 1) -> "ComponentExpr":
        out = self
        for _ in range(order):
            out = out._dx1()
        return out

    def _dx1(self):
        out = ComponentExpr()
        for (e, atoms), c in self.terms.items():
            for i, atom in enumerate(atoms):
                left = ComponentExpr({(e, ()): c}) * _raw_monomial(atoms[:i])
                right = _raw_monomial(atoms[i + 1:])
                out = out + left * _atom_dx(atom) * right
        return out

    def dxinv(self) -> "ComponentExpr":
        """Formal antiderivative, linear over coefficients and ε."""
        out = {}
        for (e, atoms), c in self.terms.items():
            if len(atoms) == 1 and atoms[0][0] != "int" and atoms[0][1] >= 1:
                key = (e, ((atoms[0][0], atoms[0][1] - 1),))
            else:
                key = (e, (("int", ComponentExpr({(0, atoms): 1})),))
            out[key] = out.get(key, 0) + c
        return ComponentExpr(out)

    @property
    def nonlocal_(self) -> bool:
        return any(a[0] == "int" for a in self.atoms())

    def max_derivative(self) -> int:
        best = 0
        for a in self.atoms():
            best = max(best, a[1].max_derivative() if a[0] == "int" else a[1])
        return best

    def __str__(self):
        return render_component(self)

    __repr__ = __str__


def _raw_monomial(atoms):
    # atoms already in canonical order; no re-sorting needed
    return ComponentExpr({(0, tuple(atoms)): 1})


def _atom_dx(atom) -> ComponentExpr:
    if atom[0] == "int":
        return atom[1]
    return ComponentExpr.from_atom((atom[0], atom[1] + 1))


def u(k: int = 0) -> ComponentExpr:
    return ComponentExpr.from_atom(("u", k))


def xi(k: int = 0) -> ComponentExpr:
    return ComponentExpr.from_atom(("xi", k))


def _render_atom(atom) -> str:
    if atom[0] == "int":
        return f"dxinv({render_component(atom[1])})"
    return atom[0] + "'" * atom[1] if atom[1] <= 3 else f"{atom[0]}^({atom[1]})"


def render_component(expr: ComponentExpr) -> str:
    if expr.is_zero():
        return "0"
    parts = []
    for (e, atoms), c in expr.sorted_terms():
        factors = [_render_atom(a) for a in atoms]
        if e:
            factors.insert(0, "eps" if e == 1 else f"eps^{e}")
        body = "*".join(factors)
        if not body:
            parts.append(str(c))
        elif c == 1:
            parts.append(body)
        elif c == -1:
            parts.append("-" + body)
        else:
            parts.append(f"{c}*{body}")
    return " + ".join(parts).replace("+ -", "- ")


class ComponentPair:
    """Superfield value a + θb stored as (lower, upper) = (a, b)."""

    __slots__ = ("lower", "upper")

    def __init__(self, lower: ComponentExpr, upper: ComponentExpr):
        self.lower = lower
        self.upper = upper

    @property
    def parity(self):
        if not self.lower.is_zero():
            return self.lower.parity
        p = self.upper.parity
        return None if p is None else 1 - p

    def __add__(self, other):
        return ComponentPair(self.lower + other.lower, self.upper + other.upper)

    def __neg__(self):
        return ComponentPair(-self.lower, -self.upper)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return ComponentPair(self.lower.scale(c), self.upper.scale(c))

    def times_eps(self, m=1):
        return ComponentPair(self.lower.times_eps(m), self.upper.times_eps(m))

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        a1, b1, a2, b2 = self.lower, self.upper, other.lower, other.upper
        # (a1 + θ b1)(a2 + θ b2): θ passes a1 with sign (-1)^|a1|
        sign = -1 if a1.parity == 1 else 1
        return ComponentPair(a1 * a2, (a1 * b2).scale(sign) + b1 * a2)

    def __eq__(self, other):
        if not isinstance(other, ComponentPair):
            return NotImplemented
        return self.lower == other.lower and self.upper == other.upper

    def __hash__(self):
        return hash((self.lower, self.upper))

    def D(self) -> "ComponentPair":
        return ComponentPair(self.upper, self.lower.dx())

    def Q(self) -> "ComponentPair":
        return ComponentPair(-self.upper, self.lower.dx())

    def dx(self, order=1) -> "ComponentPair":
        return ComponentPair(self.lower.dx(order), self.upper.dx(order))

    def Dinv(self) -> "ComponentPair":
        return ComponentPair(self.upper.dxinv(), self.lower)

    def berezin(self) -> ComponentExpr:
        """Integrand left by ∫dθ: the θ component."""
        return self.upper

    def __repr__(self):
        return f"ComponentPair(lower={self.lower}, upper={self.upper})"


# -- numerical evaluation -----------------------------------------------------

class FieldEnv:
    """Grid-sampled algebra-valued u and xi with cached derivative atoms."""

    def __init__(self, grid: Grid, u_arr: np.ndarray, xi_arr: np.ndarray, algebra,
                 eps: float | None = None, decay_tol: float | None = 1e-10):
        self.grid = grid
        self.algebra = algebra
        self.eps = eps
        self.decay_tol = decay_tol
        self._fields = {"u": np.asarray(u_arr, dtype=float), "xi": np.asarray(xi_arr, dtype=float)}
        self._fhat = {}
        self._cache = {}

    def atom(self, atom) -> np.ndarray:
        key = ComponentExpr.atom_key(atom)
        if key not in self._cache:
            if atom[0] == "int":
                val = antiderivative(self.evaluate(atom[1]), self.grid, self.decay_tol)
            else:
                name, k = atom
                if k == 0:
                    val = self._fields[name]
                else:
                    if name not in self._fhat:
                        self._fhat[name] = np.fft.rfft(self._fields[name], axis=-1)
                    val = np.fft.irfft(self.grid.multiplier(k) * self._fhat[name], n=self.grid.N, axis=-1)
            self._cache[key] = val
        return self._cache[key]

    def evaluate(self, expr: ComponentExpr) -> np.ndarray:
        alg = self.algebra
        out = alg.zeros(self.grid.N)
        for (e, atoms), c in expr.terms.items():
            if e and self.eps is None:
                raise ValueError("expression carries ε but no numeric ε was given")
            coeff = float(c) * (self.eps ** e if e else 1.0)
            if not atoms:
                out[0] += coeff
                continue
            val = self.atom(atoms[0])
            par = ComponentExpr.atom_parity(atoms[0])
            for a in atoms[1:]:
                p = ComponentExpr.atom_parity(a)
                val = alg.mul_arrays(val, self.atom(a), _PAR[par], _PAR[p])
                par ^= p
            out += coeff * val
        return out

    def integral(self, expr: ComponentExpr) -> np.ndarray:
        return integrate(self.evaluate(expr), self.grid)


_PAR = {0: "even", 1: "odd"}


def compile_component(expr: ComponentExpr):
    """Evaluator ``(grid, u, xi, algebra, eps=None) -> channel array``."""
    def evaluate(grid, u_arr, xi_arr, algebra, eps=None, decay_tol=1e-10):
        return FieldEnv(grid, u_arr, xi_arr, algebra, eps, decay_tol).evaluate(expr)
    evaluate.expr = expr
    return evaluate


__all__ = [
    "ComponentExpr", "ComponentPair", "FieldEnv", "compile_component", "u", "xi",
    "render_component", "spectral_dx",
]
