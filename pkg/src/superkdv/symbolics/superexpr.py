"""Superfield differential polynomials in normal form.

Atoms are ``("D", field, k)`` for D^k applied to a field symbol (``"Phi"``
or ``"chi"``, both odd) and ``("Dinv", P)`` for the formal inverse of D
applied to a monomial ``P``.  Since D^2 = ∂x, x-derivatives are even powers
of D and need no separate node.  Products of odd factors keep their order
up to the sign of the permutation used to sort them.
"""
from __future__ import annotations

from fractions import Fraction

from .components import ComponentExpr, ComponentPair
from .poly import GradedPoly

FIELD_SYMBOLS = ("Phi", "chi")


class SuperExpr(GradedPoly):
    __slots__ = ()

    @staticmethod
    def atom_parity(atom) -> int:
        if atom[0] == "Dinv":
            return 1 - (atom[1].parity or 0)
        # field symbols are odd; each D flips parity
        return 1 - (atom[2] & 1)

    @staticmethod
    def atom_key(atom):
        if atom[0] == "Dinv":
            return (1, atom[1].key)
        return (0, atom[1], atom[2])

    def D(self, times: int = 1) -> "SuperExpr":
        out = self
        for _ in range(times):
            out = out._D1()
        return out

    def _D1(self):
        out = SuperExpr()
        for (e, atoms), c in self.terms.items():
            parity_before = 0
            for i, atom in enumerate(atoms):
                coeff = -c if parity_before else c
                left = SuperExpr({(e, tuple(atoms[:i])): coeff})
                right = SuperExpr({(0, tuple(atoms[i + 1:])): 1})
                out = out + left * _atom_D(atom) * right
                parity_before ^= self.atom_parity(atom)
        return out

    def dx(self, order: int = 1) -> "SuperExpr":
        return self.D(2 * order)

    def Dinv(self) -> "SuperExpr":
        out = {}
        for (e, atoms), c in self.terms.items():
            if len(atoms) == 1 and atoms[0][0] == "D" and atoms[0][2] >= 1:
                key = (e, (("D", atoms[0][1], atoms[0][2] - 1),))
            else:
                key = (e, (("Dinv", SuperExpr({(0, atoms): 1})),))
            out[key] = out.get(key, 0) + c
        return SuperExpr(out)

    def eps_parity_ok(self):
        return self.parity

    def substitute(self, field: str, value: "SuperExpr") -> "SuperExpr":
        """Replace a field symbol by an expression, pushing D through it."""
        out = SuperExpr()
        for (e, atoms), c in self.terms.items():
            prod = SuperExpr({(e, ()): c})
            for atom in atoms:
                prod = prod * _substitute_atom(atom, field, value)
            out = out + prod
        return out

    def fields(self) -> set:
        found = set()
        for a in self.atoms():
            if a[0] == "Dinv":
                found |= a[1].fields()
            else:
                found.add(a[1])
        return found

    @property
    def nonlocal_(self) -> bool:
        return any(a[0] == "Dinv" for a in self.atoms())

    def __str__(self):
        return render_super(self)

    __repr__ = __str__


def _atom_D(atom) -> SuperExpr:
    if atom[0] == "Dinv":
        return atom[1]
    return SuperExpr.from_atom(("D", atom[1], atom[2] + 1))


def _substitute_atom(atom, field, value):
    if atom[0] == "Dinv":
        return atom[1].substitute(field, value).Dinv()
    if atom[1] != field:
        return SuperExpr.from_atom(atom)
    return value.D(atom[2])


def Phi(k: int = 0) -> SuperExpr:
    return SuperExpr.from_atom(("D", "Phi", k))


def chi(k: int = 0) -> SuperExpr:
    return SuperExpr.from_atom(("D", "chi", k))


def apply_D(e: SuperExpr) -> SuperExpr:
    return e.D()


def apply_Dinv(e: SuperExpr) -> SuperExpr:
    return e.Dinv()


def _render_atom(atom) -> str:
    if atom[0] == "Dinv":
        return f"Dinv({render_super(atom[1])})"
    k = atom[2]
    name = "Φ" if atom[1] == "Phi" else "χ"
    return name if k == 0 else (f"D{name}" if k == 1 else f"D^{k}{name}")


def render_super(expr: SuperExpr) -> str:
    if expr.is_zero():
        return "0"
    parts = []
    for (e, atoms), c in expr.sorted_terms():
        factors = [_render_atom(a) for a in atoms]
        if e:
            factors.insert(0, "ε" if e == 1 else f"ε^{e}")
        body = "·".join(factors)
        if not body:
            parts.append(str(c))
        elif c == 1:
            parts.append(body)
        elif c == -1:
            parts.append("-" + body)
        else:
            parts.append(f"{c}·{body}")
    return " + ".join(parts).replace("+ -", "- ")


# -- components ----------------------------------------------------------------

def _field_pair(k: int) -> ComponentPair:
    m, r = divmod(k, 2)
    if r == 0:
        # D^(2m) Φ = ∂^m (ξ + θu)
        return ComponentPair(ComponentExpr.from_atom(("xi", m)), ComponentExpr.from_atom(("u", m)))
    # D^(2m+1) Φ = ∂^m (u + θξ')
    return ComponentPair(ComponentExpr.from_atom(("u", m)), ComponentExpr.from_atom(("xi", m + 1)))


def to_components(e: SuperExpr) -> ComponentPair:
    """Expand a superfield expression into its (lower, upper) components.

    Every field symbol is read as ξ + θu of the current state.
    """
    cache = {}
    out = ComponentPair(ComponentExpr(), ComponentExpr())
    for (eps, atoms), c in e.terms.items():
        prod = ComponentPair(ComponentExpr({(eps, ()): c}), ComponentExpr())
        for atom in atoms:
            key = SuperExpr.atom_key(atom)
            if key not in cache:
                if atom[0] == "Dinv":
                    cache[key] = to_components(atom[1]).Dinv()
                else:
                    cache[key] = _field_pair(atom[2])
            prod = prod * cache[key]
        out = out + prod
    return out


def berezin_density(e: SuperExpr) -> ComponentExpr:
    """Component integrand of ∫dxdθ e."""
    return to_components(e).upper


# -- super-KdV and the super-Gardner map -------------------------------------

def skdv_rhs(field: str = "Phi") -> SuperExpr:
    """D^6 F + 3 D^2 (F DF)."""
    f = SuperExpr.from_atom(("D", field, 0))
    return f.D(6) + (f * f.D()).D(2).scale(3)


def gardner_equation_rhs() -> SuperExpr:
    """D^6 χ + 3 D^2 (χ Dχ) - 3 ε^2 (Dχ) D^2 (χ Dχ)."""
    c = chi()
    cdc = c * c.D()
    return c.D(6) + cdc.D(2).scale(3) - (c.D() * cdc.D(2)).scale(3).times_eps(2)


def gardner_forward(e_chi: SuperExpr) -> SuperExpr:
    """Apply Φ = χ + ε D²χ - ε² χ Dχ with ``e_chi`` in the role of χ."""
    return e_chi + e_chi.D(2).times_eps(1) - (e_chi * e_chi.D()).times_eps(2)


MAX_GARDNER_ORDER = 6


def gardner_invert(K: int) -> SuperExpr:
    """χ[Φ] through ε^K by fixed-point iteration χ ← Φ - ε D²χ + ε² χ Dχ.

    Iteration j fixes the coefficient of ε^j, so K sweeps suffice.
    """
    if not 0 <= K <= MAX_GARDNER_ORDER:
        raise ValueError(f"Gardner inversion order must be in [0, {MAX_GARDNER_ORDER}]")
    phi = Phi()
    x = phi
    for _ in range(K):
        x = (phi - x.D(2).times_eps(1) + (x * x.D()).times_eps(2)).truncate(K)
    return x


def gardner_roundtrip_residual(K: int) -> SuperExpr:
    return (gardner_forward(gardner_invert(K)) - Phi()).truncate(K)


def exp_series(x: SuperExpr, sign: int, order: int) -> SuperExpr:
    """(exp(sign·ε·x) - 1)/ε through ε^order; x must be even."""
    out = SuperExpr()
    power = SuperExpr.one()
    fact = 1
    for j in range(1, order + 2):
        power = (power * x).truncate(order)
        fact *= j
        out = out + power.scale(Fraction(sign ** j, fact)).times_eps(j - 1)
    return out.truncate(order)
