"""Conserved-charge densities generated from the super-Gardner charges.

Each generating functional is expanded in ε after substituting the inverse
Gardner series χ[Φ]; the ε^m coefficient is a density whose Berezin
integral ∫dxdθ is one member of the hierarchy.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..algebra import AlgebraElement, get_algebra
from ..spectral import Grid
from .components import ComponentExpr, ComponentPair, FieldEnv
from .superexpr import SuperExpr, exp_series, gardner_invert, to_components

LOCAL_MAX_K = 6
FERMIONIC_MAX_K = 2
BOSONIC_MAX_K = 1

EQUIV_ATOL = 1e-9


class ConsistencyError(RuntimeError):
    """An ε coefficient that should integrate to zero does not."""

    def __init__(self, message, order=None):
        super().__init__(message)
        self.order = order


class QuadratureContractError(ValueError):
    pass


@dataclass(frozen=True)
class ChargeDensity:
    name: str
    dimension: Fraction
    component_form: ComponentExpr
    nonlocal_: bool
    super_form: SuperExpr | None = field(default=None, compare=False)
    family: str = ""
    eps_order: int = 0

    @property
    def parity(self) -> int:
        p = self.component_form.parity
        return 0 if p is None else p

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "family": self.family,
            "eps_order": self.eps_order,
            "dimension": str(self.dimension),
            "nonlocal": self.nonlocal_,
            "parity": "odd" if self.parity else "even",
            "density": expr_to_ast(self.component_form),
            "render": str(self.component_form),
            "super_render": None if self.super_form is None else str(self.super_form),
        }

    @classmethod
    def from_json(cls, data) -> "ChargeDensity":
        if isinstance(data, str):
            data = json.loads(data)
        expr = expr_from_ast(data["density"])
        return cls(data["name"], Fraction(data["dimension"]), expr, bool(data["nonlocal"]),
                   family=data.get("family", ""), eps_order=int(data.get("eps_order", 0)))


# -- JSON AST -----------------------------------------------------------------

def expr_to_ast(expr: ComponentExpr) -> dict:
    args = []
    for (e, atoms), c in expr.sorted_terms():
        args.append({"op": "mul", "coeff": str(c), "eps": e, "args": [_atom_to_ast(a) for a in atoms]})
    return {"op": "add", "args": args}


def _atom_to_ast(atom) -> dict:
    if atom[0] == "int":
        return {"op": "dxinv", "args": [expr_to_ast(atom[1])]}
    return {"field": atom[0], "deriv": atom[1]}


def expr_from_ast(node: dict) -> ComponentExpr:
    if node.get("op") != "add":
        raise ValueError(f"expected an 'add' node, got {node.get('op')!r}")
    out = ComponentExpr()
    for term in node["args"]:
        if term.get("op") != "mul":
            raise ValueError(f"expected a 'mul' node, got {term.get('op')!r}")
        atoms = [_atom_from_ast(a) for a in term["args"]]
        out = out + ComponentExpr.monomial(atoms, Fraction(term["coeff"]), int(term.get("eps", 0)))
    return out


def _atom_from_ast(node: dict):
    if "field" in node:
        if node["field"] not in ("u", "xi"):
            raise ValueError(f"unknown field {node['field']!r}")
        return (node["field"], int(node["deriv"]))
    if node.get("op") == "dxinv":
        inner = expr_from_ast(node["args"][0])
        if len(inner.terms) != 1:
            raise ValueError("dxinv must wrap a single monomial")
        (e, atoms), c = next(iter(inner.terms.items()))
        if e != 0 or c != 1:
            raise ValueError("dxinv must wrap a monomial with unit coefficient")
        return ("int", inner)
    raise ValueError(f"unrecognised AST node {node!r}")


# -- expansions ---------------------------------------------------------------

def _density(name, dim, sup: SuperExpr, family, m) -> ChargeDensity:
    comp = to_components(sup).upper
    return ChargeDensity(name, Fraction(dim), comp, comp.nonlocal_, sup, family, m)


def _dim_name(prefix, dim: Fraction) -> str:
    dim = Fraction(dim)
    if dim.denominator == 1:
        return f"{prefix}{dim.numerator}"
    return f"{prefix}{dim.numerator}_{dim.denominator}"


def local_generating_density(K: int) -> SuperExpr:
    return gardner_invert(K)


def expand_local_charges(K: int, check: bool = True, ensemble=None) -> list[ChargeDensity]:
    """H_1, H_3, ..., H_{K+1} from ∫dxdθ χ[Φ]; odd orders must be total derivatives."""
    if K % 2 or not 0 <= K <= LOCAL_MAX_K:
        raise ValueError(f"local order K must be even and at most {LOCAL_MAX_K}")
    series = local_generating_density(K)
    out = []
    for m in range(K + 1):
        coeff = series.eps_coeff(m)
        if m % 2:
            if check and not numeric_equiv(coeff, 0, ensemble):
                raise ConsistencyError(f"ε^{m} coefficient of ∫dxdθ χ is not a total derivative", m)
            continue
        out.append(_density(_dim_name("H", m + 1), m + 1, coeff, "local", m))
    return out


def fermionic_generating_density(K: int) -> SuperExpr:
    chi_series = gardner_invert(K)
    return exp_series(chi_series.Dinv(), +1, K)


def expand_fermionic_nonlocal(K: int) -> list[ChargeDensity]:
    """H^NL_{m+1/2}, m = 0..K, from ∫dxdθ (exp(ε D⁻¹χ) - 1)/ε."""
    if not 0 <= K <= FERMIONIC_MAX_K:
        raise ValueError(f"fermionic order K must be in [0, {FERMIONIC_MAX_K}]")
    series = fermionic_generating_density(K)
    out = []
    for m in range(K + 1):
        dim = Fraction(2 * m + 1, 2)
        out.append(_density(_dim_name("HNL", dim), dim, series.eps_coeff(m), "fermionic_nl", m))
    return out


def bosonic_generating_density(K: int) -> SuperExpr:
    inv = gardner_invert(K).Dinv()
    a = exp_series(inv, +1, K)
    b = exp_series(inv, -1, K)
    return (a.D() * b.Dinv()).truncate(K).Dinv().scale(Fraction(1, 2))


def expand_bosonic_nonlocal(K: int) -> list[ChargeDensity]:
    """H^NL_{m+1}, m = 0..K, from ½∫dxdθ D⁻¹{D[A] D⁻¹[B]}."""
    if not 0 <= K <= BOSONIC_MAX_K:
        raise ValueError(f"bosonic order K must be in [0, {BOSONIC_MAX_K}]")
    series = bosonic_generating_density(K)
    out = []
    for m in range(K + 1):
        dim = Fraction(m + 1)
        out.append(_density(_dim_name("HNL", dim), dim, series.eps_coeff(m), "bosonic_nl", m))
    return out


def derive(family: str, K: int) -> list[ChargeDensity]:
    if family == "local":
        return expand_local_charges(K)
    if family == "fermionic_nl":
        return expand_fermionic_nonlocal(K)
    if family == "bosonic_nl":
        return expand_bosonic_nonlocal(K)
    raise ValueError(f"unknown charge family {family!r}")


# -- supersymmetry variation ---------------------------------------------------

def apply_Q_density(h) -> ComponentPair:
    """Qh for a density h, returned in components (Q = -∂θ + θ∂x)."""
    pair = h if isinstance(h, ComponentPair) else to_components(h)
    return pair.Q()


# -- numeric evaluation ---------------------------------------------------------

@dataclass
class FieldSample:
    grid: Grid
    u: np.ndarray
    xi: np.ndarray
    algebra: object


def random_grassmann_ensemble(size: int = 20, n: int = 4, seed: int = 20240601,
                              grid: Grid | None = None) -> list[FieldSample]:
    """Smooth decaying Grassmann-valued (u, ξ) samples: u even, ξ odd."""
    grid = grid or Grid(16.0, 256)
    alg = get_algebra("grassmann", n)
    rng = np.random.default_rng(seed)
    x = grid.x
    out = []
    for _ in range(size):
        fields = []
        for parity in ("even", "odd"):
            arr = alg.zeros(grid.N)
            for m in alg.channels(parity):
                for _ in range(3):
                    a, c, w = rng.uniform(-1, 1), rng.uniform(-4, 4), rng.uniform(0.7, 1.5)
                    arr[m] += a * np.exp(-0.5 * ((x - c) / w) ** 2)
            fields.append(arr)
        out.append(FieldSample(grid, fields[0], fields[1], alg))
    return out


_DEFAULT_ENSEMBLE = None


def default_ensemble() -> list[FieldSample]:
    global _DEFAULT_ENSEMBLE
    if _DEFAULT_ENSEMBLE is None:
        _DEFAULT_ENSEMBLE = random_grassmann_ensemble()
    return _DEFAULT_ENSEMBLE


class ChargeCombo:
    """Linear combination of products of charges, Σ c · ∫h₁ · ∫h₂ ···."""

    def __init__(self, terms):
        self.terms = [(Fraction(c), tuple(ds)) for c, ds in terms]

    def __add__(self, other):
        return ChargeCombo(self.terms + _as_combo(other).terms)

    def __neg__(self):
        return ChargeCombo([(-c, ds) for c, ds in self.terms])

    def __sub__(self, other):
        return self + (-_as_combo(other))

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return ChargeCombo([(c * other, ds) for c, ds in self.terms])
        other = _as_combo(other)
        return ChargeCombo([(c1 * c2, d1 + d2) for c1, d1 in self.terms for c2, d2 in other.terms])

    __rmul__ = __mul__


def charge(d) -> ChargeCombo:
    return ChargeCombo([(1, (d,))])


def _as_combo(x) -> ChargeCombo:
    if isinstance(x, ChargeCombo):
        return x
    if isinstance(x, int) and x == 0:
        return ChargeCombo([])
    return charge(x)


def _integrand(d) -> ComponentExpr:
    if isinstance(d, ChargeDensity):
        return d.component_form
    if isinstance(d, SuperExpr):
        return to_components(d).upper
    if isinstance(d, ComponentPair):
        return d.upper
    if isinstance(d, ComponentExpr):
        return d
    raise TypeError(f"cannot integrate {type(d).__name__}")


def evaluate_charge(d, sample, eps=None) -> np.ndarray:
    """∫dxdθ of a density on one field sample, as an algebra channel array."""
    env = FieldEnv(sample.grid, sample.u, sample.xi, sample.algebra, eps)
    return _evaluate_combo(_as_combo(d), env)


def _evaluate_combo(combo: ChargeCombo, env: FieldEnv) -> np.ndarray:
    alg = env.algebra
    total = np.zeros(alg.dim)
    for c, ds in combo.terms:
        val = np.zeros(alg.dim)
        val[0] = 1.0
        for d in ds:
            val = alg.mul_arrays(val, env.integral(_integrand(d)))
        total += float(c) * val
    return total


def numeric_equiv(lhs, rhs, ensemble=None, atol: float = EQUIV_ATOL) -> bool:
    """Equality of charges modulo total derivatives, decided by evaluation."""
    return equiv_residual(lhs, rhs, ensemble) <= atol


def equiv_residual(lhs, rhs, ensemble=None) -> float:
    ensemble = default_ensemble() if ensemble is None else ensemble
    combo = _as_combo(lhs) - _as_combo(rhs)
    worst = 0.0
    for sample in ensemble:
        env = FieldEnv(sample.grid, sample.u, sample.xi, sample.algebra)
        worst = max(worst, float(np.max(np.abs(_evaluate_combo(combo, env)))))
    return worst


def compile_density(d: ChargeDensity, decay_tol: float = 1e-10):
    """Evaluator ``state -> AlgebraElement`` for ∫ of the density.

    ``state`` needs ``grid``, ``u``, ``xi`` channel arrays and ``algebra``.
    """
    from ..spectral import DecayContractError

    expr = _integrand(d)

    def evaluate(state) -> AlgebraElement:
        env = FieldEnv(state.grid, state.u, state.xi, state.algebra, decay_tol=decay_tol)
        try:
            arr = env.integral(expr)
        except DecayContractError as exc:
            raise QuadratureContractError(str(exc)) from exc
        alg = state.algebra
        if alg.kind == "real":
            return float(arr[0])
        return AlgebraElement.from_array(alg.kind, alg.n, arr)

    evaluate.density = d
    return evaluate
