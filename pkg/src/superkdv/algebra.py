"""Finite Grassmann and Clifford algebras.

Basis blades are stored as bitmasks internally (bit ``i-1`` set means the
generator ``e_i`` is present) and exposed as strictly increasing tuples of
generator labels.  Two representations share the same blade tables:

* :class:`AlgebraElement`, an immutable sparse element with exact
  (``Fraction``) or float coefficients;
* dense channel arrays of shape ``(2**n, ...)`` used by the field solvers,
  multiplied with :meth:`Algebra.mul_arrays`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from numbers import Rational

import numpy as np

MAX_GENERATORS = 8
KINDS = ("real", "grassmann", "clifford")

EVEN, ODD, MIXED = "even", "odd", "mixed"


class IncompatibleAlgebraError(ValueError):
    pass


class UnsupportedOperationError(ValueError):
    pass


def mask_to_index(mask: int) -> tuple[int, ...]:
    return tuple(i + 1 for i in range(mask.bit_length()) if mask >> i & 1)


def index_to_mask(idx) -> int:
    idx = tuple(idx)
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError(f"multi-index {idx} is not strictly increasing")
    mask = 0
    for i in idx:
        if i < 1:
            raise ValueError(f"generator labels start at 1, got {i}")
        mask |= 1 << (i - 1)
    return mask


def grade(mask: int) -> int:
    return bin(mask).count("1")


def reorder_sign(a: int, b: int) -> int:
    """Sign picked up when the word ``a`` followed by ``b`` is sorted."""
    a >>= 1
    swaps = 0
    while a:
        swaps += grade(a & b)
        a >>= 1
    return -1 if swaps & 1 else 1


def blade_product(a: int, b: int, kind: str) -> tuple[int, int]:
    """Product of two basis blades as ``(sign, mask)``; sign 0 means zero."""
    common = a & b
    if common and kind == "grassmann":
        return 0, 0
    sign = reorder_sign(a, b)
    if common and grade(common) & 1:
        # e_i e_i = -1 for every contracted generator
        sign = -sign
    return sign, a ^ b


def reversion_sign(mask: int) -> int:
    """Sign of bar-conjugation on a blade: reverse the word, negate each generator."""
    k = grade(mask)
    s = k + k * (k - 1) // 2
    return -1 if s & 1 else 1


@dataclass(frozen=True)
class Algebra:
    kind: str
    n: int
    dim: int = field(init=False)
    grades: np.ndarray = field(init=False, repr=False, compare=False)
    table: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown algebra kind {self.kind!r}")
        if self.kind == "real" and self.n != 0:
            raise ValueError("the real algebra has no generators")
        if not 0 <= self.n <= MAX_GENERATORS:
            raise ValueError(f"generator count must be in [0, {MAX_GENERATORS}]")
        dim = 1 << self.n
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "grades", np.array([grade(m) for m in range(dim)]))
        rows = []
        for i in range(dim):
            for j in range(dim):
                s, k = blade_product(i, j, self.kind)
                if s:
                    rows.append((i, j, k, s))
        object.__setattr__(self, "table", tuple(rows))

    def channels(self, parity: str | None = None) -> list[int]:
        if parity is None or parity == MIXED:
            return list(range(self.dim))
        want = 0 if parity == EVEN else 1
        return [m for m in range(self.dim) if grade(m) % 2 == want]

    def label(self, mask: int) -> str:
        idx = mask_to_index(mask)
        return "".join(str(i) for i in idx) if idx else "0"

    def zeros(self, *shape) -> np.ndarray:
        return np.zeros((self.dim, *shape))

    def mul_arrays(self, a: np.ndarray, b: np.ndarray, a_par=None, b_par=None) -> np.ndarray:
        """Pointwise algebra product of channel arrays ``a[mask, ...]``."""
        ok_a = set(self.channels(a_par))
        ok_b = set(self.channels(b_par))
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for i, j, k, s in self.table:
            if i in ok_a and j in ok_b:
                if s > 0:
                    out[k] += a[i] * b[j]
                else:
                    out[k] -= a[i] * b[j]
        return out

    def bar_arrays(self, a: np.ndarray) -> np.ndarray:
        if self.kind != "clifford":
            raise UnsupportedOperationError("bar-conjugation is defined on Clifford algebras only")
        signs = np.array([reversion_sign(m) for m in range(self.dim)], dtype=float)
        return a * signs.reshape((-1,) + (1,) * (a.ndim - 1))

    def body_projection_arrays(self, a: np.ndarray) -> np.ndarray:
        """Pointwise ``body(a * bar(a))``."""
        return self.mul_arrays(a, self.bar_arrays(a))[0]


@lru_cache(maxsize=None)
def get_algebra(kind: str, n: int = 0) -> Algebra:
    return Algebra(kind, 0 if kind == "real" else n)


def _is_exact(c) -> bool:
    return isinstance(c, (Rational, Fraction)) and not isinstance(c, bool)


class AlgebraElement:
    """Immutable sparse element of a Grassmann or Clifford algebra.

    ``coeffs`` maps multi-index tuples to coefficients; zeros are dropped.
    Exact and float coefficients cannot be mixed in one operation.
    """

    __slots__ = ("kind", "n", "_terms", "_hash")

    def __init__(self, kind: str, n: int, coeffs=None):
        if kind not in ("grassmann", "clifford"):
            raise ValueError(f"unknown algebra kind {kind!r}")
        if not 1 <= n <= MAX_GENERATORS:
            raise ValueError(f"generator count must be in [1, {MAX_GENERATORS}]")
        terms = {}
        for idx, c in (coeffs or {}).items():
            mask = idx if isinstance(idx, int) else index_to_mask(idx)
            if mask >> n:
                raise ValueError(f"multi-index {mask_to_index(mask)} exceeds n={n}")
            if isinstance(c, int):
                c = Fraction(c)
            if c != 0:
                terms[mask] = terms.get(mask, 0) + c
        terms = {m: c for m, c in terms.items() if c != 0}
        kinds = {_is_exact(c) for c in terms.values()}
        if len(kinds) > 1:
            raise TypeError("cannot mix exact and float coefficients")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "_terms", terms)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("AlgebraElement is immutable")

    # construction helpers
    @classmethod
    def scalar(cls, kind, n, c=1):
        return cls(kind, n, {(): c})

    @classmethod
    def generator(cls, kind, n, i, c=1):
        return cls(kind, n, {(i,): c})

    @classmethod
    def blade(cls, kind, n, idx, c=1):
        return cls(kind, n, {tuple(idx): c})

    @property
    def coeffs(self) -> dict:
        return {mask_to_index(m): c for m, c in sorted(self._terms.items(), key=lambda t: mask_to_index(t[0]))}

    @property
    def exact(self) -> bool | None:
        if not self._terms:
            return None
        return _is_exact(next(iter(self._terms.values())))

    @property
    def algebra(self) -> Algebra:
        return get_algebra(self.kind, self.n)

    def masks(self):
        return dict(self._terms)

    def _check(self, other: "AlgebraElement"):
        if not isinstance(other, AlgebraElement):
            raise TypeError(f"expected AlgebraElement, got {type(other).__name__}")
        if other.kind != self.kind or other.n != self.n:
            raise IncompatibleAlgebraError(
                f"{self.kind}({self.n}) and {other.kind}({other.n}) do not match")
        if None not in (self.exact, other.exact) and self.exact != other.exact:
            raise TypeError("cannot mix exact and float coefficients")

    def _new(self, terms):
        return AlgebraElement(self.kind, self.n, terms)

    def __add__(self, other):
        if not isinstance(other, AlgebraElement):
            return self + AlgebraElement.scalar(self.kind, self.n, other)
        self._check(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0) + c
        return self._new(out)

    __radd__ = __add__

    def __neg__(self):
        return self._new({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, AlgebraElement):
            return self._new({m: c * other for m, c in self._terms.items()})
        return mul(self, other)

    def __rmul__(self, other):
        return self._new({m: other * c for m, c in self._terms.items()})

    def __eq__(self, other):
        if isinstance(other, AlgebraElement):
            return (self.kind, self.n, self._terms) == (other.kind, other.n, other._terms)
        if other == 0:
            return not self._terms
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            h = hash((self.kind, self.n, frozenset(self._terms.items())))
            object.__setattr__(self, "_hash", h)
        return self._hash

    def __bool__(self):
        return bool(self._terms)

    def __repr__(self):
        if not self._terms:
            return f"AlgebraElement({self.kind}, {self.n}, 0)"
        sym = "e" if self.kind == "clifford" else "b"
        parts = []
        for idx, c in self.coeffs.items():
            word = "".join(f"{sym}{i}" for i in idx) or "1"
            parts.append(f"{c}*{word}")
        return f"AlgebraElement({self.kind}, {self.n}, {' + '.join(parts)})"

    @property
    def parity(self) -> str:
        pars = {grade(m) & 1 for m in self._terms}
        if len(pars) > 1:
            return MIXED
        return ODD if pars == {1} else EVEN

    def max_abs(self) -> float:
        return max((abs(float(c)) for c in self._terms.values()), default=0.0)

    def to_array(self) -> np.ndarray:
        out = np.zeros(1 << self.n)
        for m, c in self._terms.items():
            out[m] = float(c)
        return out

    @classmethod
    def from_array(cls, kind, n, arr) -> "AlgebraElement":
        return cls(kind, n, {m: float(c) for m, c in enumerate(np.asarray(arr)) if c != 0})

    def to_json(self) -> dict:
        terms = []
        for idx, c in self.coeffs.items():
            terms.append({"idx": list(idx), "c": str(c) if _is_exact(c) else float(c)})
        return {"kind": self.kind, "n": self.n, "terms": terms}

    @classmethod
    def from_json(cls, data) -> "AlgebraElement":
        if isinstance(data, str):
            data = json.loads(data)
        coeffs = {}
        for t in data["terms"]:
            c = t["c"]
            coeffs[tuple(t["idx"])] = Fraction(c) if isinstance(c, str) else float(c)
        return cls(data["kind"], data["n"], coeffs)


def mul(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    a._check(b)
    out = {}
    for ma, ca in a._terms.items():
        for mb, cb in b._terms.items():
            s, m = blade_product(ma, mb, a.kind)
            if s:
                out[m] = out.get(m, 0) + s * ca * cb
    return a._new(out)


def bar(a: AlgebraElement) -> AlgebraElement:
    if a.kind != "clifford":
        raise UnsupportedOperationError("bar-conjugation is defined on Clifford algebras only")
    return a._new({m: reversion_sign(m) * c for m, c in a._terms.items()})


def body(a: AlgebraElement):
    return a._terms.get(0, 0)


def soul(a: AlgebraElement) -> AlgebraElement:
    return a._new({m: c for m, c in a._terms.items() if m})


def body_projection(xi: AlgebraElement):
    """P(xi xi_bar): the identity component of ``xi * bar(xi)``."""
    return body(mul(xi, bar(xi)))


def random_element(seed, parity: str, n: int, kind: str, exact: bool = False,
                   density: float = 1.0) -> AlgebraElement:
    """Seeded graded element with coefficients in [-1, 1].

    ``density`` < 1 drops blades at random so that sparse products get exercised.
    Exact elements use rationals with denominators up to 16.
    """
    if parity not in (EVEN, ODD):
        raise ValueError("random elements must be graded (even or odd)")
    if n > MAX_GENERATORS:
        raise ValueError(f"n must be at most {MAX_GENERATORS}")
    rng = np.random.default_rng(seed)
    alg = get_algebra(kind, n)
    coeffs = {}
    for m in alg.channels(parity):
        if density < 1.0 and rng.random() > density:
            continue
        if exact:
            den = int(rng.integers(1, 17))
            coeffs[m] = Fraction(int(rng.integers(-den, den + 1)), den)
        else:
            coeffs[m] = float(rng.uniform(-1.0, 1.0))
    return AlgebraElement(kind, n, coeffs)
