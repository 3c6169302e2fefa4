"""Graded-commutative polynomials with a formal ε grading.

A term is keyed by ``(eps_power, atoms)`` where ``atoms`` is a sorted tuple.
Odd atoms anticommute: sorting them picks up signs, and a repeated odd atom
kills the term.  Subclasses say what the atoms are.
"""
from __future__ import annotations

from fractions import Fraction


class GradedPoly:
    __slots__ = ("terms", "_key", "_hash")

    def __init__(self, terms=None):
        clean = {}
        for k, c in (terms or {}).items():
            if c:
                clean[k] = Fraction(c)
        self.terms = clean
        self._key = None
        self._hash = None

    # -- atom protocol, overridden by subclasses ---------------------------
    @staticmethod
    def atom_parity(atom) -> int:
        raise NotImplementedError

    @staticmethod
    def atom_key(atom):
        raise NotImplementedError

    # -- construction ------------------------------------------------------
    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def one(cls):
        return cls({(0, ()): 1})

    @classmethod
    def from_atom(cls, atom, coeff=1, eps=0):
        return cls({(eps, (atom,)): coeff})

    @classmethod
    def monomial(cls, atoms, coeff=1, eps=0):
        sign, atoms = cls.normalize_atoms(atoms)
        if sign == 0:
            return cls()
        return cls({(eps, atoms): sign * Fraction(coeff)})

    @classmethod
    def normalize_atoms(cls, atoms):
        """Sort atoms canonically; returns (sign, sorted tuple)."""
        items = list(atoms)
        keys = [cls.atom_key(a) for a in items]
        pars = [cls.atom_parity(a) for a in items]
        sign = 1
        # insertion sort; swapping two odd neighbours flips the sign
        for i in range(1, len(items)):
            j = i
            while j > 0 and keys[j - 1] > keys[j]:
                if pars[j - 1] and pars[j]:
                    sign = -sign
                keys[j - 1], keys[j] = keys[j], keys[j - 1]
                items[j - 1], items[j] = items[j], items[j - 1]
                pars[j - 1], pars[j] = pars[j], pars[j - 1]
                j -= 1
        for i in range(1, len(items)):
            if pars[i] and keys[i] == keys[i - 1]:
                return 0, ()
        return sign, tuple(items)

    # -- arithmetic --------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, type(self)):
            return other
        if isinstance(other, (int, Fraction)):
            return type(self)({(0, ()): other}) if other else type(self)()
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0) + c
        return type(self)(out)

    __radd__ = __add__

    def __neg__(self):
        return type(self)({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c):
        return type(self)({k: c * v for k, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        if not isinstance(other, type(self)):
            return NotImplemented
        out = {}
        for (e1, a1), c1 in self.terms.items():
            for (e2, a2), c2 in other.terms.items():
                sign, atoms = self.normalize_atoms(a1 + a2)
                if sign:
                    k = (e1 + e2, atoms)
                    out[k] = out.get(k, 0) + sign * c1 * c2
        return type(self)(out)

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    def __pow__(self, p: int):
        out = type(self).one()
        for _ in range(p):
            out = out * self
        return out

    def times_eps(self, m: int = 1):
        return type(self)({(e + m, a): c for (e, a), c in self.terms.items()})

    def truncate(self, order: int):
        return type(self)({(e, a): c for (e, a), c in self.terms.items() if e <= order})

    def eps_coeff(self, m: int):
        return type(self)({(0, a): c for (e, a), c in self.terms.items() if e == m})

    def eps_degree(self) -> int:
        return max((e for e, _ in self.terms), default=0)

    def split_eps(self) -> dict:
        out = {}
        for m in sorted({e for e, _ in self.terms}):
            out[m] = self.eps_coeff(m)
        return out

    # -- structure ---------------------------------------------------------
    @property
    def parity(self):
        """0 even, 1 odd, None for zero; ValueError when mixed."""
        pars = {sum(self.atom_parity(a) for a in atoms) & 1 for _, atoms in self.terms}
        if not pars:
            return None
        if len(pars) > 1:
            raise ValueError("expression has mixed parity")
        return pars.pop()

    def is_zero(self) -> bool:
        return not self.terms

    def atoms(self):
        seen = set()
        for _, atoms in self.terms:
            seen.update(atoms)
        return seen

    @property
    def key(self):
        if self._key is None:
            self._key = tuple(sorted(
                (e, tuple(self.atom_key(a) for a in atoms), c)
                for (e, atoms), c in self.terms.items()))
        return self._key

    def __eq__(self, other):
        if isinstance(other, int) and other == 0:
            return self.is_zero()
        if not isinstance(other, type(self)):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.key)
        return self._hash

    def sorted_terms(self):
        return sorted(self.terms.items(),
                      key=lambda kv: (kv[0][0], tuple(self.atom_key(a) for a in kv[0][1])))
