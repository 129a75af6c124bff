"""Graded polynomials in exponential coordinates.

A polynomial is stored as a sparse map from exponent tuples to coefficients.
Each coordinate carries a weight (the layer it lives in), so the homogeneous
degree of ``x^J`` is ``sum(weight[k] * J[k])``.  Coefficients may be floats or
``fractions.Fraction``; nothing here forces one or the other.
"""
from __future__ import annotations

import itertools
import json
from numbers import Number
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np


class GradedPolynomial:
    __slots__ = ("terms", "weights")

    def __init__(self, terms: Mapping[tuple, object] | None = None, weights: Sequence[int] = ()):
        self.weights = tuple(int(w) for w in weights)
        n = len(self.weights)
        clean = {}
        for exps, coef in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != n:
                raise ValueError(f"exponent {exps} does not match {n} coordinates")
            if coef != 0:
                clean[exps] = clean.get(exps, 0) + coef
        self.terms = {e: c for e, c in clean.items() if c != 0}

    # construction -----------------------------------------------------------

    @classmethod
    def constant(cls, weights, value) -> GradedPolynomial:
        return cls({(0,) * len(weights): value}, weights)

    @classmethod
    def variable(cls, weights, k: int, coef=1) -> GradedPolynomial:
        exps = [0] * len(weights)
        exps[k] = 1
        return cls({tuple(exps): coef}, weights)

    @classmethod
    def monomial(cls, weights, exps, coef=1) -> GradedPolynomial:
        return cls({tuple(exps): coef}, weights)

    # basic queries ----------------------------------------------------------

    @property
    def nvars(self) -> int:
        return len(self.weights)

    def weighted_degree(self, exps) -> int:
        return sum(w * e for w, e in zip(self.weights, exps))

    @property
    def degree(self) -> int:
        """Homogeneous degree; -1 for the zero polynomial."""
        if not self.terms:
            return -1
        return max(self.weighted_degree(e) for e in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def is_homogeneous(self) -> bool:
        return len({self.weighted_degree(e) for e in self.terms}) <= 1

    def coefficient(self, exps):
        return self.terms.get(tuple(exps), 0)

    def truncate(self, n: int) -> GradedPolynomial:
        """Part of homogeneous degree <= n."""
        return GradedPolynomial(
            {e: c for e, c in self.terms.items() if self.weighted_degree(e) <= n}, self.weights
        )

    def homogeneous_part(self, n: int) -> GradedPolynomial:
        return GradedPolynomial(
            {e: c for e, c in self.terms.items() if self.weighted_degree(e) == n}, self.weights
        )

    def constant_term(self):
        return self.terms.get((0,) * self.nvars, 0)

    # arithmetic -------------------------------------------------------------

    def _coerce(self, other) -> GradedPolynomial:
        if isinstance(other, GradedPolynomial):
            if other.weights != self.weights:
                raise ValueError("polynomials live in different coordinate systems")
            return other
        if isinstance(other, Number):
            return GradedPolynomial.constant(self.weights, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return GradedPolynomial(out, self.weights)

    __radd__ = __add__

    def __neg__(self):
        return GradedPolynomial({e: -c for e, c in self.terms.items()}, self.weights)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            if other == 0:
                return GradedPolynomial({}, self.weights)
            return GradedPolynomial({e: c * other for e, c in self.terms.items()}, self.weights)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return GradedPolynomial(out, self.weights)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Number):
            return NotImplemented
        return GradedPolynomial({e: c / other for e, c in self.terms.items()}, self.weights)

    def __pow__(self, k: int):
        out = GradedPolynomial.constant(self.weights, 1)
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, Number):
            other = GradedPolynomial.constant(self.weights, other)
        if not isinstance(other, GradedPolynomial):
            return NotImplemented
        return self.weights == other.weights and self.terms == other.terms

    def __hash__(self):
        return hash((self.weights, frozenset(self.terms.items())))

    def allclose(self, other, atol: float = 1e-12) -> bool:
        other = self._coerce(other)
        keys = set(self.terms) | set(other.terms)
        return all(abs(float(self.coefficient(k)) - float(other.coefficient(k))) <= atol for k in keys)

    def chop(self, tol: float = 1e-13) -> GradedPolynomial:
        """Drop coefficients with magnitude below ``tol`` (relative to the largest)."""
        if not self.terms:
            return self
        scale = max(abs(float(c)) for c in self.terms.values())
        return GradedPolynomial(
            {e: c for e, c in self.terms.items() if abs(float(c)) > tol * max(scale, 1.0)}, self.weights
        )

    # calculus ---------------------------------------------------------------

    def diff(self, k: int) -> GradedPolynomial:
        out = {}
        for e, c in self.terms.items():
            if e[k]:
                ne = list(e)
                ne[k] -= 1
                out[tuple(ne)] = c * e[k]
        return GradedPolynomial(out, self.weights)

    def compose(self, subs: Sequence[GradedPolynomial]) -> GradedPolynomial:
        """Substitute ``subs[k]`` for coordinate ``k``."""
        if len(subs) != self.nvars:
            raise ValueError("need one substitution per coordinate")
        target = subs[0].weights
        powers: dict = {}

        def power(k, e):
            if (k, e) not in powers:
                powers[(k, e)] = subs[k] ** e
            return powers[(k, e)]

        out = GradedPolynomial({}, target)
        for exps, c in self.terms.items():
            term = GradedPolynomial.constant(target, c)
            for k, e in enumerate(exps):
                if e:
                    term = term * power(k, e)
            out = out + term
        return out

    def restrict(self, keep: int) -> GradedPolynomial:
        """Set coordinates ``keep..`` to zero and drop them."""
        out = {}
        for e, c in self.terms.items():
            if any(e[keep:]):
                continue
            out[e[:keep]] = c
        return GradedPolynomial(out, self.weights[:keep])

    # evaluation -------------------------------------------------------------

    def __call__(self, points):
        pts = np.asarray(points)
        if pts.shape[-1] != self.nvars:
            raise ValueError(f"points have {pts.shape[-1]} coordinates, polynomial has {self.nvars}")
        if pts.dtype == object:
            out = np.zeros(pts.shape[:-1], dtype=object)
        else:
            pts = pts.astype(float, copy=False)
            out = np.zeros(pts.shape[:-1])
        exact = pts.dtype == object
        for exps, c in self.terms.items():
            term = c if exact else float(c)
            for k, e in enumerate(exps):
                if e:
                    term = term * pts[..., k] ** e
            out = out + term
        return out

    def __repr__(self):
        if not self.terms:
            return "GradedPolynomial(0)"
        parts = []
        for e, c in sorted(self.terms.items(), key=lambda t: (self.weighted_degree(t[0]), t[0])):
            mono = "*".join(f"x{k}^{p}" if p > 1 else f"x{k}" for k, p in enumerate(e) if p)
            parts.append(f"{c}*{mono}" if mono else f"{c}")
        return "GradedPolynomial(" + " + ".join(parts) + ")"

    # serialization ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "terms": [
                {"exponents": list(e), "coef": float(c)} for e, c in sorted(self.terms.items())
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict, weights: Sequence[int] | None = None) -> GradedPolynomial:
        w = data.get("weights", weights)
        if w is None:
            raise ValueError("weights missing from polynomial document")
        return cls({tuple(t["exponents"]): t["coef"] for t in data["terms"]}, w)

    @classmethod
    def from_json(cls, text: str, weights: Sequence[int] | None = None) -> GradedPolynomial:
        return cls.from_dict(json.loads(text), weights)


def monomial_exponents(weights: Sequence[int], max_degree: int) -> list[tuple]:
    """All exponent tuples with homogeneous degree <= max_degree, sorted by degree."""
    weights = tuple(weights)
    ranges = [range(max_degree // w + 1) for w in weights]
    out = [
        e for e in itertools.product(*ranges) if sum(w * p for w, p in zip(weights, e)) <= max_degree
    ]
    out.sort(key=lambda e: (sum(w * p for w, p in zip(weights, e)), e))
    return out


def iter_monomials(weights: Sequence[int], max_degree: int) -> Iterator[GradedPolynomial]:
    for e in monomial_exponents(weights, max_degree):
        yield GradedPolynomial.monomial(weights, e)


def coordinates(weights: Iterable[int]) -> list[GradedPolynomial]:
    weights = tuple(weights)
    return [GradedPolynomial.variable(weights, k) for k in range(len(weights))]
