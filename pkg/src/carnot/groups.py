"""Carnot groups in exponential coordinates of the first kind.

The group law is the Baker-Campbell-Hausdorff product truncated at the step of
the group; it is assembled from Dynkin's explicit series and the structure
constants of the Lie algebra, so any nilpotent step works.  Points are plain
numpy arrays whose last axis holds the ``N = sum(layer_dims)`` coordinates,
ordered layer by layer.  Batches broadcast over the leading axes.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np

from .poly import GradedPolynomial, coordinates


class GroupSpecError(ValueError):
    pass


@dataclass(frozen=True)
class GroupSpec:
    """Stratified nilpotent Lie algebra given by structure constants.

    ``brackets`` lists ``(a, b, c, coef)`` meaning ``[e_a, e_b]`` contains
    ``coef * e_c``; only ``a < b`` is stored, antisymmetry fills in the rest.
    """

    step: int
    layer_dims: tuple[int, ...]
    brackets: tuple[tuple[int, int, int, object], ...] = ()
    name: str = ""
    _table: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        dims = tuple(int(m) for m in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if self.step != len(dims) or any(m < 1 for m in dims):
            raise GroupSpecError("layer_dims must list one positive dimension per layer")
        merged: dict = {}
        for a, b, c, coef in self.brackets:
            a, b, c = int(a), int(b), int(c)
            if a == b:
                raise GroupSpecError(f"[e_{a}, e_{a}] must vanish")
            if a > b:
                a, b, coef = b, a, -coef
            merged[(a, b, c)] = merged.get((a, b, c), 0) + coef
        clean = tuple(sorted((a, b, c, v) for (a, b, c), v in merged.items() if v != 0))
        object.__setattr__(self, "brackets", clean)
        table: dict = {}
        for a, b, c, v in clean:
            table.setdefault((a, b), []).append((c, v))
            table.setdefault((b, a), []).append((c, -v))
        object.__setattr__(self, "_table", table)
        self._validate()

    # derived structure ------------------------------------------------------

    @property
    def dim(self) -> int:
        return sum(self.layer_dims)

    @cached_property
    def layers(self) -> tuple[int, ...]:
        """Layer (1-based) of each coordinate."""
        return tuple(l + 1 for l, m in enumerate(self.layer_dims) for _ in range(m))

    @property
    def weights(self) -> tuple[int, ...]:
        return self.layers

    @property
    def horizontal_dim(self) -> int:
        return self.layer_dims[0]

    def layer_slice(self, l: int) -> slice:
        start = sum(self.layer_dims[: l - 1])
        return slice(start, start + self.layer_dims[l - 1])

    def basis_label(self, c: int) -> tuple[int, int]:
        """(layer, index) of basis element ``c``, both 1-based."""
        l = self.layers[c]
        return l, c - self.layer_slice(l).start + 1

    def split(self, p) -> list[np.ndarray]:
        p = np.asarray(p)
        return [p[..., self.layer_slice(l)] for l in range(1, self.step + 1)]

    def bracket_basis(self, a: int, b: int) -> list[tuple[int, object]]:
        return self._table.get((a, b), [])

    def _validate(self):
        n = self.dim
        layers = self.layers
        for a, b, c, _ in self.brackets:
            if not (0 <= a < n and 0 <= b < n and 0 <= c < n):
                raise GroupSpecError(f"bracket index out of range: {(a, b, c)}")
            if layers[a] + layers[b] != layers[c]:
                raise GroupSpecError(f"[e_{a}, e_{b}] -> e_{c} does not respect the grading")
        # Jacobi identity on all basis triples
        for a, b, c in itertools.combinations(range(n), 3):
            total = np.zeros(n)
            for x, y, z in ((a, b, c), (b, c, a), (c, a, b)):
                for d, v in self.bracket_basis(y, z):
                    for e, w in self.bracket_basis(x, d):
                        total[e] += float(v * w)
            if np.max(np.abs(total)) > 1e-12:
                raise GroupSpecError(f"Jacobi identity fails on {(a, b, c)}")
        # [V_1, V_l] spans V_{l+1}
        for l in range(1, self.step):
            target = self.layer_slice(l + 1)
            rows = []
            for a in range(self.layer_slice(1).start, self.layer_slice(1).stop):
                for b in range(self.layer_slice(l).start, self.layer_slice(l).stop):
                    row = np.zeros(n)
                    for c, v in self.bracket_basis(a, b):
                        row[c] += float(v)
                    rows.append(row[target])
            rank = np.linalg.matrix_rank(np.array(rows)) if rows else 0
            if rank != self.layer_dims[l]:
                raise GroupSpecError(f"[V_1, V_{l}] does not span V_{l + 1}")

    # serialization ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "step": self.step,
            "layer_dims": list(self.layer_dims),
            "brackets": [
                {"a": a, "b": b, "c": c, "coef": _json_number(v)} for a, b, c, v in self.brackets
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> GroupSpec:
        try:
            br = tuple(
                (d["a"], d["b"], d["c"], _parse_number(d["coef"])) for d in data.get("brackets", [])
            )
            return cls(int(data["step"]), tuple(data["layer_dims"]), br, data.get("name", ""))
        except (KeyError, TypeError) as exc:
            raise GroupSpecError(f"malformed group document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> GroupSpec:
        return cls.from_dict(json.loads(text))


def _json_number(v):
    if isinstance(v, Fraction):
        return int(v) if v.denominator == 1 else str(v)
    return v


def _parse_number(v):
    if isinstance(v, str):
        return Fraction(v)
    return v


# named groups ---------------------------------------------------------------


def heisenberg(n: int = 1) -> GroupSpec:
    """Heisenberg group H^n with [X_i, Y_i] = T."""
    br = tuple((i, n + i, 2 * n, 1) for i in range(n))
    return GroupSpec(2, (2 * n, 1), br, name="h1" if n == 1 else f"h{n}")


def engel() -> GroupSpec:
    """Engel group: [X1, X2] = X3, [X1, X3] = X4."""
    return GroupSpec(3, (2, 1, 1), ((0, 1, 2, 1), (0, 2, 3, 1)), name="engel")


def abelian(m: int = 2) -> GroupSpec:
    return GroupSpec(1, (m,), (), name=f"r{m}")


NAMED_GROUPS = {"h1": heisenberg, "engel": engel}


def named_group(name: str) -> GroupSpec:
    try:
        return NAMED_GROUPS[name]()
    except KeyError:
        raise GroupSpecError(f"unknown group {name!r}; known: {sorted(NAMED_GROUPS)}") from None


# Lie algebra arithmetic on component lists -----------------------------------


def _bracket(spec: GroupSpec, u: Sequence, v: Sequence, exact: bool = True) -> list:
    out = [0] * spec.dim
    for a, b, c, coef in spec.brackets:
        if not exact:
            coef = float(coef)
        ua, ub, va, vb = u[a], u[b], v[a], v[b]
        term = 0
        if not _is_zero(ua) and not _is_zero(vb):
            term = ua * vb
        if not _is_zero(ub) and not _is_zero(va):
            term = term - ub * va
        if not _is_zero(term):
            out[c] = out[c] + coef * term
    return out


def _is_zero(x) -> bool:
    return isinstance(x, (int, Fraction)) and x == 0


@lru_cache(maxsize=None)
def dynkin_words(step: int) -> tuple[tuple[tuple[int, ...], Fraction], ...]:
    """Words in X=0, Y=1 with their Dynkin coefficients, up to length ``step``.

    ``log(e^X e^Y) = sum coef * [w_1, [w_2, ..., [w_{m-1}, w_m]]]``.
    Words whose last two letters agree are dropped since their bracket is zero.
    """
    acc: dict = {}
    for n in range(1, step + 1):
        pairs = [(r, s) for r in range(step + 1) for s in range(step + 1) if 1 <= r + s <= step]
        for seq in itertools.product(pairs, repeat=n):
            m = sum(r + s for r, s in seq)
            if m > step:
                continue
            denom = m
            word: list[int] = []
            for r, s in seq:
                denom *= math.factorial(r) * math.factorial(s)
                word.extend([0] * r + [1] * s)
            if len(word) >= 2 and word[-1] == word[-2]:
                continue
            coef = Fraction((-1) ** (n - 1), n * denom)
            acc[tuple(word)] = acc.get(tuple(word), 0) + coef
    return tuple((w, c) for w, c in sorted(acc.items(), key=lambda t: (len(t[0]), t[0])) if c != 0)


def bch(spec: GroupSpec, xs: Sequence, ys: Sequence, exact: bool = True) -> list:
    """Components of log(exp(X) exp(Y)) for component lists ``xs``, ``ys``.

    With ``exact`` the rational Dynkin coefficients are kept as Fractions
    (polynomials, Fraction arrays); otherwise they are cast to float.
    """
    letters = (list(xs), list(ys))
    out = [x + y for x, y in zip(xs, ys)]
    cache: dict = {}

    def nested(word):
        if word in cache:
            return cache[word]
        if len(word) == 1:
            res = letters[word[0]]
        else:
            res = _bracket(spec, letters[word[0]], nested(word[1:]), exact)
        cache[word] = res
        return res

    for word, coef in dynkin_words(spec.step):
        if len(word) < 2:
            continue
        z = nested(word)
        c_word = coef if exact else float(coef)
        for c in range(spec.dim):
            if not _is_zero(z[c]):
                out[c] = out[c] + c_word * z[c]
    return out


# group operations -----------------------------------------------------------


def _check(spec: GroupSpec, *points) -> list[np.ndarray]:
    out = []
    for p in points:
        arr = np.asarray(p)
        if arr.dtype != object:
            arr = arr.astype(float, copy=False)
        if arr.shape[-1:] != (spec.dim,):
            raise ValueError(f"point has shape {arr.shape}, group dimension is {spec.dim}")
        out.append(arr)
    return out


def multiply(spec: GroupSpec, p, q) -> np.ndarray:
    """Group product p*q; exact on Fraction (object) arrays."""
    p, q = _check(spec, p, q)
    p, q = np.broadcast_arrays(p, q)
    xs = [p[..., k] for k in range(spec.dim)]
    ys = [q[..., k] for k in range(spec.dim)]
    z = bch(spec, xs, ys, exact=p.dtype == object)
    return np.stack([np.broadcast_to(np.asarray(c, dtype=p.dtype), p.shape[:-1]) for c in z], axis=-1)


def inverse(spec: GroupSpec, p) -> np.ndarray:
    (p,) = _check(spec, p)
    return -p


def dilate(spec: GroupSpec, r, p) -> np.ndarray:
    (p,) = _check(spec, p)
    r_arr = np.asarray(r, dtype=p.dtype if p.dtype == object else float)
    if np.any(r_arr <= 0):
        raise ValueError("dilation factor must be positive")
    powers = np.stack([r_arr**l for l in spec.layers], axis=-1)
    return p * powers


def gauge_norm(spec: GroupSpec, p) -> np.ndarray:
    """(sum_j |z_j|^(2 s!/j))^(1/(2 s!))."""
    (p,) = _check(spec, p)
    p = p.astype(float)
    e = math.factorial(spec.step)
    blocks = spec.split(p)
    # divide out a homogeneous scale first so the high powers neither underflow nor overflow
    scale = np.max([np.max(np.abs(b), axis=-1) ** (1.0 / l) for l, b in enumerate(blocks, start=1)], axis=0)
    safe = np.where(scale > 0, scale, 1.0)
    total = 0.0
    for l, block in enumerate(blocks, start=1):
        b = block
        for _ in range(l):
            b = b / safe[..., None]
        sq = np.sum(b * b, axis=-1)
        total = total + sq ** (e // l) if e % l == 0 else total + sq ** (e / l)
    return scale * total ** (1.0 / (2 * e))


def distance(spec: GroupSpec, p, q) -> np.ndarray:
    return gauge_norm(spec, multiply(spec, inverse(spec, p), q))


def homogeneous_dimension(spec: GroupSpec) -> int:
    return sum(l * m for l, m in enumerate(spec.layer_dims, start=1))


# random sampling -------------------------------------------------------------


def sphere_points(spec: GroupSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Random points on the unit gauge sphere (Gaussian directions, pushed radially by dilation)."""
    z = rng.standard_normal((size, spec.dim))
    return dilate(spec, 1.0 / gauge_norm(spec, z), z)


def ball_points(spec: GroupSpec, rng: np.random.Generator, size: int, radius: float = 1.0,
                center=None) -> np.ndarray:
    """Random points of B_radius(center) with radial law proportional to r^(Q-1)."""
    Q = homogeneous_dimension(spec)
    s = sphere_points(spec, rng, size)
    r = radius * rng.random(size) ** (1.0 / Q)
    pts = dilate(spec, np.maximum(r, 1e-300), s)
    if center is not None:
        pts = multiply(spec, np.asarray(center, dtype=float), pts)
    return pts


# left-invariant vector fields ---------------------------------------------------


@dataclass(frozen=True)
class VectorField:
    """Left-invariant field sum_k coefficients[k] * d/dx_k."""

    index: int
    layer: int
    coefficients: tuple[GradedPolynomial, ...]

    def apply(self, P: GradedPolynomial) -> GradedPolynomial:
        out = GradedPolynomial({}, P.weights)
        for k, a in enumerate(self.coefficients):
            if not a.is_zero():
                out = out + a * P.diff(k)
        return out

    def coefficient_values(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.stack([a(pts) * np.ones(pts.shape[:-1]) for a in self.coefficients], axis=-1)

    def commutator(self, other: VectorField) -> tuple[GradedPolynomial, ...]:
        """Coefficients of [self, other] = self other - other self."""
        return tuple(
            self.apply(b) - other.apply(a) for a, b in zip(self.coefficients, other.coefficients)
        )


@lru_cache(maxsize=None)
def left_invariant_fields(spec: GroupSpec) -> tuple[VectorField, ...]:
    """X_c f(x) = d/dt f(x * exp(t e_c)) at t = 0, for every basis element c.

    The first ``layer_dims[0]`` fields are the horizontal generators.
    """
    n = spec.dim
    vars2 = coordinates(spec.layers + spec.layers)
    z = bch(spec, vars2[:n], vars2[n:])
    fields = []
    for c in range(n):
        coefs = tuple(z[k].diff(n + c).restrict(n) for k in range(n))
        fields.append(VectorField(c, spec.layers[c], coefs))
    return tuple(fields)


def horizontal_fields(spec: GroupSpec) -> tuple[VectorField, ...]:
    return left_invariant_fields(spec)[: spec.horizontal_dim]


@lru_cache(maxsize=None)
def translation_polys(spec: GroupSpec) -> tuple[GradedPolynomial, ...]:
    """Components of x*y as polynomials in the 2N variables (x, y)."""
    n = spec.dim
    vars2 = coordinates(spec.layers + spec.layers)
    return tuple(bch(spec, vars2[:n], vars2[n:]))


def left_translate_poly(spec: GroupSpec, P: GradedPolynomial, a) -> GradedPolynomial:
    """The polynomial y -> P(a*y) for a fixed numeric point ``a``."""
    n = spec.dim
    a = np.asarray(a, dtype=float)
    ycoords = coordinates(spec.layers)
    subs_a = [GradedPolynomial.constant(spec.layers, float(v)) for v in a]
    prod = [
        comp.compose(subs_a + ycoords) for comp in translation_polys(spec)
    ]
    return P.compose(prod)
