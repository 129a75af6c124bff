"""Executable forms of the auxiliary estimates: Sobolev quotient, maximum
principle, interior derivative bounds for L-harmonic functions, the mean value
inequality and the De Giorgi iteration threshold.

Each check returns the implied constant rather than asserting one.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .calculus import apply_word, sublaplacian_apply, word_derivative, word_order
from .groups import (
    GroupSpec,
    ball_points,
    dilate,
    gauge_norm,
    homogeneous_dimension,
    horizontal_fields,
    multiply,
    sphere_points,
)
from .modulus import de_giorgi_threshold
from .poly import GradedPolynomial
from .solver import (
    DiscreteField,
    DiscreteProblem,
    _evaluate,
    _grid_partial,
    _poly_on_grid,
    discretize_L,
)


class LemmaError(ValueError):
    pass


# Sobolev quotient -------------------------------------------------------------


def _horizontal_gradient_grid(problem: DiscreteProblem, values: np.ndarray) -> np.ndarray:
    """|X f| on the full box from centered differences; f is given on every node."""
    pb = problem
    sq = np.zeros(pb.shape)
    for X in horizontal_fields(pb.spec):
        comp = np.zeros(pb.shape)
        for k, a in enumerate(X.coefficients):
            if not a.is_zero():
                comp = comp + _poly_on_grid(a, pb) * _grid_partial(values, pb.spacing, k)
        sq = sq + comp * comp
    return np.sqrt(sq)


def sobolev_ratio(problem: DiscreteProblem, f: Callable, p: float = 2.0) -> float:
    """||f||_{p*} / ||X f||_p over the ball, p* = pQ/(Q - p), midpoint quadrature.

    f must vanish near the boundary of the ball; it is sampled on every node
    of the bounding box so that the difference stencils never run out of data.
    """
    Q = homogeneous_dimension(problem.spec)
    if not (1 < p < Q):
        raise LemmaError(f"need 1 < p < Q = {Q}")
    p_star = p * Q / (Q - p)
    mesh = np.stack(np.meshgrid(*problem.axes, indexing="ij"), axis=-1)
    vals = np.asarray(f(problem.world(mesh.reshape(-1, problem.spec.dim))), dtype=float)
    vals = vals.reshape(problem.shape)
    grad = np.nan_to_num(_horizontal_gradient_grid(problem, vals))
    inside = problem.interior
    dv = problem.cell_volume
    num = (np.sum(np.abs(vals[inside]) ** p_star) * dv) ** (1 / p_star)
    den = (np.sum(grad[inside] ** p) * dv) ** (1 / p)
    if den == 0:
        raise LemmaError("horizontal gradient vanishes identically")
    return float(num / den)


def bump(spec: GroupSpec, radius: float = 1.0, amplitude: float = 1.0) -> Callable:
    """amplitude * (1 - |xi / radius|^(2 s!))_+^2, a polynomial inside the ball."""
    e = 2 * math.factorial(spec.step)

    def f(points):
        s = gauge_norm(spec, dilate(spec, 1.0 / radius, points)) ** e
        return amplitude * np.clip(1.0 - s, 0.0, None) ** 2

    return f


# maximum principle ------------------------------------------------------------


@dataclass(frozen=True)
class MaxPrincipleReport:
    sup_u: float
    sup_g: float
    sup_f: float
    volume: float
    Q: int
    lhs: float
    rhs: float
    ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def max_principle_check(problem: DiscreteProblem, u: DiscreteField, f, g) -> MaxPrincipleReport:
    """(sup|u| - sup|g|)_+ against ||f||_inf |Omega|^{2/Q} 2^{(Q+2)/4}."""
    handle = discretize_L(problem)
    sup_u = u.max_abs()
    gb = _evaluate(g, handle.boundary_world)
    sup_g = float(np.max(np.abs(gb))) if gb.size else 0.0
    sup_f = float(np.max(np.abs(_evaluate(f, problem.world_points()))))
    Q = homogeneous_dimension(problem.spec)
    vol = problem.volume
    lhs = max(sup_u - sup_g, 0.0)
    rhs = sup_f * vol ** (2.0 / Q) * 2.0 ** ((Q + 2) / 4)
    if rhs == 0:
        ratio = 0.0 if lhs <= 1e-9 * max(1.0, sup_g) else math.inf
    else:
        ratio = lhs / rhs
    return MaxPrincipleReport(sup_u, sup_g, sup_f, vol, Q, lhs, rhs, ratio)


def random_bounded_rhs(spec: GroupSpec, rng: np.random.Generator, modes: int = 4,
                       modulation: float = 0.4) -> Callable:
    """1 + modulation * (random trigonometric field scaled into [-1, 1])."""
    k = rng.normal(size=(modes, spec.dim)) * 2.0
    phase = rng.uniform(0, 2 * np.pi, modes)
    amp = rng.uniform(-1, 1, modes)
    amp = amp / np.sum(np.abs(amp))

    def f(points):
        pts = np.asarray(points, dtype=float)
        return 1.0 + modulation * np.cos(pts @ k.T + phase) @ amp

    return f


# interior derivative bounds for L-harmonic functions -----------------------------


def _to_sphere(spec: GroupSpec, v: np.ndarray) -> np.ndarray:
    n = gauge_norm(spec, v)
    return dilate(spec, 1.0 / np.maximum(n, 1e-300), v)


def _to_ball(spec: GroupSpec, v: np.ndarray) -> np.ndarray:
    n = gauge_norm(spec, v)
    return dilate(spec, 1.0 / np.maximum(n, 1.0), v)


def _sup_abs(spec: GroupSpec, g: Callable, center, radius: float, rng, samples: int,
             surface: bool, polish: int = 4) -> float:
    """sup of |g| over the closed ball (or its sphere) by sampling plus local polishing."""
    center = np.asarray(center, dtype=float)
    proj = _to_sphere if surface else _to_ball
    pts = sphere_points(spec, rng, samples)
    if not surface:
        pts = np.concatenate([pts, ball_points(spec, rng, samples)])
    vals = np.abs(g(multiply(spec, center, dilate(spec, radius, pts))))
    best = float(np.max(vals))
    for idx in np.argsort(vals)[::-1][:polish]:
        obj = lambda v: -float(np.abs(g(multiply(spec, center, dilate(spec, radius, proj(spec, v[None, :]))))[0]))  # noqa: E731
        res = optimize.minimize(obj, pts[idx], method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000})
        best = max(best, -float(res.fun))
    return best


def _residual_check(spec: GroupSpec, u, center, radius: float, rng, tol: float = 1e-6) -> None:
    if isinstance(u, GradedPolynomial):
        if not sublaplacian_apply(spec, u).chop(1e-12).is_zero():
            raise LemmaError("u is not L-harmonic")
        return
    pts = multiply(spec, center, dilate(spec, radius, ball_points(spec, rng, 64)))
    lap = sum(word_derivative(spec, u, pts, (i, i)) for i in range(spec.horizontal_dim))
    scale = max(1.0, float(np.max(np.abs(u(pts))))) / radius**2
    if np.max(np.abs(lap)) > tol * scale:
        raise LemmaError("u is not L-harmonic (sampled residual too large)")


def harmonic_derivative_bound(spec: GroupSpec, u, xi, r: float, word: Sequence[int],
                              samples: int = 4000, seed: int = 0) -> float:
    """sup_{B_{r/2}(xi)} |X^I u| r^{|I|} / sup_{B_r(xi)} |u| for L-harmonic u."""
    rng = np.random.default_rng(seed)
    xi = np.asarray(xi, dtype=float)
    word = tuple(word)
    _residual_check(spec, u, xi, r, rng)
    if isinstance(u, GradedPolynomial):
        du = apply_word(spec, word, u)
        u_fn, du_fn = u, du
    else:
        u_fn = u
        du_fn = lambda p: word_derivative(spec, u, p, word)  # noqa: E731
    # the maximum of a harmonic function sits on the boundary sphere
    den = _sup_abs(spec, u_fn, xi, r, rng, samples, surface=True)
    if den == 0:
        raise LemmaError("u vanishes on the ball")
    num = _sup_abs(spec, du_fn, xi, r / 2, rng, samples, surface=False)
    return num * r ** word_order(spec, word) / den


# mean value inequality ------------------------------------------------------------


def _grad_norm(spec: GroupSpec, f, points) -> np.ndarray:
    if isinstance(f, GradedPolynomial):
        comps = [X.apply(f)(points) for X in horizontal_fields(spec)]
    else:
        comps = [word_derivative(spec, f, points, (i,)) for i in range(spec.horizontal_dim)]
    return np.sqrt(sum(np.asarray(c) ** 2 for c in comps))


def mean_value_ratios(spec: GroupSpec, f, xis, etas, b: float = 1.0, samples: int = 128,
                      seed: int = 0) -> np.ndarray:
    """|f(xi eta) - f(xi)| / (|eta| sup_{B_{b|eta|}(xi)} |X f|), vectorized over pairs.

    The supremum is estimated on a common set of sample points of the unit
    ball (plus its center) carried to each B_{b|eta|}(xi) by dilation and
    left translation.  A zero supremum with a nonzero increment returns inf.
    """
    if b < 1:
        raise LemmaError("b must be at least 1")
    rng = np.random.default_rng(seed)
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    etas = np.atleast_2d(np.asarray(etas, dtype=float))
    unit = np.concatenate([np.zeros((1, spec.dim)), ball_points(spec, rng, samples // 2),
                           sphere_points(spec, rng, samples - samples // 2 - 1)])
    rad = b * gauge_norm(spec, etas)
    num = np.abs(np.asarray(f(multiply(spec, xis, etas))) - np.asarray(f(xis)))
    sups = np.zeros(len(xis))
    chunk = max(1, 200_000 // len(unit))
    for s in range(0, len(xis), chunk):
        sl = slice(s, s + chunk)
        local = dilate(spec, rad[sl, None], unit[None, :, :])
        pts = multiply(spec, xis[sl, None, :], local)
        sups[sl] = np.max(_grad_norm(spec, f, pts), axis=1)
    den = gauge_norm(spec, etas) * sups
    out = np.zeros(len(xis))
    zero = den == 0
    out[~zero] = num[~zero] / den[~zero]
    out[zero & (num > 1e-14)] = np.inf
    return out


def mean_value_check(spec: GroupSpec, f, xi, eta, b: float = 1.0, samples: int = 512,
                     seed: int = 0) -> float:
    return float(mean_value_ratios(spec, f, xi, eta, b, samples, seed)[0])


def smooth_library(spec: GroupSpec) -> dict:
    """Functions used for the mean value study; polynomials are differentiated exactly."""
    from .poly import coordinates

    x = coordinates(spec.layers)
    return {
        "x0": x[0],
        "top": x[-1],
        "x0*x1": x[0] * x[1],
        "quadratic": x[0] * x[0] - 0.5 * x[1] * x[1] + x[-1],
        "sin*cos": lambda p: np.sin(np.asarray(p)[..., 0]) * np.cos(np.asarray(p)[..., 1]),
        "exp": lambda p: np.exp(np.asarray(p)[..., 0] - 0.5 * np.asarray(p)[..., -1]),
        "abs": lambda p: np.abs(np.asarray(p)[..., 0]),
    }


# De Giorgi iteration -------------------------------------------------------------


@dataclass(frozen=True)
class DeGiorgiSequence:
    """phi(t) = phi0 (1 - (t - k0)/D)_+^gamma, built to satisfy
    phi(h) <= C (h - k)^(-alpha) phi(k)^beta for all h > k >= k0.

    With K = gamma^gamma alpha^alpha / (alpha + gamma)^(alpha + gamma) the
    sharp constant of this family is phi0^(1-beta) D^alpha K, provided
    gamma (beta - 1) <= alpha; D is chosen to make it equal C.
    """

    C: float
    alpha: float
    beta: float
    phi0: float
    k0: float
    gamma: float

    @property
    def K(self) -> float:
        a, g = self.alpha, self.gamma
        return g**g * a**a / (a + g) ** (a + g)

    @property
    def D(self) -> float:
        return (self.C * self.phi0 ** (self.beta - 1) / self.K) ** (1 / self.alpha)

    def __call__(self, t):
        s = 1.0 - (np.asarray(t, dtype=float) - self.k0) / self.D
        return self.phi0 * np.clip(s, 0.0, 1.0) ** self.gamma

    def vanishing_point(self) -> float:
        return self.k0 + self.D

    def worst_ratio(self, nodes: int = 400) -> float:
        """max over a grid of k < h of phi(h) (h - k)^alpha / (C phi(k)^beta); at most 1."""
        t = self.k0 + self.D * np.linspace(0.0, 1.0, nodes)
        k, h = np.meshgrid(t, t, indexing="ij")
        ok = h > k
        phk = self(k)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = self(h) * (h - k) ** self.alpha / (self.C * phk**self.beta)
        r = np.where(ok & (phk > 0), r, 0.0)
        return float(np.max(r))


def de_giorgi_sequence(C: float, alpha: float, beta: float, phi0: float = 1.0, k0: float = 0.0,
                       gamma: float | None = None) -> DeGiorgiSequence:
    if beta <= 1:
        raise LemmaError("beta must exceed 1")
    gmax = alpha / (beta - 1)
    gamma = gmax if gamma is None else gamma
    if not (0 < gamma <= gmax):
        raise LemmaError("gamma must lie in (0, alpha/(beta-1)]")
    return DeGiorgiSequence(C, alpha, beta, phi0, k0, gamma)


def de_giorgi_check(seq: DeGiorgiSequence) -> dict:
    """Compare where the sequence vanishes with k0 + d~ from the threshold formula."""
    d = de_giorgi_threshold(seq.C, seq.alpha, seq.beta, seq.phi0)
    return {
        "threshold": d,
        "vanishes_at": seq.vanishing_point(),
        "recurrence_ratio": seq.worst_ratio(),
        "value_at_threshold": float(seq(seq.k0 + d)),
        "ok": bool(seq(seq.k0 + d) == 0.0 and seq.vanishing_point() <= seq.k0 + d * (1 + 1e-12)),
    }
