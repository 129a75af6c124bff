"""Moduli of continuity, Dini integrals and the right-hand sides of the Schauder bounds."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .groups import GroupSpec, ball_points, dilate, gauge_norm, multiply, sphere_points

DEFAULT_SCALES = tuple(2.0**-j for j in range(1, 13))
DEFAULT_PAIRS = 2000
DEFAULT_SEED = 42

# closed-form moduli are integrated down to this radius; the lower half of the
# log range decides convergence
_R_FLOOR = 1e-300
_DIVERGENCE_SHARE = 1e-2

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class Estimate:
    """A scalar bound together with quadrature diagnostics."""

    value: float
    divergent: bool = False
    extrapolated: bool = False

    def __float__(self):
        return float(self.value)


@dataclass
class ModulusProfile:
    """omega(r) at decreasing radii; nondecreasing in r by construction."""

    scales: np.ndarray
    values: np.ndarray
    provenance: dict = field(default_factory=dict)
    omega: Callable | None = None

    def __post_init__(self):
        scales = np.asarray(self.scales, dtype=float)
        values = np.asarray(self.values, dtype=float)
        order = np.argsort(scales)[::-1]
        scales, values = scales[order], values[order]
        if np.any(values < 0):
            raise ValueError("modulus values must be nonnegative")
        # running max from the smallest scale upward
        values = np.maximum.accumulate(values[::-1])[::-1]
        self.scales, self.values = scales, values

    @property
    def analytic(self) -> bool:
        return self.omega is not None

    def power_fit(self, which: str = "low") -> tuple[float, float]:
        """(A, beta) with omega ~ A r^beta fitted on the three smallest or largest scales."""
        idx = slice(-3, None) if which == "low" else slice(0, 3)
        r, w = self.scales[idx], self.values[idx]
        if np.any(w <= 0):
            return 0.0, 1.0
        beta, logA = np.polyfit(np.log(r), np.log(w), 1)
        return float(np.exp(logA)), float(beta)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.omega is not None:
            return self.omega(r)
        lr = np.log(np.maximum(r, 1e-300))
        ls = np.log(self.scales[::-1])
        with np.errstate(divide="ignore"):
            lw = np.log(self.values[::-1])
        out = np.exp(np.interp(lr, ls, lw))
        if np.all(self.values > 0):
            A, beta = self.power_fit("low")
            out = np.where(r < self.scales[-1], A * np.maximum(r, 0) ** beta, out)
            A, beta = self.power_fit("high")
            out = np.where(r > self.scales[0], A * r**beta, out)
        else:
            out = np.where(r < self.scales[-1], self.values[-1], out)
            out = np.where(r > self.scales[0], self.values[0], out)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "omega", "provenance"])
        prov = ";".join(f"{k}={v}" for k, v in sorted(self.provenance.items()))
        for r, v in zip(self.scales, self.values):
            w.writerow([repr(float(r)), repr(float(v)), prov])
        return buf.getvalue()


OmegaLike = Union[ModulusProfile, Callable]


def estimate_modulus(
    spec: GroupSpec,
    f: Callable,
    domain_radius: float = 1.0,
    scales: Sequence[float] = DEFAULT_SCALES,
    seed: int = DEFAULT_SEED,
    pairs_per_scale: int = DEFAULT_PAIRS,
) -> ModulusProfile:
    """Sampled omega_f(r) = sup_{d(xi, eta) < r} |f(xi) - f(eta)| on B_R(0).

    Half of the base points are spread over the whole ball; the rest sit within
    2r of the origin, half of those at log-uniform radii down to 1e-8 r, so
    singular behaviour at the center is seen at every scale.
    """
    if pairs_per_scale < 100:
        raise ValueError("pairs_per_scale must be at least 100")
    rng = np.random.default_rng(seed)
    scales = np.sort(np.asarray(scales, dtype=float))[::-1]
    values = []
    for r in scales:
        half = pairs_per_scale // 2
        quarter = (pairs_per_scale - half) // 2
        rest = pairs_per_scale - half - quarter
        near = min(domain_radius, 2.0 * r)
        tiny = dilate(spec, near * 10.0 ** (-8 * rng.random(rest)), sphere_points(spec, rng, rest))
        base = np.concatenate(
            [
                ball_points(spec, rng, half, domain_radius),
                ball_points(spec, rng, quarter, near),
                tiny,
            ]
        )
        step = dilate(spec, r * rng.random(pairs_per_scale), sphere_points(spec, rng, pairs_per_scale))
        other = multiply(spec, base, step)
        ok = gauge_norm(spec, other) < domain_radius
        diff = np.abs(np.asarray(f(base[ok])) - np.asarray(f(other[ok])))
        values.append(float(diff.max()) if diff.size else 0.0)
    return ModulusProfile(
        scales, np.array(values), {"kind": "sampled", "seed": seed, "pairs": pairs_per_scale}
    )


def _weight_power(weight: str) -> int:
    table = {"1/r": 1, "1/r^2": 2, "1/r2": 2, "1/r**2": 2}
    try:
        return table[weight]
    except KeyError:
        raise ValueError(f"weight must be '1/r' or '1/r^2', got {weight!r}") from None


def _log_trapezoid(omega: Callable, a: float, b: float, p: int, per_decade: int) -> float:
    n = max(2, int(math.ceil(per_decade * math.log10(b / a))) + 1)
    s = np.linspace(math.log(a), math.log(b), n)
    vals = np.asarray(omega(np.exp(s)), dtype=float) * np.exp((1 - p) * s)
    return float(_trapezoid(vals, s))


def dini_integral(omega: OmegaLike, a: float, b: float, weight: str = "1/r",
                  nodes_per_decade: int = 64) -> Estimate:
    """Integral of omega(r) r^-p over [a, b] by log-spaced trapezoids."""
    p = _weight_power(weight)
    if not (0 <= a < b <= 1):
        raise ValueError("need 0 <= a < b <= 1")
    if a > 0:
        extrap = isinstance(omega, ModulusProfile) and not omega.analytic and (
            a < omega.scales[-1] or b > omega.scales[0]
        )
        return Estimate(_log_trapezoid(omega, a, b, p, nodes_per_decade), extrapolated=extrap)

    if isinstance(omega, ModulusProfile) and not omega.analytic:
        r_min = float(omega.scales[-1])
        if r_min >= b:
            head = 0.0
            r_min = b
        else:
            head = _log_trapezoid(omega, r_min, b, p, nodes_per_decade)
        A, beta = omega.power_fit("low")
        if A == 0.0:
            return Estimate(head, extrapolated=True)
        expo = beta - p + 1
        if expo <= 0:
            return Estimate(math.inf, divergent=True, extrapolated=True)
        return Estimate(head + A * r_min**expo / expo, extrapolated=True)

    mid = math.sqrt(_R_FLOOR * b)
    low = _log_trapezoid(omega, _R_FLOOR, mid, p, nodes_per_decade)
    high = _log_trapezoid(omega, mid, b, p, nodes_per_decade)
    total = low + high
    if not math.isfinite(total) or (total > 0 and low > _DIVERGENCE_SHARE * total):
        return Estimate(math.inf, divergent=True)
    return Estimate(total)


def schauder_rhs(d: float, omega: OmegaLike, sup_u: float, sup_f: float, C: float = 1.0) -> Estimate:
    """C (d (sup|u| + ||f||_inf + int_{sqrt d}^1 omega/r^2) + int_0^{sqrt d} omega/r)."""
    if not (0 < d < 1):
        raise ValueError("need 0 < d < 1")
    rd = math.sqrt(d)
    hi = dini_integral(omega, rd, 1.0, "1/r^2")
    lo = dini_integral(omega, 0.0, rd, "1/r")
    extrap = hi.extrapolated or lo.extrapolated
    if hi.divergent or lo.divergent:
        return Estimate(math.inf, divergent=True, extrapolated=extrap)
    return Estimate(C * (d * (sup_u + sup_f + hi.value) + lo.value), extrapolated=extrap)


def holder_rhs(d: float, alpha: float, sup_u: float, holder_norm_f: float, C: float = 1.0,
               log_corrected: bool | None = None) -> float:
    """Hoelder right-hand side; the alpha = 1 case carries the log factor.

    ``log_corrected=False`` forces the plain power form even at alpha = 1,
    which is the comparison used for Lipschitz data.
    """
    if not (0 < alpha <= 1):
        raise ValueError("alpha must lie in (0, 1]")
    if not (0 < d < 1):
        raise ValueError("need 0 < d < 1")
    if log_corrected is None:
        log_corrected = alpha == 1
    if not log_corrected:
        return C * d ** (alpha / 2) * (sup_u + holder_norm_f)
    rd = math.sqrt(d)
    return C * rd * (sup_u + holder_norm_f * (1 + abs(rd * math.log(rd))))


def de_giorgi_threshold(C: float, alpha: float, beta: float, phi0: float) -> float:
    """C^(1/alpha) phi0^((beta-1)/alpha) 2^(beta/(beta-1))."""
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    if C <= 0 or alpha <= 0 or phi0 < 0:
        raise ValueError("need C > 0, alpha > 0, phi0 >= 0")
    return C ** (1 / alpha) * phi0 ** ((beta - 1) / alpha) * 2 ** (beta / (beta - 1))


# test inhomogeneities -------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """f(xi) = phi(|x_11|) with phi concave, increasing, phi(0) = 0.

    Because the first-layer coordinates add under the group law,
    |x_11(xi) - x_11(eta)| <= d(xi, eta) with equality along X_1, and concavity
    makes phi subadditive, so omega_f = phi exactly on B_1(0).
    """

    __test__ = False

    kind: str
    phi: Callable
    alpha: float | None = None
    seminorm: float | None = None
    offset: float = 0.0

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        return self.offset + self.phi(np.abs(pts[..., 0]))

    def omega(self, r):
        return self.phi(np.minimum(np.asarray(r, dtype=float), 1.0))

    @property
    def sup(self) -> float:
        """sup |f| over B_1(0)."""
        return float(abs(self.offset) + self.phi(np.array(1.0)))

    def holder_norm(self) -> float:
        if self.seminorm is None:
            raise ValueError(f"{self.kind} is not Hoelder continuous")
        return self.seminorm + self.sup

    def profile(self, scales: Sequence[float] = DEFAULT_SCALES) -> ModulusProfile:
        s = np.asarray(scales, dtype=float)
        return ModulusProfile(s, self.omega(s), {"kind": "analytic", "function": self.kind}, self.omega)


def _log_dini_phi(c: float):
    def phi(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(s > 0, c / (c - np.log(np.where(s > 0, s, 1.0))) ** 2, 0.0)
    return phi


def _non_dini_phi(c: float):
    def phi(s):
        s = np.asarray(s, dtype=float)
        return np.where(s > 0, c / (c - np.log(np.where(s > 0, s, 1.0))), 0.0)
    return phi


def test_function(kind: str, alpha: float | None = None, c: float | None = None,
                  offset: float = 0.0) -> TestFunction:
    """Inhomogeneity with a known modulus.

    kinds: ``holder`` (alpha), ``lipschitz``, ``log_dini``, ``non_dini``, ``constant``.
    ``log_dini`` is c / log(e^c / r)^2 (Dini integral exactly 1) and
    ``non_dini`` is c / log(e^c / r); c defaults to the smallest value that keeps
    the profile concave on (0, 1].
    """
    if kind == "holder":
        if alpha is None or not (0 < alpha < 1):
            raise ValueError("holder needs 0 < alpha < 1")
        a = float(alpha)
        return TestFunction("holder", lambda s: np.asarray(s, dtype=float) ** a, a, 1.0, offset)
    if kind == "lipschitz":
        return TestFunction("lipschitz", lambda s: np.asarray(s, dtype=float) * 1.0, 1.0, 1.0, offset)
    if kind == "log_dini":
        return TestFunction("log_dini", _log_dini_phi(3.0 if c is None else float(c)), None, None, offset)
    if kind == "non_dini":
        return TestFunction("non_dini", _non_dini_phi(2.0 if c is None else float(c)), None, None, offset)
    if kind == "constant":
        return TestFunction("constant", lambda s: np.zeros_like(np.asarray(s, dtype=float)), 1.0, 0.0, offset)
    raise ValueError(f"unknown test function kind {kind!r}")


def parse_rhs(text: str) -> TestFunction:
    """'holder:0.5', 'lipschitz', 'log_dini', 'non_dini', 'constant:2.0'."""
    kind, _, arg = text.partition(":")
    if kind == "holder":
        return test_function("holder", alpha=float(arg))
    if kind == "constant":
        return test_function("constant", offset=float(arg) if arg else 1.0)
    if kind in ("lipschitz", "log_dini", "non_dini"):
        return test_function(kind, c=float(arg) if arg and kind != "lipschitz" else None)
    raise ValueError(f"cannot parse rhs {text!r}")
