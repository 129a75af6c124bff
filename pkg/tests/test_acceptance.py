"""Acceptance criteria 1 to 12, each at its stated tolerance and time limit.

Each test prints one ``[PASS]`` or ``[FAIL]`` line (with the measured numbers)
before asserting, so ``pytest -s`` or the captured log shows the whole table.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from carnot import engel, heisenberg, modulus
from carnot.calculus import EXACT
from carnot.cascade import (
    CascadeConfig,
    Source,
    run_cascade,
    split_estimate,
    theorem_check,
)
from carnot.checks import (
    consistency_residual,
    convergence_study,
    de_giorgi_study,
    group_invariants,
    max_principle_study,
    mean_value_study,
    sobolev_study,
    taylor_checks,
)
from carnot.fitting import spread
from carnot.manufactured import from_expression

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, elapsed, limit, detail):
        ok = bool(ok) and elapsed < limit
        tag = "PASS" if ok else "FAIL"
        with capsys.disabled():
            print(f"\n[{tag}] criterion {number:2d} {title}: {detail} ({elapsed:.1f}s / {limit:.0f}s)")
        return ok

    return emit


def test_criterion_01_group_algebra(verdict):
    t0 = time.perf_counter()
    keys = ("associativity", "inverse", "dilation_homomorphism", "norm_homogeneity")
    worst = {}
    for spec in (heisenberg(), engel()):
        out = group_invariants(spec, trials=1000, seed=0)
        worst[spec.name] = max(out[k] for k in keys)
    elapsed = time.perf_counter() - t0
    ok = all(v <= 1e-12 for v in worst.values())
    detail = ", ".join(f"{k} max error {v:.2e}" for k, v in worst.items())
    assert verdict(1, "group algebra", ok, elapsed, 1.0, detail)


def test_criterion_02_discrete_consistency(verdict):
    t0 = time.perf_counter()
    out = consistency_residual(heisenberg(), 33)
    elapsed = time.perf_counter() - t0
    ok = out["full_stencil_residual"] <= 1e-10 and out["full_stencil_nodes"] > 0
    detail = f"|L_h(x^2/2) - 1| = {out['full_stencil_residual']:.2e} on {out['full_stencil_nodes']} nodes"
    assert verdict(2, "discrete L on x^2/2", ok, elapsed, 5.0, detail)


def test_criterion_03_solver_convergence(verdict):
    t0 = time.perf_counter()
    out = convergence_study(heisenberg(), ns=(17, 33, 65))
    elapsed = time.perf_counter() - t0
    ok = min(out["orders"]) >= 1.5
    detail = "errors " + ", ".join(f"{e:.2e}" for e in out["errors"]) + \
        "; orders " + ", ".join(f"{o:.2f}" for o in out["orders"])
    assert verdict(3, "manufactured L-inf order", ok, elapsed, 120.0, detail)


def test_criterion_04_maximum_principle(verdict):
    t0 = time.perf_counter()
    out = max_principle_study(heisenberg(), ns=(33, 65), trials=10, seed=0)
    elapsed = time.perf_counter() - t0
    ok = out["finite"] and out["spread_across_f"] <= 2 and out["spread_across_n"] <= 2
    detail = (f"ratios in [{min(min(v) for v in out['ratios'].values()):.4f}, "
              f"{max(max(v) for v in out['ratios'].values()):.4f}], spread across f "
              f"{out['spread_across_f']:.3f}, across n {out['spread_across_n']:.3f}")
    assert verdict(4, "maximum principle ratio", ok, elapsed, 300.0, detail)


def test_criterion_05_de_giorgi(verdict):
    t0 = time.perf_counter()
    out = de_giorgi_study(count=20, seed=0)
    elapsed = time.perf_counter() - t0
    rows = out["sequences"]
    ok = len(rows) == 20 and all(
        r["vanishes_at"] <= r["k0"] + r["threshold"] * (1 + 1e-12) and r["recurrence_ratio"] <= 1 + 1e-9
        for r in rows)
    slack = min((r["k0"] + r["threshold"] - r["vanishes_at"]) / r["threshold"] for r in rows)
    detail = f"20 sequences vanish by k0 + d~, smallest relative slack {slack:.3f}"
    assert verdict(5, "De Giorgi threshold", ok, elapsed, 1.0, detail)


def test_criterion_06_taylor(verdict):
    t0 = time.perf_counter()
    res = {spec.name: taylor_checks(spec, max_degree=4, seed=0) for spec in (heisenberg(), engel())}
    elapsed = time.perf_counter() - t0
    ok = all(r["projection_error"] <= 1e-10 and r["polynomial_remainder"] == EXACT
             and r["exp_remainder_slope"] >= 2.8 for r in res.values())
    detail = ", ".join(f"{k}: projection {r['projection_error']:.1e}, exp slope {r['exp_remainder_slope']:.3f}"
                       for k, r in res.items())
    assert verdict(6, "Taylor projection and remainder", ok, elapsed, 30.0, detail)


def test_criterion_07_mean_value(verdict):
    t0 = time.perf_counter()
    out = mean_value_study(heisenberg(), draws=10_000, seed=0, batches=4)
    elapsed = time.perf_counter() - t0
    ok = out["finite"] and out["batch_spread"] <= 2
    detail = f"C hat {out['C_hat']:.3f}, batch constants spread {out['batch_spread']:.3f}"
    assert verdict(7, "mean value inequality", ok, elapsed, 30.0, detail)


def test_criterion_08_sobolev(verdict):
    t0 = time.perf_counter()
    out = sobolev_study(heisenberg(), ns=(33, 65))
    elapsed = time.perf_counter() - t0
    ok = out["amplitude_change"] <= 0.05 and out["scale_change"] <= 0.05 and out["refinement_change"] <= 0.05
    detail = (f"ratio {out['ratios']['33']:.4f} -> {out['ratios']['65']:.4f}; changes: amplitude "
              f"{out['amplitude_change']:.1e}, scale {out['scale_change']:.1e}, refinement "
              f"{out['refinement_change']:.3f}")
    assert verdict(8, "Sobolev quotient", ok, elapsed, 60.0, detail)


def test_criterion_09_cascade_null(verdict):
    # constant f with an exact solution carrying a harmonic part, so that the
    # horizontal Hessian is not diagonal and every level has work to do
    t0 = time.perf_counter()
    h1 = heisenberg()
    m = from_expression(h1, "x0**2/2 + x0*x1 + x2/3")
    src = Source(h1, modulus.test_function("constant", offset=1.0), m.u, m.second, 1.0, True)
    cfg = CascadeConfig(rhs="constant:1", n_per_ball=25, k_max=5)
    rep = run_cascade(cfg, src)
    worst = {"v": 0.0, "XXw": 0.0, "I1": 0.0, "I2": 0.0, "I3": 0.0}
    for r in rep.records:
        worst["v"] = max(worst["v"], r.sup_v)
        worst["XXw"] = max(worst["XXw"], max(r.sup_xxw.values()))
    for k in range(6):
        xi0 = (0.5 ** (2 * k + 3.5), 0.0, 0.0)
        for i, j in ((0, 0), (0, 1)):
            s = split_estimate(replace(cfg, k_max=k), xi0, i, j, k=k, source=src)
            for name in ("I1", "I2", "I3"):
                worst[name] = max(worst[name], getattr(s, name))
    elapsed = time.perf_counter() - t0
    ok = all(v <= 1e-7 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert verdict(9, "cascade null test", ok, elapsed, 180.0, detail)


def test_criterion_10_cascade_decay(verdict):
    t0 = time.perf_counter()
    rep = run_cascade(CascadeConfig(rhs="holder:0.5", n_per_ball=25, k_max=5))
    v, xxw = rep.ratio_sequence("v"), rep.ratio_sequence("xxw")
    elapsed = time.perf_counter() - t0
    finite = np.all(np.isfinite(v)) and np.all(np.isfinite(xxw))
    ok = finite and spread(v) <= 10 and spread(xxw) <= 10 and len(v) == 6
    detail = (f"sup|v_k|/(rho^2k omega) in [{v.min():.4f}, {v.max():.4f}], "
              f"sup|XXw_k|/omega in [{xxw.min():.4f}, {xxw.max():.4f}]")
    assert verdict(10, "cascade decay ratios", ok, elapsed, 600.0, detail)


def test_criterion_11_main_estimate(verdict):
    t0 = time.perf_counter()
    hol = {n: theorem_check(CascadeConfig(rhs="holder:0.5"), 500, n=n) for n in (33, 65)}
    lip = {n: theorem_check(CascadeConfig(rhs="lipschitz"), 500, n=n) for n in (33, 65)}
    elapsed = time.perf_counter() - t0
    ch = [hol[n].constants["holder"] for n in (33, 65)]
    cl = [lip[n].constants["log_corrected"] for n in (33, 65)]
    plain = [lip[n].constants["holder"] for n in (33, 65)]
    ok = (all(math.isfinite(c) and c > 0 for c in ch + cl)
          and spread(ch) <= 2 and spread(cl) <= 2
          and all(a <= b for a, b in zip(cl, plain)))
    detail = (f"holder(1/2) C hat {ch[0]:.4f} -> {ch[1]:.4f}; lipschitz log-corrected "
              f"{cl[0]:.4f} -> {cl[1]:.4f} (plain form {plain[0]:.4f} -> {plain[1]:.4f})")
    assert verdict(11, "Hessian continuity constant", ok, elapsed, 900.0, detail)


def test_criterion_12_negative_control(verdict):
    t0 = time.perf_counter()
    f = modulus.test_function("non_dini")
    dini = modulus.dini_integral(f.omega, 0.0, 1.0)
    rhs = modulus.schauder_rhs(0.01, f.omega, 1.0, f.sup)
    control = modulus.schauder_rhs(0.01, modulus.test_function("log_dini").omega, 1.0, 1.0)
    elapsed = time.perf_counter() - t0
    ok = dini.divergent and rhs.divergent and math.isinf(rhs.value) and not control.divergent
    detail = f"dini divergent={dini.divergent}, rhs divergent={rhs.divergent}, log_dini rhs {control.value:.3f}"
    assert verdict(12, "non-Dini negative control", ok, elapsed, 1.0, detail)
