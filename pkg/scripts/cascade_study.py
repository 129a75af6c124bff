"""Cascade ratios, the split sweep and the translated family for one test function.

    python scripts/cascade_study.py --rhs holder:0.5 --kmax 5 --n 25
"""
import argparse
from dataclasses import replace

from carnot.cascade import (
    CascadeConfig,
    run_cascade,
    second_derivative_limit,
    split_estimate,
    split_level,
    translated_cascade,
)


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--group", default="h1")
    p.add_argument("--rhs", default="holder:0.5")
    p.add_argument("--kmax", type=int, default=5)
    p.add_argument("--n", type=int, default=25)
    p.add_argument("--mode", default="manufactured", choices=["manufactured", "solved"])
    args = p.parse_args()
    cfg = CascadeConfig(group=args.group, rhs=args.rhs, k_max=args.kmax, n_per_ball=args.n, mode=args.mode)
    rep = run_cascade(cfg)
    print(f"{'k':>2} {'omega':>9} {'sup v':>11} {'sup XXw':>11} {'ratio v':>9} {'ratio XXw':>9}")
    for r in rep.records:
        print(f"{r.k:>2} {r.omega:>9.4g} {r.sup_v:>11.3e} {max(r.sup_xxw.values()):>11.3e} "
              f"{r.ratio_v:>9.4f} {r.ratio_xxw:>9.4f}")
    lim = second_derivative_limit(rep)[(0, 0)]
    print(f"X1X1 u_k(0) -> {lim['target']:.6g}: {lim['flag']}")

    print("\nsplit sweep (i = j = 1)")
    print(f"{'d0':>10} {'k':>2} {'I1':>10} {'I2':>10} {'I3':>10} {'lhs/rhs':>8}")
    for j in range(4, 9):
        d0 = 2.0**-j
        k = split_level(d0, cfg.rho)
        if k > cfg.k_max:
            continue
        xi0 = (d0,) + (0.0,) * (cfg.spec.dim - 1)
        s = split_estimate(replace(cfg, k_max=k), xi0, source=rep.source)
        print(f"{d0:>10.4g} {k:>2} {s.I1:>10.3e} {s.I2:>10.3e} {s.I3:>10.3e} {s.ratio:>8.4f}")

    xi0 = (0.125,) + (0.0,) * (cfg.spec.dim - 1)
    tr = translated_cascade(replace(cfg, xi0=xi0), rep)
    print("\ntranslated family at |xi0| = 1/8")
    for t in tr.translated:
        if t["defined"]:
            print(f"k={t['k']}: difference {t['difference']:.3e}, ratio {t['ratio']:.4f}")
        else:
            print(f"k={t['k']}: xi0 outside the derivative mask")


if __name__ == "__main__":
    main()
