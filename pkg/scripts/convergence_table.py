"""Print the manufactured-solution error table for a group.

    python scripts/convergence_table.py --group engel --ns 9 13 17
"""
import argparse
import time

from carnot import named_group
from carnot.checks import DEFAULT_EXPRESSION, convergence_study


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--group", default="h1")
    p.add_argument("--ns", type=int, nargs="+", default=[17, 33, 65])
    p.add_argument("--expression", default=DEFAULT_EXPRESSION)
    args = p.parse_args()
    t0 = time.perf_counter()
    out = convergence_study(named_group(args.group), args.ns, args.expression)
    print(f"u = {args.expression} on {args.group}")
    print(f"{'n':>4} {'h':>10} {'max error':>12} {'order':>7}")
    orders = [""] + [f"{o:.2f}" for o in out["orders"]]
    for n, h, e, o in zip(out["n"], out["h"], out["errors"], orders):
        print(f"{n:>4} {h:>10.4g} {e:>12.3e} {o:>7}")
    print(f"({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
