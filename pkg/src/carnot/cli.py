"""Command line entry point: ``carnot <command> [options]``.

Every run writes ``summary.txt``, ``report.json`` and one or more CSV files
into its own output directory.  Exit codes: 0 ok, 2 configuration error,
3 solver failure, 4 invariant violation.  Nothing is written for exit codes 2
and 3; the directory appears atomically once a run completes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import checks
from .cascade import (
    CascadeConfig,
    CascadeError,
    _clean,
    run_cascade,
    second_derivative_limit,
    split_estimate,
    split_level,
    theorem_check,
)
from .config import COMMANDS, ConfigError, ExperimentConfig, build_config, load_document
from .groups import named_group
from .lemmas import max_principle_check
from .modulus import parse_rhs
from .solver import GridError, OutsideHullError, SolverError, build_grid, factorize

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4


@dataclass
class RunResult:
    results: dict
    checks: dict  # name -> bool
    tables: dict = field(default_factory=dict)  # file name -> (columns, rows)
    extra: dict = field(default_factory=dict)  # file name -> text

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def _table_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


# commands -------------------------------------------------------------------------


def _group_check(cfg: ExperimentConfig) -> RunResult:
    spec = named_group(cfg.group)
    res = checks.group_invariants(spec, cfg.trials, cfg.seed)
    tol = checks.TOL_GROUP
    gated = ["associativity", "inverse", "identity", "dilation_homomorphism", "norm_homogeneity",
             "left_invariance", "bracket_realization"]
    rows = [(k, res[k], tol if k in gated else "", (res[k] <= tol) if k in gated else "") for k in sorted(res)]
    return RunResult(res, {k: res[k] <= tol for k in gated},
                     {"group_check.csv": (["check", "value", "tolerance", "pass"], rows)})


def _taylor(cfg: ExperimentConfig) -> RunResult:
    from .calculus import EXACT, remainder_slope

    spec = named_group(cfg.group)
    res = checks.taylor_checks(spec, 4, cfg.seed)
    radii = [2.0**-j for j in range(2, 8)]
    funcs = {
        "exp(x0)": lambda p: np.exp(np.asarray(p)[..., 0]),
        "cos(x0+x1)": lambda p: np.cos(np.asarray(p)[..., 0] + np.asarray(p)[..., 1]),
        "top^2": lambda p: np.asarray(p)[..., -1] ** 2,
    }
    rows = []
    for name, f in funcs.items():
        s = remainder_slope(spec, f, np.zeros(spec.dim), cfg.degree, radii, seed=cfg.seed)
        rows.append((name, cfg.degree, "exact" if s == EXACT else float(s)))
    res["slopes"] = {r[0]: r[2] for r in rows}
    exp_slope = res["slopes"]["exp(x0)"]
    ok_slope = exp_slope == "exact" or exp_slope >= cfg.degree + 0.8
    return RunResult(
        res,
        {"projection": res["projection_error"] <= 1e-10, "remainder_order": ok_slope},
        {"remainder_slopes.csv": (["function", "degree", "slope"], rows)},
    )


def _solve(cfg: ExperimentConfig) -> RunResult:
    spec = named_group(cfg.group)
    f = parse_rhs(cfg.rhs)
    pb = build_grid(spec, None, 1.0, cfg.n)
    fac = factorize(pb)
    u = fac.solve(f, 0.0)
    mp = max_principle_check(pb, u, f, 0.0)
    cons = checks.consistency_residual(spec, cfg.n)
    res = {
        "interior_nodes": pb.n_interior,
        "solver": fac.method,
        "sup_u": u.max_abs(),
        "max_principle": mp.to_dict(),
        "consistency": cons,
    }
    return RunResult(
        res,
        {"finite": bool(np.all(np.isfinite(u.values))), "consistency": cons["full_stencil_residual"] <= 1e-10},
        extra={"solution.csv": u.to_csv(), "grid.json": u.header_json() + "\n"},
    )


def _lemmas(cfg: ExperimentConfig) -> RunResult:
    spec = named_group(cfg.group)
    sob = checks.sobolev_study(spec, (cfg.n, 2 * cfg.n - 1))
    mp = checks.max_principle_study(spec, (cfg.n,), 10, cfg.seed)
    mv = checks.mean_value_study(spec, max(cfg.trials, 100), cfg.seed)
    hb = checks.harmonic_study(spec, cfg.seed)
    dg = checks.de_giorgi_study(20, cfg.seed)
    res = {"sobolev": sob, "max_principle": mp, "mean_value": mv, "harmonic": hb,
           "de_giorgi": {"all_ok": dg["all_ok"]}}
    rows = [("sobolev", f"ratio_n{k}", v) for k, v in sob["ratios"].items()]
    rows += [("sobolev", k, sob[k]) for k in ("amplitude_change", "scale_change", "refinement_change")]
    rows += [("max_principle", f"ratio_{i}", v) for i, v in enumerate(mp["ratios"][str(cfg.n)])]
    rows += [("mean_value", "C_hat", mv["C_hat"]), ("mean_value", "batch_spread", mv["batch_spread"])]
    rows += [("harmonic", k, v) for k, v in hb.items()]
    dg_rows = [tuple(r[k] for k in ("C", "alpha", "beta", "phi0", "k0", "gamma", "threshold",
                                    "vanishes_at", "recurrence_ratio", "ok")) for r in dg["sequences"]]
    return RunResult(
        res,
        {
            "sobolev_invariance": sob["amplitude_change"] <= 0.05 and sob["scale_change"] <= 0.05,
            "max_principle_finite": mp["finite"],
            "mean_value_finite": mv["finite"],
            "de_giorgi": dg["all_ok"],
        },
        {
            "lemmas.csv": (["lemma", "quantity", "value"], rows),
            "de_giorgi.csv": (["C", "alpha", "beta", "phi0", "k0", "gamma", "threshold",
                               "vanishes_at", "recurrence_ratio", "ok"], dg_rows),
        },
    )


def _cascade_config(cfg: ExperimentConfig, **kw) -> CascadeConfig:
    n = cfg.n if cfg.n % 2 == 1 else cfg.n + 1
    return CascadeConfig(group=cfg.group, k_max=cfg.kmax, n_per_ball=n, mode=cfg.mode,
                         rhs=cfg.rhs, seed=cfg.seed, **kw)


def _cascade(cfg: ExperimentConfig) -> RunResult:
    cc = _cascade_config(cfg)
    rep = run_cascade(cc)
    limits = second_derivative_limit(rep)
    split_rows = []
    for j in range(4, 9):
        d0 = 2.0**-j
        k = split_level(d0, cc.rho)
        if k > cc.k_max:
            continue
        xi0 = tuple([d0] + [0.0] * (cc.spec.dim - 1))
        s = split_estimate(replace(cc, k_max=k), xi0, 0, 0, source=rep.source)
        split_rows.append((s.d0, s.k, s.I1, s.I2, s.I3, s.lhs, s.rhs, s.ratio, s.triangle_ok))
    data = json.loads(rep.to_json())
    ratios = [r for rec in rep.records for r in (rec.ratio_v, rec.ratio_xw, rec.ratio_xxw)]
    res = {"cascade": data, "split": [dict(zip(_SPLIT_COLS, r)) for r in split_rows]}
    rows = [list(r.row().values()) for r in rep.records]
    return RunResult(
        res,
        {
            "ratios_finite": all(math.isfinite(r) for r in ratios),
            "triangle": all(r[-1] for r in split_rows),
            "limits": all(v["flag"] != "non-monotone" for v in limits.values()),
        },
        {
            "levels.csv": (list(rep.records[0].row()), rows),
            "split.csv": (_SPLIT_COLS, split_rows),
        },
    )


_SPLIT_COLS = ["d0", "k", "I1", "I2", "I3", "lhs", "rhs", "ratio", "triangle_ok"]


def _schauder(cfg: ExperimentConfig) -> RunResult:
    cc = _cascade_config(cfg, n_base=cfg.n)
    rep = theorem_check(cc, cfg.trials, n=cfg.n)
    res = rep.to_dict()
    return RunResult(
        res,
        {"finite": all(math.isfinite(v) for v in rep.constants.values())},
        extra={"pairs.csv": rep.pairs.to_csv()},
    )


def _report(cfg: ExperimentConfig) -> RunResult:
    if not cfg.inputs:
        raise ConfigError("report needs at least one input directory (--inputs)")
    rows, gathered = [], {}
    for d in cfg.inputs:
        path = os.path.join(d, "report.json")
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        name = os.path.basename(os.path.normpath(d))
        gathered[name] = {"command": doc.get("command"), "config_hash": doc.get("config_hash"),
                          "status": doc.get("status"), "checks": doc.get("checks", {})}
        for chk, val in sorted(doc.get("checks", {}).items()):
            rows.append((name, doc.get("command"), doc.get("config_hash"), chk, val))
    return RunResult({"runs": gathered}, {"all_runs_ok": all(g["status"] == "ok" for g in gathered.values())},
                     {"runs.csv": (["run", "command", "config_hash", "check", "pass"], rows)})


RUNNERS: dict[str, Callable[[ExperimentConfig], RunResult]] = {
    "group-check": _group_check,
    "taylor": _taylor,
    "solve": _solve,
    "lemmas": _lemmas,
    "cascade": _cascade,
    "schauder": _schauder,
    "report": _report,
}


# driver -----------------------------------------------------------------------------


def _flatten(prefix: str, obj, out: list):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], out)
    elif isinstance(obj, (list, tuple)) and len(obj) > 8:
        out.append((prefix, f"[{len(obj)} values]"))
    else:
        out.append((prefix, obj))


def _write_run(cfg: ExperimentConfig, result: RunResult) -> None:
    digest = cfg.digest()
    status = "ok" if result.ok else "invariant violation"
    columns = {name: cols for name, (cols, _) in result.tables.items()}
    for name, text in result.extra.items():
        if name.endswith(".csv"):
            columns[name] = text.split("\n", 1)[0].split(",")
    report = {
        "command": cfg.command,
        "config": cfg.to_dict(),
        "config_hash": digest,
        "status": status,
        "checks": result.checks,
        "results": result.results,
        "csv_columns": columns,
    }
    lines = [f"[{digest}] {cfg.command} group={cfg.group} status={status}"]
    for name, val in sorted(result.checks.items()):
        lines.append(f"[{digest}] check {name}: {'pass' if val else 'FAIL'}")
    flat: list = []
    _flatten("", result.results, flat)
    for key, val in flat:
        lines.append(f"[{digest}] {key} = {_fmt(val)}")

    parent = os.path.dirname(os.path.abspath(cfg.out)) or "."
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".carnot-", dir=parent)
    try:
        for name, (cols, rows) in result.tables.items():
            with open(os.path.join(tmp, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(_table_text(cols, rows))
        for name, text in result.extra.items():
            with open(os.path.join(tmp, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        with open(os.path.join(tmp, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(json.dumps(_clean(report), sort_keys=True, indent=2) + "\n")
        with open(os.path.join(tmp, "summary.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        if os.path.isdir(cfg.out):
            shutil.rmtree(cfg.out)
        os.replace(tmp, cfg.out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    print("\n".join(lines))


def run(cfg: ExperimentConfig) -> int:
    """Execute one configured experiment and return its exit code."""
    try:
        result = RUNNERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, CascadeError, OutsideHullError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (GridError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write_run(cfg, result)
    return EXIT_OK if result.ok else EXIT_INVARIANT


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON document with configuration fields")
    common.add_argument("--group", help="named group: h1 or engel")
    common.add_argument("--rhs", help="test function, e.g. holder:0.5, lipschitz, constant:1")
    common.add_argument("--n", type=int, help="grid nodes per axis (per ball for cascade)")
    common.add_argument("--kmax", type=int, help="deepest cascade level")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--trials", type=int, help="sample count (pairs for schauder)")
    common.add_argument("--degree", type=int, help="Taylor degree for the remainder study")
    common.add_argument("--mode", choices=["manufactured", "solved"], help="cascade source of u")
    common.add_argument("--out", help="output directory")
    common.add_argument("--inputs", nargs="+", help="run directories to aggregate (report)")
    p = argparse.ArgumentParser(prog="carnot", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        sub.add_parser(c, parents=[common])
    return p


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    try:
        doc = load_document(args.config) if args.config else {}
        cfg = build_config(args.command, doc, overrides)
        if "out" not in overrides and "out" not in doc:
            cfg = replace(cfg, out=os.path.join("runs", f"{cfg.command}-{cfg.digest()}"))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
