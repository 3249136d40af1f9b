"""Command-line entry point: ``rw2d <command> [flags]``.

Exit status 0 when every check passes, 1 when a check fails, 2 on usage
errors.  All randomness flows from ``--seed`` (fallback: $RW2D_SEED, then 0).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import experiments as ex
from . import histories as hs
from .lattice import as_point
from .potential import (
    annulus_crossing,
    disk_domain,
    green,
    hitting_distribution,
    log_ratio_exit_outer,
)

FLAGS = ("seed", "trials", "r", "R", "ratio", "levels", "a", "alpha", "x", "n", "out",
         "format", "threads", "config", "oracle")
# flags that never change results and so stay out of the embedded config
NOT_EMBEDDED = {"out", "format", "threads", "config"}


class UsageError(Exception):
    pass


def _num(text: str):
    v = float(text)
    return int(v) if v.is_integer() and "." not in text and "e" not in text.lower() else v


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (default $RW2D_SEED or 0)")
    common.add_argument("--trials", type=int, help="Monte Carlo trials")
    common.add_argument("--r", type=_num, help="inner radius")
    common.add_argument("--R", type=_num, nargs="+", help="outer radius or radius list")
    common.add_argument("--ratio", type=_num, nargs="+", help="radius ratio rho (list for decoupling)")
    common.add_argument("--levels", type=int, help="number of levels n")
    common.add_argument("--a", type=_num, nargs="+", help="thickness level(s) a")
    common.add_argument("--alpha", type=float, help="significance level of test gates")
    common.add_argument("--x", type=int, nargs=2, metavar=("X", "Y"), help="lattice point")
    common.add_argument("--n", type=int, help="level count for qn")
    common.add_argument("--oracle", action="store_true", default=None,
                        help="qn: compare with brute-force enumeration")
    common.add_argument("--out", help="directory for report.json and metrics.csv")
    common.add_argument("--format", choices=("json", "csv"), help="stdout format (default json)")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--config", help="key=value file; flags override its values")

    p = argparse.ArgumentParser(prog="rw2d", description="2D random walk thick-point toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text[0])
    return p


def read_config(path) -> dict:
    """Parse a flat key=value file; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in FLAGS or k == "config":
            raise UsageError(f"{path}:{lineno}: unknown key {k!r}")
        items = v.replace(",", " ").split()
        if k in ("seed", "trials", "levels", "threads", "n"):
            out[k] = int(items[0])
        elif k in ("x",):
            out[k] = [int(t) for t in items]
        elif k in ("R", "ratio", "a"):
            out[k] = [_num(t) for t in items]
        elif k in ("r",):
            out[k] = _num(items[0])
        elif k == "alpha":
            out[k] = float(items[0])
        elif k == "oracle":
            out[k] = v.lower() in ("1", "true", "yes")
        else:
            out[k] = v
    return out


def merge_config(args: argparse.Namespace) -> dict:
    cfg = read_config(args.config) if args.config else {}
    for k in FLAGS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if "seed" not in cfg:
        cfg["seed"] = int(os.environ.get("RW2D_SEED", 0))
    cfg.setdefault("threads", os.cpu_count() or 1)
    cfg.setdefault("format", "json")
    return cfg


def _one(cfg, key, name):
    v = cfg[key]
    if isinstance(v, list):
        if len(v) != 1:
            raise UsageError(f"{name} takes a single --{key}")
        return v[0]
    return v


def _suite_cfg(cfg: dict, mapping: dict) -> dict:
    """Translate CLI keys into suite keys; unsupported flags are usage errors."""
    out = {}
    for k, v in cfg.items():
        if k in NOT_EMBEDDED or k == "seed":
            continue
        if k not in mapping:
            raise UsageError(f"--{k} is not used by this command")
        target, kind = mapping[k]
        if kind == "one":
            v = v[0] if isinstance(v, list) and len(v) == 1 else v
            if isinstance(v, list):
                raise UsageError(f"--{k} takes a single value here")
        elif kind == "list":
            v = tuple(v) if isinstance(v, list) else (v,)
        elif kind == "point":
            v = tuple(v)
        out[target] = v
    return out


SUITE_FLAGS = {
    "local-time-law": ("local_time", {"R": ("R", "one"), "x": ("x0", "point"),
                                      "trials": ("trials", "one"), "alpha": ("alpha", "one")}),
    "excursions": ("excursions", {"ratio": ("ratio", "one"), "trials": ("trials", "one"),
                                  "r": ("r_min", "one")}),
    "histories": ("histories", {"trials": ("trials", "one"), "levels": ("mc_n", "one")}),
    "erdos-taylor": ("erdos_taylor", {"R": ("radii", "list"), "trials": ("trials", "one")}),
    "spectrum": ("spectrum", {"R": ("radii", "list"), "a": ("a_grid", "list"),
                              "trials": ("trials", "one")}),
    "successful": ("successful", {"levels": ("levels", "one"), "ratio": ("ratio", "one"),
                                  "r": ("r_min", "one"), "trials": ("trials", "one"),
                                  "a": ("a_grid", "list"), "alpha": ("alpha", "one")}),
    "decoupling": ("decoupling", {"ratio": ("ratios", "list"), "trials": ("trials", "one"),
                                  "r": ("r_min", "one")}),
}


def _run_suite(command, cfg):
    name, mapping = SUITE_FLAGS[command]
    return [ex.SUITES[name](_suite_cfg(cfg, mapping), cfg["seed"], cfg["threads"])]


def _allowed(cfg, keys, command):
    extra = set(cfg) - set(keys) - NOT_EMBEDDED - {"seed"}
    if extra:
        raise UsageError(f"{command} does not use " + ", ".join(f"--{k}" for k in sorted(extra)))


def _green(cfg):
    _allowed(cfg, ("R", "x"), "green")
    R = _one(cfg, "R", "green") if "R" in cfg else 10
    x = as_point(cfg.get("x", (0, 0)))
    dom = disk_domain(R)
    if x not in dom:
        raise UsageError(f"{tuple(x)} is not in D(0, {R})")
    table = green(dom)
    rep = ex.ExperimentReport("green", {"R": R, "x": list(x)}, cfg["seed"])
    rep.tables["G(x,0)"] = table(x, (0, 0))
    rep.tables["G(0,0)"] = table((0, 0), (0, 0))
    rep.tables["points"] = len(dom)
    rep.add("residual", "green function definition", table.solver_residual, [0, 1e-10],
            table.solver_residual <= 1e-10, "analytic")
    if table.values is not None:
        d = table.symmetry_defect()
        rep.add("symmetry", "green function definition", d, [0, 1e-10], d <= 1e-10, "analytic")
    if cfg.get("out"):
        Path(cfg["out"]).mkdir(parents=True, exist_ok=True)
        table.to_csv(Path(cfg["out"]) / "green.csv", (0, 0))
    return [rep]


def _hitting(cfg):
    _allowed(cfg, ("R", "x"), "hitting")
    R = _one(cfg, "R", "hitting") if "R" in cfg else 10
    x = as_point(cfg.get("x", (0, 0)))
    pmf = hitting_distribution(disk_domain(R), x)
    total = math.fsum(pmf.values())
    rep = ex.ExperimentReport("hitting", {"R": R, "x": list(x)}, cfg["seed"])
    rep.add("normalization", "exit law", total, [1 - 1e-9, 1 + 1e-9], abs(total - 1) <= 1e-9,
            "analytic")
    rep.tables["pmf"] = [[p.x, p.y, v] for p, v in sorted(pmf.items())]
    return [rep]


def _annulus(cfg):
    _allowed(cfg, ("r", "R", "x"), "annulus")
    r = cfg.get("r", 10)
    R = _one(cfg, "R", "annulus") if "R" in cfg else 100
    x = as_point(cfg.get("x", (30, 0)))
    ac = annulus_crossing(x, r, R)
    formula = log_ratio_exit_outer(abs(x), float(r), float(R))
    rep = ex.ExperimentReport("annulus", {"r": r, "R": R, "x": list(x)}, cfg["seed"])
    rep.tables.update(p_exit_outer=ac.p_exit_outer, p_hit_inner=ac.p_hit_inner,
                      log_ratio_formula=formula)
    rep.add("log_ratio", "annulus exit law", ac.p_exit_outer, [formula - 0.02, formula + 0.02],
            abs(ac.p_exit_outer - formula) <= 0.02, "pilot fixture")
    s = ac.p_exit_outer + ac.p_hit_inner
    rep.add("complement", "annulus exit law", s, [1 - 1e-9, 1 + 1e-9], abs(s - 1) <= 1e-9,
            "analytic")
    return [rep]


def _qn(cfg):
    _allowed(cfg, ("a", "n", "oracle"), "qn")
    a = _one(cfg, "a", "qn") if "a" in cfg else 0.5
    n = cfg.get("n", 30)
    rep = ex.ExperimentReport("qn", {"a": a, "n": n, "oracle": bool(cfg.get("oracle"))},
                              cfg["seed"])
    log_q = hs.successful_prob_dp(a, n)
    rep.tables.update(log_q=log_q, exponent_ratio=-log_q / (3 * a * math.lgamma(n + 1)))
    if cfg.get("oracle"):
        if n > 8:
            raise UsageError("--oracle enumerates the band box; use n <= 8")
        bf = hs.log_fraction(hs.successful_prob_bruteforce(a, n))
        rel = abs(log_q - bf) / abs(bf) if bf else abs(log_q - bf)
        rep.tables["log_q_bruteforce"] = bf
        rep.add("dp.bruteforce", "band probability", rel, [0, 1e-12], rel <= 1e-12, "exact oracle")
    return [rep]


def _verify(cfg):
    _allowed(cfg, (), "verify")
    return ex.verify(cfg["seed"], cfg["threads"], log=lambda s: print(s, file=sys.stderr))


COMMANDS = {
    "green": ("Green function of D(0,R) at the origin", _green),
    "hitting": ("exit distribution of D(0,R) from --x", _hitting),
    "annulus": ("exact annulus crossing vs the log-ratio formula", _annulus),
    "local-time-law": ("Monte Carlo local time at the origin vs its exact law", None),
    "excursions": ("negative-binomial excursion law checks", None),
    "histories": ("history counting and level-chain checks", None),
    "qn": ("log band probability by dynamic programming", _qn),
    "erdos-taylor": ("most visited site trend", None),
    "spectrum": ("thick-point growth exponents", None),
    "successful": ("n-successful centers scan", None),
    "decoupling": ("inner excursion decoupling probe", None),
    "verify": ("full default acceptance suite", _verify),
}


def write_outputs(reports, cfg) -> None:
    embedded = {k: v for k, v in sorted(cfg.items()) if k not in NOT_EMBEDDED}
    doc = {"config": embedded, "passed": all(r.passed for r in reports),
           "reports": [r.to_dict() for r in reports]}
    text = json.dumps(ex._plain(doc), sort_keys=True, indent=2) + "\n"
    table = ex.reports_to_csv(reports)
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text, encoding="utf-8")
        with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(table)
        # wall-clock times vary run to run, so they live outside report.json
        times = {r.name: r.runtime for r in reports if r.runtime is not None}
        (out / "timings.json").write_text(json.dumps(times, sort_keys=True, indent=2) + "\n",
                                          encoding="utf-8")
    else:
        sys.stdout.write(table if cfg["format"] == "csv" else text)


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse already printed usage to stderr
        return 2 if e.code else 0
    try:
        cfg = merge_config(args)
        fn = COMMANDS[args.command][1]
        reports = fn(cfg) if fn else _run_suite(args.command, cfg)
    except (UsageError, ValueError, OSError) as e:
        print(f"rw2d {args.command}: error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    write_outputs(reports, cfg)
    for r in reports:
        for c in r.checks:
            if not c.passed:
                print(f"FAIL {r.name}.{c.id}: observed {c.observed}, band {c.band}", file=sys.stderr)
        if r.runtime is not None:
            print(f"{r.name}: {r.runtime:.1f} s", file=sys.stderr)
    return 0 if all(r.passed for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
