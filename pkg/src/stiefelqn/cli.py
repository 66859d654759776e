"""Command-line harness: ``stiefelqn run|check|compare``.

A run configuration is a YAML or JSON mapping::

    problem: {kind: eig_random, n: 500, p: 10}
    solver: asqn            # or `solvers: [asqn, ace, lobpcg]` for compare
    tol: 1.0e-10            # optional, per-family default otherwise
    max_outer: 200
    seed: 7
    warm_start: false
    output: json            # json | csv | table

Command-line flags override the file. Exit codes: 0 when every run converged,
2 when ``run`` stopped at the iteration cap, 1 on a configuration error.
"""

import argparse
import copy
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import yaml

from .driver.runner import ALL_SOLVERS, ConfigError, run_solver
from .models.problems import PROBLEM_SCHEMA, build_problem

OUTPUTS = ("json", "csv", "table")
OK_STATUSES = ("converged", "stagnated_then_refined")

RUN_SCHEMA = {
    "type": "object",
    "required": ["problem"],
    "properties": {
        "problem": PROBLEM_SCHEMA,
        "solver": {"enum": list(ALL_SOLVERS)},
        "solvers": {"type": "array", "minItems": 1, "items": {"enum": list(ALL_SOLVERS)}},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_outer": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "warm_start": {"type": "boolean"},
        "output": {"enum": list(OUTPUTS)},
    },
    "additionalProperties": False,
}

DEFAULT_CONFIG = {"problem": {"kind": "eig_random", "n": 500, "p": 10}, "solver": "asqn"}

# column order of emitted rows; optional columns are left out when absent
ROW_TYPES = {
    "solver": str, "problem": str, "seed": int, "status": str,
    "fval": float, "nrmG": float, "its": int, "inner_avg": float,
    "AV": int, "BV": int, "err": float, "b_cost_weight": int,
    "V_applies": int, "warm_its": int, "time": float,
}
ROW_FIELDS = tuple(ROW_TYPES)


def load_config(path):
    """Read a YAML or JSON run configuration (JSON is valid YAML)."""
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return cfg


def validate_config(cfg):
    try:
        jsonschema.validate(cfg, RUN_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None


def _solver_list(cfg):
    if "solvers" in cfg:
        return list(cfg["solvers"])
    return [cfg.get("solver", "asqn")]


def _one(cfg, solver, base_dir):
    inst = build_problem(cfg["problem"], base_dir=base_dir, seed=cfg.get("seed"))
    _, _, row = run_solver(inst, solver, tol=cfg.get("tol"), max_outer=cfg.get("max_outer"),
                           warm_start=cfg.get("warm_start", False))
    return row


def execute_config(cfg, base_dir=None, threads=None):
    """Validate ``cfg`` and run each listed solver on its own fresh instance.

    Returns the report rows in solver order. Runs are spread over up to
    ``threads`` workers (default: the SQN_THREADS environment variable, else 1).
    """
    validate_config(cfg)
    solvers = _solver_list(cfg)
    if threads is None:
        threads = int(os.environ.get("SQN_THREADS", "1") or 1)
    threads = max(1, min(int(threads), len(solvers)))
    if threads == 1:
        return [_one(cfg, s, base_dir) for s in solvers]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_one, cfg, s, base_dir) for s in solvers]
        return [f.result() for f in futures]


def _ordered(row):
    return {k: row[k] for k in ROW_FIELDS if k in row}


def format_rows(rows, fmt="json"):
    """Render rows; JSON is one object per line, the table is built from it."""
    if fmt == "json":
        return "\n".join(json.dumps(_ordered(r)) for r in rows) + "\n"
    cols = [k for k in ROW_FIELDS if any(k in r for r in rows)]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(r[k]) if isinstance(r.get(k), float) else r.get(k, "") for k in cols])
        return buf.getvalue()
    if fmt == "table":
        cols = [c for c in cols if c != "time"] + ["time", "flag"]
        cells = []
        for r in rows:
            line = []
            for c in cols:
                v = r.get(c, "")
                if c == "flag":
                    v = "*" if r.get("status") == "max_iter" else ""
                elif isinstance(v, float):
                    v = f"{v:.2f}" if c in ("time", "inner_avg") else f"{v:.6e}" if c != "fval" else f"{v:.10f}"
                line.append(str(v))
            cells.append(line)
        width = [max(len(c), *(len(l[i]) for l in cells)) for i, c in enumerate(cols)]
        out = ["  ".join(c.rjust(w) for c, w in zip(cols, width))]
        out += ["  ".join(v.rjust(w) for v, w in zip(l, width)) for l in cells]
        if any(r.get("status") == "max_iter" for r in rows):
            out.append("* stopped at the outer iteration cap")
        return "\n".join(out) + "\n"
    raise ValueError(f"unknown output format {fmt!r}")


def parse_rows(text, fmt="json"):
    """Inverse of :func:`format_rows` for the json and csv formats."""
    if fmt == "json":
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    if fmt == "csv":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append({k: ROW_TYPES[k](v) for k, v in rec.items() if v != ""})
        return rows
    raise ValueError(f"cannot parse format {fmt!r}")


def _merge(cfg, args):
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.solver is not None:
        cfg.pop("solvers", None)
        cfg["solver"] = args.solver
    if args.tol is not None:
        cfg["tol"] = args.tol
    if args.max_outer is not None:
        cfg["max_outer"] = args.max_outer
    if args.warm_start:
        cfg["warm_start"] = True
    if args.out is not None:
        cfg["output"] = args.out
    return cfg


def _config_from_args(args):
    if args.config:
        cfg = load_config(args.config)
        base = Path(args.config).resolve().parent
    else:
        cfg, base = copy.deepcopy(DEFAULT_CONFIG), Path.cwd()
    return _merge(cfg, args), base


def cmd_run(cfg, base_dir=None, out=None):
    """Run the configured solver(s); 0 if converged, 2 if the cap was hit."""
    rows = execute_config(cfg, base_dir)
    (sys.stdout if out is None else out).write(format_rows(rows, cfg.get("output", "json")))
    return 0 if all(r["status"] in OK_STATUSES for r in rows) else 2


def cmd_compare(cfg, base_dir=None, out=None):
    """Side-by-side rows for several solvers on one seeded problem.

    Runs that hit the iteration cap are flagged in the output, not treated
    as errors.
    """
    rows = execute_config(cfg, base_dir)
    (sys.stdout if out is None else out).write(format_rows(rows, cfg.get("output", "table")))
    return 0


def cmd_check(level="fast", only=None, out=None):
    out = sys.stdout if out is None else out
    from .checks import run_checks

    def log(res):
        tag = "PASS" if res.ok else "FAIL"
        out.write(f"{tag} {res.name} ({res.seconds:.1f}s) {res.detail}\n")
        out.flush()

    results = run_checks(level, names=only, log=log)
    failed = [r.name for r in results if not r.ok]
    out.write(f"{len(results) - len(failed)}/{len(results)} checks passed at level {level}\n")
    if failed:
        out.write("failed: " + ", ".join(failed) + "\n")
    return 1 if failed else 0


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors: exit 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--solver", help=f"one of {', '.join(ALL_SOLVERS)}")
    common.add_argument("--out", help="json, csv or table")
    common.add_argument("--tol", type=float)
    common.add_argument("--max-outer", dest="max_outer", type=int)
    common.add_argument("--warm-start", dest="warm_start", action="store_true")
    ap = _Parser(prog="stiefelqn", description="Structured quasi-Newton solvers on the Stiefel manifold.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="run one solver and emit its report row")
    sub.add_parser("compare", parents=[common], help="run the `solvers` list side by side")
    chk = sub.add_parser("check", help="run the invariant suite")
    chk.add_argument("--level", default="fast", choices=("fast", "full"))
    chk.add_argument("--only", action="append", help="run just this named check (repeatable)")
    return ap


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code
    if args.command == "check":
        try:
            return cmd_check(args.level, args.only)
        except KeyError as exc:
            print(f"error: {exc.args[0]}", file=sys.stderr)
            return 1
    try:
        cfg, base = _config_from_args(args)
        if args.command == "run":
            return cmd_run(cfg, base)
        return cmd_compare(cfg, base)
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
