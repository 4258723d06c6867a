"""Command-line front end.

    neutral-hj simulate --config run.toml --out outdir
    neutral-hj verify --problem neutral_linear_value --out outdir

Exit status: 0 on success, 1 when a verification check fails, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from .dynamics import ControlSignal, integrate_control
from .histories import History, PathPoint, mollify
from .problems import UnknownProblem, analytic_functional, get_problem
from .value import BudgetError, numeric_value_functional, synthesize_feedback, value_enumerate, value_extend
from .verifier import run_suite, summary_table

COMMANDS = ("simulate", "value", "feedback", "mollify", "verify")

DEFAULT_NUMERICS = {
    "steps_per_interval": 32,
    "k": 4,
    "budget": 1_000_000,
    "seed": 0,
    "mollify_schedule": [4, 8, 16, 32, 64],
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def _vector(value, n, what):
    try:
        v = np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be numeric") from exc
    if v.shape == (1,) and n > 1:
        v = np.full(n, v[0])
    if v.shape != (n,):
        raise ConfigError(f"{what} must have {n} entries")
    return v


def history_from_literal(lit, h, n, base_dir=None):
    """Build a History from a config table; kinds: constant, linear, step, samples, file."""
    if not isinstance(lit, dict) or "kind" not in lit:
        raise ConfigError("history literal needs a 'kind'")
    kind = lit["kind"]
    try:
        if kind == "constant":
            return History.constant(h, _vector(lit.get("value", 0.0), n, "history value"))
        if kind == "linear":
            return History.linear(h, _vector(lit.get("slope", 0.0), n, "history slope"),
                                  _vector(lit.get("offset", 0.0), n, "history offset"))
        if kind == "step":
            breaks = [float(b) for b in lit["breaks"]]
            values = [_vector(v, n, "step value") for v in lit["values"]]
            return History.step(h, breaks, values)
        if kind == "samples":
            if "segments" in lit:
                segs = [(float(s["start"]), np.asarray(s["samples"], dtype=float)) for s in lit["segments"]]
                return History(h, segs)
            return History.from_samples(h, np.asarray(lit["samples"], dtype=float).reshape(-1, n))
        if kind == "file":
            p = Path(lit["path"])
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            w = History.from_json(p.read_text())
            if abs(w.h - h) > 1e-12 or w.n != n:
                raise ConfigError("history file does not match the problem's h or n")
            return w
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"malformed {kind} history literal: {exc}") from exc
    raise ConfigError(f"unknown history kind {kind!r}")


class Run:
    """A validated configuration."""

    def __init__(self, config, base_dir=None):
        self.config = config
        prob_cfg = config.get("problem")
        if not isinstance(prob_cfg, dict) or "name" not in prob_cfg:
            raise ConfigError("config needs [problem] with a name")
        try:
            self.prob = get_problem(prob_cfg["name"], prob_cfg.get("params", {}))
        except UnknownProblem as exc:
            raise ConfigError(str(exc.args[0])) from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad problem parameters: {exc}") from exc
        num = dict(DEFAULT_NUMERICS)
        num.update(config.get("numerics", {}))
        self.numerics = num
        for key in ("steps_per_interval", "k", "budget", "seed"):
            if not isinstance(num[key], int) or num[key] < (0 if key == "seed" else 1):
                raise ConfigError(f"numerics.{key} must be a positive integer")
        self.base_dir = base_dir
        self._point = None

    @property
    def point(self):
        if self._point is None:
            prob = self.prob
            pc = self.config.get("point", {})
            tau = float(pc.get("tau", 0.0))
            if not 0.0 <= tau <= prob.theta:
                raise ConfigError(f"point.tau must lie in [0, {prob.theta}]")
            w = history_from_literal(pc.get("history", {"kind": "constant", "value": pc.get("z", 0.0)}),
                                     prob.h, prob.n, self.base_dir)
            z = _vector(pc["z"], prob.n, "point.z") if "z" in pc else w.left_end
            self._point = PathPoint(tau, z, w)
        return self._point

    def section(self, name):
        sec = self.config.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        return sec


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    return "%.17g" % v


def _csv(header, rows, config):
    lines = ["# config=" + json.dumps(config, sort_keys=True), ",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def trajectory_rows(prob, x):
    y = x.y if x.y is not None else None
    rows = []
    for k, t in enumerate(x.grid):
        yk = y[k] if y is not None else x.values[k] - prob.g(t, x.eval(t - prob.h))
        rows.append([t, *x.values[k], *yk])
    header = ["t"] + [f"x{i + 1}" for i in range(prob.n)] + [f"y{i + 1}" for i in range(prob.n)]
    return header, rows


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _control_from(run, values=None):
    prob, p = run.prob, run.point
    if values is None:
        values = run.section("simulate").get("control")
    if values is None:
        return ControlSignal.constant(p.tau, prob.theta, prob.control_set[0])
    try:
        vals = np.asarray(values, dtype=float).reshape(-1, prob.m)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed simulate.control: {exc}") from exc
    U = prob.control_set
    for v in vals:
        if not np.any(np.all(np.abs(U - v) <= 1e-12, axis=1)):
            raise ConfigError(f"control value {v.tolist()} is not in the control lattice")
    return ControlSignal.uniform(p.tau, prob.theta, vals)


def cmd_simulate(run, out, jobs):
    prob, p = run.prob, run.point
    if p.tau >= prob.theta:
        raise ConfigError("simulate needs τ < ϑ")
    x = integrate_control(prob, p, _control_from(run), run.numerics["steps_per_interval"])
    header, rows = trajectory_rows(prob, x)
    _atomic_write(out / "trajectory.csv", _csv(header, rows, run.config))
    print(f"wrote {out / 'trajectory.csv'} ({len(rows)} rows)")
    return 0


def cmd_value(run, out, jobs):
    prob, p, num = run.prob, run.point, run.numerics
    k, steps, budget = num["k"], num["steps_per_interval"], num["budget"]
    value, best = value_enumerate(prob, p, k, steps, budget=budget, jobs=jobs)
    gaps = []
    record = {"problem": {"name": prob.name, "params": prob.params},
              "point": {"tau": p.tau, "z": p.z.tolist(), "w": p.w.to_dict()},
              "k": k, "steps": steps, "budget": budget, "value": value, "gaps": gaps,
              "control": None if best is None else best.values.tolist(), "config": run.config}
    if run.section("value").get("extend", False):
        base = numeric_value_functional(prob, k, steps, budget)
        res = value_extend(prob, base, p, num["mollify_schedule"])
        record.update(value=res.value, gaps=res.gaps, enumerated_value=value,
                      converged=res.converged, warning=res.warning)
    _atomic_write(out / "value.json", _json(record))
    print(f"value = {record['value']:.12g}")
    return 0


def cmd_feedback(run, out, jobs):
    prob, p, num = run.prob, run.point, run.numerics
    if p.tau >= prob.theta:
        raise ConfigError("feedback needs τ < ϑ")
    s = _vector(run.section("feedback").get("s", 1.0), prob.n, "feedback.s")
    u, x = synthesize_feedback(prob, p, s, num["k"], num["steps_per_interval"])
    rows = [[u.grid[i], u.grid[i + 1], *u.values[i]] for i in range(u.values.shape[0])]
    header = ["t_start", "t_end"] + [f"u{i + 1}" for i in range(prob.m)]
    _atomic_write(out / "control.csv", _csv(header, rows, run.config))
    header, rows = trajectory_rows(prob, x)
    _atomic_write(out / "trajectory.csv", _csv(header, rows, run.config))
    print(f"wrote {out / 'control.csv'} and {out / 'trajectory.csv'}")
    return 0


def cmd_mollify(run, out, jobs):
    p = run.point
    js = run.section("mollify").get("j", run.numerics["mollify_schedule"])
    for j in js:
        wj = mollify(p.z, p.w, int(j))
        l1, sup = wj.norms()
        rec = {"j": int(j), "history": wj.to_dict(), "l1_distance": (p.w - wj).l1,
               "norms": {"l1": l1, "sup": sup}, "config": run.config}
        _atomic_write(out / f"mollify_j{int(j)}.json", _json(rec))
    print(f"wrote {len(js)} mollified histories to {out}")
    return 0


def cmd_verify(run, out, jobs):
    prob, num = run.prob, run.numerics
    vc = run.section("verify")
    kind = vc.get("functional", "analytic")
    if kind == "analytic":
        phi = analytic_functional(prob)
        if phi is None:
            raise ConfigError(f"{prob.name} has no analytic value functional; use functional = \"numeric\"")
    elif kind == "numeric":
        phi = numeric_value_functional(prob, num["k"], num["steps_per_interval"], num["budget"])
    else:
        raise ConfigError("verify.functional must be 'analytic' or 'numeric'")
    s_samples = vc.get("s")
    s_list = None if s_samples is None else [_vector(s, prob.n, "verify.s") for s in s_samples]
    reports = run_suite(prob, phi, points=int(vc.get("points", 5)), seed=num["seed"],
                        steps=num["steps_per_interval"], alpha=float(vc.get("alpha", 1.0)),
                        s_samples=s_list, selections=int(vc.get("selections", 8)),
                        phi2_pairs=int(vc.get("phi2_pairs", 200)), jobs=jobs)
    lines = [json.dumps({"config": run.config}, sort_keys=True)] + [r.to_json() for r in reports]
    _atomic_write(out / "report.jsonl", "\n".join(lines) + "\n")
    table = summary_table(reports)
    _atomic_write(out / "summary.txt", table + "\n")
    print(table)
    return 0 if all(r.passed for r in reports) else 1


HANDLERS = {"simulate": cmd_simulate, "value": cmd_value, "feedback": cmd_feedback,
            "mollify": cmd_mollify, "verify": cmd_verify}


def build_parser():
    parser = argparse.ArgumentParser(prog="neutral-hj", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="TOML or JSON run configuration")
    parser.add_argument("--problem", help="problem name when no config is given")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, help="override numerics.seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads")
    return parser


def run(command, config, out, jobs=1, base_dir=None):
    """Execute one command; returns the exit status."""
    try:
        r = Run(config, base_dir)
        return HANDLERS[command](r, Path(out), max(1, int(jobs)))
    except (ConfigError, BudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.config:
        try:
            config = load_config(args.config)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        base_dir = Path(args.config).parent
    elif args.problem:
        config = {"problem": {"name": args.problem}}
        base_dir = None
    else:
        print("error: give --config or --problem", file=sys.stderr)
        return 2
    config = copy.deepcopy(config)
    if args.seed is not None:
        config.setdefault("numerics", {})["seed"] = args.seed
    return run(args.command, config, args.out, args.jobs, base_dir)


if __name__ == "__main__":
    sys.exit(main())
