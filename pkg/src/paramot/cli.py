"""
Batch runner: ``paramot <command> --config run.json [--out PATH] [--format csv|json]``.

Exit codes: 0 success, 2 configuration error, 3 numerical invariant violated.
Output depends only on the config and flags, byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import gluing, hausdorff, metrics, monge, parametric, verify
from .measures import Coupling, cost_from_dict, eval_cost, measure_from_dict
from .parametric import fmt
from .solver import SolverError, solve_kantorovich

COMMANDS = ("solve", "metric", "glue", "carry", "hausdorff", "sweep", "select", "monge", "gallery", "verify")
BOUND_TOL = 1e-8


class ConfigError(Exception):
    pass


class InvariantViolation(Exception):
    pass


# -- config helpers ---------------------------------------------------------------


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def need(cfg: dict, key: str, where: str = ""):
    if key not in cfg:
        raise ConfigError(f"missing field '{where}{key}'")
    return cfg[key]


def parse(cfg: dict, key: str, reader, where: str = "", default=None):
    if key not in cfg and default is not None:
        return default
    try:
        return reader(need(cfg, key, where))
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(f"field '{where}{key}': {e}") from None


def _coupling(doc, where: str) -> Coupling:
    if not isinstance(doc, dict):
        raise ConfigError(f"field '{where}' must be an object with mu, nu and plan")
    mu = parse(doc, "mu", measure_from_dict, where + ".")
    nu = parse(doc, "nu", measure_from_dict, where + ".")
    return parse(doc, "plan", lambda p: Coupling(mu, nu, np.asarray(p, dtype=float)), where + ".")


_GROUNDS = {"euclidean": metrics.EUCLIDEAN, "truncated": metrics.Truncated()}


def _ground(name) -> metrics.GroundCost:
    if name not in _GROUNDS:
        raise ValueError(f"unknown ground {name!r}; choose from {sorted(_GROUNDS)}")
    return _GROUNDS[name]


def _family(cfg: dict) -> parametric.ParamFamily:
    fam = need(cfg, "family")
    if not isinstance(fam, dict):
        raise ConfigError("field 'family' must be an object")
    grid = cfg.get("t_grid", fam.get("t_grid"))
    if "gallery" in fam:
        try:
            return parametric.gallery(fam["gallery"], int(need(fam, "n", "family.")), t_grid=grid)
        except ValueError as e:
            raise ConfigError(f"field 'family': {e}") from None
    mu = parse(fam, "mu", measure_from_dict, "family.")
    nu = parse(fam, "nu", measure_from_dict, "family.")
    cost = need(fam, "cost", "family.")
    if grid is None:
        raise ConfigError("missing field 't_grid'")
    key = fam.get("t_param", "t")
    if not isinstance(cost, dict) or "builtin" not in cost:
        raise ConfigError("field 'family.cost' must be a builtin cost")

    def cost_of_t(t):
        params = dict(cost.get("params", {}))
        params[key] = t
        return cost_from_dict({"builtin": cost["builtin"], "params": params})

    try:
        cost_of_t(float(grid[0]))
        family = parametric.ParamFamily(np.asarray(grid, dtype=float), lambda t: mu, lambda t: nu, cost_of_t)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"field 'family': {e}") from None
    return family


# -- output -----------------------------------------------------------------------


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


# -- commands ---------------------------------------------------------------------


def cmd_solve(cfg, args):
    mu = parse(cfg, "mu", measure_from_dict)
    nu = parse(cfg, "nu", measure_from_dict)
    C = parse(cfg, "cost", lambda d: eval_cost(cost_from_dict(d), mu, nu))
    res = solve_kantorovich(mu, nu, C)
    if res.duality_gap() > BOUND_TOL:
        raise InvariantViolation(f"duality gap {res.duality_gap():.3e}")
    if args.format == "json":
        return _json({"value": res.value, "duality_gap": res.duality_gap(), "iterations": res.iterations,
                      "plan": res.plan.mass.tolist(), "dual_u": res.dual_u.tolist(),
                      "dual_v": res.dual_v.tolist()})
    return _table(("value", "duality_gap", "iterations"), [(res.value, res.duality_gap(), res.iterations)])


def cmd_metric(cfg, args):
    mu = parse(cfg, "mu", measure_from_dict)
    nu = parse(cfg, "nu", measure_from_dict)
    name = cfg.get("metric", "d_K")
    ground = parse(cfg, "ground", _ground, default=metrics.EUCLIDEAN)
    try:
        if name == "d_K":
            value = metrics.d_kantorovich(mu, nu, ground)
        elif name == "d_KR":
            value = metrics.d_kr(mu, nu, ground)
        elif name == "W_p":
            value = metrics.w_p(mu, nu, float(cfg.get("p", 1.0)), ground)
        elif name == "TV":
            value = metrics.total_variation(mu, nu)
        else:
            raise ConfigError(f"field 'metric': unknown metric {name!r}; choose from d_K, d_KR, W_p, TV")
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if args.format == "json":
        return _json({"metric": name, "value": value})
    return _table(("metric", "value"), [(name, value)])


def cmd_glue(cfg, args):
    c12 = _coupling(need(cfg, "c12"), "c12")
    c23 = _coupling(need(cfg, "c23"), "c23")
    try:
        lam = gluing.glue(c12, c23)
    except ValueError as e:
        raise ConfigError(f"fields 'c12'/'c23': {e}") from None
    if args.format == "json":
        return _json({"mass": lam.mass.tolist()})
    rows = [(int(i), int(j), int(k), float(lam.mass[i, j, k])) for i, j, k in np.argwhere(lam.mass > 0)]
    return _table(("i", "j", "k", "mass"), rows)


def cmd_carry(cfg, args):
    sigma = _coupling(need(cfg, "sigma"), "sigma")
    mu2 = parse(cfg, "mu2", measure_from_dict)
    mode = cfg.get("mode", "both")
    try:
        if mode == "rows":
            res = gluing.carry_plan(sigma, mu2)
        elif mode == "both":
            res = gluing.carry_plan_both(sigma, mu2, parse(cfg, "nu2", measure_from_dict))
        elif mode == "wp":
            res = gluing.carry_plan_wp(sigma, mu2, parse(cfg, "nu2", measure_from_dict), float(cfg.get("p", 1.0)))
        else:
            raise ConfigError(f"field 'mode': unknown mode {mode!r}; choose from rows, both, wp")
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if res.lhs > res.rhs + BOUND_TOL:
        raise InvariantViolation(f"carry bound violated: {res.lhs!r} > {res.rhs!r}")
    if args.format == "json":
        return _json({"mode": mode, "lhs": res.lhs, "rhs": res.rhs, "plan": res.plan.mass.tolist()})
    return _table(("mode", "lhs", "rhs"), [(mode, res.lhs, res.rhs)])


def cmd_hausdorff(cfg, args):
    ms = [parse(cfg, k, measure_from_dict) for k in ("mu1", "nu1", "mu2", "nu2")]
    try:
        if cfg.get("exact", True):
            rep = hausdorff.hausdorff_exact(*ms)
        else:
            rep = hausdorff.HausdorffReport(None, hausdorff.hausdorff_upper(*ms))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if rep.exact is not None and rep.exact > rep.upper_bound + BOUND_TOL:
        raise InvariantViolation(f"Hausdorff distance {rep.exact!r} exceeds the bound {rep.upper_bound!r}")
    if args.format == "json":
        return _json({"exact": rep.exact, "upper_bound": rep.upper_bound, "slack": rep.slack})
    return _table(("exact", "upper_bound", "slack"), [(rep.exact, rep.upper_bound, rep.slack)])


def _report_out(rep, args, cfg):
    if args.format == "json":
        return rep.to_json(include_plans=bool(cfg.get("include_plans", False)))
    return rep.to_csv()


def cmd_sweep(cfg, args):
    return _report_out(parametric.sweep_value(_family(cfg), jobs=args.jobs), args, cfg)


def cmd_select(cfg, args):
    eps = parse(cfg, "eps", float)
    if not eps > 0:
        raise ConfigError("field 'eps' must be positive")
    return _report_out(parametric.select_eps_optimal_path(_family(cfg), eps), args, cfg)


def cmd_gallery(cfg, args):
    name = need(cfg, "name")
    n = parse(cfg, "n", int)
    try:
        fam = parametric.gallery(name, n, t_grid=cfg.get("t_grid"))
        rep = parametric.check_plan_convergence(fam, float(cfg.get("t_star", 0.0)), cfg.get("side", "both"))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if args.format == "json":
        return _json({"family": name, "n": n, "t_star": rep.t_star, "verdict": rep.verdict,
                      "unique_at_star": rep.unique_at_star, "one_sided_gap": rep.one_sided_gap,
                      "rows": [{"t": float(t), "distance": float(d), "unique": bool(u)}
                               for t, d, u in zip(rep.ts, rep.distances, rep.unique)]})
    return _table(("t", "distance_to_star", "unique"),
                  [(float(t), float(d), int(u)) for t, d, u in zip(rep.ts, rep.distances, rep.unique)])


def cmd_monge(cfg, args):
    deltas = cfg.get("deltas", [0.05, 0.1, 0.2])
    if cfg.get("scenario", "perturbed-grid") != "perturbed-grid" and "mu0" not in cfg:
        raise ConfigError("field 'scenario': only 'perturbed-grid' is available")
    if "mu0" in cfg:
        mu0 = parse(cfg, "mu0", measure_from_dict)
        try:
            T0 = monge.MongeMap(mu0.support, need(cfg, "T0"))
            maps = [monge.MongeMap(mu0.support, m) for m in need(cfg, "maps")]
            table = monge.convergence_in_measure(mu0, maps, T0, deltas, cfg.get("ns"))
        except ValueError as e:
            raise ConfigError(str(e)) from None
    else:
        try:
            sc = monge.perturbed_grid_scenario(int(cfg.get("atoms", 16)),
                                               tuple(cfg.get("ns", (2, 4, 8, 16, 32, 64))), tuple(deltas))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if any(tv > 1.0 / n for tv, n in zip(sc.tv, sc.ns)):
            raise InvariantViolation("reweighted measures are farther than 1/n in total variation")
        table = sc.table
    if args.format == "json":
        return _json({"ns": list(table.ns), "deltas": table.deltas.tolist(),
                      "masses": table.masses.tolist(),
                      "verdicts": {fmt(k): v for k, v in table.verdicts.items()}})
    return table.to_csv()


def cmd_verify(cfg, args):
    suite = args.suite or cfg.get("suite", "all")
    names = verify.SUITES if suite == "all" else [suite]
    if any(s not in verify.SUITES for s in names):
        raise ConfigError(f"field 'suite': unknown suite {suite!r}; choose from all, {', '.join(verify.SUITES)}")
    instances = args.instances if args.instances is not None else cfg.get("instances")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    results = verify.run_suites(names, instances, seed, args.jobs)
    for r in results:
        print(r.summary_line(), file=sys.stderr)
    text = verify.render(results, args.format)
    bad = sum(r.violations for r in results)
    return text, (f"{bad} invariant violations" if bad else None)


HANDLERS = {
    "solve": cmd_solve, "metric": cmd_metric, "glue": cmd_glue, "carry": cmd_carry,
    "hausdorff": cmd_hausdorff, "sweep": cmd_sweep, "select": cmd_select, "monge": cmd_monge,
    "gallery": cmd_gallery, "verify": cmd_verify,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="paramot", description="Discrete optimal transport experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="write output here instead of stdout")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "verify":
            sp.add_argument("--suite", default=None)
            sp.add_argument("--instances", type=int, default=None)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    violation = None
    try:
        cfg = load_config(args.config)
        if args.command != "verify" and args.config is None:
            raise ConfigError("--config is required")
        out = HANDLERS[args.command](cfg, args)
        if isinstance(out, tuple):
            out, violation = out
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (InvariantViolation, AssertionError) as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return 3
    except SolverError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return 3
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    if violation:
        print(f"invariant violation: {violation}", file=sys.stderr)
        return 3
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
