"""Command-line driver: ``kirchhoff <command> --config FILE [--out DIR] [--tol X] [--n N]``.

Exit codes::

    0  success
    1  unexpected internal error
    2  configuration or usage error
    3  a hypothesis on m or f fails
    4  the sublinear eigenvalue condition fails
    5  the contraction condition fails
    6  a solver failed to converge or broke an invariant
    7  a Lemma property fails (verify-lemma)

JSON and CSV outputs are deterministic; timings go to the log on stderr only.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import expr, kernels
from .config import load_config
from .errors import ConfigError, KirchhoffError, ModelError, PreconditionError, SolverError, SupersolutionError
from .mesh import l2_norm, linf_norm
from .model import check_hypotheses, verify_lemma
from .localsolve import NO_NONTRIVIAL

__all__ = ["main", "EXIT", "SCHEMA", "cmd_solve", "cmd_trace_s", "cmd_convergence", "cmd_verify_lemma",
           "cmd_check_conditions", "required_hypotheses"]

SCHEMA = "kirchhoff.summary/1"

EXIT = {
    "ok": 0,
    "unexpected": 1,
    "config": 2,
    "hypothesis": 3,
    "sublinear_condition": 4,
    "contraction": 5,
    "solver": 6,
    "lemma": 7,
}

# hypotheses each regime's theorem needs; any other failure is only a warning
_REQUIRED = {
    "source": ("m0", "m1", "source", "nontrivial"),
    "growth": ("m0", "m1", "C", "C_exponent"),
    "sublinear": ("m0", "m1", "m2", "f1", "f2", "f3", "f4", "claim"),
    "lipschitz": ("m0", "m1", "f7", "f8", "f9", "h_lipschitz"),
}

log = logging.getLogger("kirchhoff")


def required_hypotheses(regime):
    return _REQUIRED[regime]


class _Stop(Exception):
    def __init__(self, status, message):
        self.status = status
        super().__init__(message)


# ------------------------------------------------------------------ output


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(payload), fh, indent=2, allow_nan=False)
        fh.write("\n")


def _fmt(x, precision=17):
    return f"{float(x):.{precision}g}"


def _write_csv(path, header, rows, precision=17):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v, precision) for v in row])


def _summary(command, cfg, status, **extra):
    out = {
        "schema": SCHEMA,
        "command": command,
        "status": status,
        "exit_code": EXIT[status],
        "backend": kernels.get(cfg.solver.backend).BACKEND,
        "config": cfg.to_dict(),
    }
    out.update(extra)
    return out


def _out_dir(cfg):
    d = cfg.output.dir
    os.makedirs(d, exist_ok=True)
    return d


# ------------------------------------------------------------------ checks


def _hypotheses(cfg, cm, nl):
    h = cfg.hypotheses
    bounds = [tuple(cfg.domain.bounds[i:i + 2]) for i in range(0, 2 * cfg.domain.dim, 2)]
    rep = check_hypotheses(cm, nl, budget=h.budget, t_max=h.t_max, r_max=h.r_max, bounds=bounds)
    need = required_hypotheses(nl.regime)
    warnings = list(rep.warnings)
    for name, v in rep.items.items():
        if name not in need and not v.passed:
            warnings.append(f"{name}: {v.verdict}" + (f" ({v.detail})" if v.detail else ""))
    missing = [n for n in need if n in rep and not rep[n].passed]
    return rep, missing, warnings


def _regime_conditions(problem, hyp):
    """(report or None, failing status or None)."""
    from .nonlocal_solver import check_contraction, check_f5, sublinear_condition_holds

    regime = problem.regime
    if regime == "sublinear":
        rep = check_f5(problem, hypotheses=hyp)
        return rep, None if sublinear_condition_holds(rep) else "sublinear_condition"
    if regime == "lipschitz":
        rep = check_contraction(problem)
        return rep, None if rep.ok() else "contraction"
    return None, None


def _run_checks(cfg, problem, extra):
    """Hypotheses then regime conditions; raises _Stop on refusal and fills ``extra``."""
    hyp, missing, warnings = _hypotheses(cfg, problem.model, problem.nonlinearity)
    extra["hypotheses"] = hyp.to_dict()
    extra["warnings"] = warnings
    for w in warnings:
        log.warning("%s", w)
    if missing:
        raise _Stop("hypothesis", "hypotheses fail: " + ", ".join(missing))
    cond, bad = _regime_conditions(problem, hyp)
    if cond is not None:
        extra["conditions"] = cond.to_dict()
    if bad == "sublinear_condition":
        raise _Stop(bad, "condition (eq:condicaoBO) violated: lambda_1(-Delta - alpha_0) < 0 < lambda_1(-Delta - alpha_inf) fails")
    if bad == "contraction":
        names = ", ".join(v.name for v in cond.failures())
        raise _Stop(bad, f"contraction condition violated ({names})")
    return hyp


def _status_for(exc):
    if isinstance(exc, _Stop):
        return exc.status
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, (ModelError, expr.ExprError)):
        return "hypothesis"
    if isinstance(exc, PreconditionError) and not isinstance(exc, SupersolutionError):
        return "contraction"
    if isinstance(exc, SolverError):
        return "solver"
    return "unexpected"


# ---------------------------------------------------------------- commands


def cmd_solve(cfg):
    """Hypotheses, regime condition, fixed point; writes summary.json, u.csv, v.csv, trace.csv."""
    from .nonlocal_solver import find_fixed_point

    out = _out_dir(cfg)
    problem = cfg.problem()
    extra = {"problem": problem.to_dict()}
    try:
        _run_checks(cfg, problem, extra)
        t0 = time.perf_counter()
        trace = find_fixed_point(problem, tol=cfg.solver.fixed_point_tol)
        log.info("fixed point found in %.3f s after %d evaluations", time.perf_counter() - t0, len(trace.samples))
    except (_Stop, KirchhoffError, expr.ExprError) as exc:
        status = _status_for(exc)
        extra["error"] = str(exc)
        if hasattr(exc, "samples") and exc.samples:
            extra["samples"] = exc.samples
        _write_json(os.path.join(out, "summary.json"), _summary("solve", cfg, status, **extra))
        log.error("%s", exc)
        return EXIT[status]

    prec = cfg.output.precision
    trace.u.to_csv(os.path.join(out, "u.csv"), prec)
    trace.v.to_csv(os.path.join(out, "v.csv"), prec)
    _write_csv(os.path.join(out, "trace.csv"), ["r", "S", "T", "V"],
               ([e.r, e.S, e.T, e.V] for e in trace.samples), prec)

    local = trace.report.to_dict() if trace.report is not None else None
    result = trace.to_dict()
    result.pop("samples")
    result.update({
        "lambda1": problem.lambda1,
        "u_linf": linf_norm(trace.u),
        "u_min": float(np.min(trace.u.values)),
        "chain_ok": trace.chain_ok(problem.m_lower),
        "local_solve": local,
    })
    extra["result"] = result
    status = "ok"
    problems = []
    if not result["chain_ok"]:
        problems.append("bound chain S <= T/m <= V/m^2 violated")
    if trace.nonlocal_residual > cfg.solver.residual_tol:
        problems.append(f"nonlocal residual {trace.nonlocal_residual:.3e} above {cfg.solver.residual_tol:g}")
    if local and NO_NONTRIVIAL in local.get("flags", ()):
        problems.append(NO_NONTRIVIAL)
    if problems:
        status = "solver"
        extra["error"] = "; ".join(problems)
        log.error("%s", extra["error"])
    _write_json(os.path.join(out, "summary.json"), _summary("solve", cfg, status, **extra))
    log.info("r* = %r, |S(r*) - r*| = %.3e", trace.r_star, trace.residual)
    return EXIT[status]


def cmd_trace_s(cfg, r_max=None, samples=41):
    """(r, S, T, V) on a uniform grid plus sign-change crossings; checks the bound chain on every row."""
    from .nonlocal_solver import evaluate_S, trace_S

    out = _out_dir(cfg)
    problem = cfg.problem()
    if r_max is None:
        r_max = evaluate_S(problem, 0.0).V / problem.m_lower**2 + 1.0
    if not (r_max >= 0 and math.isfinite(r_max)):
        raise ConfigError(f"--r-max must be a nonnegative number, got {r_max!r}")
    if samples < 1:
        raise ConfigError(f"--samples must be at least 1, got {samples}")
    try:
        evals, crossings = trace_S(problem, r_max, samples, tol=cfg.solver.fixed_point_tol,
                                   workers=cfg.solver.workers)
    except (KirchhoffError, expr.ExprError) as exc:
        status = _status_for(exc)
        _write_json(os.path.join(out, "trace_S.json"), _summary("trace-S", cfg, status, error=str(exc)))
        log.error("%s", exc)
        return EXIT[status]
    prec = cfg.output.precision
    _write_csv(os.path.join(out, "trace_S.csv"), ["r", "S", "T", "V"], ([e.r, e.S, e.T, e.V] for e in evals), prec)
    _write_csv(os.path.join(out, "crossings.csv"), ["a", "b", "r", "residual"],
               ([c["a"], c["b"], c["r"], c["residual"]] for c in crossings), prec)
    bad = [e.r for e in evals if not e.chain_ok(problem.m_lower)]
    status = "solver" if bad else "ok"
    extra = {"r_max": r_max, "samples": len(evals), "crossings": crossings, "chain_ok": not bad,
             "chain_failures": bad}
    if bad:
        extra["error"] = f"bound chain violated at {len(bad)} sample(s)"
        log.error("%s", extra["error"])
    _write_json(os.path.join(out, "trace_S.json"), _summary("trace-S", cfg, status, **extra))
    return EXIT[status]


def convergence_table(cfg, levels):
    """Rows (n, h, e_inf, e_l2) of the fixed-point solution against ``manufactured.u``."""
    from .nonlocal_solver import find_fixed_point

    src = cfg.manufactured.u
    if src is None:
        raise ConfigError("convergence needs manufactured.u", cfg.path)
    xs = ("x",) if cfg.domain.dim == 1 else ("x", "y")
    node = expr.parse(src, xs)
    rows = []
    n0 = cfg.domain.n
    for k in range(levels):
        n = n0 * 2**k
        problem = cfg.problem(n)
        mesh = problem.mesh
        exact = mesh.sample(lambda *c: expr.evaluate_array(node, dict(zip(xs, c))))
        t0 = time.perf_counter()
        trace = find_fixed_point(problem, tol=cfg.solver.fixed_point_tol)
        log.info("level %d (n=%d) solved in %.3f s", k, n, time.perf_counter() - t0)
        err = trace.u - exact
        rows.append({"n": n, "h": max(mesh.h), "error_linf": linf_norm(err), "error_l2": l2_norm(err),
                     "r_star": trace.r_star})
    for a, b in zip(rows, rows[1:]):
        for key in ("linf", "l2"):
            ea, eb = a[f"error_{key}"], b[f"error_{key}"]
            b[f"order_{key}"] = math.log2(ea / eb) if ea > 0 and eb > 0 else math.nan
    return rows


def cmd_convergence(cfg, levels=4):
    """Error table and observed orders log2(e_k / e_{k+1}) over n, 2n, 4n, ..."""
    out = _out_dir(cfg)
    if levels < 1:
        raise ConfigError(f"--levels must be at least 1, got {levels}")
    try:
        rows = convergence_table(cfg, levels)
    except (KirchhoffError, expr.ExprError) as exc:
        if isinstance(exc, ConfigError):
            raise
        status = _status_for(exc)
        _write_json(os.path.join(out, "convergence.json"), _summary("convergence", cfg, status, error=str(exc)))
        log.error("%s", exc)
        return EXIT[status]
    header = ["n", "h", "error_linf", "error_l2"]
    if levels > 1:
        header += ["order_linf", "order_l2"]
    prec = cfg.output.precision
    _write_csv(os.path.join(out, "convergence.csv"), header,
               ([row[k] if k in row else "" for k in header] for row in rows), prec)
    _write_json(os.path.join(out, "convergence.json"),
                _summary("convergence", cfg, "ok", manufactured=cfg.manufactured.u, table=rows))
    return EXIT["ok"]


def cmd_verify_lemma(cfg, budget=10_000):
    """The property suite for M_r; writes lemma.json, exit 7 on any failure."""
    out = _out_dir(cfg)
    cm = cfg.coefficient()
    h = cfg.hypotheses
    t0 = time.perf_counter()
    rep = verify_lemma(cm, budget=budget, t_max=h.lemma_t_max, r_max=h.lemma_r_max, tol=cfg.solver.quad_tol)
    log.info("lemma suite ran in %.3f s", time.perf_counter() - t0)
    status = "ok" if rep.ok() else "lemma"
    for v in rep.failures():
        log.error("lemma property %s fails: %s", v.name, v.detail)
    _write_json(os.path.join(out, "lemma.json"), _summary("verify-lemma", cfg, status, lemma=rep.to_dict()))
    return EXIT[status]


def cmd_check_conditions(cfg):
    """Hypotheses and the regime condition, without solving; writes conditions.json."""
    out = _out_dir(cfg)
    problem = cfg.problem()
    extra = {"lambda1": problem.lambda1}
    status = "ok"
    try:
        _run_checks(cfg, problem, extra)
    except (_Stop, KirchhoffError, expr.ExprError) as exc:
        status = _status_for(exc)
        extra["error"] = str(exc)
        log.error("%s", exc)
    _write_json(os.path.join(out, "conditions.json"), _summary("check-conditions", cfg, status, **extra))
    return EXIT[status]


# --------------------------------------------------------------------- main


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="run configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory (default: output.dir or ./out)")
    common.add_argument("--tol", type=float, metavar="X", help="fixed-point tolerance on |S(r) - r|")
    common.add_argument("--n", type=int, metavar="N", help="interior nodes per axis")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = argparse.ArgumentParser(prog="kirchhoff", description=__doc__.split("\n\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve the nonlocal problem")
    t = sub.add_parser("trace-S", parents=[common], help="sample S(r) on a uniform grid")
    t.add_argument("--r-max", type=float, default=None, help="right end of the r-grid (default V(0)/m^2 + 1)")
    t.add_argument("--samples", type=int, default=41)
    c = sub.add_parser("convergence", parents=[common], help="grid convergence against manufactured.u")
    c.add_argument("--levels", type=int, default=4)
    v = sub.add_parser("verify-lemma", parents=[common], help="property suite for the primitive M_r")
    v.add_argument("--budget", type=int, default=10_000)
    sub.add_parser("check-conditions", parents=[common], help="hypotheses and regime conditions only")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(tol=args.tol, n=args.n, out=args.out)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "trace-S":
            return cmd_trace_s(cfg, r_max=args.r_max, samples=args.samples)
        if args.command == "convergence":
            return cmd_convergence(cfg, levels=args.levels)
        if args.command == "verify-lemma":
            return cmd_verify_lemma(cfg, budget=args.budget)
        return cmd_check_conditions(cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT["config"]
    except (KirchhoffError, expr.ExprError) as exc:
        log.error("%s", exc)
        return EXIT[_status_for(exc)]
    except Exception:  # noqa: BLE001
        log.exception("unexpected error")
        return EXIT["unexpected"]


if __name__ == "__main__":
    sys.exit(main())
