"""Command-line front end: ``fixpde validate|solve|compare|kernels``.

Exit codes: 0 success, 1 comparison above threshold, 2 input error or
inapplicable oracle, 3 non-causal parameters, 4 no convergence, 5 numeric
fault or unwritable output.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, fileio
from .expr import DomainFault, ExpressionError
from .grid import build_grid, set_threads
from .oracles import (CFLError, OracleNotApplicable, characteristics_burgers,
                      characteristics_transport, classify_rhs, finite_difference_reference,
                      ode_pointwise, transport_speed)
from .pipeline import (exact_on_grid, relative_error, resolve_parameters, solve_problem,
                       solver_settings)
from .problems import ProblemFileError, resolve_problem, sample_boundary
from .reduction import PlanError, plan_dump, validate_parameters
from .spectral import (NonCausalError, boundary_spectra, load_kernels, save_kernels,
                       synthesize_kernels)

EXIT_OK, EXIT_ABOVE, EXIT_INPUT, EXIT_NONCAUSAL, EXIT_DIVERGED, EXIT_FAULT = 0, 1, 2, 3, 4, 5
CSV_COLUMNS = ("resolution", "L2_error", "Linf_error", "valid_fraction", "iterations")
THRESHOLDS = {"heat_reduced": 0.10}
DEFAULT_THRESHOLD = 0.05


def _ints(text):
    return tuple(int(v) for v in text.replace("x", ",").split(",") if v)


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v)


def _band(text):
    return text if text in ("auto", "none") else float(text)


def _load(ref):
    try:
        return resolve_problem(ref), None
    except (ProblemFileError, ExpressionError, PlanError, KeyError, ValueError, OSError) as exc:
        return None, str(exc).strip("'\"")


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "resolution", None):
        out["resolution"] = args.resolution
    if getattr(args, "pad", None):
        out["pad"] = args.pad
    for name in ("tol", "max_iter", "band_limit", "damping", "anderson"):
        v = getattr(args, name, None)
        if v is not None:
            out[name] = v
    return out


def _param_override(args, problem):
    if getattr(args, "a", None) is None:
        return None
    vals = {(0, "u1"): args.a}
    if args.b is not None:
        vals[(0, "u1_x")] = args.b
    if problem.m != 1:
        raise ValueError("--a/--b apply to scalar problems only")
    return vals


def report_text(fields: dict) -> str:
    lines = []
    for k, v in fields.items():
        if isinstance(v, float):
            v = repr(v) if math.isfinite(v) else str(v)
        lines.append(f"{k}: {v}")
    return "\n".join(lines) + "\n"


def cmd_validate(args, out) -> int:
    problem, err = _load(args.problem)
    if problem is None:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    try:
        s = solver_settings(problem, **_overrides(args))
        grid = build_grid(problem.domain, s["resolution"], s["pad"])
        plan = problem.plan()
        params = resolve_parameters(problem, plan, grid, _param_override(args, problem))
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    rep = validate_parameters(plan, params, [grid.frequencies(k) for k in range(1, grid.ndim)])
    out.write(plan_dump(plan, params, rep))
    return EXIT_OK if rep.ok else EXIT_NONCAUSAL


def _manifest(problem, sol, args) -> dict:
    return {
        "problem": problem.name,
        "problem_hash": hashlib.sha256(problem.fingerprint().encode()).hexdigest(),
        "grid_points": list(sol.grid.points),
        "grid_pad": list(sol.grid.pad),
        "params": sol.params.coeffs.tolist(),
        "band_limit": sol.band_limit,
        "version": __version__,
        "threads": args.threads,
        "seed": args.seed,
    }


def cmd_solve(args, out) -> int:
    problem, err = _load(args.problem)
    if problem is None:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    outdir = Path(args.out)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        probe = outdir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"error: cannot write to {outdir}: {exc}", file=sys.stderr)
        return EXIT_FAULT
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            sol = solve_problem(problem, params=_param_override(args, problem),
                                **_overrides(args))
    except NonCausalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCAUSAL
    except DomainFault as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    rep = sol.report
    k = sol.kernels
    fields = {
        "problem": problem.name,
        "status": rep.status,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "update_norm_final": rep.update_norm_final,
        "max_contraction": rep.max_contraction,
        "interior_residual": rep.interior_residual,
        "exterior_residual": rep.exterior_residual,
        "masked_fraction": k.masked_fraction,
        "tail_bound": k.tail_bound,
        "band_limit": sol.band_limit if sol.band_limit is not None else "none",
        "causal": sol.causality.causal,
        "causality_margin": sol.causality.margin,
    }
    if problem.exact is not None:
        try:
            fields["oracle_error"] = relative_error(sol.u, exact_on_grid(problem, sol.grid))[0]
        except ArithmeticError:
            pass
    fields["wall_time_ms"] = round(rep.wall_time_ms, 3)
    if rep.message:
        fields["message"] = rep.message
    for w in caught:
        fields.setdefault("warning", str(w.message))
    try:
        meta = {"problem": problem.name, "params": sol.params.coeffs.tolist(),
                "status": rep.status, "iterations": rep.iterations}
        fileio.dump_array(outdir / "u.fxpd", sol.u, [0.0] + list(sol.grid.spacings), meta)
        if args.csv:
            fileio.write_field_csv(outdir / "u.csv", sol.u, _interior_grid(sol.grid),
                                   interior=False)
        (outdir / "report.txt").write_text(report_text(fields))
        (outdir / "kernels.json").write_text(json.dumps(k.metadata(), indent=1, sort_keys=True))
        man = _manifest(problem, sol, args)
        man["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        (outdir / "manifest.json").write_text(json.dumps(man, indent=1, sort_keys=True))
        if args.save_kernels:
            save_kernels(outdir / "kernels.fxpd", k)
    except OSError as exc:
        print(f"error: writing artifacts failed: {exc}", file=sys.stderr)
        return EXIT_FAULT
    out.write(report_text(fields))
    if rep.status == "numeric_fault":
        return EXIT_FAULT
    return EXIT_OK if rep.converged else EXIT_DIVERGED


def _interior_grid(grid):
    """Grid whose padded shape equals the box, for CSV export of box-only fields."""
    from .grid import SpaceTimeGrid

    return SpaceTimeGrid(grid.domain, grid.points, (0,) * grid.ndim)


def _oracle_for(problem, name):
    kind = classify_rhs(problem)
    if name == "exact":
        if problem.exact is None:
            raise OracleNotApplicable(f"{problem.name} has no exact solution")
        return lambda g: (exact_on_grid(problem, g), None)
    if name == "characteristics":
        if kind == "linear_transport":
            c = transport_speed(problem)
            face = "left" if c >= 0 else "right"
            e = problem.boundary[face][0]
            xb = 0.0 if face == "left" else problem.domain.extents[0]
            inflow = (lambda t: e(t, xb)) if callable(e) else _pin(e, xb)
            return lambda g: _unpack(characteristics_transport(problem.initial[0], c, inflow, g))
        if kind == "burgers":
            return lambda g: _unpack(characteristics_burgers(problem.initial[0], g))
        raise OracleNotApplicable(f"characteristics oracle does not apply to {problem.name}")
    if name == "ode":
        if kind != "reaction":
            raise OracleNotApplicable(f"ode oracle needs u_t = f(u); {problem.name} is {kind}")
        return lambda g: _unpack(ode_pointwise(problem.system.rhs_exprs[0], problem.initial[0], g))
    if name == "fd":
        if kind in (None, "hamilton_jacobi"):
            raise OracleNotApplicable(f"no finite-difference scheme for {problem.name}")
        return lambda g: _unpack(finite_difference_reference(problem, g))
    raise OracleNotApplicable(f"unknown oracle {name!r}")


def _pin(expr, xb):
    from .expr import eval_expression

    return lambda t: np.broadcast_to(eval_expression(expr, {"t": t, "x": xb}),
                                     np.shape(t)).astype(float)


def _unpack(res):
    return res.u_ref, res.valid


def cmd_compare(args, out) -> int:
    problem, err = _load(args.problem)
    if problem is None:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    try:
        oracle = _oracle_for(problem, args.oracle)
    except OracleNotApplicable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    threshold = THRESHOLDS.get(classify_rhs(problem), DEFAULT_THRESHOLD)
    resolutions = args.resolutions or [None]
    rows = []
    code = EXIT_OK
    for n in resolutions:
        ov = _overrides(args)
        if n is not None:
            ov["resolution"] = (n,) * (problem.dim + 1)
        try:
            sol = solve_problem(problem, params=_param_override(args, problem), **ov)
            ref, valid = oracle(sol.grid)
        except NonCausalError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NONCAUSAL
        except CFLError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        except DomainFault as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAULT
        ncomp = ref.shape[0]
        l2, linf = relative_error(sol.u[:ncomp], ref, valid)
        vf = 1.0 if valid is None else float(np.mean(valid))
        rows.append((sol.grid.points[1], l2, linf, vf, sol.report.iterations))
        if not sol.report.converged:
            code = EXIT_DIVERGED
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r[0], repr(r[1]), repr(r[2]), repr(r[3]), r[4]])
    text = buf.getvalue()
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_FAULT
    out.write(text)
    if code != EXIT_OK:
        return code
    return EXIT_OK if rows[-1][1] <= threshold else EXIT_ABOVE


def cmd_kernels(args, out) -> int:
    if args.action == "inspect":
        try:
            k = load_kernels(args.target)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        meta = k.metadata()
        out.write(report_text({key: (json.dumps(v) if isinstance(v, (list, dict)) else v)
                               for key, v in sorted(meta.items())}))
        return EXIT_OK
    problem, err = _load(args.target)
    if problem is None:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    if not args.out:
        print("error: kernels dump needs --out FILE", file=sys.stderr)
        return EXIT_INPUT
    s = solver_settings(problem, **_overrides(args))
    grid = build_grid(problem.domain, s["resolution"], s["pad"])
    plan = problem.plan()
    params = resolve_parameters(problem, plan, grid, _param_override(args, problem))
    try:
        k = synthesize_kernels(plan, params, boundary_spectra(sample_boundary(problem, grid), grid),
                               grid, s["eps_sing"])
    except NonCausalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCAUSAL
    try:
        save_kernels(args.out, k)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT
    out.write(f"wrote {args.out}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fixpde", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=1, help="FFT worker threads (1 = bitwise reproducible)")
    p.add_argument("--seed", type=int, default=0, help="seed recorded in run manifests")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--resolution", type=_ints, help="cells per axis, t first (e.g. 128,128)")
        sp.add_argument("--pad", type=_floats, help="pad factor per axis (e.g. 8,2)")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iter", dest="max_iter", type=int)
        sp.add_argument("--band-limit", dest="band_limit", type=_band)
        sp.add_argument("--damping", type=float)
        sp.add_argument("--anderson", type=int)
        sp.add_argument("--a", type=float, help="scalar parameter a (overrides auto)")
        sp.add_argument("--b", type=float, help="scalar parameter b")

    v = sub.add_parser("validate", help="print the plan and causality report")
    v.add_argument("problem")
    common(v)
    s = sub.add_parser("solve", help="solve and write artifacts")
    s.add_argument("problem")
    s.add_argument("--out", required=True)
    s.add_argument("--csv", action="store_true", help="also write u.csv")
    s.add_argument("--save-kernels", action="store_true")
    common(s)
    c = sub.add_parser("compare", help="error table against an oracle")
    c.add_argument("problem")
    c.add_argument("--oracle", required=True, choices=("characteristics", "ode", "fd", "exact"))
    c.add_argument("--resolutions", type=_ints)
    c.add_argument("--out")
    common(c)
    k = sub.add_parser("kernels", help="dump or inspect a kernel cache")
    k.add_argument("action", choices=("dump", "inspect"))
    k.add_argument("target", help="problem (dump) or cache file (inspect)")
    k.add_argument("--out")
    common(k)
    return p


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "compare": cmd_compare,
            "kernels": cmd_kernels}


def main(argv=None, out=None) -> int:
    args = build_parser().parse_args(argv)
    set_threads(args.threads)
    return COMMANDS[args.command](args, out or sys.stdout)


if __name__ == "__main__":
    sys.exit(main())
