"""Command-line entry point.

Exit status: 0 on success, 1 when a verification fails, 2 on configuration or
usage errors. Reports go to ``<out>/result.json``; fields to CSV beside it.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import acceptance
from .config import ConfigError, ProblemConfig, load
from .expr import ExprError, scalar_field
from .report import fmt, write_csv, write_json

log = logging.getLogger("degenmax")

OK, FAILED, USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad input that is not a config parse problem; maps to exit 2."""


# ------------------------------------------------------------------ helpers


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _coord_names(dim: int) -> list[str]:
    return ["x", "y"][:dim]


def _setup(cfg: ProblemConfig):
    from .operator_core import classify_boundary, make_grid

    grid = make_grid(cfg.domain, cfg.cells)
    kwargs = {} if cfg.tol_zero is None else {"tol_zero": cfg.tol_zero}
    cls = classify_boundary(cfg.domain, grid, cfg.coeffs, **kwargs)
    return grid, cls


def _parse_point(text: str, dim: int) -> np.ndarray:
    try:
        vals = [float(s) for s in text.split(",")]
    except ValueError:
        raise UsageError(f"--point expects {dim} comma-separated numbers, got {text!r}") from None
    if len(vals) != dim:
        raise UsageError(f"--point expects {dim} coordinates, got {len(vals)}")
    return np.array(vals)


def _shifted(coeffs, origin, parabolic: bool):
    """Coefficients in coordinates centred at ``origin`` (time-dependent wrapper when asked)."""
    from .operator_core import CoefficientField

    o = np.asarray(origin, dtype=float)
    if parabolic:
        return CoefficientField(
            coeffs.dim,
            lambda t, x: coeffs.a_at(x + o),
            lambda t, x: coeffs.b_at(x + o),
            lambda t, x: coeffs.c_at(x + o),
            parabolic=True,
            name=coeffs.name,
            c_nonnegative=coeffs.c_nonnegative,
        )
    return CoefficientField(
        coeffs.dim,
        lambda x: coeffs.a_at(x + o),
        lambda x: coeffs.b_at(x + o),
        lambda x: coeffs.c_at(x + o),
        da=None if coeffs.da is None else (lambda x: coeffs.da_at(x + o)),
        name=coeffs.name,
        c_nonnegative=coeffs.c_nonnegative,
    )


# ------------------------------------------------------------------ classify


def cmd_classify(args) -> int:
    from .operator_core import estimate_boundary_lipschitz, fichera_function

    cfg = load(args.problem)
    grid, cls = _setup(cfg)
    out = _out_dir(args)
    names = _coord_names(grid.dim)
    deg = set(cls.degenerate)
    fichera = {}
    for n in cls.degenerate:
        try:
            fichera[str(n)] = fichera_function(cfg.coeffs, cls, n)
        except (ValueError, RuntimeError) as exc:
            log.warning("Fichera value unavailable at node %d: %s", n, exc)
            fichera[str(n)] = None
    result = {
        "command": "classify",
        "nodes": grid.size,
        "boundary_nodes": int(grid.boundary.sum()),
        "degenerate": [int(n) for n in cls.degenerate],
        "nondegenerate": [int(n) for n in cls.nondegenerate],
        "fichera": fichera,
    }
    if cls.degenerate:
        est = estimate_boundary_lipschitz(cfg.coeffs, cls, probe_depth=0.25 * min(cfg.domain.diameter(), 1.0))
        result["lipschitz_K"] = est.K
        result["lipschitz_suspect"] = est.non_lipschitz
    rows = []
    for n in grid.boundary_nodes:
        kind = "degenerate" if n in deg else "nondegenerate"
        rows.append([*map(float, grid.nodes[n]), kind, *map(float, cls.normals[n])])
    write_csv(out / "classification.csv", names + ["kind"] + [f"n_{c}" for c in names], rows)
    write_json(out / "result.json", result)
    print(f"{len(cls.degenerate)} degenerate, {len(cls.nondegenerate)} non-degenerate boundary nodes")
    return OK


# ------------------------------------------------------------------ special


def cmd_special(args) -> int:
    from .special_functions import (
        HypergeometricParams,
        classify_U_regularity,
        kummer_M,
        kummer_M_derivative,
        tricomi_U,
        tricomi_U_derivative,
    )

    if args.action == "classify":
        try:
            res = classify_U_regularity(args.a, args.b)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        print(f"item {res.item}: {res.regularity.value} ({res.reason})")
        return OK
    if args.x is None:
        raise UsageError("special eval needs --x")
    fns = {"M": kummer_M, "U": tricomi_U, "Mprime": kummer_M_derivative, "Uprime": tricomi_U_derivative}
    try:
        value = fns[args.fn](HypergeometricParams(args.a, args.b), args.x)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(fmt(value))
    return OK


# ------------------------------------------------------------------ solve / obstacle


def _elliptic_operator(cfg: ProblemConfig, grid, cls):
    from .fd_solver import assemble_elliptic

    return assemble_elliptic(cfg.coeffs, grid, cls, f=cfg.f.on_nodes(grid.nodes), g=cfg.g_values(grid, cls))


def _parabolic_plan(cfg: ProblemConfig, grid, cls):
    from .fd_solver import assemble_parabolic, time_grid

    f = (lambda t, x: cfg.f(x, t)) if cfg.f.time_dependent else cfg.f.on_nodes(grid.nodes)
    return assemble_parabolic(
        cfg.coeffs,
        grid,
        time_grid(cfg.T, cfg.steps),
        cls,
        f=f,
        g=cfg.g_callable(grid, cls),
        terminal=cfg.terminal.on_nodes(grid.nodes, cfg.T),
    )


def cmd_solve(args) -> int:
    from .fd_solver import discrete_strong_max_check, parabolic_strong_max_check, solve_linear

    cfg = load(args.problem)
    grid, cls = _setup(cfg)
    out = _out_dir(args)
    names = _coord_names(grid.dim)
    if cfg.mode == "parabolic":
        plan = _parabolic_plan(cfg, grid, cls)
        sol = plan.march()
        diag = parabolic_strong_max_check(sol, plan)
        rows = [[float(t), *map(float, grid.nodes[i]), float(u[i])] for t, u in zip(sol.times, sol.values)
                for i in range(grid.size)]
        n = write_csv(out / "solution.csv", ["t"] + names + ["u"], rows)
        result = {
            "command": "solve",
            "mode": "parabolic",
            "rows": n,
            "times": sol.times,
            "residual_norm": sol.residual_norm,
            "m_matrix_ok": sol.m_matrix_ok,
            "strong_max": asdict(diag),
            "warnings": sol.warnings,
        }
        write_json(out / "result.json", result)
        print(f"wrote {n} rows to {out / 'solution.csv'}")
        return OK
    op = _elliptic_operator(cfg, grid, cls)
    rep = solve_linear(op)
    diag = discrete_strong_max_check(rep, op)
    rows = [[*map(float, grid.nodes[i]), float(rep.solution[i])] for i in range(grid.size)]
    n = write_csv(out / "solution.csv", names + ["u"], rows)
    result = {
        "command": "solve",
        "mode": "elliptic",
        "rows": n,
        "residual_norm": rep.residual_norm,
        "m_matrix_ok": rep.m_matrix_ok,
        "m_matrix_witnesses": rep.m_matrix_witnesses,
        "max_principle_violations": rep.max_principle_violations,
        "method": rep.method,
        "strong_max": asdict(diag),
        "warnings": rep.warnings,
    }
    write_json(out / "result.json", result)
    print(f"wrote {n} rows to {out / 'solution.csv'}")
    if rep.max_principle_violations:
        print(f"weak maximum principle violated at nodes {rep.max_principle_violations[:10]}", file=sys.stderr)
        return FAILED
    return OK


def cmd_obstacle(args) -> int:
    from .obstacle import (
        ObstacleNonConvergence,
        ObstacleProblem,
        solve_obstacle_elliptic,
        solve_obstacle_parabolic,
    )

    cfg = load(args.problem)
    if cfg.psi is None:
        raise ConfigError("obstacle problems need a 'psi' expression", source=cfg.source)
    grid, cls = _setup(cfg)
    out = _out_dir(args)
    names = _coord_names(grid.dim)
    opts = {k: cfg.obstacle[k] for k in ("omega", "tol", "max_iter") if k in cfg.obstacle}
    status = OK
    try:
        if cfg.mode == "parabolic":
            plan = _parabolic_plan(cfg, grid, cls)
            psi = (lambda t, x: cfg.psi(x, t)) if cfg.psi.time_dependent else cfg.psi.on_nodes(grid.nodes)
            sols = solve_obstacle_parabolic(plan, psi, **opts)
            times = plan.times
        else:
            op = _elliptic_operator(cfg, grid, cls)
            sols = [solve_obstacle_elliptic(ObstacleProblem(op, cfg.psi.on_nodes(grid.nodes)), **opts)]
            times = [None]
    except ObstacleNonConvergence as exc:
        sols, times, status = [exc.solution], [None], FAILED
        print(str(exc), file=sys.stderr)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = []
    for t, s in zip(times, sols):
        active = np.zeros(grid.size, dtype=int)
        active[s.active_set] = 1
        for i in range(grid.size):
            lead = [] if t is None else [float(t)]
            rows.append([*lead, *map(float, grid.nodes[i]), float(s.u[i]), int(active[i])])
    header = ([] if times[0] is None else ["t"]) + names + ["u", "active"]
    n = write_csv(out / "solution.csv", header, rows)
    last = sols[-1]
    result = {
        "command": "obstacle",
        "mode": cfg.mode,
        "rows": n,
        "converged": all(s.converged for s in sols),
        "iterations": [s.iterations for s in sols],
        "complementarity_residual": max(s.complementarity_residual for s in sols),
        "active_nodes": int(last.active_set.size),
        "final_change": last.final_change,
        "warnings": sorted({w for s in sols for w in s.warnings}),
    }
    write_json(out / "result.json", result)
    print(f"wrote {n} rows to {out / 'solution.csv'}")
    return status


# ------------------------------------------------------------------ perturb


def cmd_perturb(args) -> int:
    from .operator_core import apply_operator, classify_boundary, estimate_boundary_lipschitz
    from .perturbation import (
        ELLIPTIC,
        PARABOLIC,
        BoundaryMaxData,
        ConstantsSelectionError,
        CylinderConstructionError,
        build_cylinder,
        build_w,
        certify,
        hopf_check,
        select_constants,
    )

    cfg = load(args.problem)
    if not cfg.perturb:
        raise ConfigError("perturb needs a 'perturb' block", source=cfg.source)
    dim = cfg.domain.dim
    point = _parse_point(args.point, dim)
    if cfg.domain.kind == "half_graph" or abs(point[-1] - cfg.domain.bounds[-1][0]) > 1e-12:
        raise UsageError("the point must lie on the flat lower face {x_d = lower bound}; straighten first")
    grid, cls = _setup(cfg)
    parabolic = cfg.mode == PARABOLIC
    pc = cfg.perturb
    try:
        u = scalar_field(pc["u"], dim, parabolic=parabolic, shift=point)
    except ExprError as exc:
        raise UsageError(str(exc)) from None
    coeffs = _shifted(cfg.coeffs, point, parabolic)
    t0 = 0.0 if parabolic else None
    origin = np.zeros(dim)
    grad0 = u.grad(0.0, origin) if parabolic else u.grad(origin)
    r = float(u.value(0.0, origin) if parabolic else u.value(origin))
    b0 = float(coeffs.b_at(origin, t0)[-1])
    rho0, ell = float(pc["rho0"]), float(pc["ell"])
    if "K" in pc:
        K = float(pc["K"])
    else:
        K = estimate_boundary_lipschitz(cfg.coeffs, cls, probe_depth=ell, norm="trace").K
    if "Lambda0" in pc:
        Lambda0 = float(pc["Lambda0"])
    else:
        zs = np.linspace(-rho0, rho0, 9)
        probe = [point + np.append(zs[:, None][k][: dim - 1], h) for k in range(len(zs)) for h in np.linspace(0, ell, 9)]
        Lambda0 = max(0.0, max(cfg.coeffs.c_at(p) for p in probe if cfg.domain.contains(p)))
    hopf = hopf_check(u, origin, t=t0)
    out = _out_dir(args)
    result = {"command": "perturb", "point": point, "mode": cfg.mode, "p": float(grad0[-1]), "r": r, "b0": b0,
              "K": K, "Lambda0": Lambda0, "hopf": asdict(hopf)}
    if not hopf.passed:
        result["failure"] = "Hopf check failed: normal derivative is not negative"
        write_json(out / "result.json", result)
        print(result["failure"], file=sys.stderr)
        return FAILED
    try:
        data = BoundaryMaxData(p=float(grad0[-1]), r=r, b0=b0, K=K, Lambda0=Lambda0, ell=ell, rho0=rho0,
                               tau=pc.get("tau") if parabolic else None)
    except ValueError as exc:
        raise UsageError(f"boundary-maximum data: {exc}") from None
    result["Au_at_point"] = apply_operator(coeffs, u, origin, t=t0)
    try:
        spec = select_constants(data, u, mode=PARABOLIC if parabolic else ELLIPTIC, dim=dim)
        cyl = build_cylinder(spec, data)
    except (ConstantsSelectionError, CylinderConstructionError) as exc:
        result["failure"] = str(exc)
        write_json(out / "result.json", result)
        print(str(exc), file=sys.stderr)
        return FAILED
    cert = certify(spec, data, coeffs, u, grid_density=int(pc.get("grid_density", 10)), cylinder=cyl)
    result["spec"] = asdict(spec)
    result["cylinder"] = {"rho0": cyl.rho0, "x_hat_d": cyl.x_hat_d, "P": cyl.P, "Q": cyl.Q, "tau": cyl.tau,
                          "radius_profile": [[float(z), float(cyl.radius(z))] for z in np.linspace(0, cyl.x_hat_d, 11)]}
    result["certificate"] = {
        "passed": cert.passed,
        "samples": cert.sample_count,
        "max_Av": cert.max_Av,
        "Av_witness": cert.Av_witness,
        "max_Au": cert.max_Au,
        "v_max": cert.v_max,
        "argmax": cert.argmax,
        "argmax_interior": cert.argmax_interior,
        "fine_argmax": cert.fine_argmax,
        "cross_check_ok": cert.cross_check_ok,
        "sweeps": [asdict(s) for s in cert.sweeps],
        "failures": cert.failures,
    }
    w = build_w(spec, data)
    rows = []
    for xd in np.linspace(0.0, cyl.x_hat_d, 21):
        rad = float(cyl.radius(xd))
        lat = np.linspace(-rad, rad, 21) if dim == 2 else [None]
        for s in lat:
            x = np.array([xd]) if s is None else np.array([s, xd])
            if parabolic:
                v = float(u.value(0.0, x) + w.value(0.0, x))
            else:
                v = float(u.value(x) + w.value(x))
            rows.append([*map(float, x + point), v])
    write_csv(out / "v_field.csv", _coord_names(dim) + ["v"], rows)
    write_json(out / "result.json", result)
    print(f"certificate {'passed' if cert.passed else 'failed'}" + ("" if cert.passed else ": " + "; ".join(cert.failures)))
    return OK if cert.passed else FAILED


# ------------------------------------------------------------------ transform


def cmd_transform(args) -> int:
    from .coefficient_transform import (
        TransformError,
        build_tangential_killing_map,
        straighten_graph_boundary,
        transform_coefficients,
        verify_straightening,
        verify_transform,
    )

    cfg = load(args.problem)
    if cfg.domain.dim != 2:
        raise UsageError("coordinate changes need a 2D problem")
    opts = cfg.transform
    samples = int(opts.get("samples", 100))
    rng = np.random.default_rng(args.seed)
    out = _out_dir(args)
    try:
        if args.map == "straighten":
            if cfg.domain.kind != "half_graph":
                raise UsageError("straighten needs a half_graph domain")
            gamma = cfg.domain.gamma
            region = cfg.domain.bounds[0]
            phi = straighten_graph_boundary(gamma, region=region)
            t_op = transform_coefficients(cfg.coeffs, phi)
            pts = [np.array([s, gamma(s) + rng.uniform(0, 0.5 * phi.diameter)]) for s in rng.uniform(*region, samples)]
            report = verify_straightening(t_op, gamma, region, samples, args.seed) if args.verify else None
            origin = np.zeros(2)
        else:
            point = _parse_point(args.point, 2) if args.point else np.array(
                [0.5 * sum(cfg.domain.bounds[0]), cfg.domain.bounds[1][0]])
            coeffs = _shifted(cfg.coeffs, point, False)
            phi = build_tangential_killing_map(coeffs, delta=opts.get("delta"))
            t_op = transform_coefficients(coeffs, phi)
            rad = phi.patch_radius
            pts = []
            while len(pts) < samples:
                z = rng.uniform(-rad, rad, 2)
                z[1] = abs(z[1])
                if np.linalg.norm(z) <= rad:
                    pts.append(z)
            report = verify_transform(t_op, sample_count=samples, seed=args.seed) if args.verify else None
            origin = point
    except TransformError as exc:
        raise UsageError(str(exc)) from None
    new = t_op.coeffs
    rows, fields = [], []
    for x in pts:
        y = phi(x)
        a, b, c = new.a_at(y), new.b_at(y), new.c_at(y)
        fields.append({"x": x + origin, "y": y, "a_tilde": a, "b_tilde": b, "c_tilde": c})
        rows.append([*map(float, x + origin), *map(float, y), *map(float, a.ravel()), *map(float, b), float(c)])
    write_csv(out / "coefficients.csv",
              ["x", "y", "y1", "y2", "a11", "a12", "a21", "a22", "b1", "b2", "c"], rows)
    result = {"command": "transform", "map": args.map, "patch_radius": phi.patch_radius, "samples": fields}
    status = OK
    if report is not None:
        result["verification"] = {"passed": report.passed, "checks": [asdict(c) for c in report.checks]}
        status = OK if report.passed else FAILED
        for c in report.checks:
            print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: max error {c.max_error:.3e}")
    write_json(out / "result.json", result)
    return status


# ------------------------------------------------------------------ verify-suite


def cmd_verify_suite(args) -> int:
    try:
        ids = acceptance.select(args.suite)
    except acceptance.SuiteSelectionError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    results = acceptance.run_suite(ids, seed=args.seed)
    write_json(out / "result.json", acceptance.document(results, args.seed))
    width = max(len(r.criterion.title) for r in results)
    for r in results:
        budget = "" if math.isinf(r.criterion.budget) else f" / {r.criterion.budget:g}s"
        slow = "" if r.within_budget else " OVER BUDGET"
        flag = "PASS" if r.passed else "FAIL"
        line = f"{flag}  {r.criterion.cid:2d} {r.criterion.title:<{width}}  {r.seconds:7.3f}s{budget}{slow}"
        if not r.passed and r.outcome.detail:
            line += f"  ({r.outcome.detail})"
        print(line)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return FAILED if failed else OK


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="degenmax", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common], help="split the boundary into degenerate and Dirichlet parts")
    p.add_argument("--problem", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("special", parents=[common], help="confluent hypergeometric functions")
    p.add_argument("action", choices=["eval", "classify"])
    p.add_argument("--fn", choices=["M", "U", "Mprime", "Uprime"], default="M")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--x", type=float)
    p.set_defaults(func=cmd_special)

    p = sub.add_parser("perturb", parents=[common], help="perturb a boundary maximum into the interior")
    p.add_argument("--problem", required=True)
    p.add_argument("--point", required=True, help="comma-separated coordinates of the boundary point")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("transform", parents=[common], help="change coordinates and report new coefficients")
    p.add_argument("--problem", required=True)
    p.add_argument("--map", choices=["straighten", "kill-tangential"], required=True)
    p.add_argument("--point", help="boundary point to centre the killing map on")
    p.add_argument("--verify", action="store_true")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("solve", parents=[common], help="finite-difference boundary-value problem")
    p.add_argument("--problem", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("obstacle", parents=[common], help="obstacle problem by projected SOR")
    p.add_argument("--problem", required=True)
    p.set_defaults(func=cmd_obstacle)

    p = sub.add_parser("verify-suite", parents=[common], help="run the acceptance battery")
    p.add_argument("--suite", default="all", help="'all', 'fast', or comma-separated criterion ids or names")
    p.set_defaults(func=cmd_verify_suite)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
