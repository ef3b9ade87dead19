"""Command-line orchestration: solve, audits, fits, convergence, barriers.

Every subcommand writes three artifacts next to each other in --outdir:
a CSV (field or measurement data), a key=value report, and a manifest
(config hash, grid size, seed, version) so reruns are attributable. Exit
codes: 0 pass, 2 audit failure, 1 error. Wall-clock timing is printed to
stdout but kept out of the written report so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .barriers import (
    dirichlet_quadratic_barrier,
    exterior_sphere_barrier,
    harnack_barrier,
    hessian_fd_error,
    holder_cone_barrier,
    rho_admissible,
    verify_supersolution,
)
from .config import ConfigError, Expression, build_problem, parse_config
from .discretize import GridField, write_field_csv
from .envelope import abp_audit, convex_envelope
from .geometry import one_direction_constant
from .lab import (
    c1alpha_fit,
    c2alpha_fit,
    comparison_audit,
    convergence_study,
    harnack_quotient,
    harnack_regions,
    holder_fit,
    l2_norm,
)
from .operators import Ellipticity
from .report import format_value
from .solve import default_tolerance, solve


def _threads(args) -> int:
    env = os.environ.get("OBLIQUE_VISC_THREADS")
    if env is not None:
        return int(env)
    return args.threads


def _outpaths(args, cfg_path, sub):
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = Path(cfg_path).stem if cfg_path else sub
    base = outdir / f"{stem}_{sub.replace('-', '_')}"
    return base.with_suffix(".csv"), Path(f"{base}.report.txt"), Path(f"{base}.manifest.txt")


def _write_manifest(path, cfg, sub, threads, grid=None):
    lines = [
        f"config_sha256={cfg.sha256 if cfg else 'none'}",
        f"seed={cfg.seed if cfg else 0}",
        f"version={__version__}",
        f"subcommand={sub}",
        f"threads={threads}",
    ]
    if grid is not None:
        lines += [f"h={grid.h:.17g}", f"nx={grid.nx}", f"ny={grid.ny}"]
    path.write_text("\n".join(lines) + "\n")


def _write_report(path, lines):
    path.write_text("\n".join(lines) + "\n")
    for ln in lines:
        print(ln)


def _solve_from_config(cfg, args):
    problem = build_problem(cfg, h=args.h)
    method = args.method or cfg.method
    tol = args.tol if args.tol is not None else cfg.tol
    u, rep = solve(problem, method=method, tol=tol, max_iter=cfg.max_iter)
    return problem, u, rep


def _cmd_solve(args):
    cfg = parse_config(args.config)
    problem, u, rep = _solve_from_config(cfg, args)
    csv, report, manifest = _outpaths(args, args.config, "solve")
    if args.out:
        csv = Path(args.out)
    write_field_csv(u, csv)
    _write_report(report, rep.lines())
    print(f"wall_ms={rep.wall_ms:.3f}")
    _write_manifest(manifest, cfg, "solve", _threads(args), problem.grid)
    return 0 if rep.converged else 2


def _cmd_abp_audit(args):
    cfg = parse_config(args.config)
    problem, u, rep = _solve_from_config(cfg, args)
    audit = abp_audit(problem, u)
    csv, report, manifest = _outpaths(args, args.config, "abp-audit")
    write_field_csv(u, csv)
    _write_report(report, rep.lines() + audit.lines())
    _write_manifest(manifest, cfg, "abp-audit", _threads(args), problem.grid)
    if audit.passed is None:
        return 2
    return 0 if audit.passed else 2


def _cmd_envelope(args):
    cfg = parse_config(args.config)
    problem, u, rep = _solve_from_config(cfg, args)
    env = convex_envelope(u)
    csv, report, manifest = _outpaths(args, args.config, "envelope")
    write_field_csv(GridField(problem.grid, env.envelope), csv)
    mask = problem.grid.in_domain
    lines = rep.lines() + [
        f"contact_fraction={format_value(float(env.contact_mask.sum()) / int(mask.sum()))}",
        f"contact_tol={format_value(env.contact_tol)}",
        f"max_gap={format_value(float(np.max((u.values - env.envelope)[mask])))}",
        f"sweeps={env.sweeps}",
    ]
    _write_report(report, lines)
    _write_manifest(manifest, cfg, "envelope", _threads(args), problem.grid)
    return 0


def _cmd_harnack(args):
    cfg = parse_config(args.config)
    problem, u, rep = _solve_from_config(cfg, args)
    lab = cfg.lab
    R = args.R if args.R is not None else float(lab.get("R", lab.get("r", 0.5)))
    if args.rho is not None:
        rho = args.rho
    else:
        beta = problem.rows.beta
        delta1 = one_direction_constant(beta) if len(beta) else 1.0
        gamma_sup = float(np.max(np.abs(problem.rows.gamma))) if len(problem.rows.gamma) else 0.0
        rho = rho_admissible(problem.operator.ellipticity, delta1, gamma_sup)
    regions = harnack_regions(problem.grid, R, rho)
    f_norm = l2_norm(problem, problem.f)
    g_sup = float(np.max(np.abs(problem.rows.g))) if len(problem.rows.g) else 0.0
    audit = harnack_quotient(u, regions, f_norm, g_sup)
    csv, report, manifest = _outpaths(args, args.config, "harnack")
    write_field_csv(u, csv)
    _write_report(report, rep.lines() + audit.lines())
    _write_manifest(manifest, cfg, "harnack", _threads(args), problem.grid)
    return 0 if audit.passed else 2


def _fit_command(args, name):
    cfg = parse_config(args.config)
    problem, u, rep = _solve_from_config(cfg, args)
    lab = cfg.lab
    x0_raw = args.x0 or lab.get("x0", "(0, 0)")
    from .config import _parse_pair

    a, b = _parse_pair(x0_raw)
    x0 = np.array([float(a), float(b)])
    radii_raw = args.radii or lab.get("radii", "0.4,0.2,0.1")
    radii = [float(v) for v in radii_raw.split(",")]
    if name == "holder-fit":
        fit = holder_fit(u, x0, radii)
    elif name == "c1-fit":
        fit = c1alpha_fit(u, x0, radii, oblique=problem.oblique)
    else:
        fit = c2alpha_fit(u, x0, radii, problem=problem)
    csv, report, manifest = _outpaths(args, args.config, name)
    with open(csv, "w") as fh:
        fh.write("# r,residual\n")
        for r, v in zip(fit.radii, fit.residuals):
            fh.write(f"{r:.17g},{v:.17g}\n")
    _write_report(report, rep.lines() + fit.lines())
    _write_manifest(manifest, cfg, name, _threads(args), problem.grid)
    return 2 if "degenerate" in fit.flags else 0


def _cmd_compare(args):
    cfg1 = parse_config(args.config)
    cfg2 = parse_config(args.config2 if args.config2 else args.config)
    p1 = build_problem(cfg1, h=args.h)
    p2 = build_problem(cfg2, h=args.h)
    audit = comparison_audit(p1, p2, method=args.method or cfg1.method)
    csv, report, manifest = _outpaths(args, args.config, "compare")
    with open(csv, "w") as fh:
        fh.write("# key,value\n")
        for k, v in audit.values.items():
            fh.write(f"{k},{format_value(v)}\n")
    _write_report(report, audit.lines())
    _write_manifest(manifest, cfg1, "compare", _threads(args), p1.grid)
    return 0 if audit.passed else 2


def _cmd_converge(args):
    cfg = parse_config(args.config)
    exact_src = cfg.lab.get("exact")
    if exact_src is None:
        raise ConfigError("[lab] exact = <expression> required for converge")
    exact = Expression(exact_src)
    if args.h_list:
        h_list = [float(v) for v in args.h_list.split(",")]
    elif "h_list" in cfg.lab:
        h_list = [float(v) for v in cfg.lab["h_list"].split(",")]
    else:
        h_list = [cfg.h, cfg.h / 2, cfg.h / 4]
    audit = convergence_study(
        lambda h: build_problem(cfg, h=h), exact, h_list,
        method=args.method or cfg.method, tol=cfg.tol,
    )
    csv, report, manifest = _outpaths(args, args.config, "converge")
    with open(csv, "w") as fh:
        fh.write("# h,err,order\n")
        for h, err, order in audit.data:
            fh.write(f"{h:.17g},{err:.17g},{format_value(order)}\n")
    _write_report(report, audit.lines())
    _write_manifest(manifest, cfg, "converge", _threads(args))
    return 0


def _cmd_barrier_check(args):
    e = Ellipticity(args.lam, args.Lam)
    params = dict(kv.split("=", 1) for kv in (args.params or []))
    get = lambda k, d: float(params.get(k, d))
    rng = np.random.default_rng(int(get("seed", 0)))
    n = args.samples
    if args.barrier == "v2":
        b = dirichlet_quadratic_barrier(
            e, get("f_sup", 1.0), get("g_sup", 1.0), get("gamma_sup", 0.0),
            get("phi_sup", 1.0), get("height", 1.0), delta0=get("delta0", 0.5),
        )
        pts = np.stack(
            [rng.uniform(-1, 1, n), rng.uniform(0, get("height", 1.0), n)], axis=1
        )
        audit = verify_supersolution(b, _pucci_spec(e), pts, margin=get("f_sup", 1.0))
    elif args.barrier == "v3":
        b = exterior_sphere_barrier(get("r1", 0.5), (0.0, 0.0), get("p", 1.0), e)
        r = rng.uniform(get("r1", 0.5), 4.0, n)
        th = rng.uniform(0, 2 * np.pi, n)
        pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        audit = verify_supersolution(b, _pucci_spec(e), pts, margin=0.0)
    elif args.barrier == "w":
        delta1 = get("delta1", 1.0)
        rho = rho_admissible(e, delta1, get("gamma_sup", 0.0))
        R = get("R", 0.5)
        b = harnack_barrier(R, rho, get("A", 1.0), get("g_sup", 0.0), delta1, e=e)
        pts = np.stack(
            [rng.uniform(-2 * R, 2 * R, n), rng.uniform(0, 2 * rho * R, n)], axis=1
        )
        audit = verify_supersolution(
            b, _pucci_spec(e), pts, margin=get("A", 1.0) / (4 * R**2) * (1 - 1e-9)
        )
    elif args.barrier == "cone":
        b = holder_cone_barrier(
            (0.0, 0.0), (0.0, 1.0), get("K", 1.0), get("alpha", 1.0)
        )
        pts = np.stack([rng.uniform(-1, 1, n), rng.uniform(1e-3, 1.0, n)], axis=1)
        audit = verify_supersolution(b, _pucci_spec(e), pts, margin=0.0)
    else:
        raise ConfigError(f"unknown barrier {args.barrier!r}")
    fd_err = hessian_fd_error(b, pts[: min(200, len(pts))])
    csv, report, manifest = _outpaths(args, None, "barrier-check")
    with open(csv, "w") as fh:
        fh.write("# key,value\n")
        for k, v in {**b.params, **audit.values}.items():
            fh.write(f"{k},{format_value(v)}\n")
    _write_report(
        report, audit.lines() + [f"hessian_fd_relative_error={format_value(fd_err)}"]
    )
    _write_manifest(manifest, None, "barrier-check", _threads(args))
    return 0 if (audit.passed and fd_err <= 1e-6) else 2


def _pucci_spec(e):
    from .operators import OperatorSpec

    return OperatorSpec("pucci_plus", e)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="oblique-visc",
        description="Monotone scheme laboratory for oblique-boundary fully "
        "nonlinear elliptic equations",
    )
    parser.add_argument("--outdir", default=".", help="artifact directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="thread count recorded in the manifest "
                        "(numerics are vectorized and thread-invariant)")
    sub = parser.add_subparsers(dest="command")

    def add(name, fn, needs_config=True):
        p = sub.add_parser(name)
        p.set_defaults(fn=fn)
        if needs_config:
            p.add_argument("--config", required=True)
            p.add_argument("--h", type=float, default=None)
            p.add_argument("--method", choices=["policy", "pseudo"], default=None)
            p.add_argument("--tol", type=float, default=None)
        return p

    p = add("solve", _cmd_solve)
    p.add_argument("--out", default=None, help="field CSV path")
    add("abp-audit", _cmd_abp_audit)
    add("envelope", _cmd_envelope)
    p = add("harnack", _cmd_harnack)
    p.add_argument("--R", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    for name in ("holder-fit", "c1-fit", "c2-fit"):
        p = add(name, lambda a, n=name: _fit_command(a, n))
        p.add_argument("--x0", default=None)
        p.add_argument("--radii", default=None)
    p = add("compare", _cmd_compare)
    p.add_argument("--config2", default=None)
    p = add("converge", _cmd_converge)
    p.add_argument("--h-list", dest="h_list", default=None)
    p = add("barrier-check", _cmd_barrier_check, needs_config=False)
    p.add_argument("--barrier", required=True, choices=["w", "v2", "v3", "cone"])
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--Lambda", dest="Lam", type=float, required=True)
    p.add_argument("--params", nargs="*", default=None, metavar="key=value")
    p.add_argument("--samples", type=int, default=10000)

    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage()
        return 1
    try:
        return args.fn(args)
    except (ConfigError, ValueError, FileNotFoundError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
