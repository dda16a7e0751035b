"""Command-line front end: ``soninekit <command> ...``.

Exit codes: 0 success, 1 I/O error, 2 violated hypothesis or invalid
input, 3 a property check failed. All inputs are parsed and every result
computed before any file is written, so a failing run leaves no partial
output.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import cmcheck, gfd, io, laplace, resolvent, viscoelastic
from .errors import SonineKitError
from .kernels import (
    BernsteinFn,
    BesselK,
    BesselL,
    DampedPowerLaw,
    DampedPowerLawDual,
    Exponential,
    MatrixKernel,
    PowerLaw,
)
from .quadconv import SampledMatrixFunction, make_grid

EXIT_OK, EXIT_IO, EXIT_HYPOTHESIS, EXIT_CHECK = 0, 1, 2, 3
SEED_ENV = "SONINEKIT_SEED"


class CheckFailed(Exception):
    pass


def catalog() -> dict:
    """Built-in kernel descriptions, keyed by name."""
    k0 = [[2.0, 0.5], [0.5, 1.0]]
    one = {
        "powerlaw05": MatrixKernel.scalar(PowerLaw(0.5)),
        "powerlaw03": MatrixKernel.scalar(PowerLaw(0.3)),
        "damped05": MatrixKernel.scalar(DampedPowerLaw(0.5, 1.0)),
        "damped05_dual": MatrixKernel.scalar(DampedPowerLawDual(0.5, 1.0)),
        "exponential1": MatrixKernel.scalar(Exponential(1.0)),
        "besselk05": MatrixKernel.scalar(BesselK(0.5)),
        "bessell05": MatrixKernel.scalar(BesselL(0.5)),
        "constantK0": MatrixKernel.single(k0, Exponential(0.0)),
        "exponentialK0": MatrixKernel.single(k0, Exponential(1.0)),
        "powerlawK0": MatrixKernel.single(k0, PowerLaw(0.5)),
    }
    return {name: k.to_dict() for name, k in one.items()}


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _grid(args):
    return make_grid(args.t_end, args.n, args.gamma)


def _seed(args) -> int | None:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env, 0)
        except ValueError:
            raise SonineKitError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return args.seed


def _matrix_arg(path, dim, default):
    if path is None:
        return default
    return io.parse_matrix(io.read_json(path), dim)


def _write(out: Path, files: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)


def _report(reports, extra=None) -> str:
    return cmcheck.reports_to_json(reports, **(extra or {})) + "\n"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_sonine(args) -> dict:
    kernel = io.read_kernel(args.kernel)
    a1 = _matrix_arg(args.a1, kernel.dim, np.zeros((kernel.dim, kernel.dim)))
    problem = resolvent.ResolventProblem(a1, kernel, args.rhs_order, _grid(args))
    sol = resolvent.solve_rhs(problem, cond_max=args.cond_max, richardson=args.richardson)
    profile = resolvent.residual_profile(problem, sol)
    colloc = resolvent.residual(problem, sol, "collocation")
    i = int(np.argmax(profile))
    t = problem.grid.nodes
    solution = {
        "atom": sol.atom.tolist(),
        "density_csv": "density.csv",
        "classification": sol.classification,
        "singular": sol.singular,
        "max_step_condition": sol.max_condition,
    }
    residual = {"residual_max": float(profile[i]), "t_max": float(t[i + 1]),
                "collocation_residual_max": colloc}
    return {
        "solution.json": io.dump_json(solution),
        "density.csv": io.samples_to_csv(t, sol.density.values),
        "residual.json": io.dump_json(residual),
    }


def cmd_duality(args) -> dict:
    if args.direction == "forward":
        kernel = io.read_kernel(args.kernel)
        n = _matrix_arg(args.n_matrix, kernel.dim, np.zeros((kernel.dim, kernel.dim)))
        law = viscoelastic.RelaxationLaw(n, kernel)
        creep = viscoelastic.creep_from_relaxation(law, _grid(args), richardson=args.richardson)
        diag = viscoelastic.limit_diagnostics(law, creep)
        return {
            "creep.csv": io.samples_to_csv(creep.grid.nodes, creep.values),
            "diagnostics.json": io.dump_json(diag),
        }
    if args.creep is None:
        raise SonineKitError("duality inverse needs --creep")
    creep = io.read_sampled_function(args.creep)
    est = viscoelastic.relaxation_from_creep(creep, richardson=args.richardson)
    info = est.to_dict()
    info["f_csv"] = "kernel.csv"
    info["singular"] = est.f.singular
    return {
        "relaxation.json": io.dump_json(info),
        "kernel.csv": io.samples_to_csv(est.f.grid.nodes, est.f.values),
    }


def _linear_rhs(m):
    return lambda sigma, strain: -(m @ sigma.reshape(-1)).reshape(sigma.shape)


def _path(args, dim):
    if args.path is not None:
        grid, values, _ = io.read_csv_samples(io.read_text(args.path))
        if values.ndim != 2:
            raise SonineKitError("path CSV must have columns t,v1,...")
        return gfd.VectorPath(grid, values)
    if args.poly is not None:
        coefs = [float(c) for c in args.poly.split(",")]
        grid = _grid(args)
        t = grid.nodes
        w = sum(c * t**k for k, c in enumerate(coefs))
        dw = sum(k * c * t ** (k - 1) for k, c in enumerate(coefs) if k > 0) * np.ones_like(t)
        return gfd.VectorPath(grid, np.repeat(w[:, None], dim, 1), np.repeat(dw[:, None], dim, 1))
    raise SonineKitError("give --path CSV or --poly coefficients")


def cmd_gfd(args) -> dict:
    kernel = io.read_kernel(args.kernel)
    if args.op in ("deriv", "integ"):
        path = _path(args, kernel.dim)
        fn = gfd.gfd_derivative if args.op == "deriv" else gfd.gfd_integral
        res = fn(kernel, path)
        return {f"{args.op}.csv": io.samples_to_csv(res.grid.nodes, res.values)}
    sigma0 = np.atleast_1d(np.asarray(json.loads(args.sigma0), dtype=float))
    if args.k == "zero":
        rhs = lambda sigma, strain: np.zeros_like(sigma)  # noqa: E731
    else:
        dim = sigma0.size
        m = _matrix_arg(args.m, dim, np.eye(dim))
        rhs = _linear_rhs(m)
    problem = gfd.RelaxationProblem(kernel, rhs, sigma0, None, _grid(args))
    res = gfd.solve_relaxation(problem, tol=args.picard_tol)
    vals = res.values.reshape(res.grid.n + 1, -1)
    iters = "t,iterations\n" + "".join(
        f"{t!r},{int(k)}\n" for t, k in zip(res.grid.nodes.tolist(), res.iterations))
    return {"relax.csv": io.samples_to_csv(res.grid.nodes, vals), "iterations.csv": iters}


def cmd_check(args) -> dict:
    seed = _seed(args)
    if args.suite == "cm":
        if args.samples is not None:
            target = io.read_sampled_function(args.samples)
            rng = None
        else:
            target = io.read_kernel(_need(args.kernel, "--kernel"))
            rng = (args.t_min, args.t_max)
        tol = args.tol if args.tol is not None else cmcheck.CM_TOL
        rep = cmcheck.check_cm(target, rng, args.max_order, tol, seed)
    elif args.suite == "bernstein":
        tol = args.tol if args.tol is not None else cmcheck.CM_TOL
        if args.samples is not None:
            target = io.read_sampled_function(args.samples)
        else:
            doc = io.read_json(_need(args.bernstein, "--samples or --bernstein"))
            deriv = MatrixKernel.from_dict(doc["derivative"])
            target = BernsteinFn(io.parse_matrix(doc["b0"], deriv.dim), deriv)
        rep = cmcheck.check_bernstein(target, _grid(args), args.max_order, tol, seed)
    elif args.suite == "pair":
        k = io.read_kernel(_need(args.k, "--k"))
        l_ = io.read_kernel(_need(args.l, "--l"))
        tol = args.tol if args.tol is not None else cmcheck.PAIR_TOL
        rep = cmcheck.check_sonine_pair(k, l_, _grid(args), tol)
    else:
        doc = io.read_json(_need(args.cbf, "--cbf"))
        form = laplace.StieltjesForm.from_dict(doc)
        tol = args.tol if args.tol is not None else cmcheck.CM_TOL
        p = np.geomspace(args.p_min, args.p_max, args.points)
        rep = laplace.cbf_inverse_check(form, p, args.max_order, tol, seed=seed)
    files = {"report.json": _report([rep], {"seed": seed})}
    if not rep.passed:
        raise CheckFailed(files)
    return files


def _need(value, flag):
    if value is None:
        raise SonineKitError(f"missing required option {flag}")
    return value


def cmd_catalog(args) -> dict:
    cat = catalog()
    if args.name is not None:
        if args.name not in cat:
            raise SonineKitError(f"unknown catalog entry {args.name!r}; known: {', '.join(cat)}")
        sys.stdout.write(io.dump_json(cat[args.name]))
    else:
        sys.stdout.write(io.dump_json(cat))
    return {}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_grid(p):
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--gamma", type=float, default=2.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="soninekit", description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                        help=f"probe-vector seed (env {SEED_ENV} overrides)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sonine", help="solve A1 X + F * X = t^n/n! I")
    p.add_argument("--kernel", required=True)
    p.add_argument("--a1", help="matrix JSON for A1 (default 0)")
    p.add_argument("--rhs-order", type=int, default=0)
    p.add_argument("--cond-max", type=float, default=resolvent.COND_MAX)
    p.add_argument("--richardson", action="store_true")
    _add_grid(p)
    p.set_defaults(func=cmd_sonine)

    p = sub.add_parser("duality", help="relaxation <-> creep")
    p.add_argument("direction", choices=["forward", "inverse"])
    p.add_argument("--kernel", help="memory kernel F (forward)")
    p.add_argument("--n-matrix", help="Newtonian viscosity N, matrix JSON (forward)")
    p.add_argument("--creep", help="creep CSV (inverse)")
    p.add_argument("--no-richardson", dest="richardson", action="store_false")
    _add_grid(p)
    p.set_defaults(func=cmd_duality)

    p = sub.add_parser("gfd", help="F-derivative, F-integral, relaxation")
    p.add_argument("op", choices=["deriv", "integ", "relax"])
    p.add_argument("--kernel", required=True)
    p.add_argument("--path", help="path CSV t,v1,...")
    p.add_argument("--poly", help="polynomial path c0,c1,... (same in every component)")
    p.add_argument("--sigma0", default="[1.0]", help="initial state as JSON")
    p.add_argument("--k", choices=["linear", "zero"], default="linear")
    p.add_argument("--m", help="matrix M of K = -M Sigma (default identity)")
    p.add_argument("--picard-tol", type=float, default=gfd.PICARD_TOL)
    _add_grid(p)
    p.set_defaults(func=cmd_gfd)

    p = sub.add_parser("check", help="property checks")
    p.add_argument("suite", choices=["cm", "bernstein", "pair", "stieltjes"])
    p.add_argument("--kernel")
    p.add_argument("--samples", help="sampled function CSV")
    p.add_argument("--bernstein", help="JSON {b0, derivative}")
    p.add_argument("--k")
    p.add_argument("--l")
    p.add_argument("--cbf", help="JSON {dim, b, terms: [{h, r}]} for Z = p Y")
    p.add_argument("--max-order", type=int, default=4)
    p.add_argument("--tol", type=float)
    p.add_argument("--t-min", type=float, default=cmcheck.DEFAULT_RANGE[0])
    p.add_argument("--t-max", type=float, default=cmcheck.DEFAULT_RANGE[1])
    p.add_argument("--p-min", type=float, default=1e-2)
    p.add_argument("--p-max", type=float, default=1e2)
    p.add_argument("--points", type=int, default=41)
    _add_grid(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("catalog", help="print built-in kernel descriptions")
    p.add_argument("--name")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        files = args.func(args)
    except CheckFailed as exc:
        _write(args.out, exc.args[0])
        return EXIT_CHECK
    except OSError as exc:
        print(f"soninekit: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SonineKitError, ValueError) as exc:
        print(f"soninekit: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    try:
        if files:
            _write(args.out, files)
    except OSError as exc:
        print(f"soninekit: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK
