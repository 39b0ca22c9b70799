"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 hypothesis-check failure,
3 solver failure.  Tables are written as CSV and reports as JSON; both carry
a schema header.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .diffusion import build_dm
from .errors import HypothesisCheckError, ModelSpecError, NotSPDError, SteadyDiffError
from .expr import state_function
from .chain import validate_assumptions
from .fluid import FluidModel, integrate_fm, stationary_point
from .lab import ExperimentConfig, run_decay_study, run_gap_study
from .lyapunov import check_ul, quadratic_candidate, radial_candidate, search_quadratic_candidate
from .modelfile import load_model
from .poisson import solve_poisson_1d
from .simulate import simulate_ctmc, simulate_dm, steady_estimate
from .steady import (auto_grid_1d, chain_stationary, dm_stationary_1d, dm_stationary_fd, moment, summary_json)

EXIT_OK, EXIT_INPUT, EXIT_HYPOTHESIS, EXIT_SOLVER = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 keeps meaning 'hypothesis check failed'."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _out(args, name):
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o))


def _parse_candidate(text, dim):
    """``radial:rho=5,m=2`` | ``quadratic:rho=1,m=1,Q=1;0;0;1`` | ``search:rho=5,m=2``."""
    kind, _, rest = text.partition(":")
    opts = dict(kv.split("=", 1) for kv in rest.split(",") if kv)
    rho, m = float(opts.get("rho", 1.0)), int(opts.get("m", 1))
    if kind == "radial":
        return radial_candidate(rho, m, dim)
    if kind == "quadratic":
        Q = np.array(_floats(opts["Q"].replace(";", " "))).reshape(dim, dim)
        return quadratic_candidate(Q, rho=rho, m=m)
    if kind == "search":
        return ("search", rho, m)
    raise ModelSpecError(f"unknown candidate kind {kind!r} (radial | quadratic | search)")


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    spec = load_model(args.spec)
    scs = [spec.scaled(n) for n in args.n_grid]
    d = spec.dim
    lo = np.broadcast_to(np.asarray(args.box[0], float), (d,))
    hi = np.broadcast_to(np.asarray(args.box[1], float), (d,))
    rep = validate_assumptions(scs, (lo, hi), samples=args.samples, seed=args.seed)
    out = {"schema": "steadydiff-validation/1", "model": spec.chain.name, **rep.to_dict()}
    _dump(_out(args, "validation.json"), out)
    print(json.dumps(rep.verdicts))
    return EXIT_OK if rep.passed else EXIT_HYPOTHESIS


def cmd_fluid(args):
    spec = load_model(args.spec)
    fm = FluidModel.from_chain(spec.chain, args.n)
    x0 = np.asarray(args.x0 if args.x0 else np.full(spec.dim, float(args.n)))
    sp = stationary_point(fm, spec.center_at(args.n))
    traj = integrate_fm(fm, x0, args.T, args.h)
    traj.write_csv(_out(args, "fluid_trajectory.csv"))
    sp.write_json(_out(args, "fluid_stationary.json"))
    print(f"stationary point {sp.point.tolist()} (residual {sp.residual:.3e})")
    return EXIT_OK


def cmd_steady(args):
    spec = load_model(args.spec)
    sc = spec.scaled(args.n)
    funcs = {src: state_function(src, spec.dim) for src in (args.f or [])}
    if args.kind in ("chain", "both"):
        dist = chain_stationary(sc, mass_tol=args.mass_tol)
        dist.write_csv(_out(args, "chain_stationary.csv"))
        summary_json(_out(args, "chain_summary.json"), dist, funcs)
    if args.kind in ("dm", "both"):
        dm = build_dm(sc)
        if spec.dim == 1:
            pi = dm_stationary_1d(dm, auto_grid_1d(dm, h=args.h))
        elif spec.dim == 2:
            r = args.radius
            pi = dm_stationary_fd(dm, ((-r, r), (-r, r)), args.h)
        else:
            raise ModelSpecError("DM stationary laws in dimension >= 3 are estimated by simulation "
                                 "(use the gap command with a simulation solver)")
        pi.write_csv(_out(args, "dm_stationary.csv"))
        summary_json(_out(args, "dm_summary.json"), pi, funcs)
    for src, f in funcs.items():
        parts = []
        if args.kind in ("chain", "both"):
            parts.append(f"chain {moment(dist, f).value:.12g}")
        if args.kind in ("dm", "both"):
            parts.append(f"dm {moment(pi, f).value:.12g}")
        print(f"{src}: " + ", ".join(parts))
    return EXIT_OK


def cmd_lyapunov(args):
    spec = load_model(args.spec)
    dms = [build_dm(spec.scaled(n)) for n in args.n_grid]
    cand = _parse_candidate(args.candidate, spec.dim)
    if isinstance(cand, tuple):
        _, rho, m = cand
        cand, cert = search_quadratic_candidate(dms, rho=rho, m=m, delta_trial=args.delta,
                                                outer_radius=args.outer_radius)
    else:
        cert = check_ul(dms, cand, args.delta, args.outer_radius, maximize_delta=args.maximize_delta)
    cert.write_json(_out(args, "ul_certificate.json"))
    print(f"certified {cand.description}: delta={cert.delta:.6g} b={cert.b:.6g} K={cert.K:.6g}")
    return EXIT_OK


def cmd_poisson(args):
    spec = load_model(args.spec)
    if spec.dim != 1:
        raise ModelSpecError("the Poisson solver handles one-dimensional models")
    dm = build_dm(spec.scaled(args.n))
    f = state_function(args.f, 1)
    pi = dm_stationary_1d(dm, auto_grid_1d(dm, h=args.h))
    sol = solve_poisson_1d(dm, f, pi)
    sol.write_csv(_out(args, "poisson_solution.csv"))
    _dump(_out(args, "poisson_summary.json"),
          {"schema": "steadydiff-poisson/1", "f": args.f, "n": args.n, "pi_f": sol.pi_f,
           "residual_sup": sol.residual_sup, "eval_radius": sol.eval_radius})
    print(f"pi(f) = {sol.pi_f:.12g}, residual sup {sol.residual_sup:.3e} on |x| <= {sol.eval_radius:g}")
    return EXIT_OK


def cmd_simulate(args):
    spec = load_model(args.spec)
    sc = spec.scaled(args.n)
    x0 = np.asarray(args.x0 if args.x0 else np.zeros(spec.dim))
    if args.kind == "chain":
        path = simulate_ctmc(sc, x0, args.T, args.seed)
    else:
        path = simulate_dm(build_dm(sc), x0, args.T, args.step, args.seed)
    path.write_csv(_out(args, f"{args.kind}_path.csv"))
    if args.f:
        est = steady_estimate(path, state_function(args.f, spec.dim), warmup=args.warmup)
        est.write_json(_out(args, "steady_estimate.json"))
        print(f"{args.f}: {est.mean:.6g} +- {est.half_width:.3g} (95%, {est.batches} batches)")
    print(f"{path.times.size} recorded points, seed {args.seed}")
    return EXIT_OK


def cmd_gap(args):
    cfg = ExperimentConfig.load(args.config)
    if args.out:
        cfg.output = {"dir": str(Path(args.out).resolve())}
    elif cfg.output_dir() is None:
        cfg.output = {"dir": str(Path("results").resolve())}
    report = run_gap_study(cfg)
    for name, rows in report.rows.items():
        fit = report.fits[name]
        slope = "n/a" if fit.get("slope") is None else f"{fit['slope']:.4f} +- {fit['stderr']:.2g}"
        print(f"{name}: slope {slope}")
        for r in rows:
            print(f"  n={r.n:g} gap={r.gap:.6e} sqrt(n)*gap={r.sqrt_n_gap:.6e} budget={r.total_budget:.2e}")
    if report.failures:
        for fl in report.failures:
            print(f"failure at n={fl['n']:g}: {fl['error']}: {fl['message']}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_decay(args):
    cfg = ExperimentConfig.load(args.config)
    if args.out:
        cfg.output = {"dir": str(Path(args.out).resolve())}
    elif cfg.output_dir() is None:
        cfg.output = {"dir": str(Path("results").resolve())}
    rep = run_decay_study(cfg)
    for row in rep["per_n"]:
        rates = ", ".join("n/a" if ft["rate"] is None else f"{ft['rate']:.4g}" for ft in row["fits"])
        print(f"n={row['n']:g}: rates {rates}")
    if rep["rate_ratio_max_over_min"] is not None:
        print(f"max/min rate ratio {rep['rate_ratio_max_over_min']:.4g}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="steadydiff", description="Steady-state diffusion models for scaled Markov chain families.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_default="results"):
        sp.add_argument("--out", default=out_default, help="output directory (default: %(default)s)")

    s = sub.add_parser("validate", help="sample the Lipschitz/growth/non-degeneracy assumptions")
    s.add_argument("spec")
    s.add_argument("--n-grid", type=_floats, default=[100.0, 1000.0, 10000.0])
    s.add_argument("--box", type=_floats, nargs=2, default=[[-5.0], [5.0]], metavar=("LO", "HI"))
    s.add_argument("--samples", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0, help="seed of the sampling design (default: %(default)s)")
    common(s)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("fluid", help="integrate the fluid model and locate its stationary point")
    s.add_argument("spec")
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--x0", type=_floats, help="initial lattice state (default: n in every coordinate)")
    s.add_argument("--T", type=float, default=20.0)
    s.add_argument("--h", type=float, default=0.01)
    common(s)
    s.set_defaults(func=cmd_fluid)

    s = sub.add_parser("steady", help="stationary laws of the chain and of the diffusion model")
    s.add_argument("spec")
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--kind", choices=["chain", "dm", "both"], default="both")
    s.add_argument("--f", action="append", help="test function expression in x1..xd (repeatable)")
    s.add_argument("--mass-tol", type=float, default=1e-10)
    s.add_argument("--h", type=float, default=None, help="DM grid spacing (default 0.01 in 1-D, 0.1 in 2-D)")
    s.add_argument("--radius", type=float, default=6.0, help="half-width of the 2-D FD box")
    common(s)
    s.set_defaults(func=cmd_steady)

    s = sub.add_parser("lyapunov", help="certify the uniform Lyapunov condition")
    s.add_argument("spec")
    s.add_argument("--candidate", required=True, help="radial:rho=R,m=M | quadratic:rho=R,m=M,Q=a;b;c;d | search:rho=R,m=M")
    s.add_argument("--n-grid", type=_floats, default=[100.0, 1000.0, 10000.0, 1000000.0])
    s.add_argument("--delta", type=float, default=0.5)
    s.add_argument("--outer-radius", type=float, default=10.0)
    s.add_argument("--maximize-delta", action="store_true")
    common(s)
    s.set_defaults(func=cmd_lyapunov)

    s = sub.add_parser("poisson", help="solve the Poisson equation of a 1-D diffusion model")
    s.add_argument("spec")
    s.add_argument("--f", required=True)
    s.add_argument("--n", type=float, default=100.0)
    s.add_argument("--h", type=float, default=0.01)
    common(s)
    s.set_defaults(func=cmd_poisson)

    s = sub.add_parser("gap", help="steady-state gap study from an experiment configuration")
    s.add_argument("config")
    s.add_argument("--out", default=None, help="output directory (overrides the configuration)")
    s.set_defaults(func=cmd_gap)

    s = sub.add_parser("simulate", help="simulate a chain or diffusion path")
    s.add_argument("spec")
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--kind", choices=["chain", "dm"], default="chain")
    s.add_argument("--step", type=float, default=0.01, help="Euler-Maruyama step for --kind dm")
    s.add_argument("--x0", type=_floats, help="initial scaled state (default: 0)")
    s.add_argument("--f", help="also report a batch-means steady-state estimate of this function")
    s.add_argument("--warmup", type=float, default=0.1)
    common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("decay", help="ergodicity-decay fits from an experiment configuration")
    s.add_argument("config")
    s.add_argument("--out", default=None, help="output directory (overrides the configuration)")
    s.set_defaults(func=cmd_decay)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "h", 0) is None:
        args.h = 0.01 if args.command == "steady" and _dim_of(args.spec) == 1 else 0.1
    try:
        return args.func(args)
    except (HypothesisCheckError, NotSPDError) as exc:
        print(f"hypothesis check failed: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ModelSpecError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SteadyDiffError, FloatingPointError) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def _dim_of(spec):
    try:
        return load_model(spec).dim
    except (SteadyDiffError, OSError):
        return 1


if __name__ == "__main__":
    sys.exit(main())
