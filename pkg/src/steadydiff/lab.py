"""Experiments: steady-state gap studies, rate fits and ergodicity-decay fits.

An experiment is described by a YAML file (``schema: steadydiff-experiment/1``)::

    schema: steadydiff-experiment/1
    model: {zoo: erlang_a, params: {mu: 1, theta: 0.5}}   # or a path to a model file
    n_grid: [50, 100, 200]
    functions: {x: "x1", x2: "x1**2"}
    solvers: {chain: auto, dm: auto, simulation_check: false}
    tolerances: {mass_tol: 1.0e-10, edge_tol: 1.0e-12, grid_h: 0.01, fd_h: 0.1, budget_fraction: 0.1}
    seeds: {validation: 0, simulation: 1}
    lyapunov: {candidate: radial, rho: 5, m: 2, delta_trial: 0.5, outer_radius: 10}
    validation: {box: [[-5], [5]], samples: 2000}
    admissibility: {radius: 10, h: 0.05}
    simulation: {T: 200, step: 0.01, reps: 128, warmup: 0.2}
    decay: {f: "x1", x0: [1.0], t_grid: [0.25, 0.5, 1, 2], reps: 2000, step: 0.01}
    output: {dir: results}
    threads: 4

Per-n cells run on a thread pool; results are assembled in ``n_grid`` order,
and every random stream is addressed by explicit seeds, so a rerun
reproduces every number bitwise.
"""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .chain import validate_assumptions
from .diffusion import build_dm
from .errors import (AdmissibilityError, HypothesisCheckError, InsufficientDataError,
                     ModelSpecError, SteadyDiffError)
from .expr import state_function
from .lyapunov import (attest_finite_integral, ball_grid, check_dm_to_ctmc, check_subexponential, check_ul,
                       moment_bound_check, radial_candidate, search_quadratic_candidate)
from .modelfile import load_model
from .poisson import local_lipschitz_profile
from .rng import BlockNormals
from .simulate import ensemble_steady_estimate
from .steady import auto_grid_1d, chain_stationary, dm_stationary_1d, dm_stationary_fd, moment

EXPERIMENT_SCHEMA = "steadydiff-experiment/1"
REPORT_SCHEMA = "steadydiff-gap-report/1"
DECAY_SCHEMA = "steadydiff-decay-report/1"

_DEFAULT_TOL = {"mass_tol": 1e-10, "edge_tol": 1e-12, "grid_h": 0.01, "fd_h": 0.1, "fd_edge_tol": 1e-8,
                "budget_fraction": 0.1}
_DEFAULT_SIM = {"T": 200.0, "step": 0.01, "reps": 128, "warmup": 0.2}


@dataclass
class ExperimentConfig:
    """Parsed experiment description (see the module docstring for the file format)."""

    model: dict
    n_grid: list
    functions: dict
    seeds: dict
    solvers: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    lyapunov: dict = None
    validation: dict = field(default_factory=dict)
    admissibility: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    decay: dict = None
    output: dict = field(default_factory=dict)
    threads: int = 1
    base_dir: str = "."

    def __post_init__(self):
        n = [float(v) for v in self.n_grid]
        if not n:
            raise ModelSpecError("n_grid is empty")
        if any(b <= a for a, b in zip(n, n[1:])):
            raise ModelSpecError(f"n_grid must be strictly increasing, got {n}")
        if n[0] <= 0:
            raise ModelSpecError("n_grid entries must be positive")
        self.n_grid = n
        if not isinstance(self.seeds, dict) or not self.seeds:
            raise ModelSpecError("seeds must be given explicitly")
        self.tolerances = {**_DEFAULT_TOL, **(self.tolerances or {})}
        self.simulation = {**_DEFAULT_SIM, **(self.simulation or {})}
        self.solvers = {"chain": "auto", "dm": "auto", "simulation_check": False, **(self.solvers or {})}

    @classmethod
    def from_dict(cls, doc, base_dir="."):
        if not isinstance(doc, dict):
            raise ModelSpecError("experiment configuration must be a mapping")
        schema = doc.get("schema")
        if schema != EXPERIMENT_SCHEMA:
            raise ModelSpecError(f"unsupported experiment schema {schema!r}; expected {EXPERIMENT_SCHEMA!r}")
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        unknown = set(doc) - known - {"schema"}
        if unknown:
            raise ModelSpecError(f"unknown configuration keys {sorted(unknown)}")
        for key in ("model", "n_grid", "functions", "seeds"):
            if key not in doc:
                raise ModelSpecError(f"configuration lacks required key {key!r}")
        args = {k: v for k, v in doc.items() if k in known}
        functions = args["functions"]
        if isinstance(functions, list):
            functions = {str(s): s for s in functions}
        args["functions"] = {str(k): str(v) for k, v in functions.items()}
        return cls(base_dir=str(base_dir), **args)

    @classmethod
    def load(cls, path):
        p = Path(path)
        return cls.from_dict(yaml.safe_load(p.read_text()), base_dir=p.parent)

    def model_spec(self):
        m = self.model
        if isinstance(m, str):
            p = Path(m)
            if not p.is_absolute():
                p = Path(self.base_dir) / p
            return load_model(p)
        return load_model(m)

    def seed(self, name):
        if name not in self.seeds:
            raise ModelSpecError(f"no seed {name!r} in the configuration's seeds block")
        return int(self.seeds[name])

    def output_dir(self):
        d = (self.output or {}).get("dir")
        if d is None:
            return None
        p = Path(d)
        return p if p.is_absolute() else Path(self.base_dir) / p


# ---------------------------------------------------------------------------
# report types


@dataclass
class GapRow:
    function: str
    n: float
    nu: float
    pi: float
    gap: float
    sqrt_n_gap: float
    budget: dict
    provenance: dict

    @property
    def total_budget(self):
        return self.budget["total"]

    def admissible(self, fraction=0.1):
        """Row qualifies for rate fitting: budget below ``fraction * |gap|``."""
        return self.gap != 0 and self.total_budget < fraction * abs(self.gap)

    def to_dict(self):
        return {"function": self.function, "n": self.n, "nu": self.nu, "pi": self.pi, "gap": self.gap,
                "sqrt_n_gap": self.sqrt_n_gap, "budget": self.budget, "provenance": self.provenance}


@dataclass
class GapReport:
    model: str
    functions: dict
    rows: dict
    fits: dict
    hypotheses: dict
    failures: list
    n_grid: list
    seeds: dict
    budget_fraction: float = 0.1

    @property
    def complete(self):
        return not self.failures

    def rows_for(self, name):
        return self.rows[name]

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "model": self.model,
            "functions": self.functions,
            "n_grid": self.n_grid,
            "seeds": self.seeds,
            "budget_fraction": self.budget_fraction,
            "rows": {k: [r.to_dict() for r in v] for k, v in self.rows.items()},
            "fits": self.fits,
            "hypotheses": self.hypotheses,
            "failures": self.failures,
            "complete": self.complete,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=_json_default)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema: {REPORT_SCHEMA} model={self.model}\n")
            w = csv.writer(fh)
            w.writerow(["function", "n", "nu", "pi", "gap", "sqrt_n_gap", "budget_truncation",
                        "budget_quadrature", "budget_mc", "budget_rounding", "budget_total", "fit_admissible",
                        "chain_solver", "dm_solver"])
            for name, rows in self.rows.items():
                for r in rows:
                    b = r.budget
                    w.writerow([name, repr(r.n), repr(r.nu), repr(r.pi), repr(r.gap), repr(r.sqrt_n_gap),
                                repr(b["truncation"]), repr(b["quadrature"]), repr(b["mc"]), repr(b["rounding"]),
                                repr(b["total"]), int(r.admissible(self.budget_fraction)),
                                r.provenance.get("chain", {}).get("method", ""),
                                r.provenance.get("dm", {}).get("method", "")])


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# rate fit


def fit_rate(rows):
    """Ordinary least squares of ``log |gap|`` on ``log n``.

    ``rows`` are :class:`GapRow` objects or ``(n, gap)`` pairs.  Zero gaps are
    excluded (and noted); fewer than three usable rows raise
    :class:`InsufficientDataError`.  Returns ``{slope, stderr, intercept,
    rows_used, notes}``; ``stderr`` is the usual OLS standard error of the
    slope (zero when the fit is exact or has no residual degrees of freedom).
    """
    pairs = [(r.n, r.gap) if isinstance(r, GapRow) else (float(r[0]), float(r[1])) for r in rows]
    notes = []
    used = []
    for n, g in pairs:
        if g == 0 or not np.isfinite(g):
            notes.append(f"n={n:g}: gap {g!r} excluded from the log-log fit")
        else:
            used.append((n, g))
    if len(used) < 3:
        raise InsufficientDataError(f"{len(used)} usable rows; at least 3 nonzero gaps are needed for a rate fit")
    x = np.log([n for n, _ in used])
    y = np.log([abs(g) for _, g in used])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(used) - 2
    s2 = float(resid @ resid) / dof
    stderr = math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))
    return {"slope": float(coef[0]), "stderr": stderr, "intercept": float(coef[1]),
            "rows_used": [n for n, _ in used], "notes": notes}


# ---------------------------------------------------------------------------
# gap study


def _function_table(cfg, dim):
    return {name: state_function(src, dim) for name, src in cfg.functions.items()}


def _candidate_and_certificate(cfg, dms):
    """UL candidate from the ``lyapunov`` block and its certificate for the DM family."""
    lb = dict(cfg.lyapunov or {})
    kind = lb.get("candidate", "radial")
    rho = float(lb.get("rho", 1.0))
    m = int(lb.get("m", 1))
    delta = float(lb.get("delta_trial", 0.5))
    outer = float(lb.get("outer_radius", 10.0))
    h = lb.get("h")
    d = dms[0].dim
    if kind == "radial":
        cand = radial_candidate(rho, m, dim=d)
        cert = check_ul(dms, cand, delta, outer, h=h)
    elif kind == "quadratic_search":
        cand, cert = search_quadratic_candidate(dms, rho=rho, m=m, delta_trial=delta, outer_radius=outer, h=h)
    else:
        raise ModelSpecError(f"unknown Lyapunov candidate kind {kind!r} (radial | quadratic_search)")
    return cand, cert


def _admissibility(cfg, cand, funcs, d):
    """``f_bar <= V`` on the validation grid for every test function."""
    ab = cfg.admissibility or {}
    radius = float(ab.get("radius", 10.0))
    h = float(ab.get("h", 0.05 if d == 1 else 0.5))
    pts = ball_grid(radius, h, d)
    samples = int(ab.get("samples", 257 if d == 1 else 48))
    V = cand.value(pts)
    out = {}
    for name, f in funcs.items():
        fbar, info = local_lipschitz_profile(f, pts if d > 1 else pts[:, 0], samples=samples)
        ratio = fbar / V
        k = int(np.argmax(ratio))
        out[name] = {"max_fbar_over_V": float(ratio[k]), "argmax": pts[k].tolist(), "grid_points": int(len(pts)),
                     "radius": radius, **info}
        if ratio[k] > 1.0:
            raise AdmissibilityError(
                f"test function {name!r} is not admissible: f_bar/V = {ratio[k]:.4g} > 1 at x = {pts[k].tolist()} "
                f"(candidate {cand.description})")
    return out


def _rounding(vals_abs_mean, count):
    return 16.0 * np.finfo(float).eps * vals_abs_mean * math.sqrt(max(count, 1))


def _dm_side(cfg, dm, funcs, idx):
    """DM stationary expectations for every test function: ``{name: (value, budget dict, provenance)}``."""
    tol = cfg.tolerances
    method = cfg.solvers.get("dm", "auto")
    d = dm.dim
    if method == "auto":
        method = "quadrature" if d == 1 else ("fd" if d == 2 else "simulation")
    out = {}
    if method == "quadrature":
        grid = auto_grid_1d(dm, h=tol["grid_h"], edge_tol=tol["edge_tol"])
        pi = dm_stationary_1d(dm, grid, edge_tol=tol["edge_tol"])
        prov = {"method": "quadrature-1d", "rule": pi.rule, "nodes": int(grid.size),
                "radius": float(grid[-1]), "tail_mass": pi.extras["tail_mass"]}
        dists = pi
    elif method == "fd":
        box = cfg.solvers.get("fd_box")
        if box is None:
            r = float(cfg.solvers.get("fd_radius", 6.0))
            box = ((-r, r), (-r, r))
        pi = dm_stationary_fd(dm, tuple(map(tuple, box)), tol["fd_h"], edge_tol=tol["fd_edge_tol"])
        prov = {"method": "fd-2d", "box": [list(b) for b in box], "h": tol["fd_h"],
                "refinement_error": pi.extras["refinement_error"], "tail_mass": pi.extras["tail_mass"],
                "extrapolation_clipped": pi.extras["extrapolation_clipped"]}
        dists = pi
    elif method == "simulation":
        dists, prov = None, {"method": "simulation"}
    else:
        raise ModelSpecError(f"unknown DM solver {method!r} (auto | quadrature | fd | simulation)")

    sim = cfg.simulation
    for name, f in funcs.items():
        budget = {"truncation": 0.0, "quadrature": 0.0, "mc": 0.0, "rounding": 0.0}
        p = dict(prov)
        if dists is not None:
            mo = moment(dists, f)
            value = mo.value
            budget["truncation"] = mo.truncation_bound
            budget["quadrature"] = mo.discretization_error
            absmean = moment(dists, lambda x: np.abs(f(x))).value
            budget["rounding"] = _rounding(absmean, dists.density.size)
            if cfg.solvers.get("simulation_check") and method == "fd":
                est = ensemble_steady_estimate(dm, f, np.zeros(d), sim["T"], sim["step"], int(sim["reps"]),
                                               cfg.seed("simulation"), warmup=sim["warmup"])
                joint = est.half_width + mo.budget
                p["simulation_check"] = {"mean": est.mean, "half_width": est.half_width,
                                         "difference": value - est.mean,
                                         "agrees": bool(abs(value - est.mean) <= joint)}
        else:
            est = ensemble_steady_estimate(dm, f, np.zeros(d), sim["T"], sim["step"], int(sim["reps"]),
                                           cfg.seed("simulation"), warmup=sim["warmup"])
            value = est.mean
            budget["mc"] = est.half_width
            p.update(reps=int(sim["reps"]), T=sim["T"], step=sim["step"], seed=cfg.seed("simulation"))
        out[name] = (value, budget, p)
    return out, (dists if dists is not None else None)


def _cell(cfg, sc, dm, funcs, idx):
    """Chain and DM sides at one scale."""
    tol = cfg.tolerances
    dist = chain_stationary(sc, mass_tol=tol["mass_tol"], solver=cfg.solvers.get("chain", "auto"))
    dm_vals, pi = _dm_side(cfg, dm, funcs, idx)
    rows = {}
    for name, f in funcs.items():
        mo = moment(dist, f)
        absmean = float(np.dot(dist.probs, np.abs(f(dist.scaled))))
        pv, pb, pprov = dm_vals[name]
        gap = mo.value - pv
        budget = {
            "truncation": mo.truncation_bound + pb["truncation"],
            "quadrature": mo.discretization_error + pb["quadrature"],
            "mc": pb["mc"],
            "rounding": _rounding(absmean, dist.probs.size) + pb["rounding"],
        }
        budget["total"] = sum(budget.values())
        prov = {"chain": {"method": dist.method, "states": int(dist.probs.size), "box": dist.box,
                          "truncation_mass_bound": dist.truncation_mass_bound},
                "dm": pprov}
        rows[name] = GapRow(name, float(sc.n), mo.value, pv, gap, math.sqrt(sc.n) * gap, budget, prov)
    return rows, pi


def check_hypotheses(cfg, spec, scs, dms, funcs):
    """Machine-check the hypotheses of the gap bound; raises on a failed check.

    Returns ``(hypotheses dict, candidate, certificate)``.
    """
    d = spec.dim
    vb = cfg.validation or {}
    box = vb.get("box", [[-5.0] * d, [5.0] * d])
    rep = validate_assumptions(scs, (np.asarray(box[0], float), np.asarray(box[1], float)),
                               samples=int(vb.get("samples", 2000)), seed=cfg.seed("validation") if
                               "validation" in cfg.seeds else 0)
    hyp = {"assumptions": rep.to_dict()}
    if not rep.passed:
        failed = [k for k, v in rep.verdicts.items() if not v]
        raise HypothesisCheckError(f"model fails the sampled assumption checks: {failed}")
    cand, cert = _candidate_and_certificate(cfg, dms)
    hyp["ul_certificate"] = cert.to_dict()
    sub = check_subexponential(cand)
    hyp["subexponential"] = sub.to_dict()
    outer = cert.outer_radius
    hyp["dm_to_ctmc"] = check_dm_to_ctmc(cand, ball_grid(outer, outer / (400.0 if d == 1 else 40.0), d)).to_dict()
    hyp["finite_integral"] = {repr(sc.n): attest_finite_integral(sc.base, sc.n) for sc in scs}
    hyp["admissibility"] = _admissibility(cfg, cand, funcs, d)
    return hyp, cand, cert


def run_gap_study(cfg: ExperimentConfig):
    """Chain vs DM stationary expectations over ``cfg.n_grid`` for every test function.

    Hypothesis checks (sampled assumptions, UL certificate, companion
    constants, admissibility of every test function) run first and raise
    :class:`HypothesisCheckError` subclasses on failure.  Solver failures at
    a scale are listed in ``failures`` and the rest of the report is kept.
    """
    spec = cfg.model_spec()
    d = spec.dim
    funcs = _function_table(cfg, d)
    scs, dms, failures = [], [], []
    for n in cfg.n_grid:
        try:
            sc = spec.scaled(n)
            scs.append(sc)
            dms.append(build_dm(sc))
        except HypothesisCheckError:
            raise
        except SteadyDiffError as exc:
            failures.append({"n": n, "stage": "scaling", "error": type(exc).__name__, "message": str(exc)})
    if not scs:
        raise SteadyDiffError(f"no scale could be built: {failures[0]['message']}")
    hyp, cand, cert = check_hypotheses(cfg, spec, scs, dms, funcs)

    def work(i):
        try:
            return _cell(cfg, scs[i], dms[i], funcs, i), None
        except (SteadyDiffError, ValueError) as exc:
            return None, {"n": scs[i].n, "stage": "solve", "error": type(exc).__name__, "message": str(exc)}

    with ThreadPoolExecutor(max_workers=max(1, int(cfg.threads))) as pool:
        results = list(pool.map(work, range(len(scs))))

    rows = {name: [] for name in funcs}
    pis = []
    for res, fail in results:
        if fail is not None:
            failures.append(fail)
            continue
        cell_rows, pi = res
        pis.append(pi)
        for name, r in cell_rows.items():
            rows[name].append(r)
    frac = float(cfg.tolerances["budget_fraction"])
    if pis and all(p is not None for p in pis):
        hyp["moment_bound"] = moment_bound_check(cert, pis, cand.value)
    fits = {}
    for name, rs in rows.items():
        usable = [r for r in rs if r.admissible(frac)]
        excluded = [r.n for r in rs if not r.admissible(frac)]
        try:
            fit = fit_rate(usable)
        except InsufficientDataError as exc:
            fit = {"slope": None, "stderr": None, "notes": [str(exc)]}
        if excluded:
            fit.setdefault("notes", []).append(
                f"rows n={excluded} excluded: error budget not below {frac:g} x |gap|")
        fits[name] = fit
    report = GapReport(model=spec.chain.name, functions=dict(cfg.functions), rows=rows, fits=fits,
                       hypotheses=hyp, failures=failures, n_grid=list(cfg.n_grid), seeds=dict(cfg.seeds),
                       budget_fraction=frac)
    out = cfg.output_dir()
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        report.write_json(out / "gap_report.json")
        report.write_csv(out / "gap_rows.csv")
    return report


# ---------------------------------------------------------------------------
# ergodicity decay


@dataclass
class DecayFit:
    x0: list
    t: list
    mean_deviation: list
    stderr: list
    rate: float
    rate_stderr: float
    t_used: list
    notes: list

    def to_dict(self):
        return dict(self.__dict__)


def _fit_decay(t, m, se):
    """Weighted LS of ``log |m|`` on ``t`` with weights ``(|m| / se)^2``."""
    y = np.log(np.abs(m))
    w = (np.abs(m) / se) ** 2 if np.all(se > 0) else np.ones_like(m)
    A = np.column_stack([t, np.ones_like(t)])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    cov = np.linalg.inv(A.T @ (A * w[:, None]))
    return -float(coef[0]), float(np.sqrt(cov[0, 0]))


def ergodicity_decay(dm, f, x0_list, t_grid, reps, seed, pi_f, step=0.01, noise_sigmas=3.0, tag=23):
    """Monte-Carlo ``|E_x f(Y(t)) - pi(f)|`` over ``t_grid`` and an exponential rate fit per start.

    Each start uses ``reps`` Euler-Maruyama replicates (stream ``(seed, tag +
    k, block)`` for the k-th start).  The curve is cut at the first time where
    the deviation is not ``noise_sigmas`` standard errors away from zero;
    the fit is a weighted least-squares line through ``log |deviation|``.  A
    curve that is identically zero (``f`` equal to its stationary mean) gives
    no fit.
    """
    t_grid = np.asarray(sorted(float(t) for t in t_grid))
    if t_grid.size == 0 or t_grid[0] <= 0:
        raise ValueError("t_grid must hold positive times")
    d = dm.dim
    steps_at = np.rint(t_grid / step).astype(int)
    out = []
    for k, x0 in enumerate(x0_list):
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        Y = np.broadcast_to(x0, (reps, d)).copy()
        normals = BlockNormals(seed, reps, d, tag=tag + k)
        L = np.asarray(dm.sqrt_avar0)
        means, ses = [], []
        done = 0
        for target in steps_at:
            m = target - done
            if m > 0:
                Z = normals.draw(m)
                for i in range(m):
                    Y = Y + np.asarray(dm.drift_hat(Y), dtype=float) * step + math.sqrt(step) * (Z[i] @ L.T)
                done = target
            v = np.asarray(f(Y), dtype=float) - pi_f
            means.append(float(v.mean()))
            ses.append(float(v.std(ddof=1) / math.sqrt(reps)))
        m, se = np.array(means), np.array(ses)
        notes = []
        if np.all(np.abs(m) <= 1e-14) and np.all(se <= 1e-14):
            out.append(DecayFit(x0.tolist(), t_grid.tolist(), m.tolist(), se.tolist(), None, None, [],
                                ["deviation curve is identically zero; no rate to fit"]))
            continue
        signal = np.abs(m) > noise_sigmas * se
        cut = int(np.argmin(signal)) if not np.all(signal) else signal.size
        if cut < signal.size:
            notes.append(f"t_grid truncated at t={t_grid[cut]:g}: deviation below {noise_sigmas:g} standard errors")
        if cut < 2:
            notes.append("fewer than two points above the noise floor; no fit")
            out.append(DecayFit(x0.tolist(), t_grid.tolist(), m.tolist(), se.tolist(), None, None,
                                t_grid[:cut].tolist(), notes))
            continue
        rate, rate_se = _fit_decay(t_grid[:cut], m[:cut], se[:cut])
        out.append(DecayFit(x0.tolist(), t_grid.tolist(), m.tolist(), se.tolist(), rate, rate_se,
                            t_grid[:cut].tolist(), notes))
    return out


def run_decay_study(cfg: ExperimentConfig):
    """Ergodicity-decay fits for every n in the grid (config ``decay`` block)."""
    if not cfg.decay:
        raise ModelSpecError("configuration has no 'decay' block")
    db = cfg.decay
    spec = cfg.model_spec()
    d = spec.dim
    fname = str(db.get("f", next(iter(cfg.functions.values()))))
    f = state_function(fname, d)
    seed = cfg.seed("decay") if "decay" in cfg.seeds else cfg.seed("simulation")
    per_n = []
    for n in cfg.n_grid:
        dm = build_dm(spec.scaled(n))
        if d == 1:
            pi = dm_stationary_1d(dm, auto_grid_1d(dm, h=cfg.tolerances["grid_h"]))
            pi_f = moment(pi, f).value
        elif d == 2:
            box = cfg.solvers.get("fd_box") or ((-6.0, 6.0), (-6.0, 6.0))
            pi_f = moment(dm_stationary_fd(dm, tuple(map(tuple, box)), cfg.tolerances["fd_h"]), f).value
        else:
            sim = cfg.simulation
            pi_f = ensemble_steady_estimate(dm, f, np.zeros(d), sim["T"], sim["step"], int(sim["reps"]),
                                            seed, warmup=sim["warmup"]).mean
        fits = ergodicity_decay(dm, f, db.get("x0", [[1.0] * d]), db.get("t_grid", [0.5, 1, 1.5, 2, 3]),
                                int(db.get("reps", 2000)), seed, pi_f, step=float(db.get("step", 0.01)))
        per_n.append({"n": n, "pi_f": pi_f, "fits": [ft.to_dict() for ft in fits]})
    rates = [ft["rate"] for row in per_n for ft in row["fits"] if ft["rate"] is not None]
    stability = None
    if len(rates) >= 2 and min(rates) > 0:
        stability = max(rates) / min(rates)
    report = {"schema": DECAY_SCHEMA, "model": spec.chain.name, "f": fname, "seed": seed, "per_n": per_n,
              "rate_ratio_max_over_min": stability}
    out = cfg.output_dir()
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "decay_report.json", "w") as fh:
            json.dump(report, fh, indent=2, default=_json_default)
    return report
