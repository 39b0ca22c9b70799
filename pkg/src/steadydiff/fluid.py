"""Fluid model: the ODE x' = F^n(x), its stationary point and fluid-level Lyapunov checks."""

import csv
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .chain import derive_drift, scale_chain
from .errors import ConvergenceError, DivergenceError, MultipleRootsError


@dataclass(frozen=True, eq=False)
class FluidModel:
    drift: Callable
    dim: int
    n: float = 1.0

    @classmethod
    def from_chain(cls, chain, n):
        return cls(lambda x: derive_drift(chain, n, x), chain.dim, n)


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# schema: steadydiff-trajectory/1\n")
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(self.x.shape[1])])
            for ti, xi in zip(self.t, self.x):
                w.writerow([repr(float(ti))] + [repr(float(v)) for v in xi])


def integrate_fm(fm: FluidModel, x0, T, h):
    """Classical RK4 with fixed step ``h``; the last step is shortened to land on ``T``."""
    if not (T > 0 and h > 0):
        raise ValueError("horizon and step must be positive")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    nsteps = int(np.ceil(T / h - 1e-12))
    ts = np.empty(nsteps + 1)
    xs = np.empty((nsteps + 1, x.size))
    ts[0], xs[0] = 0.0, x
    t = 0.0
    F = fm.drift
    for k in range(1, nsteps + 1):
        dt = min(h, T - t)
        k1 = F(x)
        k2 = F(x + 0.5 * dt * k1)
        k3 = F(x + 0.5 * dt * k2)
        k4 = F(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = T if k == nsteps else t + dt
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"fluid trajectory left the finite range after t={ts[k - 1]:.6g}", ts[k - 1])
        ts[k], xs[k] = t, x
    return Trajectory(ts, xs)


@dataclass
class StationaryPoint:
    point: np.ndarray
    residual: float
    newton_iterations: int
    method: str = "newton"

    def to_dict(self):
        return {
            "point": self.point.tolist(),
            "residual": self.residual,
            "iterations": self.newton_iterations,
            "method": self.method,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump({"schema": "steadydiff-stationary-point/1", **self.to_dict()}, fh, indent=2)


def _jacobian(F, x):
    d = x.size
    h = 1e-6 * (1.0 + np.linalg.norm(x))
    J = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        J[:, j] = (F(x + e) - F(x - e)) / (2 * h)
    return J


def _newton(F, x, tol, max_iter):
    r = F(x)
    res = np.linalg.norm(r)
    for it in range(1, max_iter + 1):
        if res <= tol:
            return x, res, it - 1
        J = _jacobian(F, x)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        while lam > 1e-10:
            xn = x + lam * step
            rn = F(xn)
            resn = np.linalg.norm(rn)
            if np.isfinite(resn) and resn < (1 - 1e-4 * lam) * res:
                break
            lam *= 0.5
        else:
            return x, res, it
        x, r, res = xn, rn, resn
    return x, res, max_iter


def stationary_point(fm: FluidModel, x0, tol=None, max_iter=100, extra_starts=(), horizon=200.0):
    """Zero of the fluid drift by damped Newton (central-difference Jacobian).

    When Newton stalls the fluid ODE is integrated over ``horizon`` from the best
    iterate and Newton restarted.  Additional ``extra_starts`` are solved as
    well; distinct roots raise :class:`MultipleRootsError` (uniqueness is
    assumed, not enforced).
    """
    if tol is None:
        tol = 1e-10 * fm.n
    F = lambda x: np.asarray(fm.drift(x), dtype=float)
    roots = []
    for start in [x0, *extra_starts]:
        x = np.atleast_1d(np.asarray(start, dtype=float)).copy()
        x, res, its = _newton(F, x, tol, max_iter)
        method = "newton"
        if not res <= tol:
            scale = 1.0 + np.linalg.norm(x)
            traj = integrate_fm(fm, x, horizon, min(0.01, horizon / 1000))
            x, res2, its2 = _newton(F, traj.x[-1], tol, max_iter)
            its += its2
            res = res2
            method = "newton+integration"
            if not res <= tol:
                raise ConvergenceError(
                    f"no drift zero found (best residual {res:.3e}, tolerance {tol:.3e}, scale {scale:.3g})",
                    best=x, residual=res)
        roots.append(StationaryPoint(x, float(res), its, method))
    distinct = [roots[0]]
    for r in roots[1:]:
        if all(np.linalg.norm(r.point - s.point) > 1e-6 * (1 + np.linalg.norm(s.point)) for s in distinct):
            distinct.append(r)
    if len(distinct) > 1:
        raise MultipleRootsError([r.point.tolist() for r in distinct])
    return roots[0]


def scale_family(chain, n_grid, center=None):
    """Scaled chains over ``n_grid``; centres default to the fluid stationary point.

    ``center`` may be a callable ``n -> x`` (closed form) or ``None``.
    """
    out = []
    for n in n_grid:
        if center is None:
            fm = FluidModel.from_chain(chain, n)
            guess = np.full(chain.dim, float(n))
            c = stationary_point(fm, guess).point
        else:
            c = center(n)
        out.append(scale_chain(chain, n, c))
    return out


@dataclass
class FMLyapunovReport:
    eta: float
    d2_ratio_sup: float
    verdict: bool
    counterexample: tuple = None  # (n, x, lhs, rhs)
    per_n_eta: list = None

    def to_dict(self):
        return {
            "eta": self.eta,
            "d2_ratio_sup": self.d2_ratio_sup,
            "verdict": self.verdict,
            "counterexample": None if self.counterexample is None else [
                float(self.counterexample[0]), np.asarray(self.counterexample[1]).tolist(),
                float(self.counterexample[2]), float(self.counterexample[3])],
            "per_n_eta": self.per_n_eta,
        }


def check_fm_lyapunov(V, family, grid, shell=0.8):
    """Fluid Lyapunov inequality ``F_hat(x)' DV(x) <= -eta (V(x) - V(0))`` on a grid.

    ``V`` needs ``value``, ``grad`` and ``hess``; ``family`` is any sequence of
    objects with ``n`` and ``drift_hat`` (scaled chains or diffusion models).
    The reported ``eta`` is the largest rate valid at every grid point and every
    member.  ``d2_ratio_sup`` is ``sup |D^2 V| / V`` over the outer shell of the
    grid (points with ``|x| >= shell * max|x|``) -- finite evidence for the
    vanishing-ratio condition, not a proof of it.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    d = grid.shape[1]
    zero = np.zeros((1, d))
    r = np.linalg.norm(grid, axis=1)
    pts = grid[r > 0]
    gap = V.value(pts) - V.value(zero)[0]
    if np.any(gap <= 0):
        raise ValueError("V(x) must exceed V(0) away from the origin")
    DV = V.grad(pts)
    etas, cex = [], None
    for member in family:
        lhs = np.einsum("...i,...i->...", member.drift_hat(pts), DV)
        ratio = -lhs / gap
        k = int(np.argmin(ratio))
        etas.append(float(ratio[k]))
        if ratio[k] <= 0 and cex is None:
            cex = (member.n, pts[k], float(lhs[k]), 0.0)
    eta = min(etas)
    outer = r >= shell * r.max()
    H = V.hess(grid[outer])
    d2 = np.linalg.norm(H, ord=2, axis=(-2, -1)) / V.value(grid[outer])
    return FMLyapunovReport(eta=eta, d2_ratio_sup=float(d2.max()), verdict=cex is None and eta > 0,
                            counterexample=cex, per_n_eta=etas)
