"""Poisson equation ``A^n u = -(f - pi(f))`` for scalar diffusion models.

With ``Phi(x) = (2/a) int_0^x F_hat`` the stationary density is ``p ~ e^Phi`` and
the solution with ``pi``-integrable growth has

    u'(x) = -(2/a) e^{-Phi(x)} int_{-inf}^x fc(y) e^{Phi(y)} dy
          = +(2/a) e^{-Phi(x)} int_x^{inf}  fc(y) e^{Phi(y)} dy,

``fc = f - pi(f)``.  Both forms are evaluated as scaled recursions (the running
integral is carried multiplied by ``e^{-Phi}``), so nothing underflows in the
tails: the left form is used below the median and the right form above it.
``u''`` is obtained by differentiating the representation locally (central
difference of two short Gauss-Legendre increments), ``u`` by the
end-corrected trapezoid rule, and the residual of the equation is then measured
by applying the generator to these grids.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .diffusion import DiffusionModel
from .errors import BoxTooSmallError, HypothesisCheckError, ModelSpecError
from .quadrature import interval_integrals
from .rng import BlockNormals
from .steady import ContinuousStationary, moment


@dataclass
class PoissonSolution:
    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    residual: np.ndarray
    pi_f: float
    centered_mean: float
    residual_sup: float
    eval_radius: float
    u_mean: float
    tail_bound: float
    extras: dict = field(default_factory=dict)

    @property
    def centered_f(self):
        """``pi(f)`` subtracted from ``f`` (so ``fc = f - pi_f``)."""
        return self.pi_f

    @property
    def u_representation(self):
        """``u`` shifted to have zero stationary mean (the integral representation)."""
        return self.u - self.u_mean

    def at(self, x):
        """Cubic Hermite interpolation of ``u`` (with ``u'``) at ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k = np.clip(np.searchsorted(self.x, x) - 1, 0, self.x.size - 2)
        x0, x1 = self.x[k], self.x[k + 1]
        h = x1 - x0
        t = (x - x0) / h
        h00 = 2 * t ** 3 - 3 * t ** 2 + 1
        h10 = t ** 3 - 2 * t ** 2 + t
        h01 = -2 * t ** 3 + 3 * t ** 2
        h11 = t ** 3 - t ** 2
        return h00 * self.u[k] + h10 * h * self.du[k] + h01 * self.u[k + 1] + h11 * h * self.du[k + 1]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# schema: steadydiff-poisson/1\n")
            w = csv.writer(fh)
            w.writerow(["x", "u", "du", "d2u", "residual"])
            for row in zip(self.x, self.u, self.du, self.d2u, self.residual):
                w.writerow([repr(float(v)) for v in row])


def _scalar_drift(dm):
    return lambda y: np.asarray(dm.drift_hat(np.asarray(y, dtype=float)[..., None]), dtype=float)[..., 0]


def _scalar_f(f):
    return lambda y: np.broadcast_to(np.asarray(f(np.asarray(y, dtype=float)[..., None]), dtype=float),
                                     np.shape(y))


class _Representation:
    """Shared machinery: ``Phi`` offsets and weighted increments on a grid."""

    def __init__(self, dm, x):
        self.a = float(dm.avar0[0, 0])
        self.F = _scalar_drift(dm)
        self.x = x
        k0 = int(np.argmin(np.abs(x)))
        incr = interval_integrals(lambda y, _o: self.F(y), x[:-1], x[1:])
        cum = np.concatenate([[0.0], np.cumsum(incr)])
        base = 0.0 if x[k0] == 0 else interval_integrals(lambda y, _o: self.F(y), [0.0], [x[k0]])[0]
        self.phi = (2.0 / self.a) * (cum - cum[k0] + base)

    def phi_offset(self, anchors, y):
        """``Phi(y) - Phi(anchor)`` for paired arrays (adaptive, kink-safe)."""
        anchors = np.broadcast_to(anchors, np.shape(y))
        flat = interval_integrals(lambda z, _o: self.F(z), np.ravel(anchors), np.ravel(y))
        return (2.0 / self.a) * flat.reshape(np.shape(y))

    def weighted(self, g, lo, hi, ref_phi):
        """``int_lo^hi g(y) e^{Phi(y) - ref_phi}`` on each interval (``lo`` are grid nodes)."""
        lo = np.asarray(lo, dtype=float)
        phi_lo = np.interp(lo, self.x, self.phi)  # lo are nodes: exact lookup
        shift = phi_lo - ref_phi

        def integrand(y, owner):
            off = self.phi_offset(lo[owner], y)
            return g(y) * np.exp(off + shift[owner])

        return interval_integrals(integrand, lo, hi, rtol=1e-12)


def _centered_mean(rep, f):
    """``pi(f)`` by the same quadrature as the solution, for exact orthogonality."""
    x = rep.x
    top = rep.phi.max()
    mass = rep.weighted(lambda y: np.ones_like(y), x[:-1], x[1:], top)
    fm = rep.weighted(f, x[:-1], x[1:], top)
    return float(fm.sum() / mass.sum()), mass / mass.sum()


def solve_poisson_1d(dm: DiffusionModel, f, pi: ContinuousStationary, grid=None, eval_radius=None,
                     diff_step=1e-6):
    """Solve ``A u = -(f - pi(f))`` on a 1-D grid with ``u(0) = 0``.

    Parameters
    ----------
    dm : DiffusionModel
        Scalar model.
    f : callable
        Test function of scaled states ``(..., 1)``.
    pi : ContinuousStationary
        Stationary law of ``dm`` (its grid is used unless ``grid`` is given and
        its moment is recorded as ``pi_moment`` for comparison).
    eval_radius : float, optional
        Radius on which ``residual_sup`` is reported; defaults to the region
        where the density exceeds ``e^-30`` of its maximum.

    Returns
    -------
    PoissonSolution
    """
    if dm.dim != 1:
        raise ModelSpecError("solve_poisson_1d needs a scalar diffusion model")
    x = np.asarray(pi.axes[0] if grid is None else grid, dtype=float)
    if np.min(np.abs(x)) > 0:
        raise ValueError("grid must contain 0 as a node")
    fs = _scalar_f(f)
    rep = _Representation(dm, x)
    a = rep.a
    pi_f, cell_mass = _centered_mean(rep, fs)
    fc = lambda y: fs(y) - pi_f
    m = x.size

    # tail of the representation beyond the grid, Laplace-type asymptotics
    F_edge = rep.F(np.array([x[0], x[-1]]))
    dphi = 2.0 * F_edge / a
    if not (dphi[0] > 0 and dphi[1] < 0):
        raise BoxTooSmallError("drift does not point inwards at the grid edges")
    seed_left = float(fc(np.array([x[0]]))[0] / dphi[0])
    seed_right = float(-fc(np.array([x[-1]]))[0] / dphi[1])
    tail_mass = float(np.exp(rep.phi[0] - rep.phi.max()) / dphi[0]
                      - np.exp(rep.phi[-1] - rep.phi.max()) / dphi[1]) / float(
        rep.weighted(lambda y: np.ones_like(y), x[:-1], x[1:], rep.phi.max()).sum())

    # scaled running integrals g_k = G_k e^{-Phi_k}, h_k = H_k e^{-Phi_k}
    phi = rep.phi
    I_right = np.empty(m - 1)  # int_{x_k}^{x_{k+1}} fc e^{Phi - Phi_{k+1}}
    I_left = np.empty(m - 1)  # int_{x_k}^{x_{k+1}} fc e^{Phi - Phi_k}
    I_left[:] = rep.weighted(fc, x[:-1], x[1:], phi[:-1])
    I_right[:] = I_left * np.exp(phi[:-1] - phi[1:])
    g = np.empty(m)
    g[0] = seed_left
    for k in range(m - 1):
        g[k + 1] = g[k] * np.exp(phi[k] - phi[k + 1]) + I_right[k]
    h = np.empty(m)
    h[-1] = seed_right
    for k in range(m - 2, -1, -1):
        h[k] = h[k + 1] * np.exp(phi[k + 1] - phi[k]) + I_left[k]
    cdf = np.concatenate([[0.0], np.cumsum(cell_mass)])
    left = cdf <= 0.5
    du = np.where(left, -(2.0 / a) * g, (2.0 / a) * h)

    # u'' by a local central difference of the representation
    hd = diff_step * (1.0 + np.abs(x))
    d2u = np.empty(m)
    for sgn_side, base_vals, mask in ((-1.0, g, left), (1.0, h, ~left)):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            continue
        xk = x[idx]
        vals = []
        for s in (1.0, -1.0):
            y = xk + s * hd[idx]
            off = rep.phi_offset(xk, y)  # Phi(y) - Phi_k
            inc = rep.weighted(fc, xk, y, phi[idx] + off)  # int_{x_k}^{y} fc e^{Phi - Phi(y)}
            scaled_base = base_vals[idx] * np.exp(-off)
            if sgn_side < 0:  # G(y) = G_k + int_{x_k}^{y}
                vals.append(-(2.0 / a) * (scaled_base + inc))
            else:  # H(y) = H_k - int_{x_k}^{y}
                vals.append((2.0 / a) * (scaled_base - inc))
        d2u[idx] = (vals[0] - vals[1]) / (2 * hd[idx])

    # u by the end-corrected trapezoid rule, u(0) = 0
    dx = np.diff(x)
    steps = 0.5 * dx * (du[:-1] + du[1:]) - dx ** 2 / 12.0 * (d2u[1:] - d2u[:-1])
    u = np.concatenate([[0.0], np.cumsum(steps)])
    k0 = int(np.argmin(np.abs(x)))
    u -= u[k0]

    F = rep.F(x)
    fx = fc(x)
    residual = F * du + 0.5 * a * d2u + fx
    if eval_radius is None:
        trusted = phi - phi.max() >= -30.0
    else:
        trusted = np.abs(x) <= eval_radius
    eval_r = float(np.max(np.abs(x[trusted])))
    if grid is None and pi.dim == 1:
        # the law's own (Simpson) weights are exact to higher order than cell averages
        w = pi.weights * pi.density
        u_mean = float(np.dot(w, u) / w.sum())
    else:
        u_nodes = 0.5 * (u[:-1] + u[1:]) - dx ** 2 / 24.0 * (d2u[:-1] + d2u[1:])
        u_mean = float(np.dot(cell_mass, u_nodes))
    centered = float(np.dot(cell_mass, 0.5 * (fx[:-1] + fx[1:])))
    pi_moment = moment(pi, f).value if pi.dim == 1 else float("nan")
    return PoissonSolution(
        x=x, u=u, du=du, d2u=d2u, residual=residual, pi_f=pi_f, centered_mean=centered,
        residual_sup=float(np.max(np.abs(residual[trusted]))), eval_radius=eval_r, u_mean=u_mean,
        tail_bound=float(tail_mass * max(abs(fx[0]), abs(fx[-1]))),
        extras={"pi_moment": pi_moment, "diff_step": diff_step})


# ---------------------------------------------------------------------------
# Monte-Carlo cross-check


@dataclass
class MCEstimate:
    mean: float
    half_width: float
    stderr: float
    reps: int
    horizon: float
    step: float
    seed: int
    inconclusive: bool = False

    def contains(self, value):
        return abs(value - self.mean) <= self.half_width

    def to_dict(self):
        return dict(self.__dict__)


def _em_time_integral(dm, fc, x0, Z, step, horizon):
    """Trapezoidal time integral of ``fc`` along EM paths driven by increments ``Z`` (steps, reps, 1)."""
    L = float(dm.sqrt_avar0[0, 0])
    y = np.full(Z.shape[1], float(x0))
    F = _scalar_drift(dm)
    acc = 0.5 * fc(y)
    sq = np.sqrt(step)
    for k in range(Z.shape[0]):
        y = y + F(y) * step + L * sq * Z[k, :, 0]
        acc = acc + (fc(y) if k < Z.shape[0] - 1 else 0.5 * fc(y))
    return acc * step


def mc_poisson_value(dm, f, x, horizon, reps, seed, pi_f, step=0.01, ref=None, precision=None):
    """Monte-Carlo estimate of ``int_0^T E_x[f(Y_t) - pi_f] dt`` (scalar models).

    With ``ref`` the difference against the same quantity started at ``ref`` is
    estimated using common random numbers, which removes the additive constant
    and most of the variance.  The Euler-Maruyama bias (first order in the step)
    is removed by extrapolating ``2 I_{h/2} - I_h`` per replicate, with the
    coarse path driven by the pairwise sums of the fine increments.  Returns a
    95 % normal CI; ``inconclusive`` when its half-width exceeds ``precision``.
    """
    if seed is None:
        raise ValueError("an explicit seed is required")
    fs = _scalar_f(f)
    fc = lambda y: fs(y) - pi_f
    n_fine = int(round(horizon / (step / 2)))
    n_fine += n_fine % 2
    Zf = BlockNormals(seed, reps, 1, tag=101).draw(n_fine)
    Zc = (Zf[0::2] + Zf[1::2]) / np.sqrt(2.0)

    def value(x0):
        fine = _em_time_integral(dm, fc, x0, Zf, step / 2, horizon)
        coarse = _em_time_integral(dm, fc, x0, Zc, step, horizon)
        return 2 * fine - coarse

    vals = value(x)
    if ref is not None:
        vals = vals - value(ref)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(reps))
    hw = 1.959963984540054 * se
    return MCEstimate(mean, hw, se, reps, float(horizon), float(step), int(seed),
                      inconclusive=bool(precision is not None and hw > precision))


# ---------------------------------------------------------------------------
# local Lipschitz envelope and gradient bounds


def local_lipschitz_profile(f, grid, samples=257):
    """``f_bar(x) = sup_{B_x} |f| + sampled Lipschitz constant of f on B_x``,
    ``B_x`` the ball of radius ``1 / (1 + |x|)``.

    In one dimension the ball is sampled at ``samples`` equispaced points
    (including both ends) and the Lipschitz constant is the largest difference
    quotient of neighbouring samples; in higher dimension random points of the
    ball are paired.  Returns ``(fbar, info)``.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    d = g.shape[1]
    r = 1.0 / (1.0 + np.linalg.norm(g, axis=1))
    if d == 1:
        t = np.linspace(-1.0, 1.0, samples)
        Y = g[:, 0, None] + r[:, None] * t[None, :]
        vals = np.asarray(f(Y[..., None]), dtype=float)
        sup = np.max(np.abs(vals), axis=1)
        lip = np.max(np.abs(np.diff(vals, axis=1)) / np.diff(Y, axis=1), axis=1)
    else:
        from .rng import generator

        rng = generator(0, 41)
        U = rng.standard_normal((samples, d))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        U *= rng.random((samples, 1)) ** (1.0 / d)
        Y = g[:, None, :] + r[:, None, None] * U[None]
        vals = np.asarray(f(Y), dtype=float)
        sup = np.max(np.abs(vals), axis=1)
        dv = np.abs(vals[:, :, None] - vals[:, None, :])
        dist = np.linalg.norm(Y[:, :, None, :] - Y[:, None, :, :], axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            q = np.where(dist > 0, dv / dist, 0.0)
        lip = q.reshape(q.shape[0], -1).max(axis=1)
    return sup + lip, {"samples": samples, "radius_rule": "1/(1+|x|)"}


@dataclass
class GradientBoundReport:
    theta_hat: float
    n: float
    C: float
    c3: float
    argmax: float
    which: str
    margins: dict

    def to_dict(self):
        return dict(self.__dict__)


def holder_seminorm_d2(sol, radius):
    """Lipschitz constant of ``u''`` over ``B_x(radius)`` at every node.

    Uses the difference quotients of neighbouring grid values of ``u''``; every
    interval meeting the ball contributes (so balls smaller than the grid
    spacing still see the adjacent quotients).
    """
    x = sol.x
    q = np.abs(np.diff(sol.d2u)) / np.diff(x)
    lo = np.searchsorted(x, x - radius, side="right") - 1
    hi = np.searchsorted(x, x + radius, side="left")
    lo = np.clip(lo, 0, q.size - 1)
    hi = np.clip(hi, 1, q.size)
    # sliding maximum over [lo, hi)
    out = np.empty(x.size)
    for k in range(x.size):
        out[k] = q[lo[k]:max(hi[k], lo[k] + 1)].max()
    return out


def verify_gradient_bounds(sol: PoissonSolution, cand, c3, n, jump_bound=1.0, eval_radius=None):
    """Smallest ``Theta`` with the three gradient envelopes on the trusted grid.

    ``C_V(x) = 16 Theta (1 + c3^2 C) V(x) (1 + |x|)^3`` with ``C = max |u| / V``
    (``u`` in its zero-stationary-mean representation) bounds
    ``|u'| (1+|x|)^2``, ``|u''| (1+|x|)`` and the Lipschitz seminorm of ``u''``
    over ``B_x(jump_bound / sqrt(n))``.
    """
    x = sol.x
    r = eval_radius if eval_radius is not None else sol.eval_radius
    use = np.abs(x) <= r
    X = x[:, None]
    V = cand.value(X)
    u = sol.u_representation
    C = float(np.max(np.abs(u[use]) / V[use]))
    env = 16.0 * (1.0 + c3 ** 2 * C) * V * (1.0 + np.abs(x)) ** 3
    terms = {
        "du": np.abs(sol.du) * (1 + np.abs(x)) ** 2,
        "d2u": np.abs(sol.d2u) * (1 + np.abs(x)),
        "holder": holder_seminorm_d2(sol, jump_bound / np.sqrt(n)),
    }
    best, which, arg = 0.0, "", 0.0
    margins = {}
    for name, t in terms.items():
        ratio = t[use] / env[use]
        if not np.all(np.isfinite(ratio)):
            raise HypothesisCheckError(f"unbounded {name} ratio")
        k = int(np.argmax(ratio))
        margins[name] = float(ratio[k])
        if ratio[k] > best:
            best, which, arg = float(ratio[k]), name, float(x[use][k])
    return GradientBoundReport(theta_hat=best, n=float(n), C=C, c3=float(c3), argmax=arg, which=which,
                               margins=margins)


def write_gradient_report(path, reports):
    with open(path, "w") as fh:
        json.dump({"schema": "steadydiff-gradient-bounds/1", "rows": [r.to_dict() for r in reports]}, fh, indent=2)
