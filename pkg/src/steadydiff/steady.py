"""Stationary distributions of the chain and of the diffusion model.

Chain side
    * :func:`chain_stationary_bd` -- detailed-balance product form for 1-D
      birth-death chains (log-space, so huge scales do not overflow);
    * :func:`chain_stationary_general` -- censored truncation to a lattice box
      and a sparse solve of ``nu Q = 0``.

Diffusion side
    * :func:`dm_stationary_1d` -- the scalar density ``p ~ exp((2/a) int_0^x F_hat)``;
    * :func:`dm_stationary_fd` -- a 2-D Fokker-Planck solve via a monotone
      (Markov-chain approximation) finite-difference scheme with Richardson
      extrapolation over two grids.

Both kinds of law expose :func:`moment`, which reports the expectation of a test
function together with an explicit truncation / discretisation budget.
"""

import csv
import json
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import BoxTooSmallError, ConvergenceError, IrreducibilityError, ModelSpecError, SteadyDiffError
from .quadrature import interval_integrals, weights_1d


class Moment(NamedTuple):
    """Expectation of a test function plus its error budget components."""

    value: float
    truncation_bound: float = 0.0
    discretization_error: float = 0.0

    @property
    def budget(self):
        return self.truncation_bound + self.discretization_error

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# distribution containers


@dataclass
class DiscreteStationary:
    """Stationary law of a (truncated) chain on lattice states.

    ``states`` are lattice points ``(m, d)``; :attr:`scaled` maps them to
    ``(X - center) / sqrt(n)``.  ``boundary`` flags states from which at least
    one jump was censored by the truncation.
    """

    states: np.ndarray
    probs: np.ndarray
    center: np.ndarray
    n: float
    truncation_mass_bound: float
    boundary: Optional[np.ndarray] = None
    method: str = ""
    box: tuple = ()
    tail_ratios: tuple = ()  # (edge index, lattice step, geometric ratio) per truncated end (birth-death)

    def __post_init__(self):
        total = self.probs.sum()
        if abs(total - 1.0) > 1e-12:
            self.probs = self.probs / total

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def scaled(self):
        return (self.states - np.asarray(self.center, dtype=float)) / np.sqrt(self.n)

    def write_csv(self, path, scaled=True):
        pts = self.scaled if scaled else self.states.astype(float)
        with open(path, "w", newline="") as fh:
            fh.write("# schema: steadydiff-distribution/1 kind=discrete\n")
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.dim)] + ["prob"])
            for x, p in zip(pts, self.probs):
                w.writerow([repr(float(v)) for v in x] + [repr(float(p))])


@dataclass
class ContinuousStationary:
    """A density tabulated on a rectangular grid.

    ``weights`` has the grid shape and turns point values into integrals:
    ``int f p ~ sum(weights * f * density)``.  ``extras`` carries
    solver-specific diagnostics (tail mass, refinement error...).
    """

    axes: list
    density: np.ndarray
    weights: np.ndarray
    rule: str
    extras: dict = field(default_factory=dict)

    @property
    def dim(self):
        return len(self.axes)

    @property
    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @property
    def mass(self):
        return float(np.sum(self.weights * self.density))

    def write_csv(self, path):
        pts = self.points.reshape(-1, self.dim)
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema: steadydiff-distribution/1 kind=density rule={self.rule}\n")
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.dim)] + ["density"])
            for x, p in zip(pts, self.density.ravel()):
                w.writerow([repr(float(v)) for v in x] + [repr(float(p))])


def _eval_f(f, pts):
    vals = np.asarray(f(pts), dtype=float)
    vals = np.broadcast_to(vals, pts.shape[:-1])
    if not np.all(np.isfinite(vals)):
        raise SteadyDiffError("test function is not finite on the support")
    return vals


def moment(dist, f):
    """``sum f p`` (chain) or ``int f p`` (density) with error budget.

    ``f`` maps scaled states ``(..., d)`` to values ``(...)``.  For birth-death
    laws the truncation bound sums ``|f|`` against the geometric tail beyond
    each truncated end (plus the renormalisation term); otherwise it is
    ``max |f|`` over the boundary layer (or box edge) times the distribution's
    truncation mass.  For densities the discretisation error is the
    difference against the same functional on the coarse companion grid when
    one is available.
    """
    if isinstance(dist, DiscreteStationary):
        vals = _eval_f(f, dist.scaled)
        value = float(np.dot(dist.probs, vals))
        if dist.tail_ratios:
            return Moment(value, _geometric_tail_bound(dist, f, value), 0.0)
        if dist.boundary is not None and np.any(dist.boundary):
            edge = float(np.max(np.abs(vals[dist.boundary])))
        else:
            edge = float(np.max(np.abs(vals)))
        return Moment(value, edge * dist.truncation_mass_bound, 0.0)
    if isinstance(dist, ContinuousStationary):
        pts = dist.points
        vals = _eval_f(f, pts)
        value = float(np.sum(dist.weights * dist.density * vals))
        tail = dist.extras.get("tail_mass", 0.0)
        edge_mask = np.zeros(dist.density.shape, dtype=bool)
        for ax in range(dist.dim):
            idx = [slice(None)] * dist.dim
            idx[ax] = 0
            edge_mask[tuple(idx)] = True
            idx[ax] = -1
            edge_mask[tuple(idx)] = True
        trunc = float(np.max(np.abs(vals[edge_mask]))) * tail
        disc = 0.0
        coarse = dist.extras.get("coarse")
        if coarse is not None:
            coarse_val = float(np.sum(coarse.weights * coarse.density * _eval_f(f, coarse.points)))
            disc = abs(value - coarse_val) * dist.extras.get("coarse_factor", 1.0)
        return Moment(value, trunc, disc)
    raise TypeError(f"unsupported distribution type {type(dist).__name__}")


def _geometric_tail_bound(dist, f, value, max_terms=1_000_000):
    """``T |value| + sum_j p_edge r^j |f(edge + j step)|`` over the truncated ends.

    The first term covers renormalisation by the tail mass ``T``; the sum
    dominates the tail contribution whenever the ratio of consecutive
    probabilities beyond the box stays below ``r``.
    """
    bound = dist.truncation_mass_bound * abs(value)
    c = np.asarray(dist.center, dtype=float)
    for idx, step, r in dist.tail_ratios:
        if not r < 1:
            return np.inf
        edge = dist.states[idx].astype(float)
        p0 = float(dist.probs[idx])
        j = 1
        total = 0.0
        chunk = 1024
        while j < max_terms:
            js = np.arange(j, j + chunk, dtype=float)
            w = p0 * np.exp(js * np.log(r))
            X = edge[None, :] + step * js[:, None]
            terms = w * np.abs(_eval_f(f, (X - c) / np.sqrt(dist.n)))
            total += float(terms.sum())
            if terms[-1] <= 1e-18 * max(total, np.finfo(float).tiny) or w[-1] == 0:
                break
            j += chunk
        else:
            return np.inf
        bound += total
    return bound


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def summary_json(path, dist, functions):
    """JSON summary: moments of named test functions with their budgets."""
    out = {"schema": "steadydiff-stationary-summary/1", "moments": {}}
    if isinstance(dist, DiscreteStationary):
        out.update(kind="discrete", n=dist.n, states=int(dist.states.shape[0]),
                   truncation_mass_bound=dist.truncation_mass_bound, method=dist.method)
    else:
        out.update(kind="density", rule=dist.rule, nodes=int(dist.density.size),
                   **{k: v for k, v in dist.extras.items() if isinstance(v, (int, float, str))})
    for name, f in functions.items():
        m = moment(dist, f)
        out["moments"][name] = {"value": m.value, "truncation_bound": m.truncation_bound,
                                "discretization_error": m.discretization_error}
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2)
    return out


# ---------------------------------------------------------------------------
# chain side


def relaxation_time(drift_hat, dim, probe=0.5):
    """Largest ``1 / Re(lambda)`` over eigenvalues of ``-D F_hat`` near the origin.

    The Jacobian is taken by central differences at ``+-probe`` along each
    axis, so both pieces of a piecewise-linear drift are seen.
    """
    pts = [np.zeros(dim)]
    for i in range(dim):
        for s in (-probe, probe):
            e = np.zeros(dim)
            e[i] = s
            pts.append(e)
    worst = 0.0
    h = 1e-6
    for x in pts:
        J = np.empty((dim, dim))
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = h
            J[:, j] = (np.asarray(drift_hat(x + e)) - np.asarray(drift_hat(x - e))) / (2 * h)
        re = np.linalg.eigvals(-J).real
        if np.min(re) <= 0:
            continue  # neutral direction at this probe (e.g. inside a kink); ignore
        worst = max(worst, 1.0 / np.min(re))
    if worst == 0.0:
        raise ModelSpecError("drift has no contracting direction near the centre")
    return worst


def default_box(sc, radius_factor=8.0):
    """Lattice box ``center +- radius_factor sqrt(n) tau`` clipped to the state space."""
    tau = relaxation_time(sc.drift_hat, sc.dim)
    r = radius_factor * np.sqrt(sc.n) * tau
    return _clip_box(sc.base, sc.n, np.floor(sc.center - r), np.ceil(sc.center + r))


def _clip_box(chain, n, lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if chain.lower is not None:
        lo = np.maximum(lo, np.ceil(chain.lower(n)))
    if chain.upper is not None:
        hi = np.minimum(hi, np.floor(chain.upper(n)))
    if np.any(hi < lo):
        raise BoxTooSmallError(f"empty truncation box {lo.tolist()}..{hi.tolist()}")
    return lo.astype(np.int64), hi.astype(np.int64)


def chain_stationary_bd(chain, n, box, center=None):
    """Product-form stationary law of a 1-D birth-death chain on ``box = (lo, hi)``.

    ``p(x + 1) / p(x) = birth(x) / death(x + 1)``, accumulated in log space and
    normalised over the box.  The truncation bound is a geometric tail estimate
    from the ratio at each truncated end (an upper bound whenever the ratio is
    non-increasing beyond the box, as for every zoo model).
    """
    if chain.dim != 1:
        raise ModelSpecError("birth-death solver needs a one-dimensional chain")
    J = chain.jumps[:, 0]
    if not set(J.tolist()) <= {-1, 1}:
        raise ModelSpecError(f"jumps {sorted(set(J.tolist()))} are not birth-death")
    lo, hi = (int(v) for v in np.ravel(box)[:2]) if np.ndim(box) else (0, int(box))
    if hi <= lo:
        raise BoxTooSmallError("birth-death box must contain at least two states")
    X = np.arange(lo, hi + 1, dtype=float)[:, None]
    r = chain.lattice_rates(n, X)
    birth = r[:, J == 1].sum(axis=1)
    death = r[:, J == -1].sum(axis=1)
    if np.any(birth < 0) or np.any(death < 0):
        raise ModelSpecError("negative birth or death rate inside the box")
    up, down = birth[:-1], death[1:]
    dead = np.flatnonzero((down == 0) | (up == 0))
    if dead.size:
        x = int(X[dead[0] + 1, 0])
        raise IrreducibilityError(f"zero birth/death rate between states {x - 1} and {x}",
                                  blocks=[[lo, x - 1], [x, hi]])
    logp = np.concatenate([[0.0], np.cumsum(np.log(up) - np.log(down))])
    logp -= logp.max()
    p = np.exp(logp)
    Z = p.sum()
    p /= Z
    tail = 0.0
    ratios = []
    boundary = np.zeros(p.size, dtype=bool)
    # upper end: censored if the chain could go beyond hi
    Rhi = chain.lattice_rates(n, np.array([[float(hi)], [hi + 1.0]]))
    b_hi, d_next = Rhi[0, J == 1].sum(), Rhi[1, J == -1].sum()
    if b_hi > 0:
        ratio = b_hi / d_next if d_next > 0 else np.inf
        tail += p[-1] * ratio / (1 - ratio) if ratio < 1 else np.inf
        boundary[-1] = True
        ratios.append((p.size - 1, 1, float(ratio)))
    Rlo = chain.lattice_rates(n, np.array([[lo - 1.0], [float(lo)]]))
    in_dom = chain.domain_mask(n, np.array([[lo - 1.0]]))[0]
    if in_dom:
        b_prev, d_lo = Rlo[0, J == 1].sum(), Rlo[1, J == -1].sum()
        ratio = d_lo / b_prev if b_prev > 0 else np.inf
        tail += p[0] * ratio / (1 - ratio) if ratio < 1 else np.inf
        boundary[0] = True
        ratios.append((0, -1, float(ratio)))
    if center is None:
        center = np.array([float(np.dot(p, X[:, 0]))])
    return DiscreteStationary(
        states=X.astype(np.int64), probs=p, center=np.atleast_1d(np.asarray(center, dtype=float)),
        n=n, truncation_mass_bound=float(tail), boundary=boundary, method="product-form", box=(lo, hi),
        tail_ratios=tuple(ratios))


def _box_states(chain, n, lo, hi):
    shape = tuple(int(h - l + 1) for l, h in zip(lo, hi))
    grids = np.indices(shape).reshape(len(shape), -1).T + np.asarray(lo)
    mask = chain.domain_mask(n, grids.astype(float))
    return grids[mask], shape, mask


def generator_matrix(chain, n, lo, hi):
    """Censored generator on the in-domain lattice points of the box ``[lo, hi]``.

    Returns ``(Q, states, boundary)`` where ``boundary`` flags states that lost a
    positive-rate jump to the truncation.
    """
    lo, hi = np.asarray(lo, dtype=np.int64), np.asarray(hi, dtype=np.int64)
    states, shape, mask = _box_states(chain, n, lo, hi)
    m = states.shape[0]
    if m < 2:
        raise BoxTooSmallError("truncation box contains fewer than two states")
    index = np.full(int(np.prod(shape)), -1, dtype=np.int64)
    index[np.flatnonzero(mask)] = np.arange(m)
    R = chain.lattice_rates(n, states.astype(float))
    if np.any(R < 0):
        raise ModelSpecError("negative rate inside the state space")
    rows, cols, vals = [], [], []
    boundary = np.zeros(m, dtype=bool)
    for k, ell in enumerate(chain.jumps):
        rate = R[:, k]
        tgt = states + ell
        inside = np.all((tgt >= lo) & (tgt <= hi), axis=1)
        active = rate > 0
        boundary |= active & ~inside
        use = active & inside
        if not np.any(use):
            continue
        flat = np.ravel_multi_index((tgt[use] - lo).T, shape)
        j = index[flat]
        if np.any(j < 0):
            raise ModelSpecError(f"jump {chain.jump_names[k]} has positive rate into a non-state")
        src = np.flatnonzero(use)
        keep = j != src
        rows.append(src[keep])
        cols.append(j[keep])
        vals.append(rate[use][keep])
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q.tocsr(), states, boundary


def _check_irreducible(Q, states):
    ncomp, labels = connected_components(Q, directed=True, connection="strong")
    if ncomp > 1:
        sizes = np.bincount(labels)
        blocks = []
        for c in np.argsort(sizes)[:5]:
            members = states[labels == c]
            blocks.append({"size": int(sizes[c]), "example": members[0].tolist()})
        raise IrreducibilityError(
            f"truncated chain has {ncomp} communicating classes; smallest: {blocks}", blocks=blocks)


def _solve_null(Q, pin):
    """Solve ``nu Q = 0`` with ``nu[pin] = 1`` by a sparse direct solve."""
    QT = Q.T.tocsc()
    m = Q.shape[0]
    keep = np.ones(m, dtype=bool)
    keep[pin] = False
    A = QT[keep][:, keep]
    rhs = -np.asarray(QT[keep][:, [pin]].todense()).ravel()
    x = spla.spsolve(A.tocsc(), rhs)
    nu = np.empty(m)
    nu[keep] = x
    nu[pin] = 1.0
    return nu


def _power_iteration(Q, tol=1e-14, max_iter=200000):
    Lam = 1.05 * float(np.max(-Q.diagonal()))
    P = (sp.identity(Q.shape[0], format="csr") + Q / Lam).T.tocsr()
    nu = np.full(Q.shape[0], 1.0 / Q.shape[0])
    for _ in range(max_iter):
        nxt = P @ nu
        nxt /= nxt.sum()
        if np.abs(nxt - nu).sum() < tol:
            return nxt
        nu = nxt
    raise ConvergenceError("uniformized power iteration did not converge", best=nu)


def chain_stationary_general(chain, n, box, center=None, check_irreducible=True):
    """Stationary law of the chain censored to the lattice box ``box = (lo, hi)``.

    Jumps leaving the box are removed; the balance equations are solved with one
    state pinned (the one carrying the unnormalised value 1) by sparse LU and
    then normalised; uniformised power iteration is the fallback.  The
    truncation bound is the mass of the boundary layer -- states that lost a
    jump to the censoring.
    """
    lo, hi = (np.atleast_1d(np.asarray(b)).astype(np.int64) for b in box)
    if lo.size != chain.dim or hi.size != chain.dim:
        raise ModelSpecError("box bounds must match the chain dimension")
    Q, states, boundary = generator_matrix(chain, n, lo, hi)
    if check_irreducible:
        _check_irreducible(Q, states)
    if center is None:
        ref = 0.5 * (lo + hi)
    else:
        ref = np.asarray(center, dtype=float)
    pin = int(np.argmin(np.linalg.norm(states - ref, axis=1)))
    method = "sparse-lu"
    try:
        nu = _solve_null(Q, pin)
        bad = (not np.all(np.isfinite(nu))) or nu.min() < -1e-10 * nu.max()
    except (RuntimeError, np.linalg.LinAlgError):
        bad = True
    if bad:
        nu = _power_iteration(Q)
        method = "power-iteration"
    nu = np.maximum(nu, 0.0)
    nu /= nu.sum()
    if center is None:
        center = nu @ states
    return DiscreteStationary(
        states=states, probs=nu, center=np.atleast_1d(np.asarray(center, dtype=float)), n=n,
        truncation_mass_bound=float(nu[boundary].sum()), boundary=boundary, method=method,
        box=(lo.tolist(), hi.tolist()))


def chain_stationary(sc, box=None, mass_tol=1e-10, max_doublings=4, solver="auto"):
    """Stationary law of a scaled chain with automatic box growth.

    Starting from :func:`default_box` (or ``box``), the box radius is doubled
    until the truncation mass bound drops below ``mass_tol``.
    """
    chain = sc.base
    if box is None:
        lo, hi = default_box(sc)
    else:
        lo, hi = _clip_box(chain, sc.n, *box)
    is_bd = chain.dim == 1 and set(chain.jumps[:, 0].tolist()) <= {-1, 1}
    use_bd = solver == "bd" or (solver == "auto" and is_bd)
    for _ in range(max_doublings + 1):
        if use_bd:
            dist = chain_stationary_bd(chain, sc.n, (int(lo[0]), int(hi[0])), center=sc.center)
        else:
            dist = chain_stationary_general(chain, sc.n, (lo, hi), center=sc.center)
        if dist.truncation_mass_bound <= mass_tol:
            return dist
        c = np.asarray(sc.center)
        lo, hi = _clip_box(chain, sc.n, np.floor(c - 2 * (c - lo)), np.ceil(c + 2 * (hi - c)))
    raise BoxTooSmallError(
        f"truncation mass {dist.truncation_mass_bound:.3e} still above {mass_tol:.1e} "
        f"after {max_doublings} doublings (box {dist.box})")


# ---------------------------------------------------------------------------
# diffusion side, one dimension


def symmetric_grid(radius, h):
    """Uniform grid on ``[-R, R]`` containing 0 at an even node index and ``4k + 1`` nodes,
    so Simpson's rule applies on the grid and on every other node."""
    k = int(np.ceil(radius / h))
    k += (-k) % 2
    return h * np.arange(-k, k + 1)


def _log_density_1d(dm, x):
    a = float(dm.avar0[0, 0])
    drift = lambda y, _owner: np.asarray(dm.drift_hat(y[..., None]), dtype=float)[..., 0]
    x = np.asarray(x, dtype=float)
    k0 = int(np.argmin(np.abs(x)))
    incr = interval_integrals(drift, x[:-1], x[1:])
    base = 0.0 if x[k0] == 0 else interval_integrals(drift, [0.0], [x[k0]])[0]
    cum = np.concatenate([[0.0], np.cumsum(incr)])
    return (2.0 / a) * (cum - cum[k0] + base)


def _tail_mass_1d(dm, x, p):
    """Exponential-tail estimate ``p(b) a / (2 |F_hat(b)|)`` beyond each edge."""
    a = float(dm.avar0[0, 0])
    F = np.asarray(dm.drift_hat(np.array([[x[0]], [x[-1]]])), dtype=float)[:, 0]
    out = 0.0
    for pb, Fb, sign in ((p[0], F[0], -1.0), (p[-1], F[-1], 1.0)):
        if sign * Fb >= 0:  # drift pushes outwards: mass not decaying
            return np.inf
        out += pb * a / (2.0 * abs(Fb))
    return out


def dm_stationary_1d(dm, grid, edge_tol=1e-12):
    """Stationary density of a scalar diffusion model on ``grid``.

    ``log p`` is the integral of ``2 F_hat / a`` computed interval by interval
    with adaptive Gauss-Legendre quadrature (kinks are resolved by bisection),
    then normalised with Simpson's rule (trapezoid if the grid is not uniform
    with an odd node count).  Raises :class:`BoxTooSmallError` when the tail
    mass beyond the grid exceeds ``edge_tol``.
    """
    if dm.dim != 1:
        raise ModelSpecError("dm_stationary_1d needs a scalar diffusion model")
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size < 3 or np.any(np.diff(x) <= 0):
        raise ValueError("grid must be an increasing 1-D array with >= 3 nodes")
    phi = _log_density_1d(dm, x)
    phi -= phi.max()
    p = np.exp(phi)
    try:
        w = weights_1d(x, "simpson")
        rule = "simpson"
    except ValueError:
        w = weights_1d(x, "trapezoid")
        rule = "trapezoid"
    Z = float(w @ p)
    p = p / Z
    tail = _tail_mass_1d(dm, x, p)
    if not tail <= edge_tol:
        raise BoxTooSmallError(f"density mass beyond the grid ~{tail:.3e} exceeds {edge_tol:.1e}; widen the grid")
    extras = {"tail_mass": float(tail)}
    if rule == "simpson" and (x.size - 1) % 4 == 0:
        xc = x[::2]
        pc = p[::2]
        # Simpson on h vs 2h: the error of the fine rule is ~ |fine - coarse| / 15
        extras["coarse"] = ContinuousStationary([xc], pc, weights_1d(xc, "simpson"), "simpson")
        extras["coarse_factor"] = 1.0 / 15.0
    return ContinuousStationary([x], p, w, rule, extras)


def auto_grid_1d(dm, h=0.01, edge_tol=1e-12, start_radius=6.0, max_radius=200.0):
    """Smallest symmetric grid (doubling from ``start_radius``) that passes the tail check."""
    R = start_radius
    while R <= max_radius:
        x = symmetric_grid(R, h)
        try:
            dm_stationary_1d(dm, x, edge_tol)
            return x
        except BoxTooSmallError:
            R *= 1.5
    raise BoxTooSmallError(f"no grid up to radius {max_radius} holds the density")


# ---------------------------------------------------------------------------
# diffusion side, two dimensions


def _mca_generator(drift, avar, ax, ay):
    """Monotone finite-difference generator on the tensor grid ``ax x ay``.

    Diffusion: diagonal neighbours carry ``|a12| / (2 hx hy)`` on the diagonal
    matching the sign of ``a12``, axial neighbours ``a_ii / (2 h_i^2) - |a12| /
    (2 hx hy)``.  Drift: central differences where the axial diffusion rate
    dominates ``|F_i| / (2 h_i)`` (second order), first-order upwinding elsewhere.
    Transitions leaving the box are dropped (no-flux boundary).
    """
    hx, hy = ax[1] - ax[0], ay[1] - ay[0]
    a11, a12, a22 = avar[0, 0], avar[0, 1], avar[1, 1]
    diag_rate = abs(a12) / (2 * hx * hy)
    dx = a11 / (2 * hx ** 2) - diag_rate
    dy = a22 / (2 * hy ** 2) - diag_rate
    if dx < 0 or dy < 0:
        raise ModelSpecError("grid aspect ratio breaks diagonal dominance of the diffusion matrix; "
                             "refine the coarser axis")
    nx, ny = ax.size, ay.size
    X, Y = np.meshgrid(ax, ay, indexing="ij")
    F = np.asarray(drift(np.stack([X, Y], axis=-1)), dtype=float)
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []

    def add(src_sl, dst_sl, rate):
        r = np.broadcast_to(rate, (nx, ny))[src_sl].ravel()
        s = idx[src_sl].ravel()
        t = idx[dst_sl].ravel()
        nz = r > 0
        rows.append(s[nz])
        cols.append(t[nz])
        vals.append(r[nz])

    def axial(Fi, d, h):
        central = d >= np.abs(Fi) / (2 * h)
        up = np.where(central, d + Fi / (2 * h), d + np.maximum(Fi, 0) / h)
        down = np.where(central, d - Fi / (2 * h), d + np.maximum(-Fi, 0) / h)
        return up, down, central

    upx, dnx, cx = axial(F[..., 0], dx, hx)
    upy, dny, cy = axial(F[..., 1], dy, hy)
    s = slice
    add((s(0, -1), s(None)), (s(1, None), s(None)), upx)
    add((s(1, None), s(None)), (s(0, -1), s(None)), dnx)
    add((s(None), s(0, -1)), (s(None), s(1, None)), upy)
    add((s(None), s(1, None)), (s(None), s(0, -1)), dny)
    if a12 > 0:
        add((s(0, -1), s(0, -1)), (s(1, None), s(1, None)), diag_rate)
        add((s(1, None), s(1, None)), (s(0, -1), s(0, -1)), diag_rate)
    elif a12 < 0:
        add((s(0, -1), s(1, None)), (s(1, None), s(0, -1)), diag_rate)
        add((s(1, None), s(0, -1)), (s(0, -1), s(1, None)), diag_rate)
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    m = nx * ny
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    upwinded = 1.0 - 0.5 * (cx.mean() + cy.mean())
    return Q.tocsr(), upwinded


def _fd_solve(dm, ax, ay, neg_tol):
    Q, upwinded = _mca_generator(dm.drift_hat, np.asarray(dm.avar0), ax, ay)
    pin = int(np.argmin(np.abs(ax))) * ay.size + int(np.argmin(np.abs(ay)))
    nu = _solve_null(Q, pin)
    if not np.all(np.isfinite(nu)):
        raise ConvergenceError("Fokker-Planck solve produced non-finite values")
    nu /= nu.sum()
    if nu.min() < -neg_tol:
        raise ConvergenceError(f"negative density cell {nu.min():.3e} beyond tolerance")
    nu = np.maximum(nu, 0.0)
    cell = (ax[1] - ax[0]) * (ay[1] - ay[0])
    return nu.reshape(ax.size, ay.size) / cell, upwinded


def _edge_mass(p, cell):
    return float((p[0].sum() + p[-1].sum() + p[:, 0].sum() + p[:, -1].sum()) * cell)


def dm_stationary_fd(dm, box, h, neg_tol=1e-8, edge_tol=1e-8, richardson=True):
    """Stationary density of a 2-D diffusion model by finite differences.

    ``box = ((x_lo, x_hi), (y_lo, y_hi))`` and the coarse spacing ``h`` (scalar
    or per axis).  The scheme is the monotone Markov-chain approximation of the
    generator (an M-matrix, so the discrete density is nonnegative); its
    stationary vector is found with one node pinned.  With ``richardson`` the
    solve is repeated on the half-spacing grid and the returned density is the
    extrapolation ``(4 p_{h/2} - p_h) / 3`` on the coarse nodes; the largest
    change is reported as ``refinement_error`` (L1).
    """
    if dm.dim != 2:
        raise ModelSpecError("dm_stationary_fd handles two-dimensional models only")
    hx, hy = np.broadcast_to(np.asarray(h, dtype=float), (2,))
    axes = [symmetric_grid_box(box[0], hx), symmetric_grid_box(box[1], hy)]
    p_c, upw = _fd_solve(dm, axes[0], axes[1], neg_tol)
    cell = hx * hy
    extras = {"h": [float(hx), float(hy)], "upwinded_fraction": float(upw)}
    if richardson:
        fine = [np.linspace(a[0], a[-1], 2 * a.size - 1) for a in axes]
        p_f, _ = _fd_solve(dm, fine[0], fine[1], neg_tol)
        p_fc = p_f[::2, ::2]
        p = (4.0 * p_fc - p_c) / 3.0
        # in the far tails extrapolation can overshoot below zero; keep the
        # (nonnegative) fine-grid value there
        extras["extrapolation_clipped"] = int(np.count_nonzero(p < 0))
        p = np.where(p < 0, p_fc, p)
        p /= p.sum() * cell
        extras["refinement_error"] = float(np.abs(p - p_fc / (p_fc.sum() * cell)).sum() * cell)
        extras["coarse"] = ContinuousStationary(axes, p_c, np.full(p_c.shape, cell), "mca-point")
        extras["coarse_factor"] = 1.0 / 3.0
    else:
        p = p_c
    tail = _edge_mass(p, cell)
    extras["tail_mass"] = tail
    if tail > edge_tol:
        raise BoxTooSmallError(f"density mass on the box edge {tail:.3e} exceeds {edge_tol:.1e}")
    return ContinuousStationary(axes, p, np.full(p.shape, cell), "mca-point", extras)


def symmetric_grid_box(interval, h):
    """Uniform grid of spacing ``h`` over ``interval`` that contains 0 as a node."""
    lo, hi = interval
    k_lo = int(np.floor(lo / h + 1e-9))
    k_hi = int(np.ceil(hi / h - 1e-9))
    return h * np.arange(k_lo, k_hi + 1)
