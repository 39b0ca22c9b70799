"""Lyapunov certification for diffusion-model families.

Candidates are :class:`LyapunovCandidate` objects -- a smooth ``V >= 1`` with
analytic first, second and (for the library families) third derivatives, plus
enough structure (polynomial degree) to certify behaviour beyond any finite
sampling radius.

The central check is the uniform Lyapunov condition

    A^n V(x) <= -delta V(x) + b 1{|x| <= K}      for every n in the grid,

verified on a sample grid inside ``outer_radius`` and by a ray-wise dominance
check outside it.  Companion checks cover sub-exponential growth, the
derivative/``V`` ratio used to transfer the condition to the chain, moment
bounds ``pi(|f|) <= b / delta`` and the finite-integral condition (attested
structurally for chains whose total jump rate grows at most linearly).
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from .diffusion import SmoothFunction, apply_generator
from .errors import CertificationError, HypothesisCheckError
from .rng import generator


@dataclass(frozen=True, eq=False)
class LyapunovCandidate:
    """A Lyapunov function candidate.

    ``degree`` is the polynomial degree for polynomial-type candidates (used by
    the tail checks) and ``None`` otherwise.  ``envelope = (c1, c2)`` may be
    declared for non-polynomial candidates.
    """

    V: SmoothFunction
    kind: str
    params: dict = field(default_factory=dict)
    degree: Optional[int] = None
    envelope: Optional[tuple] = None

    @property
    def dim(self):
        return self.V.dim

    @property
    def description(self):
        return self.V.description

    @property
    def polynomial(self):
        return self.degree is not None

    def value(self, x):
        return self.V.value(x)

    def grad(self, x):
        return self.V.grad(x)

    def hess(self, x):
        return self.V.hess(x)

    def third(self, x):
        return self.V.third(x)

    def scaled(self, alpha):
        """``alpha V`` (for invariance checks; ``alpha V >= 1`` is not enforced)."""
        V = self.V
        W = SmoothFunction(lambda x: alpha * V.value(x), lambda x: alpha * V.grad(x),
                           lambda x: alpha * V.hess(x),
                           (lambda x: alpha * V.third(x)) if V.has_third else None,
                           dim=V.dim, description=f"{alpha}*({V.description})")
        return LyapunovCandidate(W, self.kind, {**self.params, "scale": alpha}, self.degree, self.envelope)

    def to_dict(self):
        params = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v) for k, v in self.params.items()}
        return {"kind": self.kind, "description": self.description, "degree": self.degree, "params": params}


def radial_candidate(rho, m, dim=1):
    """``V(x) = rho + |x|^(2m)`` with analytic derivatives up to order three."""
    if rho < 1 or m < 1 or int(m) != m:
        raise ValueError("need rho >= 1 and a positive integer m")
    m = int(m)
    I = np.eye(dim)

    def r2(x):
        return np.einsum("...i,...i->...", x, x)

    def value(x):
        return rho + r2(x) ** m

    def grad(x):
        return (2 * m * r2(x) ** (m - 1))[..., None] * x

    def hess(x):
        s = r2(x)
        out = (2 * m * s ** (m - 1))[..., None, None] * I
        if m >= 2:
            out = out + (4 * m * (m - 1) * s ** (m - 2))[..., None, None] * np.einsum("...i,...j->...ij", x, x)
        return out

    def third(x):
        s = r2(x)
        out = np.zeros(x.shape + (dim, dim))
        if m >= 2:
            c = (4 * m * (m - 1) * s ** (m - 2))[..., None, None, None]
            out = out + c * (np.einsum("ij,...k->...ijk", I, x) + np.einsum("ik,...j->...ijk", I, x)
                             + np.einsum("jk,...i->...ijk", I, x))
        if m >= 3:
            c = (8 * m * (m - 1) * (m - 2) * s ** (m - 3))[..., None, None, None]
            out = out + c * np.einsum("...i,...j,...k->...ijk", x, x, x)
        return out

    V = SmoothFunction(value, grad, hess, third, dim=dim, description=f"{rho}+|x|^{2 * m}")
    return LyapunovCandidate(V, "radial", {"rho": rho, "m": m}, degree=2 * m)


def quadratic_candidate(Q, rho=1.0, m=1):
    """``V(x) = (rho + x'Qx)^m`` for symmetric positive definite ``Q``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Q = 0.5 * (Q + Q.T)
    if np.linalg.eigvalsh(Q)[0] <= 0:
        raise ValueError("Q must be positive definite")
    if rho < 1:
        raise ValueError("need rho >= 1 so that V >= 1")
    d = Q.shape[0]
    base = SmoothFunction(
        lambda x: rho + np.einsum("...i,ij,...j->...", x, Q, x),
        lambda x: 2 * x @ Q,
        lambda x: np.broadcast_to(2 * Q, x.shape[:-1] + (d, d)).copy(),
        lambda x: np.zeros(x.shape + (d, d)),
        dim=d,
        description=f"{rho}+x'Qx",
    )
    cand = LyapunovCandidate(base, "quadratic", {"Q": Q, "rho": rho, "m": 1}, degree=2)
    return power_candidate(cand, m) if m != 1 else cand


def power_candidate(cand, m):
    """``V_m = V^m`` with derivatives composed by the chain rule.

    The result must be re-certified (with :func:`check_ul`); nothing is inherited.
    """
    if m < 1 or int(m) != m:
        raise ValueError("m must be a positive integer")
    m = int(m)
    if m == 1:
        return cand
    g = cand.V

    def value(x):
        return g.value(x) ** m

    def grad(x):
        return (m * g.value(x) ** (m - 1))[..., None] * g.grad(x)

    def hess(x):
        v, dg, H = g.value(x), g.grad(x), g.hess(x)
        return ((m * v ** (m - 1))[..., None, None] * H
                + (m * (m - 1) * v ** (m - 2))[..., None, None] * np.einsum("...i,...j->...ij", dg, dg))

    third = None
    if g.has_third:
        def third(x):
            v, dg, H, T = g.value(x), g.grad(x), g.hess(x), g.third(x)
            sym = (np.einsum("...ij,...k->...ijk", H, dg) + np.einsum("...ik,...j->...ijk", H, dg)
                   + np.einsum("...jk,...i->...ijk", H, dg))
            out = (m * v ** (m - 1))[..., None, None, None] * T
            out = out + (m * (m - 1) * v ** (m - 2))[..., None, None, None] * sym
            if m >= 3:
                out = out + (m * (m - 1) * (m - 2) * v ** (m - 3))[..., None, None, None] * np.einsum(
                    "...i,...j,...k->...ijk", dg, dg, dg)
            return out

    V = SmoothFunction(value, grad, hess, third, dim=g.dim, description=f"({g.description})^{m}")
    params = {**cand.params, "m": cand.params.get("m", 1) * m, "base": cand.description}
    degree = None if cand.degree is None else cand.degree * m
    return LyapunovCandidate(V, cand.kind, params, degree)


def generic_candidate(V: SmoothFunction, envelope=None):
    """Wrap an arbitrary smooth function; tail checks then rely on ``envelope``."""
    return LyapunovCandidate(V, "generic", {}, degree=None, envelope=envelope)


# ---------------------------------------------------------------------------
# sampling helpers


def _as_points(grid, dim):
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[-1] != dim:
        raise ValueError(f"grid points have dimension {g.shape[-1]}, expected {dim}")
    return g


def ball_grid(radius, h, dim):
    """Tensor grid of spacing ``h`` restricted to the closed ball of ``radius``."""
    ax = h * np.arange(-int(np.ceil(radius / h)), int(np.ceil(radius / h)) + 1)
    pts = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    return pts[np.linalg.norm(pts, axis=1) <= radius + 1e-12]


def _directions(dim, count=64, seed=0):
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    E = np.eye(dim)
    dirs = [E, -E]
    signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * dim), indexing="ij")).reshape(dim, -1).T
    dirs.append(signs / np.sqrt(dim))
    rnd = generator(seed, 29).standard_normal((count, dim))
    dirs.append(rnd / np.linalg.norm(rnd, axis=1, keepdims=True))
    return np.concatenate(dirs)


def _spacing(pts):
    if pts.shape[0] < 2:
        return 0.0
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(np.max(d[:, 1]))


# ---------------------------------------------------------------------------
# uniform Lyapunov condition


@dataclass
class ULCertificate:
    delta: float
    b: float
    K: float
    n_grid: list
    margin: float
    candidate: dict
    outer_radius: float
    tail: dict
    evidence: str
    per_n: list = field(default_factory=list)
    attestations: dict = field(default_factory=dict)

    @property
    def moment_bound(self):
        return self.b / self.delta

    def to_dict(self):
        return {
            "schema": "steadydiff-ul-certificate/1",
            "candidate": self.candidate,
            "delta": self.delta,
            "b": self.b,
            "K": self.K,
            "b_over_delta": self.moment_bound,
            "n_grid": [float(v) for v in self.n_grid],
            "margin": self.margin,
            "outer_radius": self.outer_radius,
            "tail": self.tail,
            "evidence": self.evidence,
            "per_n": self.per_n,
            "attestations": self.attestations,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _ul_terms(dm, cand, pts):
    return apply_generator(dm, cand.V, pts), cand.value(pts)


def _tail_check(dm_family, cand, delta, outer_radius, doublings=24):
    """Normalised margin ``-(A V + delta V) / V`` along rays at radii ``R 2^k``.

    Passing requires a positive margin at every probed radius and, for
    polynomial candidates, a margin that does not decay along the last
    doublings (the leading terms dominate).  Returns ``(ok, info)``.
    """
    dirs = _directions(cand.dim)
    radii = outer_radius * 2.0 ** np.arange(doublings + 1)
    worst = np.inf
    worst_at = None
    last = []
    for dm in dm_family:
        pts = radii[:, None, None] * dirs[None, :, :]
        with np.errstate(over="ignore", invalid="ignore"):
            AV, V = _ul_terms(dm, cand, pts)
            q = -(AV + delta * V) / V
        if not np.all(np.isfinite(q)):
            k = np.argwhere(~np.isfinite(q))[0]
            return False, {"reason": "non-finite generator value", "n": float(dm.n),
                           "direction": dirs[k[1]].tolist(), "radius": float(radii[k[0]])}
        k = np.unravel_index(np.argmin(q), q.shape)
        if q[k] < worst:
            worst, worst_at = float(q[k]), (float(dm.n), dirs[k[1]].tolist(), float(radii[k[0]]))
        last.append(q[-3:])
    info = {"min_normalised_margin": worst, "radii": [float(radii[0]), float(radii[-1])],
            "directions": int(dirs.shape[0])}
    if worst <= 0:
        info.update(reason="generator term dominates -delta V", n=worst_at[0], direction=worst_at[1],
                    radius=worst_at[2])
        return False, info
    if cand.polynomial:
        # leading-order comparison: the normalised margin must settle, not decay to zero
        tails = np.concatenate([t.reshape(3, -1) for t in last], axis=1)
        decaying = np.any((tails[2] < 0.6 * tails[1]) & (tails[1] < 0.6 * tails[0]))
        if decaying:
            info.update(reason="normalised margin decays along a ray")
            return False, info
    return True, info


def _certify_at(dm_family, cand, delta, pts, spacing):
    """Return ``(K, b, margin, per_n)`` for one delta, or ``None`` if a violation reaches the edge."""
    r = np.linalg.norm(pts, axis=1)
    rmax = r.max()
    K, b, margin, per_n = 0.0, -np.inf, np.inf, []
    for dm in dm_family:
        AV, V = _ul_terms(dm, cand, pts)
        G = AV + delta * V
        viol = G > 0
        if np.any(viol):
            kv = int(np.argmax(np.where(viol, r, -1.0)))
            if r[kv] > rmax - spacing:
                return None
            Kn = _refine_radius(dm, cand, delta, pts[kv], spacing)
        else:
            Kn = 0.0
        inside = r <= Kn
        bn = float(G[inside].max()) if np.any(inside) else float(G[np.argmin(r)])
        out = r > Kn
        mn = float(np.min(-G[out])) if np.any(out) else np.inf
        per_n.append({"n": float(dm.n), "K": Kn, "b": bn, "margin": mn})
        K, b, margin = max(K, Kn), max(b, bn), min(margin, mn)
    return K, b, margin, per_n


def _refine_radius(dm, cand, delta, x, spacing):
    """Bisect along the ray through ``x`` for the outermost zero of ``A V + delta V``."""
    r0 = np.linalg.norm(x)
    u = x / r0 if r0 > 0 else np.eye(cand.dim)[0]
    G = lambda r: float((apply_generator(dm, cand.V, (r * u)[None]) + delta * cand.value((r * u)[None]))[0])
    lo, hi = r0, r0 + spacing
    if G(hi) > 0:
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if G(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def check_ul(dm_family, cand, delta_trial, outer_radius, grid=None, maximize_delta=False, h=None):
    """Certify the uniform Lyapunov condition for every model in ``dm_family``.

    ``grid`` holds sample points (``(k, d)`` or a 1-D array) covering the ball
    of ``outer_radius``; by default a tensor grid of spacing ``h`` (``outer /
    400`` in 1-D, ``outer / 40`` otherwise).  ``delta_trial`` is used if it
    certifies; otherwise delta is bisected downwards on ``[1e-4,
    delta_trial]``.  With ``maximize_delta`` the largest certifiable delta in
    ``[delta_trial, 2 delta_trial]`` is located by bisection.  ``K`` is the
    outermost crossing of ``A V + delta V`` (refined by bisection along the
    violating ray) and ``b`` the maximum of ``A V + delta V`` over the ball --
    single values for the whole family.

    Raises :class:`CertificationError` with the offending direction when the
    tail dominance check fails at every admissible delta.
    """
    dm_family = list(dm_family)
    if not dm_family:
        raise ValueError("empty model family")
    d = cand.dim
    if grid is None:
        if h is None:
            h = outer_radius / (400.0 if d == 1 else 40.0)
        pts = ball_grid(outer_radius, h, d)
    else:
        pts = _as_points(grid, d)
        pts = pts[np.linalg.norm(pts, axis=1) <= outer_radius + 1e-12]
    spacing = _spacing(pts)

    def attempt(delta):
        ok, tail = _tail_check(dm_family, cand, delta, outer_radius)
        if not ok:
            return None, tail
        res = _certify_at(dm_family, cand, delta, pts, spacing)
        if res is None:
            return None, {**tail, "reason": "violation reaches the sampling radius"}
        return res, tail

    delta = float(delta_trial)
    res, tail = attempt(delta)
    if res is None:
        lo, hi, best = 1e-4, delta, None
        res_lo, tail_lo = attempt(lo)
        if res_lo is None:
            raise CertificationError(
                f"UL not certifiable for candidate {cand.description}: {tail_lo.get('reason')}",
                counterexample=tail_lo)
        best = (lo, res_lo, tail_lo)
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            r_mid, t_mid = attempt(mid)
            if r_mid is None:
                hi = mid
            else:
                lo, best = mid, (mid, r_mid, t_mid)
        delta, res, tail = best
    elif maximize_delta:
        lo, hi, best = delta, 2.0 * delta, (delta, res, tail)
        r_hi, t_hi = attempt(hi)
        if r_hi is not None:
            best = (hi, r_hi, t_hi)
        else:
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                r_mid, t_mid = attempt(mid)
                if r_mid is None:
                    hi = mid
                else:
                    lo, best = mid, (mid, r_mid, t_mid)
        delta, res, tail = best
    K, b, margin, per_n = res
    b = max(b, np.finfo(float).tiny)
    evidence = "grid+structural-tail" if cand.polynomial else "finite-evidence"
    return ULCertificate(delta=float(delta), b=float(b), K=float(K), n_grid=[dm.n for dm in dm_family],
                         margin=float(margin), candidate=cand.to_dict(), outer_radius=float(outer_radius),
                         tail=tail, evidence=evidence, per_n=per_n)


def recheck(cert, dm, cand, grid=None, h=None):
    """Verify a certificate's ``(delta, b, K)`` for one model: ``A V + delta V <= b 1{|x|<=K}``."""
    pts = ball_grid(cert.outer_radius, h or cert.outer_radius / 400.0, cand.dim) if grid is None \
        else _as_points(grid, cand.dim)
    G = apply_generator(dm, cand.V, pts) + cert.delta * cand.value(pts)
    r = np.linalg.norm(pts, axis=1)
    ok_out = np.all(G[r > cert.K * (1 + 1e-9)] <= 1e-12 * np.abs(cand.value(pts[r > cert.K * (1 + 1e-9)])))
    ok_in = np.all(G[r <= cert.K] <= cert.b * (1 + 1e-12) + 1e-12)
    tail_ok, _ = _tail_check([dm], cand, cert.delta, cert.outer_radius)
    return bool(ok_out and ok_in and tail_ok)


# ---------------------------------------------------------------------------
# companions


@dataclass
class SubexpConstants:
    c1: float
    c2: float
    c3: float
    method: str

    def to_dict(self):
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3, "method": self.method}


def _radial_profile(cand, radii):
    """Sup over sampled directions of ``|DV| v |D^2V|`` at each radius."""
    dirs = _directions(cand.dim)
    pts = radii[:, None, None] * dirs[None]
    with np.errstate(over="ignore", invalid="ignore"):
        g = np.linalg.norm(cand.grad(pts), axis=-1)
        H = np.linalg.norm(cand.hess(pts), ord=2, axis=(-2, -1)) if cand.dim > 1 else np.abs(cand.hess(pts)[..., 0, 0])
    return np.max(np.maximum(g, H), axis=1)


def check_subexponential(cand, c2=1.0, radius=200.0, samples=20001):
    """Constants ``c1, c2, c3`` with ``|DV| v |D^2V| <= c1 exp(c2 |x|)`` and
    ``sup_{|y|<=1} V(x+y)/V(x) <= c3``.

    Polynomial families are handled structurally: any ``c2 > 0`` works, ``c1``
    is the (radial) maximum of the envelope ratio and ``c3`` the exact
    one-dimensional supremum of the unit-ball ratio (for ``(rho + x'Qx)^m``
    through ``sqrt(x+y)'Q(x+y) <= sqrt(x'Qx) + sqrt(lambda_max)``).
    Non-polynomial candidates need a declared envelope, which is checked by
    sampling; exceeding it raises :class:`HypothesisCheckError`.
    """
    s = np.linspace(0.0, radius, samples)
    if cand.polynomial:
        prof = _radial_profile(cand, s)
        c1 = float(np.max(prof * np.exp(-c2 * s))) * (1 + 1e-9)
        rho, m = cand.params.get("rho", 1.0), cand.params.get("m", 1)
        if cand.kind == "radial":
            ratio = lambda t: (rho + (t + 1) ** (2 * m)) / (rho + t ** (2 * m))
        elif cand.kind == "quadratic":
            Q = np.asarray(cand.params["Q"])
            lmax = np.linalg.eigvalsh(Q)[-1]
            # t plays the role of sqrt(x'Qx)
            ratio = lambda t: ((rho + (t + np.sqrt(lmax)) ** 2) / (rho + t ** 2)) ** m
        else:
            raise HypothesisCheckError(f"no structural unit-ball bound for kind {cand.kind!r}")
        # the ratio tends to 1 at infinity; refine the sampled maximum between its neighbours
        vals = ratio(s)
        k = int(np.argmax(vals))
        lo, hi = s[max(k - 1, 0)], s[min(k + 1, samples - 1)]
        res = minimize_scalar(lambda t: -ratio(t), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        c3 = max(float(vals[k]), float(-res.fun)) * (1 + 1e-9)
        return SubexpConstants(c1, c2, c3, "structural-polynomial")
    if cand.envelope is None:
        raise HypothesisCheckError(f"candidate {cand.description} declares no growth envelope")
    c1, c2 = cand.envelope
    prof = _radial_profile(cand, s[: samples // 10])
    with np.errstate(over="ignore", invalid="ignore"):
        bad = ~(prof <= c1 * np.exp(c2 * s[: samples // 10]))
    if np.any(bad):
        r = float(s[: samples // 10][np.argmax(bad)])
        raise HypothesisCheckError(f"declared envelope c1 e^(c2|x|) exceeded at |x| = {r:.4g}")
    # unit-ball ratio by sampling shifts
    dirs = _directions(cand.dim)
    xs = s[: samples // 10: 10][:, None, None] * dirs[None]
    with np.errstate(over="ignore", invalid="ignore"):
        base = cand.value(xs)
        c3 = 1.0
        for y in dirs:
            q = cand.value(xs + y) / base
            if not np.all(np.isfinite(q)):
                raise HypothesisCheckError("unit-ball ratio is not finite")
            c3 = max(c3, float(q.max()))
    return SubexpConstants(float(c1), float(c2), c3, "sampled-envelope")


@dataclass
class TransferConstant:
    C: float
    argmax: list
    method: str

    def to_dict(self):
        return {"C": self.C, "argmax": self.argmax, "method": self.method}


def _transfer_ratio(cand, pts):
    with np.errstate(over="ignore", invalid="ignore"):
        g = np.linalg.norm(cand.grad(pts), axis=-1)
        H = np.sqrt(np.sum(cand.hess(pts) ** 2, axis=(-2, -1)))
        T = np.sqrt(np.sum(cand.third(pts) ** 2, axis=(-3, -2, -1)))
        return (g + H + T) * (1 + np.linalg.norm(pts, axis=-1)) / cand.value(pts)


def check_dm_to_ctmc(cand, grid, doublings=12):
    """Smallest ``C`` with ``(|DV| + |D^2V| + |D^3V|)(1 + |x|) <= C V(x)`` on ``grid``.

    Norms are Euclidean/Frobenius.  Beyond the grid the ratio is sampled along
    rays at doubling radii; it must stay finite and stop growing (automatic for
    polynomials, where the three terms have lower degree than ``V``).
    """
    if not cand.V.has_third:
        raise HypothesisCheckError("candidate has no third derivative")
    pts = _as_points(grid, cand.dim)
    q = _transfer_ratio(cand, pts)
    if not np.all(np.isfinite(q)):
        k = int(np.argmax(~np.isfinite(q)))
        raise CertificationError("derivative ratio not finite", counterexample=pts[k].tolist())
    k = int(np.argmax(q))
    C, arg = float(q[k]), pts[k].tolist()
    R = max(float(np.max(np.linalg.norm(pts, axis=1))), 1.0)
    dirs = _directions(cand.dim)
    radii = R * 2.0 ** np.arange(1, doublings + 1)
    tail = np.array([np.max(_transfer_ratio(cand, r * dirs)) for r in radii])
    if not np.all(np.isfinite(tail)) or tail[-1] > 1.05 * tail[-2] and tail[-2] > 1.05 * tail[-3]:
        j = int(np.argmax(~np.isfinite(tail))) if not np.all(np.isfinite(tail)) else len(tail) - 1
        raise CertificationError(
            f"(|DV|+|D2V|+|D3V|)(1+|x|)/V grows without bound (radius {radii[j]:.3g})",
            counterexample={"radius": float(radii[j]), "ratio": float(tail[j])})
    if np.max(tail) > C:
        j = int(np.argmax(tail))
        C, arg = float(tail[j]), (radii[j] * dirs[0]).tolist()
    return TransferConstant(C * (1 + 1e-12), arg, "grid+ray-doubling")


def moment_bound_check(cert, pi_family, f, tol=1e-8):
    """``max_n pi^n(|f|) <= b / delta + tol`` over the supplied stationary laws."""
    from .steady import moment

    vals = [moment(pi, lambda x: np.abs(f(x))).value for pi in pi_family]
    worst = max(vals)
    return {"bound": cert.moment_bound, "values": vals, "max": worst, "verdict": bool(worst <= cert.moment_bound + tol)}


def attest_finite_integral(chain, n, doublings=10):
    """Structural attestation of the per-n finite-integral condition.

    When the total jump rate grows at most linearly in ``|x|`` the chain is
    dominated by a linear-birth process, all of whose moments are finite at
    every time; then every polynomial ``V`` satisfies the condition.  The
    total rate over ``1 + |x|`` is probed along rays in the domain at doubling
    radii; a bounded profile yields ``attested``, otherwise ``unverified``.
    """
    dirs = _directions(chain.dim)
    radii = 2.0 ** np.arange(doublings + 1) * max(1.0, np.sqrt(n))
    profile = []
    for r in radii:
        X = np.round(r * dirs)
        mask = chain.domain_mask(n, X)
        if not np.any(mask):
            continue
        rates = chain.lattice_rates(n, X[mask]).sum(axis=-1)
        profile.append(float(np.max(rates / (1 + np.linalg.norm(X[mask], axis=1)))))
    if len(profile) >= 3 and profile[-1] <= 1.05 * max(profile[:-1]):
        return {"status": "attested", "reason": "total jump rate grows at most linearly",
                "rate_profile": profile}
    return {"status": "unverified", "reason": "no linear bound on the total jump rate found",
            "rate_profile": profile}


# ---------------------------------------------------------------------------
# quadratic candidate search


def _linear_pieces(drift, dim, probes=64, seed=0):
    """Distinct Jacobians of a piecewise-linear drift, sampled at random points."""
    rng = generator(seed, 31)
    pts = 3.0 * rng.standard_normal((probes, dim))
    mats = []
    h = 1e-6
    for x in pts:
        J = np.empty((dim, dim))
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = h
            J[:, j] = (np.asarray(drift(x + e)) - np.asarray(drift(x - e))) / (2 * h)
        if not any(np.allclose(J, M, atol=1e-5) for M in mats):
            mats.append(J)
    return mats


def search_quadratic_candidate(dm_family, rho=1.0, m=1, delta_trial=0.5, outer_radius=8.0, h=None,
                               weights=(0.25, 0.5, 1.0, 2.0, 4.0)):
    """Search ``Q`` so that ``(rho + x'Qx)^m`` certifies UL for the family.

    Candidate ``Q``: identity, the solutions of ``A'Q + QA = -I`` for each
    sampled linear piece ``A`` of the drift (skipping unstable pieces), and
    weighted sums of those.  The first ``Q`` whose candidate certifies is
    returned as ``(candidate, certificate)``; :class:`CertificationError` if
    none does.
    """
    dm_family = list(dm_family)
    d = dm_family[0].dim
    pieces = _linear_pieces(dm_family[-1].drift_hat, d)
    lyap = []
    for A in pieces:
        if np.max(np.linalg.eigvals(A).real) >= 0:
            continue
        P = solve_continuous_lyapunov(A.T, -np.eye(d))
        P = 0.5 * (P + P.T)
        if np.linalg.eigvalsh(P)[0] > 0:
            lyap.append(P / np.linalg.norm(P, 2))
    Qs = [np.eye(d)] + lyap
    if len(lyap) >= 2:
        for w in weights:
            Qs.append(lyap[0] + w * sum(lyap[1:]))
    tried = []
    for Q in Qs:
        cand = quadratic_candidate(Q, rho=rho, m=m)
        try:
            cert = check_ul(dm_family, cand, delta_trial, outer_radius, h=h)
        except CertificationError as exc:
            tried.append({"Q": Q.tolist(), "reason": str(exc)})
            continue
        cert.attestations["search"] = {"tried": tried, "pieces": [A.tolist() for A in pieces]}
        return cand, cert
    raise CertificationError("no quadratic-form candidate certified UL", counterexample=tried)
