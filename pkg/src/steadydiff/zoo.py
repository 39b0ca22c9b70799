"""Ready-made queueing families and their closed forms.

* Erlang-A (M/M/N+M): birth rate ``n``, death rate ``mu (x ^ N) + theta (x - N)^+``.
* M/M/infinity: the Erlang-A family with ``theta == mu``.
* M/PH/N+M: phase-type service with phases entered at phase 1, exponential
  patience, Halfin-Whitt staffing ``N = n / mu + beta sqrt(n)``.

The closed-form drift / diffusion functions here are written from the matrix
expressions directly and share no code with the jump-based derivation in
:mod:`steadydiff.chain`; agreement of the two is a test.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .chain import ChainFamily
from .errors import ModelSpecError


def _staffing_fn(staffing):
    if callable(staffing):
        return staffing
    return lambda n: float(staffing)


@dataclass(frozen=True)
class ErlangAParams:
    mu: float
    theta: float
    staffing: Union[Callable, float] = None  # N^n; default N^n = n

    def __post_init__(self):
        if not self.mu > 0:
            raise ModelSpecError("service rate mu must be positive")
        if not self.theta > 0:
            raise ModelSpecError("Erlang-A requires a positive patience rate theta")
        if self.staffing is None:
            object.__setattr__(self, "staffing", lambda n: float(n))

    def servers(self, n):
        return float(_staffing_fn(self.staffing)(n))


def build_erlang_a(p: ErlangAParams):
    """Birth-death chain on Z_+, extended to the real line as written."""
    mu, theta = p.mu, p.theta

    def rates(n, X):
        x = np.asarray(X, dtype=float)[..., 0]
        N = p.servers(n)
        birth = np.full_like(x, float(n))
        death = mu * np.minimum(x, N) + theta * np.maximum(x - N, 0.0)
        return np.stack([birth, death], axis=-1)

    return ChainFamily(
        dim=1,
        jumps=np.array([[1], [-1]]),
        rates=rates,
        in_domain=lambda n, X: np.asarray(X)[..., 0] >= 0,
        lower=lambda n: np.array([0.0]),
        upper=lambda n: np.array([np.inf]),
        jump_names=("arrival", "departure"),
        name="erlang_a",
        meta={"mu": mu, "theta": theta},
    )


def erlang_a_center(p: ErlangAParams, n):
    """Unique zero of ``n - mu (x ^ N) - theta (x - N)^+``."""
    N = p.servers(n)
    if n <= p.mu * N:
        return n / p.mu
    return N + (n - p.mu * N) / p.theta


def erlang_a_drift_hat(p: ErlangAParams, n, x):
    """Scaled Erlang-A drift written through the shifted coordinate ``x + (c - N)/sqrt(n)``."""
    x = np.asarray(x, dtype=float)
    c, N = erlang_a_center(p, n), p.servers(n)
    s = (c - N) / np.sqrt(n)
    g, g0 = x + s, s
    neg = lambda v: np.maximum(-v, 0.0)
    pos = lambda v: np.maximum(v, 0.0)
    return p.mu * (neg(g) - neg(g0)) - p.theta * (pos(g) - pos(g0))


def build_mm_inf(mu=1.0):
    """M/M/infinity with arrival rate ``n`` and per-customer service rate ``mu``."""
    chain = build_erlang_a(ErlangAParams(mu=mu, theta=mu))
    return ChainFamily(
        dim=1,
        jumps=chain.jumps,
        rates=chain.rates,
        in_domain=chain.in_domain,
        lower=chain.lower,
        upper=chain.upper,
        jump_names=chain.jump_names,
        name="mm_inf",
        meta={"mu": mu},
    )


@dataclass(frozen=True)
class PhaseTypeParams:
    """Phase-type service (entered at phase 1) with exponential patience.

    ``routing[k, j]`` is the probability of moving from phase k to phase j on
    completing phase k; ``1 - routing[k].sum()`` is the exit probability.
    """

    nu: tuple
    routing: tuple
    theta: float
    beta: float = 0.0  # staffing offset: N^n = n / mu + beta sqrt(n), rounded

    def __post_init__(self):
        nu = np.atleast_1d(np.asarray(self.nu, dtype=float))
        P = np.atleast_2d(np.asarray(self.routing, dtype=float))
        if nu.ndim != 1 or P.shape != (nu.size, nu.size):
            raise ModelSpecError("routing must be an I x I matrix matching nu")
        if np.any(nu <= 0):
            raise ModelSpecError("phase rates must be positive")
        if np.any(P < 0) or np.any(P.sum(axis=1) > 1 + 1e-12):
            raise ModelSpecError("routing must be substochastic")
        if not self.theta > 0:
            raise ModelSpecError("patience rate theta must be positive")
        object.__setattr__(self, "nu", tuple(nu.tolist()))
        object.__setattr__(self, "routing", tuple(map(tuple, P.tolist())))

    @property
    def phases(self):
        return len(self.nu)

    @property
    def nu_arr(self):
        return np.asarray(self.nu)

    @property
    def P(self):
        return np.asarray(self.routing)

    @cached_property
    def derived(self):
        return ph_derived(self)

    def offered_load(self, n):
        return n / self.derived.mu

    def servers(self, n):
        """N^n = n/mu + beta sqrt(n), rounded to the nearest integer."""
        return float(np.rint(self.offered_load(n) + self.beta * np.sqrt(n)))

    def effective_beta(self, n):
        return (self.servers(n) - self.offered_load(n)) / np.sqrt(n)


@dataclass(frozen=True)
class PhDerived:
    R: np.ndarray
    mu: float
    gamma: np.ndarray


def ph_derived(p: PhaseTypeParams):
    """``R = (I - P') diag(nu)``, ``1/mu = e' R^{-1} p``, ``gamma = mu R^{-1} p``."""
    I = p.phases
    R = (np.eye(I) - p.P.T) @ np.diag(p.nu_arr)
    e1 = np.zeros(I)
    e1[0] = 1.0
    try:
        Rinv_p = np.linalg.solve(R, e1)
    except np.linalg.LinAlgError:
        raise ModelSpecError("R = (I - P') diag(nu) is singular") from None
    if np.linalg.cond(R) > 1e14:
        raise ModelSpecError("R = (I - P') diag(nu) is numerically singular")
    mean = float(Rinv_p.sum())
    mu = 1.0 / mean
    gamma = Rinv_p / mean
    if abs(gamma.sum() - 1.0) > 1e-12:
        raise ModelSpecError(f"gamma does not sum to one: {gamma.sum()!r}")
    return PhDerived(R=R, mu=mu, gamma=gamma)


def build_mphn(p: PhaseTypeParams):
    """M/PH/N+M chain on ``(queue + phase-1 count, phase-2 count, ..., phase-I count)``.

    Jumps: arrivals ``+e1`` at rate ``n``; phase k -> j routing ``-e_k + e_j`` at
    ``nu_k s_k P_kj``; exits ``-e_k`` at ``nu_k s_k (1 - sum_j P_kj)``; abandonment
    ``-e1`` at ``theta (e'x - N)^+``, where the in-service counts are
    ``s_1 = x_1 - (e'x - N)^+`` and ``s_k = x_k`` for k > 1.
    """
    I = p.phases
    nu, P = p.nu_arr, p.P
    jumps, names, kinds = [np.eye(I, dtype=int)[0]], ["arrival"], [("arrival",)]
    for k in range(I):
        for j in range(I):
            if j != k and P[k, j] > 0:
                v = np.zeros(I, dtype=int)
                v[k] -= 1
                v[j] += 1
                jumps.append(v)
                names.append(f"route_{k + 1}_{j + 1}")
                kinds.append(("route", k, j))
        exit_prob = 1.0 - P[k].sum()
        if exit_prob > 1e-15:
            v = np.zeros(I, dtype=int)
            v[k] -= 1
            jumps.append(v)
            names.append(f"exit_{k + 1}")
            kinds.append(("exit", k, exit_prob))
    v = np.zeros(I, dtype=int)
    v[0] -= 1
    jumps.append(v)
    names.append("abandon")
    kinds.append(("abandon",))

    def in_service(n, X):
        X = np.asarray(X, dtype=float)
        N = p.servers(n)
        queue = np.maximum(X.sum(axis=-1) - N, 0.0)
        s = X.copy()
        s[..., 0] = X[..., 0] - queue
        return s, queue

    def rates(n, X):
        s, queue = in_service(n, X)
        cols = []
        for kind in kinds:
            if kind[0] == "arrival":
                cols.append(np.full(s.shape[:-1], float(n)))
            elif kind[0] == "route":
                _, k, j = kind
                cols.append(nu[k] * s[..., k] * P[k, j])
            elif kind[0] == "exit":
                _, k, prob = kind
                cols.append(nu[k] * s[..., k] * prob)
            else:
                cols.append(p.theta * queue)
        return np.stack(cols, axis=-1)

    def in_domain(n, X):
        X = np.asarray(X)
        ok = np.all(X >= 0, axis=-1)
        if I > 1:
            ok &= X[..., 1:].sum(axis=-1) <= p.servers(n)
        return ok

    def upper(n):
        N = p.servers(n)
        return np.array([np.inf] + [N] * (I - 1))

    return ChainFamily(
        dim=I,
        jumps=np.array(jumps),
        rates=rates,
        in_domain=in_domain,
        lower=lambda n: np.zeros(I),
        upper=upper,
        jump_names=tuple(names),
        name="mphn",
        meta={"nu": list(p.nu), "routing": [list(r) for r in p.routing], "theta": p.theta, "beta": p.beta},
    )


def mphn_center(p: PhaseTypeParams, n):
    """Fluid stationary point of the M/PH/n+M chain.

    With effective staffing offset ``beta_n >= 0`` this is ``(n / mu) gamma``.
    When rounding leaves fewer servers than the offered load (``beta_n < 0``)
    a queue persists in the fluid limit; the drift is then linear,
    ``-R x + v (e'x - beta_n)`` with ``v = (R - theta I) e_1``, and its zero is
    shifted from ``(n / mu) gamma`` by ``sqrt(n) x*``.
    """
    d = p.derived
    base = p.offered_load(n) * d.gamma
    beta = p.effective_beta(n)
    if beta >= 0:
        return base
    v = (d.R - p.theta * np.eye(p.phases))[:, 0]
    shift = np.linalg.solve(-d.R + np.outer(v, np.ones(p.phases)), v * beta)
    return base + np.sqrt(n) * shift


def _center_shift(p: PhaseTypeParams, n):
    """``(center - (n/mu) gamma) / sqrt(n)``; zero unless the staffing offset is negative."""
    return (mphn_center(p, n) - p.offered_load(n) * p.derived.gamma) / np.sqrt(n)


def mphn_drift_hat(p: PhaseTypeParams, n, x):
    """Matrix form ``-R y + (R - theta I) p (e'y - beta)^+`` with ``y`` measured from ``(n/mu) gamma``.

    ``x`` is measured from :func:`mphn_center`, so ``y = x + s`` with the centre
    shift ``s`` (zero for a non-negative staffing offset).  With zero offset this
    is ``-R x + (R - theta I) p (e'x)^+`` and does not depend on ``n``.
    """
    d = p.derived
    x = np.asarray(x, dtype=float) + _center_shift(p, n)
    e1 = np.zeros(p.phases)
    e1[0] = 1.0
    col = (d.R - p.theta * np.eye(p.phases)) @ e1
    q = np.maximum(x.sum(axis=-1) - p.effective_beta(n), 0.0)
    return -(x @ d.R.T) + q[..., None] * col


def mphn_avar_bar(p: PhaseTypeParams, n, x):
    """Scaled quadratic variation at ``mphn_center + sqrt(n) x``, entry by entry.

    In-service load ``m_k = gamma_k n + sqrt(n) x_k`` (phase 1 minus the queue
    ``sqrt(n) (e'x)^+``).  Diagonal: arrivals and abandonment (k = 1), all
    routing inflows ``P_ik nu_i m_i`` and the total outflow ``nu_k m_k``.
    Off-diagonal: ``-(P_kj nu_k m_k + P_jk nu_j m_j)``.
    """
    d = p.derived
    x = np.asarray(x, dtype=float) + _center_shift(p, n)
    I = p.phases
    nu, P = p.nu_arr, p.P
    rn = np.sqrt(n)
    q = rn * np.maximum(x.sum(axis=-1) - p.effective_beta(n), 0.0)
    m = d.gamma * p.offered_load(n) + rn * x
    m[..., 0] = m[..., 0] - q
    out = np.zeros(x.shape[:-1] + (I, I))
    for k in range(I):
        inflow = sum(P[i, k] * nu[i] * m[..., i] for i in range(I) if i != k)
        diag = inflow + nu[k] * (1.0 - P[k, k]) * m[..., k]
        if k == 0:
            diag = diag + n + p.theta * q
        out[..., k, k] = diag
        for j in range(I):
            if j != k:
                out[..., k, j] = -(P[k, j] * nu[k] * m[..., k] + P[j, k] * nu[j] * m[..., j])
    return out / n
