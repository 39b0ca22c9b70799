"""Scale-indexed families of continuous-time Markov chains.

A chain family is a fixed, finite set of integer jump vectors ``l`` together with
a vectorised rate function ``rates(n, X) -> beta_l^n(X)``.  From it we derive the
drift ``F^n(X) = sum_l l beta_l^n(X)`` and the local quadratic variation
``a^n(X) = sum_l l l^T beta_l^n(X)``, and the centred/scaled versions

    F_hat^n(x) = F^n(c + sqrt(n) x) / sqrt(n),     a_bar^n(x) = a^n(c + sqrt(n) x) / n,

around a drift zero ``c`` of the fluid model.

State arrays always carry the coordinate on the last axis, so a batch of states
has shape ``(..., d)``.  Rate functions are evaluated on real arguments: outside
the lattice domain they provide the model's declared off-lattice extension and
may be negative there; inside the domain a negative rate is a specification error.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ModelSpecError, NotDriftZeroError
from .rng import generator


@dataclass(frozen=True, eq=False)
class ChainFamily:
    """A CTMC family indexed by the scale ``n``.

    Parameters
    ----------
    dim : int
        State dimension ``d``.
    jumps : (m, d) int array
        Jump vectors; several entries may share the same vector.
    rates : callable
        ``rates(n, X)`` with ``X`` of shape ``(..., d)`` returns ``(..., m)``.
    in_domain : callable, optional
        ``in_domain(n, X) -> bool array`` identifying the lattice state space.
        ``None`` means every integer point is a state.
    lower, upper : callable, optional
        ``lower(n)`` / ``upper(n)`` give coordinate bounds of the state space
        (``-inf``/``inf`` entries allowed); used to clip truncation boxes.
    """

    dim: int
    jumps: np.ndarray
    rates: Callable
    in_domain: Optional[Callable] = None
    lower: Optional[Callable] = None
    upper: Optional[Callable] = None
    jump_names: tuple = ()
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        jumps = np.atleast_2d(np.asarray(self.jumps))
        if jumps.shape[1] != self.dim:
            raise ModelSpecError(f"jump vectors have dimension {jumps.shape[1]}, expected {self.dim}")
        if not np.array_equal(jumps, np.round(jumps)):
            raise ModelSpecError("jump vectors must be integer")
        jumps = jumps.astype(np.int64)
        jumps.setflags(write=False)
        object.__setattr__(self, "jumps", jumps)
        if not self.jump_names:
            object.__setattr__(self, "jump_names", tuple(f"l{k}" for k in range(len(jumps))))
        # distinct jump vectors (first-appearance order) and the 0/1 matrix summing rates onto them
        _, first, inverse = np.unique(jumps, axis=0, return_index=True, return_inverse=True)
        order = np.argsort(first)
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        G = np.zeros((len(jumps), order.size))
        G[np.arange(len(jumps)), rank[np.ravel(inverse)]] = 1.0
        distinct = jumps[first[order]].astype(float)
        for arr in (G, distinct):
            arr.setflags(write=False)
        object.__setattr__(self, "_aggregate", G)
        object.__setattr__(self, "_distinct", distinct)

    def aggregated_rates(self, n, X):
        """``beta_l^n(X)`` per distinct jump vector ``l`` (rates sharing a vector are summed)."""
        return np.asarray(self.rates(n, np.asarray(X, dtype=float)), dtype=float) @ self._aggregate

    @property
    def distinct_jumps(self):
        return self._distinct

    @property
    def jump_bound(self):
        """``max |l|`` over the (n-independent) jump set."""
        return float(np.max(np.linalg.norm(self.jumps, axis=1)))

    def domain_mask(self, n, X):
        X = np.asarray(X, dtype=float)
        if self.in_domain is None:
            return np.ones(X.shape[:-1], dtype=bool)
        return np.asarray(self.in_domain(n, X), dtype=bool)

    def lattice_rates(self, n, X):
        """Rates at lattice states with jumps leaving the state space switched off."""
        X = np.asarray(X, dtype=float)
        r = np.asarray(self.rates(n, X), dtype=float)
        if self.in_domain is None:
            return r
        targets = X[..., None, :] + self.jumps
        ok = self.domain_mask(n, targets)
        return np.where(ok, r, 0.0)


def _checked_rates(chain, n, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != chain.dim:
        raise ModelSpecError(f"state has dimension {x.shape[-1]}, expected {chain.dim}")
    r = np.asarray(chain.rates(n, x), dtype=float)
    # tolerance for rounding in real-argument evaluation (e.g. x1 - queue at the boundary)
    bad = (r < -1e-12 * max(1.0, float(n))) & chain.domain_mask(n, x)[..., None]
    if np.any(bad):
        pos = np.argwhere(bad)[0]
        state = x[tuple(pos[:-1])] if x.ndim > 1 else x
        k = pos[-1]
        raise ModelSpecError(
            f"negative rate {r[tuple(pos)]:.6g} for jump {chain.jump_names[k]} "
            f"{chain.jumps[k].tolist()} at state {np.asarray(state).tolist()}"
        )
    return r


def derive_drift(chain, n, x):
    """Drift ``F^n(x) = sum_l l beta_l^n(x)`` over distinct jump vectors (shape ``(..., d)``)."""
    r = _checked_rates(chain, n, x) @ chain._aggregate
    return r @ chain.distinct_jumps


def derive_avar(chain, n, x):
    """Local quadratic variation ``a^n(x) = sum_l l l^T beta_l^n(x)`` (shape ``(..., d, d)``)."""
    r = _checked_rates(chain, n, x) @ chain._aggregate
    J = chain.distinct_jumps
    return np.einsum("...m,mi,mj->...ij", r, J, J)


@dataclass(frozen=True, eq=False)
class ScaledChain:
    """The chain family at scale ``n``, centred at ``center`` and scaled by ``sqrt(n)``."""

    base: ChainFamily
    n: float
    center: np.ndarray
    avar0: np.ndarray

    @property
    def dim(self):
        return self.base.dim

    @property
    def sqrt_n(self):
        return float(np.sqrt(self.n))

    def to_lattice(self, x):
        return self.center + self.sqrt_n * np.asarray(x, dtype=float)

    def to_scaled(self, X):
        return (np.asarray(X, dtype=float) - self.center) / self.sqrt_n

    def drift_hat(self, x):
        return derive_drift(self.base, self.n, self.to_lattice(x)) / self.sqrt_n

    def avar_bar(self, x):
        return derive_avar(self.base, self.n, self.to_lattice(x)) / self.n


def scale_chain(chain, n, center, tol=None):
    """Centre and scale ``chain`` at ``n`` around ``center``.

    ``center`` must be a zero of the fluid drift: ``|F^n(center)| <= tol`` with
    ``tol`` defaulting to ``1e-10 * n``.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float)).copy()
    if tol is None:
        tol = 1e-10 * n
    residual = float(np.linalg.norm(derive_drift(chain, n, center)))
    if not residual <= tol:
        raise NotDriftZeroError(center.tolist(), residual, tol)
    avar0 = derive_avar(chain, n, center) / n
    center.setflags(write=False)
    avar0.setflags(write=False)
    return ScaledChain(chain, n, center, avar0)


@dataclass
class AssumptionReport:
    n_grid: list
    sample_box: tuple
    samples: int
    seed: int
    growth_factor: float
    lipschitz_K_F: list
    lipschitz_worst_pair: list
    avar_growth_K_a: list
    avar0_min_eig: list
    avar0: list
    jump_bound: float
    verdicts: dict

    @property
    def passed(self):
        return all(self.verdicts.values())

    def to_dict(self):
        return {
            "n_grid": [float(v) for v in self.n_grid],
            "sample_box": [np.asarray(b).tolist() for b in self.sample_box],
            "samples": self.samples,
            "seed": self.seed,
            "growth_factor": self.growth_factor,
            "K_F": self.lipschitz_K_F,
            "K_F_worst_pair": self.lipschitz_worst_pair,
            "K_a": self.avar_growth_K_a,
            "avar0_min_eig": self.avar0_min_eig,
            "avar0": self.avar0,
            "jump_bound": self.jump_bound,
            "verdicts": self.verdicts,
            "passed": self.passed,
        }


def _growth_ok(values, factor):
    return all(b <= factor * a + 1e-12 for a, b in zip(values, values[1:]))


def validate_assumptions(family: Sequence[ScaledChain], sample_box, samples=2000, seed=0, growth_factor=1.05):
    """Sample the uniform Lipschitz, linear-growth and non-degeneracy conditions.

    ``family`` is the list of scaled chains over an increasing n-grid.  Lipschitz
    constants of ``F_hat^n`` are estimated from random far pairs plus near pairs
    inside ``sample_box = (lo, hi)``; ``K_a`` from ``sqrt(n) |a_bar(x) - a_bar(0)| / |x|``
    (spectral norm).  A condition fails when its estimate grows by more than
    ``growth_factor`` between consecutive scales.
    """
    if not family:
        raise ValueError("empty chain family")
    d = family[0].dim
    lo = np.broadcast_to(np.asarray(sample_box[0], dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(sample_box[1], dtype=float), (d,))
    if not np.all(hi > lo) or samples < 2:
        raise ValueError(f"degenerate sample box {lo.tolist()}..{hi.tolist()}")
    rng = generator(seed, 11)
    width = hi - lo
    X = lo + width * rng.random((samples, d))
    Y = lo + width * rng.random((samples, d))
    step = rng.standard_normal((samples, d))
    step *= (1e-3 * np.min(width)) / np.linalg.norm(step, axis=1, keepdims=True)
    Z = X + step

    KF, worst, Ka, min_eig, avar0s = [], [], [], [], []
    for sc in family:
        FX, FY, FZ = sc.drift_hat(X), sc.drift_hat(Y), sc.drift_hat(Z)
        q_far = np.linalg.norm(FX - FY, axis=1) / np.linalg.norm(X - Y, axis=1)
        q_near = np.linalg.norm(FX - FZ, axis=1) / np.linalg.norm(X - Z, axis=1)
        q = np.concatenate([q_far, q_near])
        k = int(np.argmax(q))
        other = Y if k < samples else Z
        KF.append(float(q[k]))
        worst.append([X[k % samples].tolist(), other[k % samples].tolist()])

        r = np.linalg.norm(X, axis=1)
        use = r > 1e-6 * np.min(width)
        diff = sc.avar_bar(X[use]) - sc.avar0
        Ka.append(float(np.max(np.sqrt(sc.n) * np.linalg.norm(diff, ord=2, axis=(-2, -1)) / r[use]))
                  if np.any(use) else 0.0)
        min_eig.append(float(np.min(np.linalg.eigvalsh(sc.avar0))))
        avar0s.append(np.asarray(sc.avar0).tolist())

    lbar = family[0].base.jump_bound
    verdicts = {
        "uniform_lipschitz": _growth_ok(KF, growth_factor),
        "avar_linear_growth": _growth_ok(Ka, growth_factor),
        "avar0_positive_definite": all(v > 0 for v in min_eig),
        "bounded_jumps": all(lbar / np.sqrt(sc.n) <= 1.0 for sc in family),
    }
    return AssumptionReport(
        n_grid=[sc.n for sc in family],
        sample_box=(lo.copy(), hi.copy()),
        samples=samples,
        seed=seed,
        growth_factor=growth_factor,
        lipschitz_K_F=KF,
        lipschitz_worst_pair=worst,
        avar_growth_K_a=Ka,
        avar0_min_eig=min_eig,
        avar0=avar0s,
        jump_bound=lbar,
        verdicts=verdicts,
    )
