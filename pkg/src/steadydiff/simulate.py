"""Simulation: exact event-driven chain paths, Euler-Maruyama diffusion paths,
batch-means steady-state estimates and distributional path comparisons.

Random numbers come from numpy's Philox generator addressed by ``(seed, key...)``
(:mod:`steadydiff.rng`); identical inputs and seed give bitwise identical output.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InsufficientDataError
from .rng import BlockNormals, generator

MIN_BATCHES = 20


@dataclass
class SimPath:
    """A simulated path in scaled coordinates.

    Chain paths are piecewise constant (``states[k]`` holds on ``[times[k],
    times[k+1])``, the last state until ``horizon``) and keep the integer
    ``lattice`` states; diffusion paths are sampled on the step grid.
    """

    times: np.ndarray
    states: np.ndarray
    seed: int
    kind: str
    horizon: float
    lattice: np.ndarray = None

    def write_csv(self, path, max_rows=100000):
        rows = min(self.times.size, max_rows)
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema: steadydiff-path/1 kind={self.kind} seed={self.seed} rows={rows}/{self.times.size}\n")
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(self.states.shape[1])])
            for t, x in zip(self.times[:rows], self.states[:rows]):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x])


def simulate_ctmc(sc, x0, T, seed, max_events=50_000_000):
    """Exact (Gillespie) simulation of the scaled chain on ``[0, T]``.

    ``x0`` is a scaled state; it is mapped to the nearest lattice point.  Holding
    times are exponential at the total rate and the jump is chosen with
    probability proportional to its rate.
    """
    if seed is None:
        raise ValueError("an explicit seed is required")
    chain = sc.base
    X = np.rint(sc.to_lattice(np.atleast_1d(np.asarray(x0, dtype=float)))).astype(np.int64)
    if not chain.domain_mask(sc.n, X[None].astype(float))[0]:
        raise ValueError(f"initial lattice state {X.tolist()} is outside the state space")
    rng = generator(seed, 3)
    J = chain.jumps
    t = 0.0
    times, states = [0.0], [X.copy()]
    batch = 4096
    E = rng.standard_exponential(batch)
    U = rng.random(batch)
    k = 0
    while True:
        r = chain.lattice_rates(sc.n, X[None].astype(float))[0]
        total = float(r.sum())
        if not np.isfinite(total):
            raise DivergenceError(f"rate overflow at lattice state {X.tolist()} (t={t:.6g})", t)
        if total <= 0:
            break
        if k == batch:
            E = rng.standard_exponential(batch)
            U = rng.random(batch)
            k = 0
        t += E[k] / total
        if t >= T:
            break
        j = int(np.searchsorted(np.cumsum(r), U[k] * total, side="right"))
        j = min(j, r.size - 1)
        while r[j] == 0:  # guard against landing on a zero-rate jump at a cumsum tie
            j -= 1
        k += 1
        X = X + J[j]
        times.append(t)
        states.append(X.copy())
        if len(times) > max_events:
            raise DivergenceError(f"more than {max_events} events before T", t)
    lattice = np.array(states)
    return SimPath(np.array(times), sc.to_scaled(lattice), int(seed), "chain", float(T), lattice)


def _drift_fn(dm):
    return lambda y: np.asarray(dm.drift_hat(y), dtype=float)


def simulate_dm(dm, y0, T, step, seed, drift_only=False):
    """Euler-Maruyama path ``Y + F_hat(Y) h + L sqrt(h) Z`` on ``[0, T]``.

    With ``drift_only`` the noise is switched off (the ODE limit)."""
    if not step > 0:
        raise ValueError("step must be positive")
    if seed is None and not drift_only:
        raise ValueError("an explicit seed is required")
    d = dm.dim
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    nsteps = int(np.ceil(T / step - 1e-9))
    ts = np.minimum(step * np.arange(nsteps + 1), T)
    ys = np.empty((nsteps + 1, d))
    ys[0] = y
    F = _drift_fn(dm)
    L = np.asarray(dm.sqrt_avar0)
    normals = None if drift_only else BlockNormals(seed, 1, d, tag=5)
    chunk = 8192
    k = 0
    while k < nsteps:
        m = min(chunk, nsteps - k)
        Z = None if drift_only else normals.draw(m)[:, 0, :]
        for i in range(m):
            h = ts[k + 1] - ts[k]
            y = y + F(y) * h
            if Z is not None:
                y = y + np.sqrt(h) * (L @ Z[i])
            k += 1
            if not np.all(np.isfinite(y)):
                raise DivergenceError(f"diffusion path blew up at t={ts[k]:.6g}", ts[k])
            ys[k] = y
    return SimPath(ts, ys, int(seed) if seed is not None else -1, "diffusion", float(T))


# ---------------------------------------------------------------------------
# ensembles


def em_ensemble(dm, y0, T, step, reps, seed, observer=None, tag=7, coarse=False):
    """Run ``reps`` Euler-Maruyama paths in lock-step.

    ``observer(k, t, Y)`` is called after every step with the ``(reps, d)``
    state array.  With ``coarse`` the path takes steps of ``2 step`` driven by
    the pairwise sums of the same normals (common random numbers with the
    fine run).  Returns the final states.
    """
    d = dm.dim
    Y = np.broadcast_to(np.asarray(y0, dtype=float), (reps, d)).copy()
    n_fine = int(round(T / step))
    n_fine += n_fine % 2
    L = np.asarray(dm.sqrt_avar0)
    F = _drift_fn(dm)
    normals = BlockNormals(seed, reps, d, tag=tag)
    h = 2 * step if coarse else step
    chunk = 2048
    k, t = 0, 0.0
    done = 0
    while done < n_fine:
        m = min(chunk, n_fine - done)
        Z = normals.draw(m)
        if coarse:
            Z = (Z[0::2] + Z[1::2]) / np.sqrt(2.0)
        for i in range(Z.shape[0]):
            Y = Y + F(Y) * h + np.sqrt(h) * (Z[i] @ L.T)
            k += 1
            t = k * h
            if observer is not None:
                observer(k, t, Y)
        done += m
        if not np.all(np.isfinite(Y)):
            raise DivergenceError(f"ensemble blew up before t={t:.6g}", t)
    return Y


@dataclass
class BatchEstimate:
    mean: float
    stderr: float
    batches: int
    warmup: float
    batch_means: list = field(default_factory=list)
    method: str = "batch-means"
    seed: int = None

    @property
    def half_width(self):
        return 1.959963984540054 * self.stderr

    def contains(self, value, extra=0.0):
        return abs(value - self.mean) <= self.half_width + extra

    def to_dict(self):
        return {"schema": "steadydiff-estimate/1", "mean": self.mean, "stderr": self.stderr,
                "half_width": self.half_width, "batches": self.batches, "warmup": self.warmup,
                "method": self.method, "seed": self.seed, "batch_means": self.batch_means}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _batch_stats(means, warmup, method, seed):
    means = np.asarray(means, dtype=float)
    b = means.size
    if b < MIN_BATCHES:
        raise InsufficientDataError(f"{b} batches; at least {MIN_BATCHES} are needed for a standard error")
    se = float(means.std(ddof=1) / np.sqrt(b))
    return BatchEstimate(float(means.mean()), se, b, float(warmup), means.tolist(), method, seed)


def steady_estimate(path: SimPath, f, warmup=0.1, batches=20):
    """Time average of ``f`` after the warm-up fraction, with batch-means standard error.

    ``f`` maps scaled states ``(..., d)`` to values.  Both chain and diffusion
    paths are treated as piecewise constant between recorded times, so chain
    averages are holding-time weighted.
    """
    if batches < MIN_BATCHES:
        raise InsufficientDataError(f"{batches} batches requested; at least {MIN_BATCHES} are needed")
    t = np.append(path.times, path.horizon)
    vals = np.asarray(f(path.states), dtype=float)
    dur = np.diff(t)
    cum = np.concatenate([[0.0], np.cumsum(vals * dur)])
    t0 = warmup * path.horizon
    edges = np.linspace(t0, path.horizon, batches + 1)

    def C(s):
        k = np.clip(np.searchsorted(t, s, side="right") - 1, 0, vals.size - 1)
        return cum[k] + vals[k] * (s - t[k])

    I = C(edges)
    means = np.diff(I) / np.diff(edges)
    return _batch_stats(means, warmup, "batch-means", path.seed)


def ensemble_steady_estimate(dm, f, y0, T, step, reps, seed, warmup=0.2, extrapolate=True, tag=13):
    """Stationary mean of ``f`` from ``reps`` independent EM paths.

    Each replicate contributes its time average over ``[warmup T, T]``; the
    replicate averages act as the batches.  With ``extrapolate`` the
    first-order step bias is removed by ``2 I_h - I_{2h}`` per replicate with
    common random numbers.
    """
    def run(coarse):
        acc = np.zeros(reps)
        count = [0]
        t0 = warmup * T

        def obs(k, t, Y):
            if t > t0 + 1e-12:
                acc[:] += np.asarray(f(Y), dtype=float)
                count[0] += 1

        em_ensemble(dm, y0, T, step, reps, seed, observer=obs, tag=tag, coarse=coarse)
        return acc / count[0]

    fine = run(False)
    vals = 2 * fine - run(True) if extrapolate else fine
    est = _batch_stats(vals, warmup, "replicate-means" + ("+step-extrapolation" if extrapolate else ""), seed)
    return est


# ---------------------------------------------------------------------------
# distributional comparison


def compare_paths(pairs, T, seeds, dm_step=0.001, quantiles=(0.5, 0.9, 0.99), x0=None):
    """Quantiles of ``sup_{t <= T} |path(t)|`` for chain and diffusion paths.

    ``pairs`` is a list of ``(scaled_chain, diffusion_model)`` over the scales
    of interest.  Both kinds start from ``x0`` (default 0) and use independent
    randomness: the comparison is distributional, not a pathwise coupling.
    Unscaled chain deviations (times ``sqrt(n)``) are reported too.
    """
    seeds = list(seeds)
    out = []
    for sc, dm in pairs:
        y0 = np.zeros(sc.dim) if x0 is None else np.asarray(x0, dtype=float)
        if T <= 0:
            z = [0.0] * len(quantiles)
            out.append({"n": float(sc.n), "chain": z, "diffusion": z, "chain_unscaled": z})
            continue
        chain_sup, dm_sup = [], []
        for s in seeds:
            p = simulate_ctmc(sc, y0, T, s)
            chain_sup.append(float(np.max(np.linalg.norm(p.states, axis=1))))
        sup = np.zeros(len(seeds))
        reps = len(seeds)
        # diffusion paths in one ensemble keyed by the first seed
        def obs(k, t, Y):
            np.maximum(sup, np.linalg.norm(Y, axis=1), out=sup)

        np.maximum(sup, np.linalg.norm(y0), out=sup)
        em_ensemble(dm, y0, T, dm_step, reps, seeds[0], observer=obs, tag=17)
        dm_sup = sup.tolist()
        q = np.asarray(quantiles)
        out.append({
            "n": float(sc.n),
            "quantiles": q.tolist(),
            "chain": np.quantile(chain_sup, q).tolist(),
            "diffusion": np.quantile(dm_sup, q).tolist(),
            "chain_unscaled": (np.quantile(chain_sup, q) * np.sqrt(sc.n)).tolist(),
            "coupling": "none (distributional comparison)",
        })
    return out
