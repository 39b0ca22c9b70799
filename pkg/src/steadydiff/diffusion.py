"""Diffusion model with frozen diffusion coefficient and its generator.

    dY = F_hat^n(Y) dt + L_n dB,      L_n L_n' = a_bar^n(0),

with generator  A u = sum_i F_hat_i d_i u + 1/2 sum_ij a_bar_ij(0) d_ij u.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NotSPDError, SteadyDiffError


class SmoothFunction:
    """A scalar function of ``x`` (shape ``(..., d)``) with analytic derivatives.

    ``grad`` returns ``(..., d)``, ``hess`` ``(..., d, d)`` and the optional
    ``third`` ``(..., d, d, d)``.
    """

    def __init__(self, value, grad, hess, third=None, dim=1, description=""):
        self._value = value
        self._grad = grad
        self._hess = hess
        self._third = third
        self.dim = dim
        self.description = description

    def value(self, x):
        return np.asarray(self._value(np.asarray(x, dtype=float)), dtype=float)

    def grad(self, x):
        return np.asarray(self._grad(np.asarray(x, dtype=float)), dtype=float)

    def hess(self, x):
        return np.asarray(self._hess(np.asarray(x, dtype=float)), dtype=float)

    @property
    def has_third(self):
        return self._third is not None

    def third(self, x):
        if self._third is None:
            raise SteadyDiffError(f"{self.description or 'function'} has no third derivative")
        return np.asarray(self._third(np.asarray(x, dtype=float)), dtype=float)

    def __call__(self, x):
        return self.value(x)

    def __repr__(self):
        return f"SmoothFunction({self.description!r})"


def polynomial_1d(coeffs, description=""):
    """Univariate polynomial ``sum_k c_k x^k`` as a :class:`SmoothFunction`."""
    P = np.polynomial.Polynomial(coeffs)
    d1, d2, d3 = P.deriv(1), P.deriv(2), P.deriv(3)
    return SmoothFunction(
        lambda x: P(x[..., 0]),
        lambda x: d1(x[..., 0])[..., None],
        lambda x: d2(x[..., 0])[..., None, None],
        lambda x: d3(x[..., 0])[..., None, None, None],
        dim=1,
        description=description or f"poly{list(coeffs)}",
    )


def sqrt_psd(m, sym_tol=1e-10):
    """Symmetric positive square root of an SPD matrix via eigendecomposition."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise NotSPDError("matrix must be square")
    scale = max(np.abs(m).max(), 1e-300)
    if np.abs(m - m.T).max() > sym_tol * scale:
        raise NotSPDError(f"matrix is not symmetric (max asymmetry {np.abs(m - m.T).max():.3e})")
    sym = 0.5 * (m + m.T)
    w, Q = np.linalg.eigh(sym)
    if w[0] <= 0:
        raise NotSPDError(f"matrix is not positive definite (eigenvalue {w[0]:.6g})", w[0])
    L = (Q * np.sqrt(w)) @ Q.T
    return 0.5 * (L + L.T)


@dataclass(frozen=True, eq=False)
class DiffusionModel:
    drift_hat: Callable
    avar0: np.ndarray
    sqrt_avar0: np.ndarray
    n: float = 1.0
    label: str = ""

    @property
    def dim(self):
        return self.avar0.shape[0]

    @classmethod
    def from_drift(cls, drift_hat, avar0, n=1.0, label=""):
        """Build a model directly from a drift callable and a constant SPD matrix."""
        avar0 = np.atleast_2d(np.asarray(avar0, dtype=float)).copy()
        L = sqrt_psd(avar0)
        avar0.setflags(write=False)
        L.setflags(write=False)
        return cls(drift_hat, avar0, L, n, label)


def build_dm(sc):
    """Diffusion model of a scaled chain: drift ``F_hat^n``, coefficient frozen at ``a_bar^n(0)``."""
    w = np.linalg.eigvalsh(np.asarray(sc.avar0))
    if w[0] <= 0:
        raise NotSPDError(f"a_bar^n(0) is not positive definite (eigenvalue {w[0]:.6g})", w[0])
    return DiffusionModel.from_drift(sc.drift_hat, sc.avar0, sc.n, label=getattr(sc.base, "name", ""))


def fd_derivatives(u, x, rel_step=1e-5):
    """Central-difference gradient and Hessian of a plain callable.

    Step ``h = rel_step (1 + |x|)``; the Hessian uses the 9-point stencil in 2-D
    (and its d-dimensional analogue: axis second differences plus four-corner
    mixed differences).
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    h = rel_step * (1.0 + np.linalg.norm(x, axis=-1))[..., None]
    f0 = np.asarray(u(x), dtype=float)
    grad = np.empty(x.shape)
    hess = np.empty(x.shape + (d,))
    E = np.eye(d)
    for i in range(d):
        ei = E[i] * h
        fp, fm = np.asarray(u(x + ei)), np.asarray(u(x - ei))
        grad[..., i] = (fp - fm) / (2 * h[..., 0])
        hess[..., i, i] = (fp - 2 * f0 + fm) / h[..., 0] ** 2
        for j in range(i + 1, d):
            ej = E[j] * h
            mixed = (np.asarray(u(x + ei + ej)) - np.asarray(u(x + ei - ej))
                     - np.asarray(u(x - ei + ej)) + np.asarray(u(x - ei - ej))) / (4 * h[..., 0] ** 2)
            hess[..., i, j] = hess[..., j, i] = mixed
    return grad, hess


def apply_generator(dm: DiffusionModel, u, x):
    """``A u(x)`` for a :class:`SmoothFunction` (analytic) or a plain callable (finite differences)."""
    x = np.asarray(x, dtype=float)
    if isinstance(u, SmoothFunction):
        g, H = u.grad(x), u.hess(x)
    else:
        g, H = fd_derivatives(u, x)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
        raise SteadyDiffError("non-finite derivative in generator evaluation")
    F = np.asarray(dm.drift_hat(x), dtype=float)
    return np.einsum("...i,...i->...", F, g) + 0.5 * np.einsum("ij,...ij->...", dm.avar0, H)
