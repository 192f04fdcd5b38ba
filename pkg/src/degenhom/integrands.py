"""Energy densities ``f(omega, x, xi)`` with degenerate diagonal weights.

The density depends on ``x`` only through the local coefficients
``(A, Lambda)``; ``A`` is passed as the vector of its diagonal entries.
Growth checks use the operator norm of ``xi A``; the densities themselves
are built on the Frobenius norm (equal to the operator norm for ``m = 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "Integrand",
    "eval_density",
    "grad_density",
    "opnorm",
    "truncate",
    "truncation_profile",
    "lipschitz_bound_constant",
    "integrand_from_dict",
]


def opnorm(mats: np.ndarray) -> np.ndarray:
    """Operator (spectral) norm of a stack of matrices ``(..., m, d)``."""
    mats = np.asarray(mats, dtype=float)
    if mats.shape[-2] == 1 or mats.shape[-1] == 1:
        return np.sqrt(np.sum(mats * mats, axis=(-2, -1)))
    return np.linalg.norm(mats, ord=2, axis=(-2, -1))


@dataclass(frozen=True)
class Integrand:
    """Power-law type density ``f = g(xi A) + lambda_weight * Lambda``.

    Parameters
    ----------
    kind : {"power", "perturbed"}
        ``power``: ``g(eta) = s |eta|_F^p``.
        ``perturbed``: ``g(eta) = s ((1 - rho) |eta|_F^p + rho k sum_ij |eta_ij|^p)``,
        a convex, smooth, anisotropic perturbation.
    p : float
        Growth exponent, ``p > 1``.
    m, d : int
        Rows (codomain dimension) and columns (space dimension) of ``xi``.
    rho : float
        Perturbation weight in ``[0, 1]`` (``perturbed`` only).
    regularization_delta : float
        For ``p < 2`` every ``r^p`` is replaced by ``(delta^2 + r^2)^{p/2} - delta^p``.
    lambda_weight : float
        Weight in ``[0, 1]`` of the additive ``Lambda`` term.
    """

    kind: str = "power"
    p: float = 2.0
    m: int = 1
    d: int = 2
    rho: float = 0.0
    regularization_delta: float = 0.0
    lambda_weight: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "perturbed"):
            raise ValueError(f"unknown integrand kind {self.kind!r}")
        if not self.p > 1:
            raise ValueError("p must be > 1")
        if self.m < 1 or self.d < 1:
            raise ValueError("m and d must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.kind == "power" and self.rho != 0.0:
            raise ValueError("rho is only meaningful for the perturbed kind")
        if self.regularization_delta < 0:
            raise ValueError("regularization_delta must be >= 0")
        if not 0.0 <= self.lambda_weight <= 1.0:
            raise ValueError("lambda_weight must lie in [0, 1]")

    # -- constants -------------------------------------------------------

    @property
    def norm_scale(self) -> float:
        """``s = min(m, d)^{-p/2}``, so that ``s |eta|_F^p <= |eta|_op^p``."""
        return min(self.m, self.d) ** (-self.p / 2.0)

    @property
    def entry_scale(self) -> float:
        """``k`` with ``k sum_ij |eta_ij|^p <= |eta|_F^p``."""
        n = self.m * self.d
        return 1.0 if self.p >= 2 else n ** (self.p / 2.0 - 1.0)

    @property
    def c(self) -> float:
        """Lower growth constant in ``c |xi A|^p <= f``."""
        n = self.m * self.d
        base = 1.0
        if self.kind == "perturbed":
            base = 1.0 - self.rho + self.rho * n ** (-abs(self.p / 2.0 - 1.0))
        return self.norm_scale * base

    @property
    def is_quadratic(self) -> bool:
        # for p = 2 the perturbation sum_ij eta_ij^2 equals |eta|_F^2
        return self.p == 2.0

    @property
    def delta(self) -> float:
        return self.regularization_delta if self.p < 2 else 0.0

    def with_delta(self, delta: float) -> "Integrand":
        return replace(self, regularization_delta=float(delta))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.p,
            "m": self.m,
            "d": self.d,
            "rho": self.rho,
            "regularization_delta": self.regularization_delta,
            "lambda_weight": self.lambda_weight,
        }

    # -- vectorized core -------------------------------------------------

    def _rpow(self, r2: np.ndarray):
        """``R(r) = (delta^2 + r^2)^{p/2} - delta^p`` and ``R'(r)/r``."""
        p, dl = self.p, self.delta
        if dl > 0:
            base = dl * dl + r2
            val = base ** (p / 2.0) - dl**p
            dval = p * base ** (p / 2.0 - 1.0)
            return val, dval
        val = r2 ** (p / 2.0)
        if p >= 2:
            dval = p * r2 ** (p / 2.0 - 1.0)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                dval = np.where(r2 > 0, p * r2 ** (p / 2.0 - 1.0), 0.0)
        return val, dval

    def density_eta(self, eta: np.ndarray):
        """Value and gradient of ``g`` with respect to ``eta = xi A``.

        ``eta`` has shape ``(N, m, d)``; returns ``(N,)`` and ``(N, m, d)``.
        """
        s = self.norm_scale
        r2 = np.einsum("nij,nij->n", eta, eta)
        val, dval = self._rpow(r2)
        if self.kind == "power":
            return s * val, (s * dval)[:, None, None] * eta
        rho, k = self.rho, self.entry_scale
        ev, edv = self._rpow(eta * eta)
        g = s * ((1.0 - rho) * val + rho * k * ev.sum(axis=(1, 2)))
        dg = s * ((1.0 - rho) * dval[:, None, None] * eta + rho * k * edv * eta)
        return g, dg

    def density(self, A: np.ndarray, Lam: np.ndarray, xi: np.ndarray):
        """Value ``(N,)`` and ``d f / d xi`` ``(N, m, d)`` for stacked inputs.

        ``A`` is ``(N, d)`` (diagonal entries), ``Lam`` is ``(N,)``,
        ``xi`` is ``(N, m, d)``.
        """
        eta = xi * A[:, None, :]
        g, dg = self.density_eta(eta)
        return g + self.lambda_weight * Lam, dg * A[:, None, :]

    def growth_bounds(self, A: np.ndarray, Lam: np.ndarray, xi: np.ndarray):
        """Pointwise lower and upper growth envelopes ``(N,)``.

        The lower envelope carries the ``-delta^p`` slack of the regularization.
        """
        eta_op = opnorm(xi * A[:, None, :])
        lower = self.c * eta_op**self.p
        if self.delta > 0:
            lower = lower - self.norm_scale * self.delta**self.p * (
                1.0 if self.kind == "power" else (1 - self.rho) + self.rho * self.entry_scale * self.m * self.d
            )
        upper = eta_op**self.p + Lam
        return lower, upper


def _check_point(A, Lam, xi, f: Integrand):
    A = np.asarray(A, dtype=float).reshape(-1)
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[None, :]
    if xi.shape != (f.m, f.d) or A.shape != (f.d,):
        raise ValueError(f"expected xi of shape {(f.m, f.d)} and A with {f.d} entries")
    if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(A))):
        raise ValueError("non-finite input")
    if np.any(A <= 0) or Lam < 0:
        raise ValueError("A must be positive and Lambda nonnegative")
    return A[None, :], np.array([float(Lam)]), xi[None, :, :]


def eval_density(f: Integrand, A, Lam: float, xi) -> float:
    """``f(xi)`` at a single point with diagonal weight ``A``."""
    a, lam, x = _check_point(A, Lam, xi, f)
    return float(f.density(a, lam, x)[0][0])


def grad_density(f: Integrand, A, Lam: float, xi) -> np.ndarray:
    """``d f / d xi`` at a single point, shape ``(m, d)``."""
    a, lam, x = _check_point(A, Lam, xi, f)
    return f.density(a, lam, x)[1][0]


def lipschitz_bound_constant(p: float, m: int, d: int) -> float:
    """Constant of the local Lipschitz estimate for separately convex densities."""
    return math.sqrt(m + d) * max(2.0 ** (p + 1.0), 2.0)


def gradient_bound(f: Integrand, A, Lam: float, xi, z) -> tuple[float, float]:
    """Both sides of ``|<df(xi), z>| <= C((L^{1/p} + |xi A|)^{p-1} + L^{(p-1)/p}) |z A|``."""
    g = grad_density(f, A, Lam, xi)
    A = np.asarray(A, dtype=float)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    p = f.p
    lhs = abs(float(np.sum(g * z)))
    xa = float(opnorm((np.atleast_2d(xi) * A)[None])[0])
    za = float(opnorm((z * A)[None])[0])
    C = lipschitz_bound_constant(p, f.m, f.d)
    rhs = C * ((Lam ** (1 / p) + xa) ** (p - 1) + Lam ** ((p - 1) / p)) * za
    return lhs, rhs


# --------------------------------------------------------------------------
# truncation


def truncation_profile(t: np.ndarray) -> np.ndarray:
    """Radial profile ``phi`` of the truncation, in units of the level ``r``.

    ``phi(t) = t`` on ``[0, 1]``, ``phi = 0`` on ``[3, inf)``, C^1, ``|phi'| <= 1``
    and ``phi(t) <= t``; its maximum is ``9/8``.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    a = t <= 1.0
    out[a] = t[a]
    b = (t > 1.0) & (t <= 1.5)
    s = t[b] - 1.0
    out[b] = 1.0 + s - 2.0 * s * s
    c = (t > 1.5) & (t <= 2.0)
    out[c] = 1.0 - (t[c] - 1.5)
    e = (t > 2.0) & (t < 3.0)
    s = t[e] - 2.0
    out[e] = 0.5 - s + 0.5 * s * s
    return out


def truncate(u: np.ndarray, r: float) -> np.ndarray:
    """Apply the radial truncation ``psi_r`` nodewise to a vector field.

    ``u`` has shape ``(N, m)`` (or ``(N,)`` for scalar fields). The map is
    1-Lipschitz, equals the identity on ``|x| <= r``, is bounded by ``2 r``
    and vanishes on ``|x| >= 3 r``.
    """
    if not r > 0:
        raise ValueError("truncation level must be > 0")
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 1
    v = u[:, None] if scalar else u
    norm = np.sqrt(np.sum(v * v, axis=1))
    factor = np.ones_like(norm)
    big = norm > r
    factor[big] = r * truncation_profile(norm[big] / r) / norm[big]
    out = v * factor[:, None]
    return out[:, 0] if scalar else out


def integrand_from_dict(spec: dict, d: int = 2) -> Integrand:
    return Integrand(
        kind=spec.get("kind", "power"),
        p=float(spec.get("p", 2.0)),
        m=int(spec.get("m", 1)),
        d=int(spec.get("d", d)),
        rho=float(spec.get("rho", 0.0)),
        regularization_delta=float(spec.get("regularization_delta", 0.0)),
        lambda_weight=float(spec.get("lambda_weight", 1.0)),
    )
