"""Seeded, stationary random coefficient fields ``x -> (A(x), Lambda(x))``.

Every field is piecewise constant on the unit lattice shifted by a
per-seed uniform offset. Cell values are produced by a counter-based hash
of ``(seed, stream, cell index)`` pushed through the inverse CDF of the
declared scalar law, so any cell of an arbitrarily large region can be
evaluated in O(1) without storing the realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

__all__ = [
    "ScalarLaw",
    "Constant",
    "Discrete",
    "Pareto",
    "InversePareto",
    "CoefficientField",
    "Moments",
    "hash_uniform",
    "mix64",
    "field_at",
    "sample_field",
    "cell_values",
    "estimate_moments",
    "exact_moments",
    "law_from_dict",
    "field_from_dict",
]

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)

# stream identifiers; diagonal entry k uses _STREAM_DIAG + k
_STREAM_SHIFT = 1
_STREAM_LAMBDA = 2
_STREAM_DIAG = 16


def mix64(z):
    """SplitMix64 finalizer applied elementwise to uint64 data."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _C1
        z = (z ^ (z >> np.uint64(27))) * _C2
        z = z ^ (z >> np.uint64(31))
    return z


def _key(seed: int, stream: int) -> np.uint64:
    with np.errstate(over="ignore"):
        s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        k = mix64(s + _GOLDEN * np.uint64(stream + 1))
    return np.uint64(k)


def hash_uniform(seed: int, stream: int, cells: np.ndarray) -> np.ndarray:
    """Uniform(0, 1) variates for integer lattice cells.

    Parameters
    ----------
    seed, stream : int
        Realization and stream identifiers.
    cells : array of int, shape (N,) or (N, k)
        Lattice indices (may be negative).

    Returns
    -------
    ndarray of float64, shape (N,), values strictly inside (0, 1).
    """
    cells = np.asarray(cells, dtype=np.int64)
    if cells.ndim == 1:
        cells = cells[:, None]
    h = np.full(cells.shape[0], _key(seed, stream), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(cells.shape[1]):
            c = cells[:, j].astype(np.uint64)
            h = mix64(h ^ (c + _GOLDEN * np.uint64(j + 1)))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


# --------------------------------------------------------------------------
# scalar laws


class ScalarLaw:
    """Base class for the scalar laws of diagonal entries and of ``Lambda``."""

    def ppf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def moment(self, q: float) -> float:
        """Exact ``E[X^q]`` (``inf`` when the moment diverges)."""
        raise NotImplementedError

    def tail_excess(self, q: float, k: float) -> float:
        """Exact ``E[(X^q - k)_+]``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(ScalarLaw):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError("constant law needs a finite nonnegative value")

    def ppf(self, u):
        return np.full(np.shape(u), float(self.value))

    def moment(self, q):
        if self.value == 0.0:
            return 0.0 if q > 0 else (1.0 if q == 0 else math.inf)
        return float(self.value) ** q

    def tail_excess(self, q, k):
        return max(self.moment(q) - k, 0.0)

    def to_dict(self):
        return {"law": "constant", "value": self.value}


@dataclass(frozen=True)
class Discrete(ScalarLaw):
    """Finite-support law with explicit atoms and probabilities."""

    atoms: tuple
    probs: tuple

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        w = np.asarray(self.probs, dtype=float)
        if a.ndim != 1 or a.shape != w.shape or a.size == 0:
            raise ValueError("atoms and probs must be 1-d of equal nonzero length")
        if np.any(a < 0) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError("atoms must be >= 0 and probs a probability vector")
        object.__setattr__(self, "atoms", tuple(float(x) for x in a))
        object.__setattr__(self, "probs", tuple(float(x) for x in w))

    def ppf(self, u):
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, np.asarray(u), side="right")
        idx = np.minimum(idx, len(self.atoms) - 1)
        return np.asarray(self.atoms)[idx]

    def moment(self, q):
        total = 0.0
        for a, w in zip(self.atoms, self.probs):
            if w == 0.0:
                continue
            if a == 0.0 and q < 0:
                return math.inf
            total += w * (a**q if a > 0 else (1.0 if q == 0 else 0.0))
        return total

    def tail_excess(self, q, k):
        return sum(w * max(a**q - k, 0.0) for a, w in zip(self.atoms, self.probs) if a > 0)

    def to_dict(self):
        return {"law": "discrete", "atoms": list(self.atoms), "probs": list(self.probs)}


@dataclass(frozen=True)
class Pareto(ScalarLaw):
    """Pareto type I: ``P(X > s) = (scale / s)^alpha`` for ``s >= scale``."""

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.scale > 0):
            raise ValueError("Pareto needs alpha > 0 and scale > 0")

    def ppf(self, u):
        return self.scale * np.power(1.0 - np.asarray(u, dtype=float), -1.0 / self.alpha)

    def moment(self, q):
        if q >= self.alpha:
            return math.inf
        return self.alpha * self.scale**q / (self.alpha - q)

    def tail_excess(self, q, k):
        # X^q is Pareto(alpha/q, scale^q) for q > 0
        if q <= 0:
            raise ValueError("tail_excess needs q > 0")
        a, s = self.alpha / q, self.scale**q
        if a <= 1:
            return math.inf
        if k <= s:
            return a * s / (a - 1) - k
        return s**a * k ** (1 - a) / (a - 1)

    def to_dict(self):
        return {"law": "pareto", "alpha": self.alpha, "scale": self.scale}


@dataclass(frozen=True)
class InversePareto(ScalarLaw):
    """``X = scale / Y`` with ``Y`` Pareto(alpha, 1): bounded above, heavy near 0.

    ``E[X^q]`` is finite for every ``q > 0`` and diverges for ``q <= -alpha``.
    """

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.scale > 0):
            raise ValueError("InversePareto needs alpha > 0 and scale > 0")

    def ppf(self, u):
        # u -> 1-u keeps ppf increasing
        return self.scale * np.power(np.asarray(u, dtype=float), 1.0 / self.alpha)

    def moment(self, q):
        if q <= -self.alpha:
            return math.inf
        return self.alpha * self.scale**q / (self.alpha + q)

    def tail_excess(self, q, k):
        if q > 0:
            top = self.scale**q
            if k >= top:
                return 0.0
            # X^q = top * U^(q/alpha), U uniform
            b = q / self.alpha
            uk = (k / top) ** (1.0 / b)
            return top * (1 - uk ** (b + 1)) / (b + 1) - k * (1 - uk)
        return Pareto(self.alpha, 1.0 / self.scale).tail_excess(-q, k)

    def to_dict(self):
        return {"law": "inverse_pareto", "alpha": self.alpha, "scale": self.scale}


def law_from_dict(spec) -> ScalarLaw:
    """Build a law from its config description (a number means constant)."""
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    kind = spec["law"]
    if kind == "constant":
        return Constant(float(spec["value"]))
    if kind == "discrete":
        return Discrete(tuple(spec["atoms"]), tuple(spec["probs"]))
    if kind == "pareto":
        return Pareto(float(spec["alpha"]), float(spec.get("scale", 1.0)))
    if kind == "inverse_pareto":
        return InversePareto(float(spec["alpha"]), float(spec.get("scale", 1.0)))
    raise ValueError(f"unknown law {kind!r}")


# --------------------------------------------------------------------------
# coefficient fields

KINDS = ("constant", "laminate", "checkerboard", "heavy_tail_checkerboard", "custom")


@dataclass(frozen=True)
class CoefficientField:
    """Random diagonal weight ``A`` and nonnegative ``Lambda`` on ``R^d``.

    Parameters
    ----------
    kind : str
        One of ``constant``, ``laminate`` (cells indexed by ``x_1`` only),
        ``checkerboard`` / ``heavy_tail_checkerboard`` (iid per unit cell),
        ``custom`` (explicit periodic pattern of cell values).
    d : int
        Space dimension.
    diag_weights : sequence of ScalarLaw
        One law (isotropic ``A = lambda I``) or ``d`` laws.
    coupling : str
        ``isotropic``: every diagonal entry equals the same draw.
        ``independent``: entry ``k`` is drawn from ``diag_weights[k]``.
    lambda_law : ScalarLaw
        Law of ``Lambda`` per cell.
    shifted : bool
        Apply the per-seed uniform offset in ``[0, 1)^d``.
    pattern : ndarray, optional
        For ``custom``: array of shape ``(P_1, ..., P_j, d)`` of diagonal
        entries, indexed by the cell index modulo the pattern shape
        (``j = 1`` gives a laminate pattern).
    lambda_pattern : ndarray, optional
        For ``custom``: matching array of ``Lambda`` values.
    """

    kind: str
    d: int
    diag_weights: tuple = (Constant(1.0),)
    coupling: str = "isotropic"
    lambda_law: ScalarLaw = Constant(0.0)
    shifted: bool = True
    pattern: np.ndarray | None = dc_field(default=None, compare=False)
    lambda_pattern: np.ndarray | None = dc_field(default=None, compare=False)
    field_id: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        dw = tuple(self.diag_weights)
        object.__setattr__(self, "diag_weights", dw)
        if self.coupling not in ("isotropic", "independent"):
            raise ValueError("coupling must be 'isotropic' or 'independent'")
        if self.coupling == "independent" and len(dw) != self.d:
            raise ValueError("independent coupling needs d diagonal laws")
        if self.coupling == "isotropic" and len(dw) != 1:
            raise ValueError("isotropic coupling needs exactly one diagonal law")
        if self.kind == "custom":
            if self.pattern is None:
                raise ValueError("custom field needs a pattern")
            pat = np.asarray(self.pattern, dtype=float)
            if pat.shape[-1] != self.d or np.any(pat <= 0):
                raise ValueError("pattern must have trailing axis d and positive entries")
            object.__setattr__(self, "pattern", pat)
            if self.lambda_pattern is not None:
                lp = np.asarray(self.lambda_pattern, dtype=float)
                if lp.shape != pat.shape[:-1] or np.any(lp < 0):
                    raise ValueError("lambda_pattern must match pattern cells and be >= 0")
                object.__setattr__(self, "lambda_pattern", lp)
        if self.kind == "constant":
            for law in dw:
                if not isinstance(law, Constant) or law.value <= 0:
                    raise ValueError("constant field needs positive constant laws")
            if not isinstance(self.lambda_law, Constant):
                raise ValueError("constant field needs a constant Lambda")

    @property
    def laws(self) -> tuple:
        return self.diag_weights if self.coupling == "independent" else self.diag_weights * self.d

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "d": self.d,
            "coupling": self.coupling,
            "diag_weights": [w.to_dict() for w in self.diag_weights],
            "lambda_law": self.lambda_law.to_dict(),
            "shifted": self.shifted,
        }
        if self.pattern is not None:
            out["pattern"] = self.pattern.tolist()
        if self.lambda_pattern is not None:
            out["lambda_pattern"] = self.lambda_pattern.tolist()
        return out

    # -- random access ----------------------------------------------------

    def shift(self, seed: int) -> np.ndarray:
        """Per-seed offset in ``[0, 1)^d`` (zeros when unshifted)."""
        if not self.shifted or self.kind == "constant":
            return np.zeros(self.d)
        return hash_uniform(seed, _STREAM_SHIFT + 1000 * self.field_id, np.arange(self.d))

    def cell_index(self, seed: int, x: np.ndarray) -> np.ndarray:
        """Integer lattice cell containing ``x - shift``; shape (N, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.floor(x - self.shift(seed)).astype(np.int64)

    def values_at_cells(self, seed: int, cells: np.ndarray):
        """Diagonal entries ``(N, d)`` and ``Lambda`` ``(N,)`` for lattice cells."""
        cells = np.atleast_2d(np.asarray(cells, dtype=np.int64))
        n = cells.shape[0]
        if self.kind == "constant":
            diag = np.array([law.value for law in self.laws], dtype=float)
            return np.broadcast_to(diag, (n, self.d)).copy(), np.full(n, float(self.lambda_law.value))
        if self.kind == "custom":
            pat = self.pattern
            j = pat.ndim - 1
            idx = tuple(np.mod(cells[:, k], pat.shape[k]) for k in range(j))
            diag = pat[idx]
            lam = self.lambda_pattern[idx] if self.lambda_pattern is not None else np.zeros(n)
            return diag, lam
        key = cells[:, :1] if self.kind == "laminate" else cells
        base = 1000 * self.field_id
        if self.coupling == "isotropic":
            u = hash_uniform(seed, base + _STREAM_DIAG, key)
            val = self.diag_weights[0].ppf(u)
            diag = np.repeat(val[:, None], self.d, axis=1)
        else:
            diag = np.empty((n, self.d))
            for k, law in enumerate(self.diag_weights):
                diag[:, k] = law.ppf(hash_uniform(seed, base + _STREAM_DIAG + k, key))
        lam = self.lambda_law.ppf(hash_uniform(seed, base + _STREAM_LAMBDA, key))
        return diag, lam


def sample_field(field: CoefficientField, seed: int, x: np.ndarray):
    """Vectorized evaluation at points ``x`` of shape (N, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != field.d:
        raise ValueError(f"points must have {field.d} columns")
    return field.values_at_cells(seed, field.cell_index(seed, x))


def field_at(field: CoefficientField, seed: int, x) -> tuple[np.ndarray, float]:
    """Diagonal of ``A(omega, x)`` and ``Lambda(omega, x)`` at a single point."""
    diag, lam = sample_field(field, seed, np.asarray(x, dtype=float)[None, :])
    return diag[0], float(lam[0])


def cell_values(field: CoefficientField, seed: int, n_cells: int, start: int = 0):
    """Values on ``n_cells`` distinct lattice cells along the first axis."""
    cells = np.zeros((n_cells, field.d), dtype=np.int64)
    cells[:, 0] = np.arange(start, start + n_cells)
    return field.values_at_cells(seed, cells)


# --------------------------------------------------------------------------
# moments


@dataclass
class Moments:
    """Monte Carlo moment estimates with divergence flags."""

    A_p: float
    Ainv_pprime: float
    Lambda: float
    flags: dict
    slopes: dict
    n_cells: int

    @property
    def any_divergent(self) -> bool:
        return any(self.flags.values())


def _doubling_slope(x: np.ndarray, n0: int) -> float:
    """Least-squares slope of log(running mean) vs log(n) over dyadic n."""
    csum = np.cumsum(x)
    ns = []
    n = n0
    while n <= x.size:
        ns.append(n)
        n *= 2
    if len(ns) < 3:
        return 0.0
    ns = np.asarray(ns)
    means = csum[ns - 1] / ns
    if np.any(means <= 0):
        return 0.0
    return float(np.polyfit(np.log(ns), np.log(means), 1)[0])


def estimate_moments(
    field: CoefficientField,
    seed: int,
    p: float,
    n_cells: int,
    slope_threshold: float = 0.1,
    n0: int = 1000,
) -> Moments:
    """Sample means of ``|A|^p``, ``|A^{-1}|^{p/(p-1)}`` and ``Lambda`` over cells.

    A quantity is flagged divergent when its running mean keeps growing over
    successive doublings of the sample size (log-log slope above
    ``slope_threshold``); this needs ``n_cells >= 4 * n0``.
    """
    if not p > 1:
        raise ValueError("p must be > 1")
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    diag, lam = cell_values(field, seed, n_cells)
    a_p = np.max(diag, axis=1) ** p
    ainv = (1.0 / np.min(diag, axis=1)) ** (p / (p - 1))
    n0 = min(n0, max(1, n_cells // 8))
    samples = {"A_p": a_p, "Ainv_pprime": ainv, "Lambda": lam}
    slopes = {k: _doubling_slope(v, n0) for k, v in samples.items()}
    flags = {k: bool(s > slope_threshold) for k, s in slopes.items()}
    return Moments(
        A_p=float(a_p.mean()),
        Ainv_pprime=float(ainv.mean()),
        Lambda=float(lam.mean()),
        flags=flags,
        slopes=slopes,
        n_cells=n_cells,
    )


def field_from_dict(spec: dict, d: int | None = None) -> CoefficientField:
    """Build a field from its config table."""
    d = int(spec.get("d", d if d is not None else 2))
    kind = spec["kind"]
    dw = spec.get("diag_weights", 1.0)
    if isinstance(dw, (list, tuple)) and dw and not isinstance(dw[0], (int, float, dict)):
        raise ValueError("diag_weights must be a law or a list of laws")
    if isinstance(dw, (list, tuple)):
        laws = tuple(law_from_dict(w) for w in dw)
    else:
        laws = (law_from_dict(dw),)
    coupling = spec.get("coupling", "isotropic" if len(laws) == 1 else "independent")
    return CoefficientField(
        kind=kind,
        d=d,
        diag_weights=laws,
        coupling=coupling,
        lambda_law=law_from_dict(spec.get("lambda_law", 0.0)),
        shifted=bool(spec.get("shifted", kind != "custom")),
        pattern=None if spec.get("pattern") is None else np.asarray(spec["pattern"], dtype=float),
        lambda_pattern=None if spec.get("lambda_pattern") is None else np.asarray(spec["lambda_pattern"], dtype=float),
        field_id=int(spec.get("field_id", 0)),
    )


def exact_moments(field: CoefficientField, p: float) -> dict | None:
    """Closed-form moments for isotropic fields (None when not available)."""
    if field.kind == "custom":
        return None
    if field.coupling != "isotropic":
        return None
    law = field.diag_weights[0]
    return {
        "A_p": law.moment(p),
        "Ainv_pprime": law.moment(-p / (p - 1)),
        "Lambda": field.lambda_law.moment(1.0),
    }
