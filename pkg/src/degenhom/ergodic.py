"""Ergodic averages of field observables and weak-L1 probes on box unions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import CoefficientField, cell_values, sample_field

__all__ = [
    "Observable",
    "BorelProbe",
    "quadrature_grid",
    "ergodic_average",
    "weak_L1_probe",
    "ProbeResult",
    "mean_of",
    "truncation_check",
    "write_probe_csv",
]


@dataclass(frozen=True)
class Observable:
    """Pointwise functional ``g`` of the field.

    ``name`` is ``A_p`` (``|A|^p``), ``Ainv_pprime`` (``|A^{-1}|^{p/(p-1)}``)
    or ``Lambda``; ``cap`` truncates to ``min(g, cap)``; ``scale`` multiplies.
    """

    name: str
    p: float = 2.0
    cap: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.name not in ("A_p", "Ainv_pprime", "Lambda"):
            raise ValueError(f"unknown observable {self.name!r}")
        if self.name != "Lambda" and not self.p > 1:
            raise ValueError("p must be > 1")

    def truncated(self, k: float) -> "Observable":
        return Observable(self.name, self.p, k, self.scale)

    def __call__(self, diag: np.ndarray, lam: np.ndarray) -> np.ndarray:
        if self.name == "A_p":
            v = np.max(diag, axis=1) ** self.p
        elif self.name == "Ainv_pprime":
            v = (1.0 / np.min(diag, axis=1)) ** (self.p / (self.p - 1.0))
        else:
            v = np.asarray(lam, dtype=float)
        if self.cap is not None:
            v = np.minimum(v, self.cap)
        return self.scale * v

    def _power(self):
        if self.name == "A_p":
            return self.p
        if self.name == "Ainv_pprime":
            return -self.p / (self.p - 1.0)
        return 1.0

    def exact_mean(self, field: CoefficientField) -> float | None:
        """Closed-form ``E[g]`` for isotropic lattice fields, else None."""
        if field.kind == "custom":
            return None
        if self.name == "Lambda":
            law = field.lambda_law
            q = 1.0
        else:
            if field.coupling != "isotropic":
                return None
            law = field.diag_weights[0]
            q = self._power()
        m = law.moment(q)
        if self.cap is not None:
            try:
                excess = law.tail_excess(q, self.cap)
            except ValueError:
                return None
            if not (np.isfinite(m) and np.isfinite(excess)):
                return None
            m = m - excess
        return float(self.scale * m)

    def tail_mass(self, field: CoefficientField, k: float) -> float | None:
        """``E[(g - k)_+]`` in closed form, else None."""
        if field.kind == "custom":
            return None
        if self.name == "Lambda":
            return float(self.scale * field.lambda_law.tail_excess(1.0, k / self.scale))
        if field.coupling != "isotropic":
            return None
        return float(self.scale * field.diag_weights[0].tail_excess(self._power(), k / self.scale))


def mean_of(g: Observable, field: CoefficientField, n_samples: int = 400_000, seed: int = 0) -> float:
    """``E[g]``: closed form when available, otherwise a large Monte Carlo sample."""
    m = g.exact_mean(field)
    if m is not None:
        return m
    diag, lam = cell_values(field, seed, n_samples, start=10**9)
    return float(np.mean(g(diag, lam)))


# --------------------------------------------------------------------------
# sets and quadrature


def quadrature_grid(origin, lengths, eps: float, points_per_period: int = 4):
    """Midpoints of a uniform grid with spacing ``<= eps / points_per_period``.

    Returns ``(points (N, d), cell_volume, shape)``.
    """
    origin = np.asarray(origin, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    counts = np.ceil(lengths * points_per_period / eps - 1e-9).astype(int)
    axes = [origin[k] + (np.arange(counts[k]) + 0.5) * lengths[k] / counts[k] for k in range(origin.size)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return pts, float(np.prod(lengths / counts)), tuple(counts)


@dataclass
class BorelProbe:
    """Finite union of axis-aligned boxes inside the domain ``D``.

    ``boxes`` is a list of ``(lower, upper)`` corner pairs; with
    ``complement`` the set is ``D`` minus the union.
    """

    boxes: list
    domain_origin: tuple = (0.0, 0.0)
    domain_lengths: tuple = (1.0, 1.0)
    complement: bool = False

    def __post_init__(self):
        lo_d = np.asarray(self.domain_origin, dtype=float)
        hi_d = lo_d + np.asarray(self.domain_lengths, dtype=float)
        boxes = []
        for lo, hi in self.boxes:
            lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
            if np.any(lo < lo_d - 1e-12) or np.any(hi > hi_d + 1e-12) or np.any(hi <= lo):
                raise ValueError("boxes must be nondegenerate and inside D")
            boxes.append((lo, hi))
        if not boxes and not self.complement:
            raise ValueError("probe needs at least one box")
        self.boxes = boxes

    @classmethod
    def random(cls, n_boxes: int = 20, coverage: float = 0.3, seed: int = 0,
               domain_origin=(0.0, 0.0), domain_lengths=(1.0, 1.0)) -> "BorelProbe":
        """Random union of ``n_boxes`` boxes whose summed volume is ``coverage |D|``.

        Corners and side lengths are continuous random draws, so box faces do
        not align with the lattice of the field.
        """
        rng = np.random.default_rng(seed)
        o = np.asarray(domain_origin, dtype=float)
        L = np.asarray(domain_lengths, dtype=float)
        d = o.size
        side = (coverage / n_boxes) ** (1.0 / d) * L
        boxes = []
        for _ in range(n_boxes):
            s = np.minimum(side * rng.uniform(0.5, 1.5, size=d), L * 0.999)
            lo = o + rng.uniform(0, 1, size=d) * (L - s)
            boxes.append((lo, lo + s))
        return cls(boxes, tuple(o), tuple(L))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        mask = np.zeros(pts.shape[0], dtype=bool)
        for lo, hi in self.boxes:
            mask |= np.all((pts >= lo) & (pts < hi), axis=1)
        return ~mask if self.complement else mask

    def to_dict(self) -> dict:
        return {
            "boxes": [[lo.tolist(), hi.tolist()] for lo, hi in self.boxes],
            "domain_origin": list(self.domain_origin),
            "domain_lengths": list(self.domain_lengths),
            "complement": self.complement,
        }


# --------------------------------------------------------------------------
# averages and probes


def ergodic_average(g: Observable, field: CoefficientField, seed: int, region_origin, region_lengths,
                    eps: float, points_per_period: int = 4) -> float:
    """Midpoint-rule average of ``x -> g(field(x / eps))`` over a box."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    pts, _, _ = quadrature_grid(region_origin, region_lengths, eps, points_per_period)
    diag, lam = sample_field(field, seed, pts / eps)
    return float(np.mean(g(diag, lam)))


def _set_integral(g, field, seed, probe: BorelProbe, eps, ppp):
    pts, w, _ = quadrature_grid(probe.domain_origin, probe.domain_lengths, eps, ppp)
    mask = probe.contains(pts)
    diag, lam = sample_field(field, seed, pts[mask] / eps)
    return float(np.sum(g(diag, lam)) * w), float(mask.sum() * w)


@dataclass
class ProbeResult:
    eps_list: list
    seeds: list
    deviations: np.ndarray  # (n_eps, n_seeds)
    measure: list  # quadrature |E| per eps
    mean_g: float
    abs_tol: float
    trend_factor: float = 0.5
    extra: dict = dc_field(default_factory=dict)

    @property
    def mean_deviation(self) -> np.ndarray:
        return self.deviations.mean(axis=1)

    @property
    def trend_ok(self) -> bool:
        m = self.mean_deviation
        return bool(m[-1] < self.trend_factor * m[0])

    @property
    def below_tolerance(self) -> bool:
        return bool(self.mean_deviation[-1] <= self.abs_tol * self.measure[-1])

    @property
    def passed(self) -> bool:
        return self.trend_ok and self.below_tolerance

    def to_dict(self) -> dict:
        return {
            "eps_list": self.eps_list,
            "mean_deviation": self.mean_deviation.tolist(),
            "measure": self.measure,
            "mean_g": self.mean_g,
            "trend_ok": self.trend_ok,
            "below_tolerance": self.below_tolerance,
            "passed": self.passed,
            **self.extra,
        }


def weak_L1_probe(g: Observable, field: CoefficientField, seeds, probe: BorelProbe, eps_list,
                  points_per_period: int = 4, abs_tol: float = 0.05, trend_factor: float = 0.5,
                  mean_g: float | None = None) -> ProbeResult:
    """Deviations ``|int_E g(x/eps) dx - |E| E[g]|`` per scale and seed.

    Passes when the seed-averaged deviation at the last scale is below
    ``trend_factor`` times the first one and below ``abs_tol * |E|``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be decreasing")
    seeds = list(seeds)
    mg = mean_of(g, field) if mean_g is None else mean_g
    dev = np.zeros((len(eps_list), len(seeds)))
    meas = []
    for i, eps in enumerate(eps_list):
        for j, s in enumerate(seeds):
            integral, measure = _set_integral(g, field, s, probe, eps, points_per_period)
            dev[i, j] = abs(integral - measure * mg)
        meas.append(measure)
    return ProbeResult(eps_list, seeds, dev, meas, mg, abs_tol, trend_factor)


def truncation_check(g: Observable, k: float, field: CoefficientField, seeds, probe: BorelProbe, eps_list,
                     points_per_period: int = 4) -> dict:
    """Compare probe deviations of ``g`` and ``min(g, k)``.

    Per seed and scale the gap is bounded by ``int_E (g - k)_+ + |E| E[(g - k)_+]``;
    the seed average of that bound is ``2 |E| E[(g - k)_+]`` up to fluctuation.
    """
    gk = g.truncated(k)
    mg = mean_of(g, field)
    mgk = mean_of(gk, field)
    tail = mg - mgk
    rows = []
    ok = True
    for eps in eps_list:
        for s in seeds:
            Ig, meas = _set_integral(g, field, s, probe, eps, points_per_period)
            Ik, _ = _set_integral(gk, field, s, probe, eps, points_per_period)
            dg = abs(Ig - meas * mg)
            dk = abs(Ik - meas * mgk)
            excess = Ig - Ik  # int_E (g - k)_+
            bound = excess + meas * tail
            gap = abs(dg - dk)
            ok &= gap <= bound * (1 + 1e-12) + 1e-12
            rows.append({"eps": eps, "seed": s, "gap": gap, "bound": bound, "tail_mass": tail, "measure": meas})
    return {"passed": bool(ok), "tail_mass": tail, "rows": rows}


def write_probe_csv(path, results: dict) -> None:
    """Columns ``probe_id, eps, seed, deviation``; ``results`` maps probe ids to :class:`ProbeResult`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["probe_id", "eps", "seed", "deviation"])
    for pid, res in results.items():
        for i, eps in enumerate(res.eps_list):
            for j, s in enumerate(res.seeds):
                w.writerow([pid, repr(eps), s, repr(float(res.deviations[i, j]))])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
