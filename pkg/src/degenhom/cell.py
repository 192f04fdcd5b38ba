"""Cell problems and Monte Carlo estimates of the homogenized integrand."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import CoefficientField, cell_values, estimate_moments, mix64
from .integrands import Integrand, opnorm
from .mesh import DiscreteField, Mesh, element_coefficients
from .solver import SolveOptions, SolveReport, build_problem, minimize

__all__ = [
    "CellSchedule",
    "CellResult",
    "FhomEstimate",
    "TableEntry",
    "HomogenizedTable",
    "BoundConstants",
    "DivergenceDetected",
    "MomentDivergence",
    "SignalToNoiseError",
    "realization_seed",
    "cell_dirichlet",
    "cell_periodic",
    "cell_sweep",
    "estimate_fhom",
    "bound_constants",
    "build_table",
    "convexity_scan",
    "dfhom",
    "degeneracy_probe",
    "write_cell_csv",
]


class DivergenceDetected(RuntimeError):
    """Per-t ensemble means keep growing geometrically."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class MomentDivergence(ValueError):
    """A moment estimator is flagged as divergent; no constants are emitted."""


class SignalToNoiseError(ValueError):
    """Finite-difference step too small relative to the statistical error."""


# --------------------------------------------------------------------------
# schedule and seeds


@dataclass(frozen=True)
class CellSchedule:
    """Cell sizes, mesh resolution and ensemble size.

    Either ``n_per_t`` (one entry per ``t``) or ``nodes_per_unit`` is given;
    the latter sets ``n = round(t * nodes_per_unit)``.
    """

    t_values: tuple
    seeds_per_t: int = 16
    nodes_per_unit: float | None = 64
    n_per_t: tuple | None = None
    base_seed: int = 0

    def __post_init__(self):
        tv = tuple(float(t) for t in self.t_values)
        if not tv or any(t <= 0 for t in tv) or any(b <= a for a, b in zip(tv, tv[1:])):
            raise ValueError("t_values must be positive and increasing")
        object.__setattr__(self, "t_values", tv)
        if self.seeds_per_t < 1:
            raise ValueError("seeds_per_t must be >= 1")
        if self.n_per_t is not None:
            npt = tuple(int(n) for n in self.n_per_t)
            if len(npt) != len(tv):
                raise ValueError("n_per_t needs one entry per t")
            dens = [n / t for n, t in zip(npt, tv)]
            if any(b < a - 1e-12 for a, b in zip(dens, dens[1:])):
                raise ValueError("n_per_t must scale at least linearly with t")
            object.__setattr__(self, "n_per_t", npt)
        elif self.nodes_per_unit is None or self.nodes_per_unit <= 0:
            raise ValueError("give n_per_t or a positive nodes_per_unit")

    def n_for(self, k: int) -> int:
        if self.n_per_t is not None:
            return self.n_per_t[k]
        return max(1, int(round(self.t_values[k] * self.nodes_per_unit)))

    @property
    def seeds(self) -> list[int]:
        return [self.base_seed + i for i in range(self.seeds_per_t)]

    def to_dict(self) -> dict:
        return {
            "t_values": list(self.t_values),
            "seeds_per_t": self.seeds_per_t,
            "nodes_per_unit": self.nodes_per_unit,
            "n_per_t": None if self.n_per_t is None else list(self.n_per_t),
            "base_seed": self.base_seed,
        }


def realization_seed(seed: int, t: float) -> int:
    """Field seed of the realization used for ensemble member ``seed`` at size ``t``.

    Distinct ``(seed, t)`` pairs give independent realizations.
    """
    tk = np.uint64(int(round(float(t) * 1_000_000)) & 0xFFFFFFFFFFFFFFFF)
    z = mix64(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF) ^ mix64(tk + np.uint64(0x5851F42D4C957F2D)))
    return int(z)


# --------------------------------------------------------------------------
# single cells


@dataclass
class CellResult:
    """One solved cell problem on ``origin + (0, t)^d``."""

    xi: np.ndarray
    t: float
    seed: int
    n: int
    boundary: str
    mu_hat: float
    energy: float
    affine_bound: float
    lower_bound: float
    report: SolveReport
    u: DiscreteField | None = None
    member: int | None = None

    @property
    def converged(self) -> bool:
        return self.report.converged

    def sandwich(self, rtol: float = 1e-6) -> tuple[bool, bool]:
        """Upper (affine competitor) and lower (Hoelder) inequalities."""
        scale = rtol * max(1.0, abs(self.mu_hat))
        upper = self.mu_hat <= self.affine_bound + scale
        lower = self.mu_hat >= self.lower_bound - scale
        return bool(upper), bool(lower)

    def to_dict(self) -> dict:
        return {
            "xi": np.asarray(self.xi).tolist(),
            "t": self.t,
            "seed": self.seed,
            "n": self.n,
            "boundary": self.boundary,
            "mu_hat": self.mu_hat,
            "affine_bound": self.affine_bound,
            "lower_bound": self.lower_bound,
            "iterations": self.report.iterations,
            "converged": self.report.converged,
        }


def _as_xi(xi, f: Integrand) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[None, :]
    if xi.shape != (f.m, f.d):
        raise ValueError(f"xi must have shape {(f.m, f.d)}")
    return xi


def _cell_bounds(xi, A, Lam, mesh: Mesh, f: Integrand):
    vol = mesh.vol
    Q = mesh.volume
    p = f.p
    eta = opnorm(xi[None, :, :] * A[:, None, :])
    affine = vol * float(np.sum(eta**p + Lam)) / Q
    pp = p / (p - 1.0)
    ainv = vol * float(np.sum((1.0 / A.min(axis=1)) ** pp)) / Q
    lower = f.c * ainv ** (1.0 - p) * float(opnorm(xi[None])[0]) ** p
    return affine, lower


def _solve_cells(xis, field, seed, t, n, f, opts, boundary, origin=None, keep=False, init=None):
    """Solve several ``xi`` on one realization, sharing coefficients and factorizations."""
    d = f.d
    origin = np.zeros(d) if origin is None else np.asarray(origin, dtype=float)
    mesh = Mesh(origin, np.full(d, float(t)), n)
    A, Lam = element_coefficients(mesh, field, seed, 1.0)
    cache = {}
    out = []
    for xi in xis:
        xi = _as_xi(xi, f)
        lift = mesh.nodes @ xi.T
        problem = build_problem(f, None, seed, 1.0, mesh, fixed=lift, boundary=boundary, coefficients=(A, Lam))
        u, rep = minimize(f, None, seed, 1.0, mesh, opts=opts, problem=problem, cache=cache, init=init)
        energy = rep.final_energy
        affine, lower = _cell_bounds(xi, A, Lam, mesh, f)
        out.append(
            CellResult(
                xi=xi, t=float(t), seed=int(seed), n=int(n), boundary=boundary,
                mu_hat=energy / mesh.volume, energy=energy,
                affine_bound=affine, lower_bound=lower, report=rep, u=u if keep else None,
            )
        )
    return out


def cell_dirichlet(xi, field: CoefficientField, seed: int, t: float, n: int, f: Integrand,
                   opts: SolveOptions | None = None, origin=None, keep_solution: bool = False,
                   init=None) -> CellResult:
    """Minimize the discrete energy on ``(0, t)^d`` over ``xi x`` plus zero trace.

    ``mu_hat`` is the minimum divided by ``t^d``; ``init`` is passed to
    :func:`~degenhom.solver.minimize`.
    """
    if not t > 0:
        raise ValueError("t must be > 0")
    return _solve_cells([xi], field, seed, t, n, f, opts, "dirichlet", origin, keep_solution, init)[0]


def cell_periodic(xi, field: CoefficientField, seed: int, t: float, n: int, f: Integrand,
                  opts: SolveOptions | None = None, keep_solution: bool = False) -> CellResult:
    """Minimize over ``xi x`` plus periodic perturbations on the torus ``(0, t)^d``."""
    if not t > 0:
        raise ValueError("t must be > 0")
    return _solve_cells([xi], field, seed, t, n, f, opts, "periodic", None, keep_solution)[0]


# --------------------------------------------------------------------------
# ensembles


def _task(args):
    xis, field, member, t, n, f, opts, boundary = args
    out = _solve_cells(xis, field, realization_seed(member, t), t, n, f, opts, boundary)
    for r in out:
        r.member = member
    return out


def cell_sweep(xis, field: CoefficientField, f: Integrand, schedule: CellSchedule,
               opts: SolveOptions | None = None, boundary: str = "dirichlet", workers: int = 1):
    """Solve every ``xi`` on every ``(t, seed)`` realization of the schedule.

    Returns a nested list ``results[k][i][j]`` for size ``k``, seed ``i`` and
    ``xi`` ``j``. All ``xi`` share the realizations (common random numbers).
    """
    tasks = []
    for k, t in enumerate(schedule.t_values):
        n = schedule.n_for(k)
        for s in schedule.seeds:
            tasks.append((list(xis), field, s, t, n, f, opts, boundary))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            flat = list(ex.map(_task, tasks))
    else:
        flat = [_task(a) for a in tasks]
    ns = schedule.seeds_per_t
    return [flat[k * ns:(k + 1) * ns] for k in range(len(schedule.t_values))]


@dataclass
class FhomEstimate:
    xi: np.ndarray
    value: float
    stderr: float
    trace: list
    stabilizing: bool
    samples: np.ndarray  # per-seed values at the largest t
    results: list = dc_field(default_factory=list, repr=False)


def _mean_se(vals: np.ndarray) -> tuple[float, float]:
    vals = np.asarray(vals, dtype=float)
    if vals.size < 2:
        return float(vals.mean()), 0.0
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def _growth_factor(ts, means, steps: int = 2) -> float:
    """Geometric growth of the means per doubling of ``t`` over the last ``steps`` sizes."""
    k = len(ts) - 1
    j = max(0, k - steps)
    if means[j] <= 0 or means[k] <= 0:
        return float("nan")
    return float((means[k] / means[j]) ** (1.0 / math.log2(ts[k] / ts[j])))


def _estimate_from(results_by_t, schedule, j, extrapolate=False, check_divergence=True, growth_threshold=2.0):
    trace = []
    for k, t in enumerate(schedule.t_values):
        vals = np.array([res[j].mu_hat for res in results_by_t[k]])
        mean, se = _mean_se(vals)
        trace.append({"t": t, "n": schedule.n_for(k), "mean": mean, "stderr": se, "values": vals.tolist()})
    ts = [tr["t"] for tr in trace]
    means = [tr["mean"] for tr in trace]
    diffs = np.abs(np.diff(means))
    stabilizing = bool(len(diffs) < 2 or np.all(diffs[1:] <= diffs[:-1] + 1e-12 * (1 + abs(means[-1]))))
    if check_divergence and len(ts) >= 2:
        g = _growth_factor(ts, means, steps=min(2, len(ts) - 1))
        if np.isfinite(g) and g >= growth_threshold:
            raise DivergenceDetected(f"ensemble means grow by {g:.3g} per doubling of t", trace)
    value, se = means[-1], trace[-1]["stderr"]
    if extrapolate and len(ts) >= 2:
        t1, t2 = ts[-2], ts[-1]
        m1, m2 = means[-2], means[-1]
        value = (t2 * m2 - t1 * m1) / (t2 - t1)
        se = math.hypot(t2 * trace[-1]["stderr"], t1 * trace[-2]["stderr"]) / (t2 - t1)
    xi = results_by_t[-1][0][j].xi
    samples = np.array(trace[-1]["values"])
    return FhomEstimate(xi=xi, value=float(value), stderr=float(se), trace=trace, stabilizing=stabilizing, samples=samples)


def estimate_fhom(xi, field: CoefficientField, f: Integrand, schedule: CellSchedule,
                  opts: SolveOptions | None = None, extrapolate: bool = False,
                  check_divergence: bool = True, workers: int = 1, boundary: str = "dirichlet") -> FhomEstimate:
    """Ensemble estimate of ``f_hom(xi)`` at the largest cell size.

    Raises
    ------
    DivergenceDetected
        When the per-t means grow by a factor >= 2 per doubling of ``t``.
    """
    res = cell_sweep([xi], field, f, schedule, opts, boundary, workers)
    est = _estimate_from(res, schedule, 0, extrapolate, check_divergence)
    est.results = [r[0] for rt in res for r in rt]
    return est


# --------------------------------------------------------------------------
# constants and tables


@dataclass(frozen=True)
class BoundConstants:
    c0: float
    C0: float
    C1: float
    C0_sphere: float
    n_samples: int

    def to_dict(self) -> dict:
        return {"c0": self.c0, "C0": self.C0, "C1": self.C1, "C0_sphere": self.C0_sphere, "n_samples": self.n_samples}


def bound_constants(field: CoefficientField, f: Integrand, n_samples: int = 100_000, seed: int = 0,
                    n_directions: int = 64) -> BoundConstants:
    """Monte Carlo versions of the lower and upper growth constants of ``f_hom``.

    ``C0`` is certified by coordinate directions; a random sample of unit
    ``eta`` (operator norm) gives ``C0_sphere <= C0`` as a cross-check.

    Raises
    ------
    MomentDivergence
        When a moment estimator is flagged divergent.
    """
    p = f.p
    mom = estimate_moments(field, seed, p, n_samples)
    if mom.any_divergent:
        raise MomentDivergence(f"divergent moments: {[k for k, v in mom.flags.items() if v]}")
    diag, lam = cell_values(field, seed, n_samples)
    c0 = f.c * mom.Ainv_pprime ** (1.0 - p)
    C0 = float(np.max(np.mean(diag**p, axis=0)))
    rng = np.random.default_rng(seed)
    best = 0.0
    sub = diag[: min(n_samples, 20_000)]
    for _ in range(n_directions):
        eta = rng.standard_normal((f.m, f.d))
        eta /= float(opnorm(eta[None])[0])
        val = float(np.mean(opnorm(eta[None, :, :] * sub[:, None, :]) ** p))
        best = max(best, val)
    return BoundConstants(c0=float(c0), C0=C0, C1=float(mom.Lambda), C0_sphere=best, n_samples=n_samples)


@dataclass
class TableEntry:
    xi: np.ndarray
    value: float
    stderr: float
    trace: list
    samples: np.ndarray | None = None

    def key(self) -> tuple:
        return tuple(np.round(np.asarray(self.xi, dtype=float).ravel(), 12))


@dataclass
class HomogenizedTable:
    """Sampled ``xi -> f_hom(xi)`` with errors and the growth constants."""

    entries: list
    constants: BoundConstants | None
    p: float
    meta: dict = dc_field(default_factory=dict)

    def lookup(self, xi) -> TableEntry | None:
        key = tuple(np.round(np.asarray(xi, dtype=float).ravel(), 12))
        index = self.__dict__.get("_index")
        if index is None or index[0] != len(self.entries):
            # first entry wins on duplicate keys, as in a linear scan
            keyed = {}
            for e in self.entries:
                keyed.setdefault(e.key(), e)
            index = self.__dict__["_index"] = (len(self.entries), keyed)
        return index[1].get(key)

    def band_violations(self, rtol: float = 1e-12) -> list[dict]:
        """Entries outside ``[c0|xi|^p - 3 se, C0|xi|^p + C1 + 3 se]``.

        ``rtol`` only absorbs rounding when ``se = 0``.
        """
        if self.constants is None:
            raise ValueError("table has no constants")
        c = self.constants
        out = []
        for e in self.entries:
            xn = float(opnorm(np.atleast_2d(e.xi)[None])[0]) ** self.p
            lo = c.c0 * xn - 3 * e.stderr
            hi = c.C0 * xn + c.C1 + 3 * e.stderr
            slack = rtol * max(1.0, abs(e.value))
            if not (lo - slack <= e.value <= hi + slack):
                out.append({"xi": np.asarray(e.xi).tolist(), "value": e.value, "lower": lo, "upper": hi})
        return out

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "constants": None if self.constants is None else self.constants.to_dict(),
            "entries": [
                {"xi": np.asarray(e.xi).tolist(), "value": e.value, "stderr": e.stderr,
                 "trace": [{k: v for k, v in tr.items() if k != "values"} for tr in e.trace]}
                for e in self.entries
            ],
            "meta": self.meta,
        }


def build_table(xis, field: CoefficientField, f: Integrand, schedule: CellSchedule,
                opts: SolveOptions | None = None, constants: BoundConstants | None = None,
                extrapolate: bool = False, workers: int = 1, n_samples: int = 100_000):
    """Estimate ``f_hom`` on a list of ``xi`` with shared realizations.

    Returns ``(table, results)`` where ``results`` is the nested output of
    :func:`cell_sweep`.
    """
    res = cell_sweep(xis, field, f, schedule, opts, "dirichlet", workers)
    entries = []
    for j in range(len(xis)):
        est = _estimate_from(res, schedule, j, extrapolate, check_divergence=False)
        entries.append(TableEntry(xi=est.xi, value=est.value, stderr=est.stderr, trace=est.trace, samples=est.samples))
    if constants is None:
        try:
            constants = bound_constants(field, f, n_samples, seed=schedule.base_seed)
        except MomentDivergence:
            constants = None
    table = HomogenizedTable(entries=entries, constants=constants, p=f.p, meta={"schedule": schedule.to_dict()})
    return table, res


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class ConvexityReport:
    n_pairs: int
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations


def convexity_scan(table: HomogenizedTable, nsigma: float = 3.0) -> ConvexityReport:
    """Midpoint convexity on every pair of entries whose midpoint is tabulated."""
    entries = table.entries
    n_pairs = 0
    violations = []
    for a in range(len(entries)):
        for b in range(a + 1, len(entries)):
            ea, eb = entries[a], entries[b]
            mid = table.lookup(0.5 * (np.asarray(ea.xi) + np.asarray(eb.xi)))
            if mid is None or mid is ea or mid is eb:
                continue
            n_pairs += 1
            rhs = 0.5 * (ea.value + eb.value)
            tol = nsigma * math.sqrt(mid.stderr**2 + 0.25 * ea.stderr**2 + 0.25 * eb.stderr**2)
            slack = 1e-12 * max(1.0, abs(rhs))
            if mid.value > rhs + tol + slack:
                violations.append(
                    {"xi1": np.asarray(ea.xi).tolist(), "xi2": np.asarray(eb.xi).tolist(),
                     "mid": mid.value, "chord": rhs, "tol": tol}
                )
    return ConvexityReport(n_pairs=n_pairs, violations=violations)


@dataclass
class GradientEstimate:
    xi: np.ndarray
    grad: np.ndarray
    err: np.ndarray
    norm: float
    bound: float
    within_bound: bool


def dfhom(source, xi, h: float, p: float, C_hat: float, snr: float = 0.25,
          nsigma: float = 3.0) -> GradientEstimate:
    """Central-difference gradient of ``f_hom`` with error bars.

    ``source`` is a :class:`HomogenizedTable` holding ``xi +- h e_ij`` or a
    callable ``xi -> per-seed values`` (same seeds for every call, so the
    differences are taken seed by seed). The growth check is
    ``|grad| <= C_hat (1 + |xi|^{p-1})`` with ``|.|`` dual to the operator norm.

    Raises
    ------
    SignalToNoiseError
        When any error bar exceeds ``snr * (1 + |grad|)``.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    grad = np.zeros_like(xi)
    err = np.zeros_like(xi)
    for idx in np.ndindex(*xi.shape):
        E = np.zeros_like(xi)
        E[idx] = h
        if isinstance(source, HomogenizedTable):
            ep, em = source.lookup(xi + E), source.lookup(xi - E)
            if ep is None or em is None:
                raise KeyError(f"table lacks xi +- h e{idx}")
            grad[idx] = (ep.value - em.value) / (2 * h)
            if ep.samples is not None and em.samples is not None and len(ep.samples) == len(em.samples) > 1:
                dd = (np.asarray(ep.samples) - np.asarray(em.samples)) / (2 * h)
                err[idx] = dd.std(ddof=1) / math.sqrt(dd.size)
            else:
                err[idx] = math.hypot(ep.stderr, em.stderr) / (2 * h)
        else:
            vp = np.atleast_1d(np.asarray(source(xi + E), dtype=float))
            vm = np.atleast_1d(np.asarray(source(xi - E), dtype=float))
            dd = (vp - vm) / (2 * h)
            grad[idx] = dd.mean()
            err[idx] = dd.std(ddof=1) / math.sqrt(dd.size) if dd.size > 1 else 0.0
    gnorm = float(np.linalg.norm(grad, "nuc")) if min(grad.shape) > 1 else float(np.linalg.norm(grad))
    if np.any(err > snr * (1.0 + gnorm)):
        raise SignalToNoiseError("finite-difference step too small for the statistical error")
    xn = float(opnorm(xi[None])[0])
    bound = C_hat * (1.0 + xn ** (p - 1.0))
    enorm = float(np.linalg.norm(err))
    return GradientEstimate(xi=xi, grad=grad, err=err, norm=gnorm, bound=bound,
                            within_bound=bool(gnorm <= bound + nsigma * enorm))


@dataclass
class DegeneracyVerdict:
    verdict: str
    growth: float
    trace: list
    moments: dict
    in_band: bool | None = None
    results: list = dc_field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "growth_per_doubling": self.growth,
            "trace": [{k: v for k, v in tr.items() if k != "values"} for tr in self.trace],
            "moments": self.moments,
            "in_band": self.in_band,
        }


def degeneracy_probe(field: CoefficientField, xi, schedule: CellSchedule, f: Integrand,
                     opts: SolveOptions | None = None, factor: float = 2.0, steps: int = 2,
                     n_moment_samples: int = 200_000, workers: int = 1) -> DegeneracyVerdict:
    """Classify the large-cell behaviour of the Dirichlet cell energies.

    The ensemble means over the last ``steps`` sizes give a geometric growth
    rate ``g`` per doubling of ``t``: ``BlowUp`` if ``g >= factor``,
    ``Collapse`` if ``g <= 1 / factor``, ``Stable`` otherwise. A collapse
    with both moments flagged divergent is reported as ``Unknown``.
    """
    if len(schedule.t_values) < 3:
        raise ValueError("degeneracy probe needs at least three cell sizes")
    res = cell_sweep([xi], field, f, schedule, opts, "dirichlet", workers)
    est = _estimate_from(res, schedule, 0, check_divergence=False)
    ts = [tr["t"] for tr in est.trace]
    means = [tr["mean"] for tr in est.trace]
    g = _growth_factor(ts, means, steps=min(steps, len(ts) - 1))
    mom = estimate_moments(field, schedule.base_seed, f.p, n_moment_samples)
    if g >= factor:
        verdict = "BlowUp"
    elif g <= 1.0 / factor:
        verdict = "Collapse"
        if mom.flags["A_p"] and mom.flags["Ainv_pprime"]:
            verdict = "Unknown"
    else:
        verdict = "Stable"
    in_band = None
    if verdict == "Stable" and not mom.any_divergent:
        c = bound_constants(field, f, n_moment_samples, seed=schedule.base_seed)
        entry = TableEntry(xi=est.xi, value=est.value, stderr=est.stderr, trace=est.trace)
        in_band = not HomogenizedTable([entry], c, f.p).band_violations()
    return DegeneracyVerdict(
        verdict=verdict, growth=g, trace=est.trace,
        moments={"flags": mom.flags, "slopes": mom.slopes}, in_band=in_band, results=res,
    )


# --------------------------------------------------------------------------
# output


def cell_rows(results_by_t, xis) -> list[list]:
    rows = []
    for j, _ in enumerate(xis):
        for rt in results_by_t:
            for res in rt:
                r = res[j]
                rows.append([j, *np.asarray(r.xi).ravel().tolist(), r.t, r.member if r.member is not None else r.seed, r.mu_hat, r.report.iterations, int(r.report.converged)])
    return rows


def write_cell_csv(path, results_by_t, xis) -> None:
    """CSV with columns ``xi_index, xi_0.., t, seed, mu_hat, solver_iters, converged``."""
    nx = np.asarray(results_by_t[0][0][0].xi).size if results_by_t and results_by_t[0] else 0
    header = ["xi_index", *[f"xi_{k}" for k in range(nx)], "t", "seed", "mu_hat", "solver_iters", "converged"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in cell_rows(results_by_t, xis):
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
