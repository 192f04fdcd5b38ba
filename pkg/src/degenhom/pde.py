"""Euler-Lagrange problems at scale eps and their homogenized limits."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .cell import HomogenizedTable, convexity_scan
from .fields import CoefficientField, Constant
from .integrands import Integrand
from .mesh import DiscreteField, Mesh, norm
from .solver import SolveOptions, SolveReport, build_problem, minimize

__all__ = [
    "PDEProblem",
    "AnalyticLaw",
    "TabulatedLaw",
    "UnresolvedScale",
    "solve_eps",
    "solve_hom",
    "convergence_study",
    "ConvergenceRow",
    "write_convergence_csv",
]


class UnresolvedScale(UserWarning):
    """The mesh has fewer than the required elements per period."""


@dataclass
class PDEProblem:
    """Boundary value problem on a box ``D``.

    Parameters
    ----------
    origin, lengths : sequence of float
        The box ``D``.
    g : callable, optional
        Boundary datum ``g(points) -> (N,)`` (zero when omitted); its nodal
        values also serve as the lift.
    force : callable, optional
        Limit force density ``f_0(points)``.
    oscillation : callable, optional
        ``osc(points, eps)``; the force at scale ``eps`` is ``f_0 + osc``.
    obstacle : callable, optional
        Limit obstacle ``phi(points)``.
    obstacle_perturbation : callable, optional
        ``pert(points, eps)``; the obstacle at scale ``eps`` is ``phi + pert``.
    eps_list : sequence of float
        Decreasing scales.
    """

    origin: tuple = (0.0, 0.0)
    lengths: tuple = (1.0, 1.0)
    g: Callable | None = None
    force: Callable | None = None
    oscillation: Callable | None = None
    obstacle: Callable | None = None
    obstacle_perturbation: Callable | None = None
    eps_list: tuple = (0.25, 0.125, 0.0625)
    m: int = 1

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be positive and decreasing")
        self.eps_list = eps

    @property
    def d(self) -> int:
        return len(self.origin)

    def mesh(self, n: int) -> Mesh:
        return Mesh(self.origin, self.lengths, n)

    def lift(self, mesh: Mesh) -> np.ndarray:
        if self.g is None:
            return np.zeros((mesh.n_nodes, self.m))
        return mesh.interpolate(self.g, self.m)

    def force_at(self, mesh: Mesh, eps: float | None):
        if self.force is None and (self.oscillation is None or eps is None):
            return None
        x = mesh.nodes
        val = np.zeros(mesh.n_nodes) if self.force is None else np.asarray(self.force(x), dtype=float)
        if eps is not None and self.oscillation is not None:
            val = val + np.asarray(self.oscillation(x, eps), dtype=float)
        return val.reshape(mesh.n_nodes, -1)

    def obstacle_at(self, mesh: Mesh, eps: float | None):
        if self.obstacle is None:
            return None
        x = mesh.nodes
        val = np.asarray(self.obstacle(x), dtype=float)
        if eps is not None and self.obstacle_perturbation is not None:
            val = val + np.asarray(self.obstacle_perturbation(x, eps), dtype=float)
        return val.reshape(mesh.n_nodes, -1)


# --------------------------------------------------------------------------
# homogenized laws


@dataclass(frozen=True)
class AnalyticLaw:
    """``f_hom(xi) = |xi diag(w)|^p`` (Frobenius, scaled as :class:`Integrand`).

    For ``p = 2`` and ``m = 1`` this is the quadratic form ``sum_k w_k^2 xi_k^2``.
    """

    weights: tuple
    p: float = 2.0
    m: int = 1

    @classmethod
    def quadratic(cls, diag) -> "AnalyticLaw":
        return cls(tuple(float(np.sqrt(v)) for v in diag), 2.0)

    @property
    def d(self) -> int:
        return len(self.weights)

    def integrand(self) -> Integrand:
        return Integrand(p=self.p, m=self.m, d=self.d, lambda_weight=0.0)

    def field(self) -> CoefficientField:
        laws = tuple(Constant(float(w)) for w in self.weights)
        return CoefficientField("constant", self.d, diag_weights=laws, coupling="independent")

    def value(self, xi) -> float:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        f = self.integrand()
        dens, _ = f.density(np.asarray(self.weights)[None, :], np.zeros(1), xi[None])
        return float(dens[0])

    def gradient(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        f = self.integrand()
        return f.density(np.asarray(self.weights)[None, :], np.zeros(1), xi[None])[1][0]


class TabulatedLaw:
    """Multilinear interpolation of a :class:`HomogenizedTable` on a tensor grid.

    The table must contain every point of ``axes[0] x axes[1] x ...`` (one
    axis per entry of ``xi``). ``method`` is passed to
    :class:`scipy.interpolate.RegularGridInterpolator`; the default ``"cubic"``
    (``"linear"`` when an axis has fewer than 4 points) keeps the density C^1
    so gradient solvers converge. Gradients are central differences of the
    interpolant with step ``fd_step``. Outside the grid the interpolant is
    extrapolated.
    """

    kind = "tabulated"
    lambda_weight = 0.0

    def __init__(self, table: HomogenizedTable, axes, fd_step: float = 1e-6, m: int = 1,
                 method: str | None = None):
        self.table = table
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.m = m
        self.d = len(self.axes) // m
        shape = tuple(len(a) for a in self.axes)
        vals = np.empty(shape)
        for idx in np.ndindex(*shape):
            xi = np.array([self.axes[k][i] for k, i in enumerate(idx)])
            e = table.lookup(xi.reshape(m, self.d))
            if e is None:
                raise KeyError(f"table lacks grid point {xi.tolist()}")
            vals[idx] = e.value
        self.values = vals
        if method is None:
            method = "cubic" if min(shape) >= 4 else "linear"
        self.method = method
        self._interp = RegularGridInterpolator(self.axes, vals, method=method, bounds_error=False, fill_value=None)
        self.fd_step = fd_step
        self.p = table.p

    # duck-typed parts of the Integrand interface used by the solver
    is_quadratic = False
    delta = 0.0
    norm_scale = 1.0

    def with_delta(self, delta):
        return self

    def convexity(self):
        return convexity_scan(self.table)

    def value(self, xi) -> float:
        return float(self._interp(np.asarray(xi, dtype=float).reshape(1, -1))[0])

    def density(self, A, Lam, xi):
        """Value and gradient at stacked ``xi`` (``A`` and ``Lam`` are ignored)."""
        X = xi.reshape(xi.shape[0], -1)
        val = self._interp(X)
        grad = np.empty_like(X)
        h = self.fd_step
        for k in range(X.shape[1]):
            E = np.zeros(X.shape[1])
            E[k] = h
            grad[:, k] = (self._interp(X + E) - self._interp(X - E)) / (2 * h)
        return val, grad.reshape(xi.shape)


# --------------------------------------------------------------------------
# solves


@dataclass
class EpsInfo:
    eps: float | None
    resolved: bool
    elements_per_period: float | None
    weak_residual: float
    energy: float


def _weak_residual(problem, u_vals, n_tests=20, seed=0, contact_tol=1e-9):
    """Relative residual of the discrete weak form on random interior test fields."""
    rng = np.random.default_rng(seed)
    e, gE = problem.energy_grad_full(u_vals)
    load = problem.load if problem.load is not None else np.zeros_like(gE)
    gJ = gE - load
    mask = problem.free.copy()
    if problem.obstacle is not None:
        mask &= np.all(u_vals - problem.obstacle > contact_tol, axis=1)
    worst = 0.0
    for _ in range(n_tests):
        phi = rng.standard_normal(u_vals.shape) * mask[:, None]
        num = abs(float(np.sum(gJ * phi)))
        den = max(abs(float(np.sum(gE * phi))), abs(float(np.sum(load * phi))), 1e-300)
        if float(np.abs(gE).max()) == 0.0 and float(np.abs(load).max()) == 0.0:
            den = 1.0
        worst = max(worst, num / den)
    return worst


def solve_eps(problem: PDEProblem, field: CoefficientField, f: Integrand, seed: int, eps: float, n: int,
              opts: SolveOptions | None = None, min_elements_per_period: int = 8, init=None):
    """Minimize ``F_eps(u) - int f_eps u`` with ``u = g`` on the boundary.

    Returns ``(u_eps, report, info)``. Warns with :class:`UnresolvedScale`
    when the mesh has fewer than ``min_elements_per_period`` elements per
    period ``eps``; the solve still runs.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    mesh = problem.mesh(n)
    epp = float(eps / mesh.h.max())
    resolved = field.kind == "constant" or epp >= min_elements_per_period
    if not resolved:
        warnings.warn(f"{epp:.2f} elements per period < {min_elements_per_period}", UnresolvedScale, stacklevel=2)
    dp = build_problem(f, field, seed, eps, mesh, fixed=problem.lift(mesh),
                       force=problem.force_at(mesh, eps), obstacle=problem.obstacle_at(mesh, eps))
    u, rep = minimize(f, field, seed, eps, mesh, opts=opts, problem=dp, init=init)
    info = EpsInfo(eps=eps, resolved=resolved, elements_per_period=epp,
                   weak_residual=_weak_residual(dp, u.values), energy=rep.final_energy)
    return u, rep, info


def _law_pieces(law):
    if isinstance(law, AnalyticLaw):
        return law.integrand(), law.field()
    if isinstance(law, TabulatedLaw):
        return law, None
    raise TypeError("law must be an AnalyticLaw or TabulatedLaw")


def solve_hom(problem: PDEProblem, law, n: int, opts: SolveOptions | None = None, init=None):
    """Minimize ``int f_hom(grad u) - int f_0 u`` with ``u = g`` on the boundary (and ``u >= phi``)."""
    mesh = problem.mesh(n)
    f, field = _law_pieces(law)
    if field is None:
        coefficients = (np.ones((mesh.n_elements, mesh.d)), np.zeros(mesh.n_elements))
    else:
        coefficients = None
    dp = build_problem(f, field, 0, 1.0, mesh, fixed=problem.lift(mesh), force=problem.force_at(mesh, None),
                       obstacle=problem.obstacle_at(mesh, None), coefficients=coefficients)
    u, rep = minimize(f, field, 0, 1.0, mesh, opts=opts, problem=dp, init=init)
    info = EpsInfo(eps=None, resolved=True, elements_per_period=None,
                   weak_residual=_weak_residual(dp, u.values), energy=rep.final_energy)
    return u, rep, info


# --------------------------------------------------------------------------
# convergence study


@dataclass
class ConvergenceRow:
    eps: float
    seed: int
    error_Ld: float
    error_W11_weak_proxy: float
    energy_eps: float
    energy_hom: float
    contact_fraction: float
    W11_norm: float
    tails: dict
    converged: bool
    weak_residual: float

    def csv_row(self) -> list:
        return [self.eps, self.seed, self.error_Ld, self.error_W11_weak_proxy,
                self.energy_eps, self.energy_hom, self.contact_fraction]


@dataclass
class ConvergenceStudy:
    rows: list
    u_hom: DiscreteField
    report_hom: SolveReport
    discretization_error: float
    meta: dict = dc_field(default_factory=dict)

    @property
    def errors(self) -> list[float]:
        return [r.error_Ld for r in self.rows]

    @property
    def energy_gaps(self) -> list[float]:
        return [abs(r.energy_eps - r.energy_hom) for r in self.rows]

    def to_dict(self) -> dict:
        return {
            "rows": [
                {"eps": r.eps, "seed": r.seed, "error_Ld": r.error_Ld, "error_W11_weak_proxy": r.error_W11_weak_proxy,
                 "energy_eps": r.energy_eps, "energy_hom": r.energy_hom, "contact_fraction": r.contact_fraction,
                 "W11_norm": r.W11_norm, "tails": r.tails, "converged": r.converged, "weak_residual": r.weak_residual}
                for r in self.rows
            ],
            "discretization_error": self.discretization_error,
            "energy_hom": self.report_hom.final_energy,
            "meta": self.meta,
        }


def _weak_proxy(u: DiscreteField, v: DiscreteField, boxes: int = 4) -> float:
    """``max_B |int_B (grad u - grad v)| / ||grad v||_L1`` over a grid of sub-boxes."""
    mesh = u.mesh
    gu, gv = u.gradients(), v.gradients()
    diff = (gu - gv).reshape(gu.shape[0], -1)
    rel = (mesh.barycenters - mesh.origin) / mesh.lengths
    cell = np.minimum((rel * boxes).astype(int), boxes - 1)
    key = cell @ (boxes ** np.arange(mesh.d))
    worst = 0.0
    for c in range(diff.shape[1]):
        sums = np.bincount(key, weights=diff[:, c], minlength=boxes**mesh.d) * mesh.vol
        worst = max(worst, float(np.abs(sums).max()))
    denom = mesh.vol * float(np.sum(np.sqrt(np.sum(gv.reshape(gv.shape[0], -1) ** 2, axis=1))))
    return worst / denom if denom > 0 else worst


def _tails(u: DiscreteField, factors=(2, 4, 8)) -> dict:
    g = u.gradients().reshape(u.mesh.n_elements, -1)
    gn = np.sqrt(np.sum(g * g, axis=1))
    med = float(np.median(gn))
    out = {"median": med}
    for k in factors:
        out[f"tail_{k}"] = float(u.mesh.vol * gn[gn >= k * med].sum()) if med > 0 else 0.0
    return out


def _discretization_error(problem, law, n_fine, opts, u_fine) -> float:
    """Relative ``L^{d/(d-1)}`` gap between ``u_hom`` at ``n_fine`` and ``n_fine / 2`` (coarse nodes)."""
    if n_fine % 2:
        return float("nan")
    uc, _, _ = solve_hom(problem, law, n_fine // 2, opts)
    mf = u_fine.mesh
    coarse_nodes = np.all(mf.node_index % 2 == 0, axis=1)
    fine_on_coarse = u_fine.values[coarse_nodes]
    diff = DiscreteField(uc.mesh, uc.values - fine_on_coarse)
    q = "L_d_over_d_minus_1"
    base = norm(DiscreteField(uc.mesh, fine_on_coarse), q)
    return norm(diff, q) / base if base > 0 else norm(diff, q)


def convergence_study(problem: PDEProblem, field: CoefficientField, f: Integrand, law, seed: int, n_fine: int,
                      opts: SolveOptions | None = None, seeds=None) -> ConvergenceStudy:
    """Errors ``||u_eps - u_hom|| / ||u_hom||`` in ``L^{d/(d-1)}`` on one fine mesh."""
    if len(problem.eps_list) < 3:
        raise ValueError("need at least three scales")
    u_hom, rep_hom, _ = solve_hom(problem, law, n_fine, opts)
    q = "L_d_over_d_minus_1"
    base = norm(u_hom, q)
    disc = _discretization_error(problem, law, n_fine, opts, u_hom)
    rows = []
    for s in (seeds if seeds is not None else [seed]):
        for eps in problem.eps_list:
            u, rep, info = solve_eps(problem, field, f, s, eps, n_fine, opts)
            err = norm(u - u_hom, q)
            contact = 0.0
            if problem.obstacle is not None:
                ob = problem.obstacle_at(u.mesh, eps)
                interior = ~u.mesh.boundary_mask
                contact = float(np.mean(np.all(u.values[interior] - ob[interior] <= 1e-9, axis=1)))
            rows.append(
                ConvergenceRow(
                    eps=eps, seed=s, error_Ld=err / base if base > 0 else err,
                    error_W11_weak_proxy=_weak_proxy(u, u_hom), energy_eps=rep.final_energy,
                    energy_hom=rep_hom.final_energy, contact_fraction=contact, W11_norm=norm(u, "W11"),
                    tails=_tails(u), converged=rep.converged, weak_residual=info.weak_residual,
                )
            )
    return ConvergenceStudy(rows=rows, u_hom=u_hom, report_hom=rep_hom, discretization_error=disc,
                            meta={"n_fine": n_fine, "eps_list": list(problem.eps_list)})


def write_convergence_csv(path, study: ConvergenceStudy) -> None:
    """Columns ``eps, seed, error_Ld_over_dm1, error_W11_weak_proxy, energy_eps, energy_hom, contact_fraction``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "seed", "error_Ld_over_dm1", "error_W11_weak_proxy", "energy_eps", "energy_hom", "contact_fraction"])
    for r in study.rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r.csv_row()])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
