"""Convex minimization of discretized integral functionals.

The objective is ``J(u) = int f(omega, x/eps, grad u) - int force . u`` over
P1 fields with prescribed values on fixed nodes and an optional nodal lower
bound. Quadratic densities are solved as linear systems; everything else by
preconditioned Barzilai-Borwein steps with an Armijo safeguard.
"""

from __future__ import annotations

import copy
import json
import time
import warnings
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .fields import CoefficientField
from .integrands import Integrand
from .mesh import DiscreteField, Mesh, element_coefficients, load_vector

__all__ = [
    "SolveOptions",
    "SolveReport",
    "DiscreteProblem",
    "InfeasibleObstacle",
    "NonConvergence",
    "minimize",
    "complementarity_residual",
    "pcg",
]


class InfeasibleObstacle(ValueError):
    """Boundary data lies below the obstacle on some fixed node."""


class NonConvergence(RuntimeWarning):
    """The solver stopped before meeting its gradient tolerance."""


@dataclass(frozen=True)
class SolveOptions:
    """Solver settings.

    ``method`` is ``auto`` (linear solve for quadratic densities), ``cg`` or
    ``first_order``. ``linear_solver`` picks the preconditioner of the linear
    path and of the first-order metric: ``jacobi`` (matrix-free CG),
    ``amg``, ``direct`` or ``auto`` (direct up to ``direct_max`` unknowns,
    AMG above).
    """

    max_iters: int = 4000
    grad_tol: float = 1e-9
    energy_tol: float = 1e-15
    method: str = "auto"
    linear_solver: str = "auto"
    continuation_deltas: tuple = (1e-1, 1e-2, 1e-3, 0.0)
    armijo_c: float = 1e-4
    max_backtracks: int = 60
    direct_max: int = 150_000
    stall_iters: int = 25

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.grad_tol > 0 and self.energy_tol > 0):
            raise ValueError("tolerances must be > 0")
        if self.method not in ("auto", "cg", "first_order"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.linear_solver not in ("auto", "jacobi", "amg", "direct"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")
        cd = tuple(float(x) for x in self.continuation_deltas)
        if not cd or cd[-1] < 0 or any(b >= a for a, b in zip(cd, cd[1:])):
            raise ValueError("continuation_deltas must be strictly decreasing with last entry >= 0")
        object.__setattr__(self, "continuation_deltas", cd)

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolveOptions":
        d = dict(d or {})
        if "continuation_deltas" in d:
            d["continuation_deltas"] = tuple(d["continuation_deltas"])
        return cls(**d)


@dataclass
class SolveReport:
    final_energy: float
    iterations: int
    grad_norm: float
    converged: bool
    wall_time: float
    method: str = ""
    stages: list = dc_field(default_factory=list)
    energy_history: list = dc_field(default_factory=list)
    complementarity: float | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# --------------------------------------------------------------------------
# linear algebra helpers


def pcg(matvec, b, precond=None, x0=None, atol=1e-10, maxiter=10_000):
    """Preconditioned conjugate gradients for SPD operators.

    Returns ``(x, iterations, residual_norm)``; stops at ``|r| <= atol``.
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - matvec(x)
    rn = float(np.linalg.norm(r))
    if rn <= atol:
        return x, 0, rn
    z = precond(r) if precond is not None else r
    pdir = z.copy()
    rz = float(r @ z)
    it = 0
    for it in range(1, maxiter + 1):
        q = matvec(pdir)
        pq = float(pdir @ q)
        if pq <= 0:
            break
        a = rz / pq
        x += a * pdir
        r -= a * q
        rn = float(np.linalg.norm(r))
        if rn <= atol:
            break
        z = precond(r) if precond is not None else r
        rz_new = float(r @ z)
        pdir = z + (rz_new / rz) * pdir
        rz = rz_new
    return x, it, rn


class _SPDSolver:
    """Approximate or exact inverse of a reduced SPD matrix."""

    def __init__(self, K: sp.csr_matrix, kind: str, direct_max: int):
        n = K.shape[0]
        if kind == "auto":
            kind = "direct" if n <= direct_max else "amg"
        self.kind = kind
        self.K = K
        if kind == "direct":
            self._lu = spla.splu(K.tocsc())
        elif kind == "amg":
            import pyamg

            self._ml = pyamg.smoothed_aggregation_solver(K.tocsr(), symmetry="hermitian", max_coarse=500)
            self._M = self._ml.aspreconditioner(cycle="V")
        elif kind == "jacobi":
            dg = K.diagonal()
            self._dinv = np.where(dg > 0, 1.0 / np.where(dg > 0, dg, 1.0), 1.0)
        else:
            raise ValueError(kind)

    def apply(self, r: np.ndarray) -> np.ndarray:
        """One application of the preconditioner (exact for ``direct``)."""
        if self.kind == "direct":
            return self._lu.solve(r)
        if self.kind == "amg":
            return self._M @ r
        return self._dinv * r

    def solve(self, b, matvec=None, x0=None, atol=1e-10, maxiter=10_000):
        if self.kind == "direct":
            x = self._lu.solve(b)
            mv = matvec or (lambda v: self.K @ v)
            x, it, rn = pcg(mv, b, self.apply, x0=x, atol=atol, maxiter=5)
            return x, it + 1, rn
        mv = matvec or (lambda v: self.K @ v)
        return pcg(mv, b, self.apply, x0=x0, atol=atol, maxiter=maxiter)


# --------------------------------------------------------------------------
# discrete problem


class DiscreteProblem:
    """Objective, gradient and dof bookkeeping for one minimization.

    Parameters
    ----------
    mesh : Mesh
    f : Integrand
    A, Lam : ndarray
        Per-element diagonal weights ``(n_el, d)`` and ``Lambda`` ``(n_el,)``.
    lift : ndarray
        Nodal values ``(n_nodes, m)``; fixed nodes keep them, free dofs are
        added on top.
    index : ndarray
        ``index[i]`` is the reduced unknown of node ``i`` or ``-1`` if fixed.
        Several nodes may share one unknown (periodic identification).
    force : ndarray, optional
        Nodal force density ``(n_nodes, m)``.
    obstacle : ndarray, optional
        Nodal lower bound ``(n_nodes, m)``.
    """

    def __init__(self, mesh: Mesh, f: Integrand, A, Lam, lift, index, force=None, obstacle=None):
        self.mesh = mesh
        self.f = f
        self.A = np.ascontiguousarray(A, dtype=float)
        self.Lam = np.ascontiguousarray(Lam, dtype=float)
        lift = np.asarray(lift, dtype=float)
        self.lift = lift[:, None] if lift.ndim == 1 else lift
        self.m = self.lift.shape[1]
        if self.m != f.m:
            raise ValueError("lift components do not match the integrand")
        self.index = np.asarray(index, dtype=np.int64)
        self.free = self.index >= 0
        self.n_red = int(self.index.max()) + 1 if self.free.any() else 0
        self._fnodes = np.flatnonzero(self.free)
        self._fidx = self.index[self._fnodes]
        self.load = None if force is None else load_vector(mesh, force)
        self.obstacle = None
        self.lower = None
        if obstacle is not None:
            ob = np.asarray(obstacle, dtype=float)
            ob = ob[:, None] if ob.ndim == 1 else ob
            fixed = ~self.free
            if np.any(self.lift[fixed] < ob[fixed] - 1e-12):
                raise InfeasibleObstacle("boundary data violates the obstacle on fixed nodes")
            self.obstacle = ob
            lo = np.full((self.n_red, self.m), -np.inf)
            np.maximum.at(lo, self._fidx, ob[self._fnodes] - self.lift[self._fnodes])
            self.lower = lo
        self._P = None

    # -- dof maps -----------------------------------------------------------

    def expand(self, x: np.ndarray) -> np.ndarray:
        x = x.reshape(self.n_red, self.m)
        u = self.lift.copy()
        u[self._fnodes] += x[self._fidx]
        return u

    def restrict(self, g: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n_red, self.m))
        for c in range(self.m):
            out[:, c] = np.bincount(self._fidx, weights=g[self._fnodes, c], minlength=self.n_red)
        return out

    @property
    def P(self) -> sp.csr_matrix:
        if self._P is None:
            self._P = sp.csr_matrix(
                (np.ones(self._fnodes.size), (self._fnodes, self._fidx)),
                shape=(self.mesh.n_nodes, self.n_red),
            )
        return self._P

    # -- objective ------------------------------------------------------------

    def energy_grad_full(self, u: np.ndarray, f: Integrand | None = None):
        """Energy (without force term) and its nodal gradient ``(n_nodes, m)``."""
        f = f or self.f
        mesh = self.mesh
        if getattr(f, "kind", None) == "power":
            return kernels.power_energy_grad(
                mesh.conn, mesh.etype, mesh.gref, u, self.A, self.Lam, mesh.vol,
                f.p, f.norm_scale, f.delta, f.lambda_weight,
            )
        grads = mesh.element_gradients(u)
        dens, flux = f.density(self.A, self.Lam, grads)
        g = kernels.scatter_flux(mesh.conn, mesh.etype, mesh.gref, flux, mesh.vol, mesh.n_nodes)
        return float(mesh.vol * dens.sum()), g

    def objective_full(self, u: np.ndarray, f: Integrand | None = None):
        """``J(u)`` and its nodal gradient."""
        e, g = self.energy_grad_full(u, f)
        if self.load is not None:
            e -= float(np.sum(self.load * u))
            g = g - self.load
        return e, g

    def objective(self, x: np.ndarray, f: Integrand | None = None):
        u = self.expand(x)
        e, g = self.objective_full(u, f)
        return e, self.restrict(g)

    def project(self, x: np.ndarray) -> np.ndarray:
        if self.lower is None:
            return x
        return np.maximum(x, self.lower)

    def projected_gradient(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.lower is None:
            return g
        at_bound = (x <= self.lower) & (g > 0)
        return np.where(at_bound, 0.0, g)

    # -- quadratic structure --------------------------------------------------

    def edge_weights(self, f: Integrand | None = None) -> np.ndarray:
        """Per-element, per-axis weights of the p = 2 model metric."""
        f = f or self.f
        A2 = self.A**2
        if getattr(f, "is_quadratic", False):
            return 2.0 * f.norm_scale * A2
        amax = self.A.max(axis=1, keepdims=True)
        return A2 * amax ** (f.p - 2.0)

    def reduced_matrix(self, weights: np.ndarray) -> sp.csr_matrix:
        K = self.mesh.edge_laplacian(weights)
        P = self.P
        return (P.T @ K @ P).tocsr()


# --------------------------------------------------------------------------
# building problems


def _lift_array(mesh: Mesh, fixed, m: int) -> np.ndarray:
    if fixed is None:
        return np.zeros((mesh.n_nodes, m))
    if callable(fixed):
        vals = mesh.interpolate(fixed)
    else:
        vals = np.asarray(fixed, dtype=float)
        vals = vals[:, None] if vals.ndim == 1 else vals
    if vals.shape != (mesh.n_nodes, m):
        raise ValueError(f"boundary data must have shape {(mesh.n_nodes, m)}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite boundary data")
    return vals


def _nodal(mesh: Mesh, data, m: int):
    if data is None:
        return None
    return _lift_array(mesh, data, m)


def dirichlet_index(mesh: Mesh) -> np.ndarray:
    index = np.full(mesh.n_nodes, -1, dtype=np.int64)
    interior = ~mesh.boundary_mask
    index[interior] = np.arange(int(interior.sum()))
    return index


def periodic_index(mesh: Mesh) -> np.ndarray:
    """Torus identification with the class of the origin node pinned."""
    cls = mesh.periodic_nodes
    return cls - 1  # class 0 -> -1 (pinned)


def build_problem(f, field, seed, eps, mesh, fixed=None, force=None, obstacle=None, boundary="dirichlet", coefficients=None):
    if coefficients is None:
        A, Lam = element_coefficients(mesh, field, seed, eps)
    else:
        A, Lam = coefficients
    lift = _lift_array(mesh, fixed, f.m)
    if boundary == "dirichlet":
        index = dirichlet_index(mesh)
    elif boundary == "periodic":
        index = periodic_index(mesh)
    else:
        raise ValueError(f"unknown boundary kind {boundary!r}")
    return DiscreteProblem(mesh, f, A, Lam, lift, index, _nodal(mesh, force, f.m), _nodal(mesh, obstacle, f.m))


# --------------------------------------------------------------------------
# solvers


def _initial(problem: DiscreteProblem, init) -> np.ndarray:
    shape = (problem.n_red, problem.m)
    if init is None or (isinstance(init, str) and init == "zero"):
        x = np.zeros(shape)
    elif isinstance(init, str) and init.startswith("random"):
        s = int(init.split(":")[1]) if ":" in init else 0
        rng = np.random.default_rng(s)
        scale = max(1.0, float(np.abs(problem.lift).max()))
        x = rng.uniform(-scale, scale, size=shape)
    else:
        arr = np.asarray(init, dtype=float)
        if arr.shape == (problem.mesh.n_nodes, problem.m) or arr.shape == (problem.mesh.n_nodes,):
            arr = arr.reshape(problem.mesh.n_nodes, problem.m) - problem.lift
            x = np.zeros(shape)
            x[problem._fidx] = arr[problem._fnodes]
        else:
            x = arr.reshape(shape).copy()
    return problem.project(x)


def _converged(gn: float, J: float, tol: float) -> bool:
    return gn <= tol * (1.0 + abs(J))


def _metric(problem: DiscreteProblem, f: Integrand, kind: str, opts: SolveOptions, cache: dict | None):
    key = ("metric", f.p, kind)
    if cache is not None and key in cache:
        return cache[key]
    W = problem.edge_weights(f)
    K = problem.reduced_matrix(W)
    out = (W, K, _SPDSolver(K, kind, opts.direct_max))
    if cache is not None:
        cache[key] = out
    return out


def _solve_quadratic(problem: DiscreteProblem, opts: SolveOptions, x0: np.ndarray, report: SolveReport, cache=None):
    f = problem.f
    n = problem.n_red
    W, K, solver = _metric(problem, f, opts.linear_solver, opts, cache)
    J0, g0 = problem.objective(np.zeros((n, problem.m)))
    rhs = -g0  # K x = -grad J(0)
    if solver is not None and solver.kind == "jacobi" and problem.m == 1:
        def matvec(v):
            return problem.restrict(
                kernels.scatter_flux(
                    problem.mesh.conn, problem.mesh.etype, problem.mesh.gref,
                    problem.mesh.element_gradients(problem.expand(v[:, None]) - problem.lift)
                    * W[:, None, :],
                    problem.mesh.vol, problem.mesh.n_nodes,
                )
            )[:, 0]
    else:
        matvec = None
    x = x0.copy()
    iters = 0
    if problem.lower is None:
        for c in range(problem.m):
            if n == 0:
                break
            atol = opts.grad_tol * (1.0 + abs(J0)) / np.sqrt(problem.m)
            xc = x[:, c]
            for _ in range(4):
                xc, it, rn = solver.solve(rhs[:, c], matvec=matvec, x0=xc, atol=atol, maxiter=opts.max_iters)
                iters += it
                Jt, _ = problem.objective(np.where(np.arange(problem.m) == c, xc[:, None], x))
                atol_new = opts.grad_tol * (1.0 + abs(Jt)) / np.sqrt(problem.m)
                if rn <= atol_new or atol_new >= atol:
                    break
                atol = atol_new
            x[:, c] = xc
        report.method = f"cg[{solver.kind if solver else 'none'}]"
    else:
        x, it = _pdas(problem, K, rhs, solver, opts, x)
        iters += it
        report.method = f"active-set[{solver.kind}]"
    J, g = problem.objective(x)
    pg = problem.projected_gradient(x, g)
    report.iterations = iters
    report.final_energy = J
    report.grad_norm = float(np.linalg.norm(pg))
    report.energy_history = [float(J0), float(J)] if J <= J0 else [float(J)]
    report.converged = _converged(report.grad_norm, J, opts.grad_tol)
    return x


def _pdas(problem, K, rhs, solver, opts, x0):
    """Primal-dual active set iteration for ``min 1/2 x'Kx - rhs'x, x >= lower``.

    Converges in finitely many steps for M-matrices, which the Kuhn-P1
    stiffness with diagonal weights is.
    """
    lower = problem.lower
    m = problem.m
    x = np.empty_like(x0)
    iters = 0
    for c in range(m):
        lo = lower[:, c]
        b = rhs[:, c]
        xc, it, _ = solver.solve(b, atol=1e-13 * (1 + np.linalg.norm(b)), maxiter=opts.max_iters)
        iters += it
        if np.all(xc >= lo):
            x[:, c] = xc
            continue
        active = xc < lo
        for _ in range(200):
            free = ~active
            xc = np.where(active, lo, 0.0)
            if free.any():
                Kff = K[free][:, free]
                r = b[free] - K[free][:, active] @ lo[active]
                sub = _SPDSolver(Kff.tocsr(), opts.linear_solver, opts.direct_max)
                xf, it, _ = sub.solve(r, atol=1e-13 * (1 + np.linalg.norm(r)), maxiter=opts.max_iters)
                iters += it
                xc[free] = xf
            lam = K @ xc - b
            new_active = (lam + (lo - xc)) > 0
            new_active &= np.isfinite(lo)
            if np.array_equal(new_active, active):
                break
            active = new_active
        x[:, c] = xc
    return x, iters


def _first_order(problem, f, opts, x, report, stage_tol, cache=None):
    """Monotone Barzilai-Borwein descent in the metric of a weighted Laplacian.

    With an obstacle the metric is diagonal so that projection stays exact.
    """
    m = problem.m
    kind = "jacobi" if problem.lower is not None else opts.linear_solver
    _, K, M = _metric(problem, f.with_delta(0.0), kind, opts, cache)

    def precond(g):
        return np.stack([M.apply(g[:, c]) for c in range(m)], axis=1)

    J, g = problem.objective(x, f)
    hist = [J]
    energy_scale = abs(J)
    z = precond(g)
    gz = float(np.sum(g * z))
    alpha = 1.0
    # initial scale: exact line minimizer of the model along -z
    Kz = np.stack([K @ z[:, c] for c in range(m)], axis=1)
    zKz = float(np.sum(z * Kz))
    if zKz > 0 and gz > 0:
        alpha = gz / zKz
    it = 0
    gn = float(np.linalg.norm(problem.projected_gradient(x, g)))
    stall = 0
    for it in range(1, opts.max_iters + 1):
        if _converged(gn, J, stage_tol):
            it -= 1
            break
        direction = -z
        accepted = False
        a = alpha
        for _ in range(opts.max_backtracks):
            xn = problem.project(x + a * direction)
            Jn, gnew = problem.objective(xn, f)
            dec = float(np.sum(g * (xn - x)))
            # allowance for rounding in the energy sums near the minimum
            slack = 64 * np.finfo(float).eps * (abs(J) + energy_scale)
            if np.isfinite(Jn) and Jn <= J + opts.armijo_c * min(dec, 0.0) + slack:
                accepted = True
                break
            a *= 0.5
        if not accepted:
            report.message = "line search failed"
            break
        s = xn - x
        y = gnew - g
        rel = (J - Jn) / max(1.0, abs(J))
        x, J, g = xn, Jn, gnew
        hist.append(J)
        z = precond(g)
        gn = float(np.linalg.norm(problem.projected_gradient(x, g)))
        sy = float(np.sum(s * y))
        sMs = float(np.sum(s * np.stack([K @ s[:, c] for c in range(m)], axis=1))) if M.kind != "jacobi" else None
        if sy > 0:
            if sMs is not None:
                alpha = sMs / sy
            else:
                d = 1.0 / M._dinv[:, None]
                alpha = float(np.sum(s * s * d)) / sy
        else:
            alpha = max(a, 1e-12) * 2.0
        stall = stall + 1 if abs(rel) < opts.energy_tol else 0
        if stall >= opts.stall_iters:
            break
    report.iterations += it
    return x, J, gn, hist


def _continuation(problem, f, opts, x0, report, cache=None):
    """First-order stages over the regularization schedule; returns the best true-energy iterate."""
    deltas = opts.continuation_deltas if f.p < 2 else (0.0,)
    J_true0, _ = problem.objective(x0, f.with_delta(0.0))
    best = (J_true0, x0)
    x = x0
    for k, dl in enumerate(deltas):
        fk = f.with_delta(dl)
        last = k == len(deltas) - 1
        tol = opts.grad_tol if last else max(opts.grad_tol, 1e-6)
        x, Jk, gn, hist = _first_order(problem, fk, opts, x, report, tol, cache)
        report.stages.append(
            {"delta": dl, "energy": Jk, "grad_norm": gn, "iterations": report.iterations, "history": hist}
        )
        report.energy_history = hist
        Jt = Jk if dl == 0.0 else problem.objective(x, f.with_delta(0.0))[0]
        if Jt <= best[0]:
            best = (Jt, x)
    return best[1]


def minimize(
    f: Integrand,
    field: CoefficientField | None,
    seed: int,
    eps: float,
    mesh: Mesh,
    fixed=None,
    force=None,
    obstacle=None,
    opts: SolveOptions | None = None,
    init=None,
    boundary: str = "dirichlet",
    coefficients=None,
    problem: DiscreteProblem | None = None,
    cache: dict | None = None,
):
    """Minimize ``J(u) = F_eps(u) - <force, u>`` with fixed nodes and an optional obstacle.

    Parameters
    ----------
    fixed : ndarray or callable
        Nodal values ``(n_nodes, m)`` (or a function of the node coordinates).
        Values on fixed nodes are imposed; interior values only serve as the
        lift from which the zero initialization starts.
    force : ndarray or callable, optional
        Nodal force density; the load uses the consistent mass matrix.
    obstacle : ndarray or callable, optional
        Nodal lower bound.
    boundary : {"dirichlet", "periodic"}
        ``periodic`` identifies opposite faces and pins one node class.
    init : None, "zero", "random[:seed]" or ndarray
        Starting point relative to the lift (or full nodal values).
    cache : dict, optional
        Reuses factorizations of the model metric across calls that share
        mesh, coefficients, boundary kind and exponent (e.g. several ``xi``
        on one realization).

    Returns
    -------
    (DiscreteField, SolveReport)
    """
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    if problem is None:
        problem = build_problem(f, field, seed, eps, mesh, fixed, force, obstacle, boundary, coefficients)
    report = SolveReport(final_energy=np.nan, iterations=0, grad_norm=np.nan, converged=False, wall_time=0.0)
    x0 = _initial(problem, init)
    if problem.n_red == 0:
        J, _ = problem.objective(x0)
        report.final_energy, report.grad_norm, report.converged = J, 0.0, True
        report.method = "none"
        x = x0
    elif opts.method in ("auto", "cg") and getattr(f, "is_quadratic", False):
        x = _solve_quadratic(problem, opts, x0, report, cache)
    elif opts.method == "cg":
        raise ValueError("the linear method needs a quadratic power-law density (p = 2)")
    else:
        report.method = "first_order"
        if problem.lower is not None:
            # a feasible unconstrained minimizer is the constrained one
            free = copy.copy(problem)
            free.lower, free.obstacle = None, None
            x = _continuation(free, f, opts, x0, report, cache)
            if np.any(x < problem.lower):
                x = _continuation(problem, f, opts, problem.project(x), report, cache)
        else:
            x = _continuation(problem, f, opts, x0, report, cache)
        J, g = problem.objective(x, f.with_delta(0.0))
        report.final_energy = J
        report.grad_norm = float(np.linalg.norm(problem.projected_gradient(x, g)))
        report.converged = _converged(report.grad_norm, J, opts.grad_tol)
    u = problem.expand(x)
    if problem.obstacle is not None:
        _, gfull = problem.objective_full(u, f.with_delta(0.0) if hasattr(f, "with_delta") else f)
        report.complementarity = complementarity_residual(u, problem.obstacle, gfull, problem.free)
    report.wall_time = time.perf_counter() - t0
    if not report.converged:
        warnings.warn(
            f"solver stopped with grad_norm={report.grad_norm:.3e} after {report.iterations} iterations",
            NonConvergence,
            stacklevel=2,
        )
    return DiscreteField(mesh, u), report


def complementarity_residual(u, obstacle, grad, free=None) -> float:
    """``max |min(u - obstacle, grad)|`` over free nodes (KKT residual).

    ``u``, ``obstacle`` and ``grad`` are nodal arrays of equal shape;
    ``grad`` is the nodal gradient of the objective.
    """
    u = np.asarray(getattr(u, "values", u), dtype=float)
    ob = np.asarray(obstacle, dtype=float).reshape(u.shape)
    g = np.asarray(grad, dtype=float).reshape(u.shape)
    r = np.abs(np.minimum(u - ob, g))
    if free is not None:
        r = r[np.asarray(free)]
    return float(r.max()) if r.size else 0.0
