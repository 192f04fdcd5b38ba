"""Runners for the five experiment kinds declared in a config."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .cell import (
    CellSchedule,
    SignalToNoiseError,
    build_table,
    cell_dirichlet,
    cell_rows,
    cell_sweep,
    convexity_scan,
    degeneracy_probe,
    dfhom,
)
from .config import ConfigError
from .ergodic import BorelProbe, Observable, ergodic_average, mean_of, weak_L1_probe
from .fields import field_from_dict
from .integrands import integrand_from_dict
from .mesh import Mesh
from .pde import AnalyticLaw, PDEProblem, UnresolvedScale, convergence_study
from .solver import SolveOptions, minimize

__all__ = ["ExperimentResult", "RUNNERS", "run_experiment", "gradient_constant", "CELL_HEADER"]

CELL_HEADER = ["xi_index", "xi", "t", "seed", "mu_hat", "solver_iters", "converged"]


@dataclass
class ExperimentResult:
    """Outcome of one experiment.

    ``tables`` maps CSV file names to ``(header, rows)``; ``plot_rows`` are
    long-format ``(series, xi, t, eps, seed, variable, value)`` tuples;
    ``dumps`` maps names to nodal fields.
    """

    experiment: str
    checks: dict
    verdicts: dict = dc_field(default_factory=dict)
    summary: dict = dc_field(default_factory=dict)
    tables: dict = dc_field(default_factory=dict)
    plot_rows: list = dc_field(default_factory=list)
    dumps: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]


def _xi_str(xi) -> str:
    return ";".join(repr(float(v)) for v in np.asarray(xi, dtype=float).ravel())


def _opts(cfg) -> SolveOptions:
    return SolveOptions.from_dict(cfg.get("solver"))


def _schedule(cfg) -> CellSchedule:
    s = cfg["schedule"]
    return CellSchedule(
        t_values=tuple(float(t) for t in s["t_values"]),
        seeds_per_t=int(s.get("seeds_per_t", 16)),
        nodes_per_unit=float(s.get("nodes_per_unit", 64)),
        n_per_t=None if s.get("n_per_t") is None else tuple(int(n) for n in s["n_per_t"]),
        base_seed=int(cfg["base_seed"]),
    )


def _pieces(cfg):
    f = integrand_from_dict(cfg.get("integrand", {}), d=int(cfg.get("field", {}).get("d", 2)))
    field = field_from_dict(cfg["field"], f.d) if "field" in cfg else None
    if field is not None and field.d != f.d:
        raise ConfigError("field and integrand dimensions differ")
    return f, field


def gradient_constant(C0: float, C1: float, p: float) -> float:
    """``C`` with ``|grad f(xi)| <= C (1 + |xi|^{p-1})`` for convex ``0 <= f <= C0 |xi|^p + C1``.

    A difference quotient over radius ``1 + |xi|`` gives
    ``|grad f| <= 2^p C0 (1 + |xi|)^{p-1} + C1``.
    """
    return 2.0**p * max(1.0, 2.0 ** (p - 2.0)) * C0 + C1


def _dedupe(xis):
    seen, out = set(), []
    for xi in xis:
        key = tuple(np.round(np.asarray(xi, dtype=float).ravel(), 12))
        if key not in seen:
            seen.add(key)
            out.append(np.asarray(xi, dtype=float))
    return out


def _cell_table(results_by_t, xis) -> list[list]:
    rows = []
    for r in cell_rows(results_by_t, xis):
        j, rest = r[0], r[1:]
        nx = len(rest) - 5
        rows.append([j, _xi_str(rest[:nx]), *rest[nx:]])
    return rows


def _cell_plot(results_by_t, series: str) -> list[tuple]:
    out = []
    for rt in results_by_t:
        for res in rt:
            for r in res:
                out.append((series, _xi_str(r.xi), r.t, "", r.member, "mu_hat", r.mu_hat))
    return out


# --------------------------------------------------------------------------
# homogenize


def run_homogenize(cfg, workers: int = 1) -> ExperimentResult:
    f, field = _pieces(cfg)
    tol = cfg["tolerances"]
    h = cfg.get("homogenize", {})
    sched = _schedule(cfg)
    opts = _opts(cfg)
    shape = (f.m, f.d)
    listed = [np.asarray(x, dtype=float).reshape(shape) for x in h.get("xis", [])]
    grid = []
    if "grid" in h:
        vals = [float(v) for v in h["grid"]]
        for combo in np.array(np.meshgrid(*([vals] * (f.m * f.d)), indexing="ij")).reshape(f.m * f.d, -1).T:
            grid.append(combo.reshape(shape))
    step = h.get("gradient_step")
    extra = []
    if step is not None:
        for xi in grid:
            for idx in np.ndindex(*shape):
                E = np.zeros(shape)
                E[idx] = step
                extra += [xi + E, xi - E]
    xis = _dedupe(listed + grid + extra)
    if not xis:
        raise ConfigError("homogenize needs xis or grid")
    table, res = build_table(xis, field, f, sched, opts, extrapolate=bool(h.get("extrapolate", False)),
                             workers=workers, n_samples=int(h.get("n_moment_samples", 100_000)))

    checks, summary = {}, {"table": table.to_dict()}
    flat = [r for rt in res for rr in rt for r in rr]
    sand = [r.sandwich(tol["sandwich_rtol"]) for r in flat]
    checks["sandwich"] = all(a and b for a, b in sand)
    summary["n_solves"] = len(flat)
    summary["n_converged"] = sum(r.converged for r in flat)
    if table.constants is not None:
        viol = table.band_violations()
        checks["growth_band"] = not viol
        summary["band_violations"] = viol

    oracle = None
    if "oracle_diag" in h:
        if f.p != 2.0 or f.m != 1:
            raise ConfigError("oracle_diag needs p = 2 and m = 1")
        oracle = AnalyticLaw.quadratic(h["oracle_diag"])
    elif "oracle_weights" in h:
        oracle = AnalyticLaw(tuple(float(w) for w in h["oracle_weights"]), f.p, f.m)
    if oracle is not None:
        rows = []
        for xi in listed:
            e = table.lookup(xi)
            ref = oracle.value(xi)
            rel = abs(e.value - ref) / ref if ref > 0 else abs(e.value)
            rows.append({"xi": xi.tolist(), "value": e.value, "stderr": e.stderr, "oracle": ref, "rel_error": rel})
        summary["oracle"] = rows
        checks["oracle"] = all(r["rel_error"] <= tol["oracle_rel"] for r in rows)

    tables = {"cells_dirichlet.csv": (CELL_HEADER, _cell_table(res, xis))}
    plot = _cell_plot(res, "dirichlet")
    for e in table.entries:
        plot.append(("estimate", _xi_str(e.xi), sched.t_values[-1], "", "", "f_hom", e.value))
        plot.append(("estimate", _xi_str(e.xi), sched.t_values[-1], "", "", "stderr", e.stderr))

    if h.get("periodic", False):
        res_p = cell_sweep(xis, field, f, sched, opts, "periodic", workers)
        rows = []
        for j, xi in enumerate(xis):
            dv = np.array([r[j].mu_hat for r in res[-1]])
            pv = np.array([r[j].mu_hat for r in res_p[-1]])
            diff = pv - dv
            se = float(diff.std(ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
            slack = 1e-12 * max(1.0, abs(float(dv.mean())))
            rows.append({"xi": xi.tolist(), "periodic": float(pv.mean()), "dirichlet": float(dv.mean()),
                         "paired_stderr": se,
                         "ok": bool(pv.mean() <= dv.mean() + tol["periodic_nsigma"] * se + slack)})
        summary["periodic"] = rows
        checks["periodic_le_dirichlet"] = all(r["ok"] for r in rows)
        tables["cells_periodic.csv"] = (CELL_HEADER, _cell_table(res_p, xis))
        plot += _cell_plot(res_p, "periodic")

    if grid:
        conv = convexity_scan(table, tol["convexity_nsigma"])
        summary["convexity"] = {"pairs": conv.n_pairs, "violations": conv.violations}
        checks["convexity"] = conv.passed and conv.n_pairs > 0
    if step is not None and grid and table.constants is not None:
        C = gradient_constant(table.constants.C0, table.constants.C1, f.p)
        rows, ok = [], True
        for xi in grid:
            try:
                g = dfhom(table, xi, step, f.p, C)
                rows.append({"xi": xi.tolist(), "grad": g.grad.tolist(), "norm": g.norm, "bound": g.bound,
                             "within": g.within_bound})
                ok &= g.within_bound
            except SignalToNoiseError as exc:
                rows.append({"xi": xi.tolist(), "error": str(exc)})
                ok = False
        summary["gradient"] = {"C": C, "rows": rows}
        checks["gradient_band"] = ok

    if h.get("uniqueness_check", False):
        xi = xis[0] if not listed else listed[0]
        member = sched.seeds[0]
        from .cell import realization_seed

        rs = realization_seed(member, sched.t_values[0])
        r0 = cell_dirichlet(xi, field, rs, sched.t_values[0], sched.n_for(0), f, opts)
        r1 = cell_dirichlet(xi, field, rs, sched.t_values[0], sched.n_for(0), f, opts, init=f"random:{member}")
        rel = abs(r0.energy - r1.energy) / max(abs(r0.energy), 1e-300)
        summary["uniqueness"] = {"zero_init": r0.energy, "random_init": r1.energy, "rel": rel}
        checks["uniqueness"] = rel <= tol["uniqueness_rtol"]

    verdicts = {"table": [{"xi": np.asarray(e.xi).tolist(), "value": e.value, "stderr": e.stderr} for e in table.entries]}
    return ExperimentResult("homogenize", checks, verdicts, summary, tables, plot)


# --------------------------------------------------------------------------
# degeneracy


def run_degeneracy(cfg, workers: int = 1) -> ExperimentResult:
    f, field = _pieces(cfg)
    dg = cfg["degeneracy"]
    sched = _schedule(cfg)
    xi = np.asarray(dg["xi"], dtype=float).reshape(f.m, f.d)
    v = degeneracy_probe(field, xi, sched, f, _opts(cfg), factor=cfg["tolerances"]["growth_factor"],
                         n_moment_samples=int(dg.get("n_moment_samples", 200_000)), workers=workers)
    checks = {}
    if "expected" in dg:
        checks["verdict"] = v.verdict == dg["expected"]
    flat = [r for rt in v.results for rr in rt for r in rr]
    checks["sandwich"] = all(all(r.sandwich(cfg["tolerances"]["sandwich_rtol"])) for r in flat)
    tables = {"cells_dirichlet.csv": (CELL_HEADER, _cell_table(v.results, [xi]))}
    plot = _cell_plot(v.results, "dirichlet")
    for tr in v.trace:
        plot.append(("ensemble", _xi_str(xi), tr["t"], "", "", "mean", tr["mean"]))
        plot.append(("ensemble", _xi_str(xi), tr["t"], "", "", "stderr", tr["stderr"]))
    return ExperimentResult("degeneracy", checks, {"verdict": v.verdict, "expected": dg.get("expected")},
                            {"probe": v.to_dict()}, tables, plot)


# --------------------------------------------------------------------------
# pde convergence


def source_function(spec: dict | None, lengths=None, with_eps: bool = False):
    """Callable built from a force / oscillation / boundary / obstacle description."""
    if spec is None:
        return None
    kind = spec["kind"]
    if kind == "zero":
        return None
    if kind == "constant":
        c = float(spec["value"])
        return lambda x: np.full(x.shape[0], c)
    if kind == "sin_product":
        a = float(spec.get("amplitude", 1.0))
        L = np.ones(2) if lengths is None else np.asarray(lengths, dtype=float)
        return lambda x: a * np.prod(np.sin(np.pi * x / L[: x.shape[1]]), axis=1)
    if kind == "sin":
        a = float(spec.get("amplitude", 1.0))
        k = int(spec.get("axis", 0))
        return lambda x, eps: a * np.sin(2 * np.pi * x[:, k] / eps)
    if kind == "affine":
        xi = np.asarray(spec["xi"], dtype=float)
        return lambda x: x @ xi
    raise ConfigError(f"unknown source kind {kind!r}")


def pde_problem(cfg) -> PDEProblem:
    pd = cfg["pde"]
    d = int(cfg.get("field", {}).get("d", 2))
    lengths = (1.0,) * d
    osc = pd.get("oscillation")
    if osc is not None and osc["kind"] != "sin":
        raise ConfigError("oscillation kind must be 'sin'")
    return PDEProblem(
        origin=(0.0,) * d, lengths=lengths,
        g=source_function(pd.get("boundary"), lengths),
        force=source_function(pd.get("force"), lengths),
        oscillation=source_function(osc, lengths),
        obstacle=source_function(pd.get("obstacle"), lengths),
        eps_list=tuple(float(e) for e in pd.get("eps_list", (0.25, 0.125, 0.0625))),
    )


def run_pde_convergence(cfg, workers: int = 1) -> ExperimentResult:
    f, field = _pieces(cfg)
    pd = cfg["pde"]
    tol = cfg["tolerances"]
    if f.p != 2.0 or f.m != 1:
        raise ConfigError("pde_convergence supports the quadratic scalar law only")
    law = AnalyticLaw.quadratic(pd["law_diag"])
    problem = pde_problem(cfg)
    n_fine = int(pd.get("n_fine", 256))
    seeds = [int(cfg["base_seed"]) + i for i in range(int(pd.get("seeds", 1)))]
    opts = _opts(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnresolvedScale)
        study = convergence_study(problem, field, f, law, seeds[0], n_fine, opts, seeds=seeds)
    eps_list = list(problem.eps_list)
    err = np.array([[r.error_Ld for r in study.rows if r.eps == e] for e in eps_list])
    gap = np.array([[abs(r.energy_eps - r.energy_hom) for r in study.rows if r.eps == e] for e in eps_list])
    mean_err = err.mean(axis=1)
    mean_gap = gap.mean(axis=1)
    checks = {
        "error_trend": bool(mean_err[-1] < mean_err[0]),
        "energy_gap_trend": bool(mean_gap[-1] < mean_gap[0]),
        "weak_residual": all(r.weak_residual <= tol["weak_residual"] for r in study.rows),
    }
    summary = {"study": study.to_dict(), "mean_error": mean_err.tolist(), "mean_energy_gap": mean_gap.tolist(),
               "seeds": seeds}
    header = ["eps", "seed", "error_Ld_over_dm1", "error_W11_weak_proxy", "energy_eps", "energy_hom", "contact_fraction"]
    tables = {"convergence.csv": (header, [r.csv_row() for r in study.rows])}
    plot = []
    for r in study.rows:
        for name, val in zip(header[2:], r.csv_row()[2:]):
            plot.append(("epsilon", "", "", r.eps, r.seed, name, val))
    if pd.get("control", False):
        ctrl = convergence_study(problem, law.field(), law.integrand(), law, seeds[0], n_fine, opts)
        cerr = [r.error_Ld for r in ctrl.rows]
        summary["control"] = {"errors": cerr, "discretization_error": study.discretization_error}
        checks["control_below_discretization"] = bool(max(cerr) <= study.discretization_error)
        tables["convergence_control.csv"] = (header, [r.csv_row() for r in ctrl.rows])
        for r in ctrl.rows:
            plot.append(("control", "", "", r.eps, r.seed, "error_Ld_over_dm1", r.error_Ld))
    dumps = {"u_hom": study.u_hom} if pd.get("dump_fields", False) else {}
    verdicts = {"mean_error": dict(zip([repr(e) for e in eps_list], mean_err.tolist()))}
    return ExperimentResult("pde_convergence", checks, verdicts, summary, tables, plot, dumps)


# --------------------------------------------------------------------------
# obstacle


def run_obstacle(cfg, workers: int = 1) -> ExperimentResult:
    f, field = _pieces(cfg)
    ob = cfg.get("obstacle", {})
    tol = cfg["tolerances"]
    if field is None:
        field = field_from_dict({"kind": "constant", "diag_weights": 1.0}, f.d)
    seed = int(cfg["base_seed"])
    n = int(ob.get("n", 64))
    mesh = Mesh.cube(1.0, n, f.d)
    force_fn = source_function(ob.get("force", {"kind": "constant", "value": -8.0}), mesh.lengths)
    force = None if force_fn is None else force_fn(mesh.nodes)
    opts = _opts(cfg)
    lo_in = float(ob.get("inactive_level", -10.0))
    lo_act = float(ob.get("active_level", -0.1))

    def solve(level, init=None):
        obstacle = None if level is None else np.full(mesh.n_nodes, level)
        return minimize(f, field, seed, 1.0, mesh, fixed=np.zeros(mesh.n_nodes), force=force,
                        obstacle=obstacle, opts=opts, init=init)

    u0, r0 = solve(None)
    ui, ri = solve(lo_in)
    ua, ra = solve(lo_act)
    u0r, r0r = solve(None, init=f"random:{seed}")
    uar, rar = solve(lo_act, init=f"random:{seed + 1}")
    diff_in = float(np.max(np.abs(ui.values - u0.values)))
    min_gap = float(np.min(ua.values - lo_act))
    contact = float(np.mean(ua.values[~mesh.boundary_mask] <= lo_act + 1e-12))
    rel_u = abs(r0.final_energy - r0r.final_energy) / max(abs(r0.final_energy), 1e-300)
    rel_a = abs(ra.final_energy - rar.final_energy) / max(abs(ra.final_energy), 1e-300)
    checks = {
        "inactive_identical": diff_in <= tol["inactive_obstacle_atol"],
        "feasible": min_gap >= 0.0,
        "complementarity": ra.complementarity is not None and ra.complementarity <= tol["complementarity"],
        "energy_order": ra.final_energy >= r0.final_energy - 1e-12 * max(1.0, abs(r0.final_energy)),
        "contact_nonempty": contact > 0.0,
        "uniqueness": max(rel_u, rel_a) <= tol["uniqueness_rtol"],
    }
    summary = {
        "n": n, "inactive_max_diff": diff_in, "active_min_gap": min_gap, "complementarity": ra.complementarity,
        "energy_unconstrained": r0.final_energy, "energy_active": ra.final_energy, "contact_fraction": contact,
        "uniqueness_rel": [rel_u, rel_a],
        "iterations": {"unconstrained": r0.iterations, "inactive": ri.iterations, "active": ra.iterations},
    }
    rows = [["unconstrained", "zero", r0.final_energy, r0.iterations, int(r0.converged)],
            ["unconstrained", "random", r0r.final_energy, r0r.iterations, int(r0r.converged)],
            ["inactive", "zero", ri.final_energy, ri.iterations, int(ri.converged)],
            ["active", "zero", ra.final_energy, ra.iterations, int(ra.converged)],
            ["active", "random", rar.final_energy, rar.iterations, int(rar.converged)]]
    tables = {"obstacle.csv": (["case", "init", "energy", "solver_iters", "converged"], rows)}
    plot = [(r[0] + ":" + r[1], "", "", "", seed, "energy", r[2]) for r in rows]
    plot.append(("active", "", "", "", seed, "contact_fraction", contact))
    dumps = {}
    if ob.get("dump_fields", False):
        dumps = {"u_unconstrained": u0, "u_active": ua}
    return ExperimentResult("obstacle", checks, {"contact_fraction": contact}, summary, tables, plot, dumps)


# --------------------------------------------------------------------------
# ergodic


def run_ergodic(cfg, workers: int = 1) -> ExperimentResult:
    _, field = _pieces(cfg)
    eg = cfg.get("ergodic", {})
    tol = cfg["tolerances"]
    base = int(cfg["base_seed"])
    p = float(eg.get("p", cfg.get("integrand", {}).get("p", 2.0)))
    names = eg.get("observables", ["A_p", "Ainv_pprime"])
    eps = float(eg.get("average_eps", 1.0 / 64))
    ppp = int(eg.get("points_per_period", 4))
    n_seeds = int(eg.get("n_seeds", 100))
    d = field.d
    checks, summary, rows, plot = {}, {"averages": {}}, [], []
    for name in names:
        g = Observable(name, p)
        vals = np.array([ergodic_average(g, field, base + i, (0.0,) * d, (1.0,) * d, eps, ppp)
                         for i in range(n_seeds)])
        exact = mean_of(g, field)
        se = float(vals.std(ddof=1) / math.sqrt(n_seeds))
        ok = bool(abs(vals.mean() - exact) <= tol["ergodic_nsigma"] * se + 1e-12 * max(1.0, abs(exact)))
        checks[f"average_{name}"] = ok
        summary["averages"][name] = {"mean": float(vals.mean()), "exact": exact, "stderr": se}
        for i, v in enumerate(vals):
            rows.append([name, repr(eps), base + i, float(v)])
            plot.append((name, "", "", eps, base + i, "average", float(v)))
    probe = BorelProbe.random(int(eg.get("probe_boxes", 20)), float(eg.get("probe_coverage", 0.3)), seed=base,
                              domain_origin=(0.0,) * d, domain_lengths=(1.0,) * d)
    eps_list = [float(e) for e in eg.get("eps_list", (1 / 8, 1 / 32, 1 / 128))]
    seeds = [base + i for i in range(int(eg.get("probe_seeds", 20)))]
    g0 = Observable(names[0], p)
    pr = weak_L1_probe(g0, field, seeds, probe, eps_list, ppp, abs_tol=tol["probe_abs_tol"],
                       trend_factor=tol["probe_trend_factor"])
    checks["probe_trend"] = pr.passed
    summary["probe"] = {"observable": names[0], "boxes": probe.to_dict(), **pr.to_dict()}
    prow = []
    for i, e in enumerate(pr.eps_list):
        for j, s in enumerate(pr.seeds):
            prow.append(["probe0", e, s, float(pr.deviations[i, j])])
            plot.append(("probe0", "", "", e, s, "deviation", float(pr.deviations[i, j])))
    tables = {"ergodic_averages.csv": (["observable", "eps", "seed", "average"], rows),
              "probe.csv": (["probe_id", "eps", "seed", "deviation"], prow)}
    return ExperimentResult("ergodic", checks, {"probe_passed": pr.passed}, summary, tables, plot)


RUNNERS = {
    "homogenize": run_homogenize,
    "degeneracy": run_degeneracy,
    "pde_convergence": run_pde_convergence,
    "obstacle": run_obstacle,
    "ergodic": run_ergodic,
}


def run_experiment(cfg: dict, workers: int = 1) -> ExperimentResult:
    return RUNNERS[cfg["experiment"]](cfg, workers)
