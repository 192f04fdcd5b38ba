import csv
import warnings

import numpy as np
import pytest

from degenhom.cell import HomogenizedTable, TableEntry
from degenhom.fields import CoefficientField, Discrete
from degenhom.integrands import Integrand
from degenhom.mesh import DiscreteField, norm
from degenhom.pde import (
    AnalyticLaw,
    PDEProblem,
    TabulatedLaw,
    UnresolvedScale,
    convergence_study,
    solve_eps,
    solve_hom,
    write_convergence_csv,
)

LAMINATE = CoefficientField("laminate", 2, diag_weights=(Discrete((1.0, 2.0), (0.5, 0.5)),))
LAW = AnalyticLaw.quadratic([1.6, 2.5])


def sinsin(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def manufactured(n, law=LAW):
    # -div(2 D grad u) = f0 with D = diag(1.6, 2.5) and u = sin sin
    prob = PDEProblem(force=lambda x: 2 * np.pi**2 * (1.6 + 2.5) * sinsin(x))
    u, rep, info = solve_hom(prob, law, n)
    exact = DiscreteField.interpolate(u.mesh, sinsin)
    return norm(u - exact, "Lp", 2.0), info


def test_analytic_law_value_and_gradient():
    assert LAW.value([[1.0, 2.0]]) == pytest.approx(1.6 + 4 * 2.5)
    assert np.allclose(LAW.gradient([[1.0, 2.0]]), [[3.2, 10.0]])
    law3 = AnalyticLaw((1.0, 2.0), 3.0)
    assert law3.value([[1.0, 1.0]]) == pytest.approx(5.0**1.5)


def test_solve_hom_second_order():
    e1, info = manufactured(16)
    e2, _ = manufactured(32)
    assert 1.7 <= np.log2(e1 / e2) <= 2.3
    assert info.weak_residual < 1e-8


def test_constant_field_reproduces_homogenized_solution():
    prob = PDEProblem(force=lambda x: 10 * sinsin(x))
    uh, rh, _ = solve_hom(prob, LAW, 16)
    ue, re, _ = solve_eps(prob, LAW.field(), LAW.integrand(), 0, 0.25, 16)
    assert np.max(np.abs(uh.values - ue.values)) < 1e-12
    assert re.final_energy == pytest.approx(rh.final_energy)


def test_unresolved_scale_warns_but_solves():
    prob = PDEProblem(force=lambda x: 10 * sinsin(x))
    with pytest.warns(UnresolvedScale):
        u, rep, info = solve_eps(prob, LAMINATE, Integrand(p=2.0), 0, 0.125, 8)
    assert not info.resolved and rep.converged


def test_oscillating_force_and_obstacle_data():
    prob = PDEProblem(force=lambda x: np.ones(len(x)), oscillation=lambda x, e: np.sin(2 * np.pi * x[:, 0] / e),
                      obstacle=lambda x: np.full(len(x), -1.0),
                      obstacle_perturbation=lambda x, e: 0.1 * np.cos(2 * np.pi * x[:, 0] / e))
    mesh = prob.mesh(8)
    assert np.allclose(prob.force_at(mesh, None)[:, 0], 1.0)
    assert not np.allclose(prob.force_at(mesh, 0.3)[:, 0], 1.0)
    assert prob.obstacle_at(mesh, 0.25).min() == pytest.approx(-1.1)


def test_obstacle_in_homogenized_problem():
    prob = PDEProblem(force=lambda x: np.full(len(x), -20.0), obstacle=lambda x: np.full(len(x), -0.1))
    u, rep, _ = solve_hom(prob, LAW, 16)
    assert u.values.min() >= -0.1
    assert rep.complementarity <= 1e-6


def test_eps_list_validation():
    with pytest.raises(ValueError):
        PDEProblem(eps_list=(0.1, 0.2))


def test_tabulated_law_interpolates_table():
    axis = np.linspace(-6, 6, 25)
    entries = [TableEntry(xi=np.array([[a, b]]), value=LAW.value([[a, b]]), stderr=0.0, trace=[])
               for a in axis for b in axis]
    tab = TabulatedLaw(HomogenizedTable(entries, None, 2.0), [axis, axis])
    assert tab.method == "cubic"
    assert tab.value([0.3, -1.1]) == pytest.approx(LAW.value([[0.3, -1.1]]), rel=1e-3)
    lin = TabulatedLaw(HomogenizedTable(entries, None, 2.0), [axis, axis], method="linear")
    assert lin.value([0.5, -1.0]) == pytest.approx(LAW.value([[0.5, -1.0]]), rel=1e-12)
    assert tab.convexity().passed
    e_tab, info = manufactured(16, tab)
    e_ana, _ = manufactured(16)
    assert e_tab == pytest.approx(e_ana, rel=0.05)
    assert info.weak_residual < 1e-6


def test_tabulated_law_missing_point():
    t = HomogenizedTable([TableEntry(xi=np.array([[0.0, 0.0]]), value=0.0, stderr=0.0, trace=[])], None, 2.0)
    with pytest.raises(KeyError):
        TabulatedLaw(t, [np.array([0.0, 1.0]), np.array([0.0])])


def test_convergence_study_control_and_csv(tmp_path):
    prob = PDEProblem(force=lambda x: 10 * sinsin(x), eps_list=(0.5, 0.25, 0.125))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnresolvedScale)
        st = convergence_study(prob, LAW.field(), LAW.integrand(), LAW, 0, 16)
    assert max(st.errors) <= st.discretization_error
    assert st.discretization_error > 0
    path = tmp_path / "conv.csv"
    write_convergence_csv(path, st)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["eps", "seed", "error_Ld_over_dm1", "error_W11_weak_proxy", "energy_eps", "energy_hom",
                       "contact_fraction"]
    assert len(rows) == 4


def test_convergence_study_needs_three_scales():
    with pytest.raises(ValueError):
        convergence_study(PDEProblem(eps_list=(0.5, 0.25)), LAMINATE, Integrand(), LAW, 0, 8)
