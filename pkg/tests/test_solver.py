import json

import numpy as np
import pytest

from degenhom.fields import CoefficientField, Constant, Discrete
from degenhom.integrands import Integrand
from degenhom.mesh import DiscreteField, Mesh, norm
from degenhom.solver import (
    InfeasibleObstacle,
    SolveOptions,
    build_problem,
    complementarity_residual,
    minimize,
    pcg,
)

UNIT = CoefficientField("constant", 2, diag_weights=(Constant(1.0),))
CHECKER = CoefficientField("checkerboard", 2, diag_weights=(Discrete((1.0, 2.0), (0.5, 0.5)),))


def sinsin(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def manufactured_error(n, opts=None):
    # f = |grad u|^2 gives -2 Lap u = f0; u = sin sin needs f0 = 4 pi^2 sin sin
    mesh = Mesh.cube(1.0, n, 2)
    f = Integrand(p=2.0, lambda_weight=0.0)
    force = 4 * np.pi**2 * sinsin(mesh.nodes)
    u, rep = minimize(f, UNIT, 0, 1.0, mesh, fixed=np.zeros(mesh.n_nodes), force=force, opts=opts)
    exact = DiscreteField.interpolate(mesh, sinsin)
    return norm(u - exact, "Lp", 2.0), rep


def test_manufactured_second_order():
    e1, _ = manufactured_error(16)
    e2, _ = manufactured_error(32)
    assert 1.7 <= np.log2(e1 / e2) <= 2.3


@pytest.mark.parametrize("ls", ["direct", "amg", "jacobi"])
def test_linear_solvers_agree(ls):
    ref, _ = manufactured_error(16, SolveOptions(linear_solver="direct"))
    e, rep = manufactured_error(16, SolveOptions(linear_solver=ls))
    assert rep.converged
    assert e == pytest.approx(ref, rel=1e-6)


def test_first_order_matches_linear_solve():
    mesh = Mesh.cube(4.0, 16, 2)
    f = Integrand(p=2.0)
    lift = mesh.nodes @ np.array([1.0, 0.5])
    u1, r1 = minimize(f, CHECKER, 3, 1.0, mesh, fixed=lift)
    u2, r2 = minimize(f, CHECKER, 3, 1.0, mesh, fixed=lift, opts=SolveOptions(method="first_order"))
    assert r2.method == "first_order"
    assert r2.final_energy == pytest.approx(r1.final_energy, rel=1e-9)
    assert np.max(np.abs(u1.values - u2.values)) < 1e-5


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_uniqueness_zero_vs_random_init(p):
    mesh = Mesh.cube(4.0, 12, 2)
    f = Integrand(p=p)
    lift = mesh.nodes @ np.array([1.0, -0.5])
    _, r0 = minimize(f, CHECKER, 1, 1.0, mesh, fixed=lift)
    _, r1 = minimize(f, CHECKER, 1, 1.0, mesh, fixed=lift, init="random:5")
    assert abs(r0.final_energy - r1.final_energy) <= 1e-8 * abs(r0.final_energy)


def test_energy_history_monotone():
    mesh = Mesh.cube(4.0, 12, 2)
    _, rep = minimize(Integrand(p=3.0), CHECKER, 1, 1.0, mesh, fixed=mesh.nodes @ np.array([1.0, 0.0]),
                      init="random:2")
    h = np.asarray(rep.energy_history)
    assert np.all(np.diff(h) <= 1e-12 * (1 + np.abs(h[:-1])))


def test_minimizer_beats_lift():
    mesh = Mesh.cube(4.0, 12, 2)
    f = Integrand(p=3.0)
    lift = mesh.nodes @ np.array([0.0, 1.0])
    dp = build_problem(f, CHECKER, 1, 1.0, mesh, fixed=lift)
    J0, _ = dp.objective(np.zeros((dp.n_red, 1)))
    _, rep = minimize(f, CHECKER, 1, 1.0, mesh, problem=dp)
    assert rep.final_energy <= J0


def test_constant_medium_affine_is_minimizer():
    mesh = Mesh.cube(2.0, 8, 2)
    f = Integrand(p=3.0, lambda_weight=0.0)
    xi = np.array([0.7, -1.1])
    u, rep = minimize(f, UNIT, 0, 1.0, mesh, fixed=mesh.nodes @ xi)
    assert np.allclose(u.values[:, 0], mesh.nodes @ xi, atol=1e-9)
    assert rep.final_energy == pytest.approx(np.linalg.norm(xi) ** 3 * 4.0)


def test_periodic_constant_medium():
    mesh = Mesh.cube(2.0, 6, 2)
    f = Integrand(p=2.0)
    xi = np.array([1.0, 2.0])
    _, rep = minimize(f, UNIT, 0, 1.0, mesh, fixed=mesh.nodes @ xi, boundary="periodic")
    assert rep.final_energy == pytest.approx(5.0 * 4.0)


def test_obstacle_feasibility_and_complementarity():
    mesh = Mesh.cube(1.0, 24, 2)
    f = Integrand(p=2.0)
    force = np.full(mesh.n_nodes, -8.0)
    u0, r0 = minimize(f, UNIT, 0, 1.0, mesh, fixed=np.zeros(mesh.n_nodes), force=force)
    u, r = minimize(f, UNIT, 0, 1.0, mesh, fixed=np.zeros(mesh.n_nodes), force=force,
                    obstacle=np.full(mesh.n_nodes, -0.05))
    assert np.all(u.values >= -0.05)
    assert r.complementarity <= 1e-6
    assert r.final_energy >= r0.final_energy
    ui, _ = minimize(f, UNIT, 0, 1.0, mesh, fixed=np.zeros(mesh.n_nodes), force=force,
                     obstacle=np.full(mesh.n_nodes, -10.0))
    assert np.max(np.abs(ui.values - u0.values)) <= 1e-10


def test_obstacle_first_order_p3():
    mesh = Mesh.cube(1.0, 16, 2)
    f = Integrand(p=3.0)
    force = np.full(mesh.n_nodes, -8.0)
    u, r = minimize(f, UNIT, 0, 1.0, mesh, fixed=np.zeros(mesh.n_nodes), force=force,
                    obstacle=np.full(mesh.n_nodes, -0.05))
    assert np.all(u.values >= -0.05)
    assert r.complementarity <= 1e-6


def test_infeasible_obstacle_raises():
    mesh = Mesh.cube(1.0, 4, 2)
    with pytest.raises(InfeasibleObstacle):
        build_problem(Integrand(), UNIT, 0, 1.0, mesh, fixed=np.zeros(mesh.n_nodes),
                      obstacle=np.full(mesh.n_nodes, 0.5))


def test_complementarity_residual():
    u = np.array([[0.0], [1.0], [2.0]])
    ob = np.zeros((3, 1))
    g = np.array([[3.0], [0.0], [-1e-3]])
    assert complementarity_residual(u, ob, g) == pytest.approx(1e-3)


def test_pcg_solves_spd(rng):
    n = 50
    M = rng.standard_normal((n, n))
    K = M @ M.T + n * np.eye(n)
    b = rng.standard_normal(n)
    x, it, rn = pcg(lambda v: K @ v, b, atol=1e-12)
    assert np.allclose(K @ x, b, atol=1e-10)


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(method="newton")
    with pytest.raises(ValueError):
        SolveOptions(continuation_deltas=(0.1, 0.2))
    with pytest.raises(TypeError):
        SolveOptions.from_dict({"bogus": 1})
    assert SolveOptions.from_dict({"continuation_deltas": [0.1, 0.0]}).continuation_deltas == (0.1, 0.0)


def test_cg_method_rejects_nonquadratic():
    mesh = Mesh.cube(1.0, 4, 2)
    with pytest.raises(ValueError):
        minimize(Integrand(p=3.0), UNIT, 0, 1.0, mesh, fixed=np.zeros(mesh.n_nodes), opts=SolveOptions(method="cg"))


def test_report_serializes():
    _, rep = manufactured_error(8)
    d = json.loads(rep.to_json())
    assert d["converged"] and d["iterations"] >= 1


def test_vector_valued_problem():
    mesh = Mesh.cube(2.0, 6, 2)
    f = Integrand(p=3.0, m=2, d=2, lambda_weight=0.0)
    xi = np.array([[1.0, 0.0], [0.5, 1.0]])
    u, rep = minimize(f, UNIT, 0, 1.0, mesh, fixed=mesh.nodes @ xi.T)
    assert np.allclose(u.values, mesh.nodes @ xi.T, atol=1e-8)
