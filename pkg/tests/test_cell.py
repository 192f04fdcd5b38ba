import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degenhom.cell import (
    BoundConstants,
    CellSchedule,
    HomogenizedTable,
    MomentDivergence,
    SignalToNoiseError,
    TableEntry,
    _growth_factor,
    bound_constants,
    build_table,
    cell_dirichlet,
    cell_periodic,
    cell_sweep,
    convexity_scan,
    degeneracy_probe,
    dfhom,
    realization_seed,
    write_cell_csv,
)
from degenhom.fields import CoefficientField, Constant, Discrete, Pareto, field_from_dict
from degenhom.integrands import Integrand

TWO_POINT = Discrete((1.0, 2.0), (0.5, 0.5))
LAMINATE = CoefficientField("laminate", 2, diag_weights=(TWO_POINT,))
CHECKER = CoefficientField("checkerboard", 2, diag_weights=(TWO_POINT,), lambda_law=Discrete((0.0, 1.0), (0.5, 0.5)))
UNIT = CoefficientField("constant", 2, diag_weights=(Constant(1.0),))
SLABS = field_from_dict({"kind": "custom", "d": 2, "pattern": [[1.0, 1.0], [2.0, 2.0]], "shifted": False})


def harmonic_arithmetic(weights):
    # laminate oracle: harmonic mean of lambda^2 across layers, arithmetic along them
    w2 = np.asarray(weights, dtype=float) ** 2
    return 1.0 / np.mean(1.0 / w2), np.mean(w2)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_homogeneous_medium_exact(p):
    f = Integrand(p=p)
    xi = np.array([0.6, -0.8])
    r = cell_dirichlet(xi, UNIT, 0, 2.0, 8, f)
    assert r.mu_hat == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("n", [2, 4, 16])
def test_periodic_slabs_match_laminate_oracle(n):
    hm, am = harmonic_arithmetic([1.0, 2.0])
    f = Integrand(p=2.0)
    assert cell_periodic([1.0, 0.0], SLABS, 0, 2.0, n, f).mu_hat == pytest.approx(hm, rel=1e-9)
    assert cell_periodic([0.0, 1.0], SLABS, 0, 2.0, n, f).mu_hat == pytest.approx(am, rel=1e-9)


def test_transverse_laminate_affine_is_optimal():
    r = cell_dirichlet([0.0, 1.0], LAMINATE, 4, 8.0, 32, Integrand(p=2.0))
    assert r.mu_hat == pytest.approx(r.affine_bound, rel=1e-9)


@settings(max_examples=6)
@given(st.integers(0, 10_000), st.sampled_from([1.5, 2.0, 3.0]))
def test_sandwich_and_periodic_below_dirichlet(seed, p):
    f = Integrand(p=p)
    xi = np.array([1.0, 0.5])
    rd = cell_dirichlet(xi, CHECKER, seed, 3.0, 9, f)
    rp = cell_periodic(xi, CHECKER, seed, 3.0, 9, f)
    assert all(rd.sandwich(1e-6)) and all(rp.sandwich(1e-6))
    # a Dirichlet competitor is periodic-admissible on the same mesh
    assert rp.mu_hat <= rd.mu_hat * (1 + 1e-8)


def test_sweep_shares_realizations():
    sched = CellSchedule((2.0, 4.0), seeds_per_t=3, nodes_per_unit=2)
    res = cell_sweep([[1.0, 0.0], [0.0, 1.0]], CHECKER, Integrand(p=2.0), sched)
    assert len(res) == 2 and len(res[0]) == 3 and len(res[0][0]) == 2
    for rt in res:
        for rr in rt:
            assert rr[0].seed == rr[1].seed and rr[0].member == rr[1].member
    assert res[0][0][0].seed != res[1][0][0].seed


def test_sweep_parallel_matches_serial():
    sched = CellSchedule((2.0, 4.0), seeds_per_t=2, nodes_per_unit=2)
    f = Integrand(p=2.0)
    a = cell_sweep([[1.0, 0.0]], CHECKER, f, sched)
    b = cell_sweep([[1.0, 0.0]], CHECKER, f, sched, workers=2)
    assert [r[0].mu_hat for rt in a for r in rt] == [r[0].mu_hat for rt in b for r in rt]


def test_realization_seed_distinct():
    seeds = {realization_seed(s, t) for s in range(20) for t in (4.0, 8.0, 16.0)}
    assert len(seeds) == 60
    assert realization_seed(3, 4.0) == realization_seed(3, 4.0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        CellSchedule((4.0, 2.0))
    with pytest.raises(ValueError):
        CellSchedule((2.0, 4.0), n_per_t=(8, 8))
    s = CellSchedule((2.0, 4.0), nodes_per_unit=3, base_seed=5, seeds_per_t=2)
    assert s.n_for(1) == 12 and s.seeds == [5, 6]


def test_bound_constants_two_point():
    c = bound_constants(LAMINATE, Integrand(p=2.0), n_samples=50_000)
    hm, am = harmonic_arithmetic([1.0, 2.0])
    assert c.c0 == pytest.approx(hm, rel=0.03)
    assert c.C0 == pytest.approx(am, rel=0.03)
    assert c.C0_sphere <= c.C0 * (1 + 1e-12)


def test_bound_constants_divergent():
    heavy = CoefficientField("laminate", 2, diag_weights=(Pareto(1.0),))
    with pytest.raises(MomentDivergence):
        bound_constants(heavy, Integrand(p=2.0), n_samples=200_000)


def test_growth_factor():
    assert _growth_factor([4, 8, 16], [1.0, 2.0, 4.0]) == pytest.approx(2.0)
    assert _growth_factor([4, 8, 16, 32], [9.0, 1.0, 0.5, 0.25]) == pytest.approx(0.5)


def _table(values, se=0.0, constants=None):
    entries = [TableEntry(xi=np.array([[x, 0.0]]), value=v, stderr=se, trace=[]) for x, v in values]
    return HomogenizedTable(entries, constants, 2.0)


def test_convexity_scan_flags_concave_table():
    ok = _table([(x, x * x) for x in (-1, -0.5, 0, 0.5, 1)])
    assert convexity_scan(ok).passed
    bad = _table([(x, -x * x) for x in (-1, -0.5, 0, 0.5, 1)])
    rep = convexity_scan(bad)
    assert not rep.passed and rep.n_pairs > 0


def test_band_violations():
    c = BoundConstants(c0=1.0, C0=2.0, C1=0.5, C0_sphere=2.0, n_samples=1)
    assert not _table([(1.0, 1.5)], constants=c).band_violations()
    assert _table([(1.0, 3.0)], constants=c).band_violations()
    assert not _table([(1.0, 3.0)], se=0.2, constants=c).band_violations()


def test_dfhom_exact_for_quadratic_callable():
    rng = np.random.default_rng(0)
    noise = rng.standard_normal(8) * 0.01

    def source(xi):
        xi = np.asarray(xi).ravel()
        return 1.6 * xi[0] ** 2 + 2.5 * xi[1] ** 2 + noise  # common noise cancels

    g = dfhom(source, [1.0, -0.5], 0.1, 2.0, C_hat=10.0)
    assert np.allclose(g.grad, [[3.2, -2.5]])
    assert g.within_bound


def test_dfhom_signal_to_noise():
    rng = np.random.default_rng(1)
    src = lambda xi: float(np.sum(np.asarray(xi) ** 2)) + rng.standard_normal(8)
    with pytest.raises(SignalToNoiseError):
        dfhom(src, [1.0, 0.0], 1e-3, 2.0, C_hat=10.0)


def test_dfhom_from_table():
    vals = []
    for a in (0.9, 1.0, 1.1):
        for b in (-0.1, 0.0, 0.1):
            vals.append(TableEntry(xi=np.array([[a, b]]), value=a * a + 2 * b * b, stderr=0.0, trace=[]))
    t = HomogenizedTable(vals, None, 2.0)
    g = dfhom(t, [1.0, 0.0], 0.1, 2.0, C_hat=5.0)
    assert np.allclose(g.grad, [[2.0, 0.0]])


def test_build_table_and_csv(tmp_path):
    sched = CellSchedule((2.0, 4.0), seeds_per_t=2, nodes_per_unit=2)
    xis = [[1.0, 0.0], [0.0, 1.0]]
    table, res = build_table(xis, LAMINATE, Integrand(p=2.0), sched, n_samples=20_000)
    assert len(table.entries) == 2 and table.lookup([1.0, 0.0]) is not None
    assert not table.band_violations()
    path = tmp_path / "cells.csv"
    write_cell_csv(path, res, xis)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["xi_index", "xi_0", "xi_1", "t", "seed", "mu_hat", "solver_iters", "converged"]
    assert len(rows) == 1 + 2 * 2 * 2


def test_degeneracy_needs_three_sizes():
    with pytest.raises(ValueError):
        degeneracy_probe(LAMINATE, [1.0, 0.0], CellSchedule((2.0, 4.0), nodes_per_unit=2), Integrand(p=2.0))


def test_degeneracy_stable_small():
    sched = CellSchedule((2.0, 4.0, 8.0), seeds_per_t=4, nodes_per_unit=2)
    v = degeneracy_probe(LAMINATE, [1.0, 0.0], sched, Integrand(p=2.0), n_moment_samples=20_000)
    assert v.verdict == "Stable" and v.in_band


def test_cell_rejects_bad_input():
    with pytest.raises(ValueError):
        cell_dirichlet([1.0, 0.0, 0.0], UNIT, 0, 2.0, 4, Integrand(p=2.0))
    with pytest.raises(ValueError):
        cell_dirichlet([1.0, 0.0], UNIT, 0, -1.0, 4, Integrand(p=2.0))
