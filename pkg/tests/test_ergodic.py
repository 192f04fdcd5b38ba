import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from degenhom.ergodic import (
    BorelProbe,
    Observable,
    ergodic_average,
    mean_of,
    quadrature_grid,
    truncation_check,
    weak_L1_probe,
    write_probe_csv,
)
from degenhom.fields import CoefficientField, Discrete, Pareto

TWO_POINT = Discrete((1.0, 2.0), (0.5, 0.5))
CHECKER = CoefficientField("checkerboard", 2, diag_weights=(TWO_POINT,))


def test_exact_means_two_point():
    # closed forms: E[lambda^2] = 2.5, E[lambda^-2] = 0.625
    assert Observable("A_p", 2.0).exact_mean(CHECKER) == pytest.approx(2.5)
    assert Observable("Ainv_pprime", 2.0).exact_mean(CHECKER) == pytest.approx(0.625)
    assert Observable("A_p", 2.0, cap=3.0).exact_mean(CHECKER) == pytest.approx(0.5 + 1.5)


def test_observable_values():
    diag = np.array([[1.0, 2.0], [2.0, 2.0]])
    lam = np.array([0.5, 0.0])
    assert Observable("A_p", 2.0)(diag, lam).tolist() == [4.0, 4.0]
    assert Observable("Ainv_pprime", 2.0)(diag, lam).tolist() == [1.0, 0.25]
    assert Observable("Lambda")(diag, lam).tolist() == [0.5, 0.0]
    with pytest.raises(ValueError):
        Observable("trace")


def test_quadrature_grid_weights():
    pts, w, shape = quadrature_grid((0.0, 0.0), (1.0, 2.0), 0.25, 4)
    assert shape == (16, 32)
    assert w * len(pts) == pytest.approx(2.0)


def test_ergodic_average_close_to_mean():
    vals = [ergodic_average(Observable("A_p", 2.0), CHECKER, s, (0, 0), (1, 1), 1 / 64) for s in range(20)]
    se = np.std(vals, ddof=1) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - 2.5) <= 4 * se


@given(st.integers(1, 30), st.floats(0.05, 0.5), st.integers(0, 1000))
def test_probe_boxes_inside_domain(n, cov, seed):
    probe = BorelProbe.random(n, cov, seed)
    for lo, hi in probe.boxes:
        assert np.all(lo >= 0) and np.all(hi <= 1) and np.all(hi > lo)


def test_probe_complement():
    probe = BorelProbe([((0.0, 0.0), (0.5, 1.0))])
    comp = BorelProbe([((0.0, 0.0), (0.5, 1.0))], complement=True)
    pts = np.array([[0.25, 0.5], [0.75, 0.5]])
    assert probe.contains(pts).tolist() == [True, False]
    assert comp.contains(pts).tolist() == [False, True]
    with pytest.raises(ValueError):
        BorelProbe([((0.5, 0.5), (1.5, 1.0))])


def test_weak_probe_trend():
    probe = BorelProbe.random(20, 0.3, 0)
    res = weak_L1_probe(Observable("A_p", 2.0), CHECKER, range(10), probe, [1 / 8, 1 / 32, 1 / 128])
    assert res.trend_ok and res.passed


def test_weak_probe_requires_decreasing_eps():
    with pytest.raises(ValueError):
        weak_L1_probe(Observable("A_p"), CHECKER, [0], BorelProbe.random(), [0.1, 0.2])


def test_truncation_check_bound():
    field = CoefficientField("checkerboard", 2, diag_weights=(Pareto(3.0),))
    probe = BorelProbe.random(10, 0.3, 1)
    out = truncation_check(Observable("A_p", 2.0), 5.0, field, range(5), probe, [1 / 8, 1 / 32])
    assert out["passed"] and out["tail_mass"] > 0


def test_mean_of_monte_carlo_fallback():
    field = CoefficientField("checkerboard", 2, diag_weights=(TWO_POINT, TWO_POINT), coupling="independent")
    # max of two iid two-point entries squared: 1 w.p. 1/4, 4 w.p. 3/4
    assert mean_of(Observable("A_p", 2.0), field) == pytest.approx(3.25, rel=0.01)


def test_probe_csv(tmp_path):
    probe = BorelProbe.random(5, 0.3, 0)
    res = weak_L1_probe(Observable("A_p", 2.0), CHECKER, [0, 1], probe, [1 / 8, 1 / 16, 1 / 32])
    path = tmp_path / "p.csv"
    write_probe_csv(path, {"p0": res})
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["probe_id", "eps", "seed", "deviation"] and len(rows) == 7
