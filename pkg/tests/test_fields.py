import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from degenhom.fields import (
    CoefficientField,
    Constant,
    Discrete,
    InversePareto,
    Pareto,
    cell_values,
    estimate_moments,
    exact_moments,
    field_at,
    field_from_dict,
    hash_uniform,
    law_from_dict,
    sample_field,
)

TWO_POINT = Discrete((1.0, 2.0), (0.5, 0.5))


def pareto_moment_quad(alpha, scale, q):
    # independent oracle: integrate x^q against the Pareto density
    dens = lambda x: alpha * scale**alpha / x ** (alpha + 1)
    val, _ = integrate.quad(lambda x: x**q * dens(x), scale, np.inf)
    return val


def test_hash_uniform_is_deterministic_and_uniform():
    cells = np.arange(20000)
    u1 = hash_uniform(7, 3, cells)
    u2 = hash_uniform(7, 3, cells)
    assert np.array_equal(u1, u2)
    assert np.all((u1 > 0) & (u1 < 1))
    assert stats.kstest(u1, "uniform").pvalue > 1e-3


def test_hash_uniform_streams_and_seeds_differ():
    cells = np.arange(1000)
    a = hash_uniform(1, 0, cells)
    b = hash_uniform(2, 0, cells)
    c = hash_uniform(1, 1, cells)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.1
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.1


def test_hash_uniform_negative_cells():
    u = hash_uniform(0, 0, np.array([[-3, -5], [-3, -5], [4, 2]]))
    assert u[0] == u[1] and u[0] != u[2]


def test_discrete_moments_match_direct_sum():
    assert TWO_POINT.moment(2.0) == pytest.approx(0.5 * 1 + 0.5 * 4)
    assert TWO_POINT.moment(-2.0) == pytest.approx(0.5 * 1 + 0.5 * 0.25)
    # harmonic and arithmetic means of lambda^2
    assert 1.0 / TWO_POINT.moment(-2.0) == pytest.approx(1.6)
    assert TWO_POINT.moment(2.0) == pytest.approx(2.5)


@pytest.mark.parametrize("alpha,scale,q", [(3.0, 1.0, 2.0), (4.0, 0.5, 1.5), (2.5, 2.0, -1.0)])
def test_pareto_moment_against_quadrature(alpha, scale, q):
    assert Pareto(alpha, scale).moment(q) == pytest.approx(pareto_moment_quad(alpha, scale, q), rel=1e-8)


def test_pareto_moment_diverges():
    assert Pareto(1.0).moment(2.0) == math.inf
    assert Pareto(2.0).moment(2.0) == math.inf


def test_inverse_pareto_moments_against_quadrature():
    law = InversePareto(0.5, 1.0)
    # X = U^(1/alpha) on (0, 1)
    val, _ = integrate.quad(lambda u: u ** (2.0 / 0.5), 0, 1)
    assert law.moment(2.0) == pytest.approx(val)
    assert law.moment(-2.0) == math.inf
    assert math.isfinite(law.moment(-0.25))


@pytest.mark.parametrize("law,q,k", [
    (Pareto(3.0, 1.0), 2.0, 5.0), (Pareto(3.0, 1.0), 1.0, 0.5),
    (InversePareto(2.0, 1.0), 1.0, 0.3), (InversePareto(3.0, 1.0), -1.0, 2.0),
])
def test_tail_excess_against_quadrature(law, q, k):
    # E[(X^q - k)_+] = int_0^1 (ppf(u)^q - k)_+ du
    val, _ = integrate.quad(lambda u: max(float(law.ppf(np.array([u]))[0]) ** q - k, 0.0), 0, 1, limit=500)
    assert law.tail_excess(q, k) == pytest.approx(val, rel=1e-5)


def test_tail_excess_discrete():
    assert TWO_POINT.tail_excess(2.0, 2.0) == pytest.approx(0.5 * (4.0 - 2.0))


@given(st.floats(0.01, 0.99))
def test_ppf_monotone(u):
    for law in (Pareto(2.0), InversePareto(1.5), TWO_POINT):
        assert law.ppf(np.array([u]))[0] <= law.ppf(np.array([min(u + 0.005, 0.999)]))[0]


def test_law_from_dict_roundtrip():
    for law in (Constant(1.5), TWO_POINT, Pareto(3.0, 2.0), InversePareto(0.5)):
        assert law_from_dict(law.to_dict()) == law
    assert law_from_dict(2.0) == Constant(2.0)
    with pytest.raises(ValueError):
        law_from_dict({"law": "gamma"})


def test_invalid_laws():
    with pytest.raises(ValueError):
        Pareto(0.0)
    with pytest.raises(ValueError):
        Discrete((1.0, 2.0), (0.3, 0.3))
    with pytest.raises(ValueError):
        Constant(-1.0)


def test_laminate_depends_on_first_coordinate_only():
    field = CoefficientField("laminate", 2, diag_weights=(TWO_POINT,))
    x = np.array([[3.2, 0.1], [3.2, 17.9], [3.2, -4.0]])
    diag, _ = sample_field(field, 5, x)
    assert np.all(diag == diag[0])


def test_checkerboard_constant_on_cells_and_deterministic():
    field = CoefficientField("checkerboard", 2, diag_weights=(TWO_POINT,))
    shift = field.shift(3)
    base = np.array([[10.0, 20.0]]) + shift  # a cell corner in world coordinates
    pts = base + np.array([[0.1, 0.1], [0.9, 0.5], [0.5, 0.99]])
    d1, _ = sample_field(field, 3, pts)
    d2, _ = sample_field(field, 3, pts)
    assert np.array_equal(d1, d2)
    assert np.all(d1 == d1[0])


def test_isotropic_coupling_repeats_entries():
    field = CoefficientField("checkerboard", 3, diag_weights=(Pareto(3.0),))
    diag, _ = cell_values(field, 0, 100)
    assert np.all(diag == diag[:, :1])


def test_independent_coupling():
    field = CoefficientField("checkerboard", 2, diag_weights=(TWO_POINT, TWO_POINT), coupling="independent")
    diag, _ = cell_values(field, 0, 2000)
    assert np.mean(diag[:, 0] != diag[:, 1]) > 0.3


def test_constant_field():
    field = CoefficientField("constant", 2, diag_weights=(Constant(2.0),), lambda_law=Constant(0.5))
    diag, lam = field_at(field, 0, [0.3, 0.4])
    assert np.all(diag == 2.0) and lam == 0.5


def test_custom_pattern_periodic():
    field = field_from_dict({"kind": "custom", "d": 2, "pattern": [[1.0, 1.0], [2.0, 2.0]], "shifted": False})
    diag, _ = sample_field(field, 0, np.array([[0.5, 0.5], [1.5, 0.5], [2.5, 7.0]]))
    assert diag[:, 0].tolist() == [1.0, 2.0, 1.0]


def test_empirical_law_matches():
    field = CoefficientField("checkerboard", 2, diag_weights=(TWO_POINT,))
    diag, _ = cell_values(field, 11, 20000)
    assert np.mean(diag[:, 0] == 2.0) == pytest.approx(0.5, abs=0.02)


def test_exact_moments_two_point():
    field = CoefficientField("laminate", 2, diag_weights=(TWO_POINT,))
    m = exact_moments(field, 2.0)
    assert m["A_p"] == pytest.approx(2.5) and m["Ainv_pprime"] == pytest.approx(0.625)


def test_estimate_moments_flags():
    good = CoefficientField("checkerboard", 2, diag_weights=(TWO_POINT,))
    mom = estimate_moments(good, 0, 2.0, 40000)
    assert not mom.any_divergent
    assert mom.A_p == pytest.approx(2.5, rel=0.03)
    heavy = CoefficientField("checkerboard", 2, diag_weights=(Pareto(1.0),))
    assert estimate_moments(heavy, 0, 2.0, 200000).flags["A_p"]
    small = CoefficientField("checkerboard", 2, diag_weights=(InversePareto(0.5),))
    fl = estimate_moments(small, 0, 2.0, 200000).flags
    assert fl["Ainv_pprime"] and not fl["A_p"]


def test_sample_field_rejects_bad_shape():
    field = CoefficientField("checkerboard", 2, diag_weights=(TWO_POINT,))
    with pytest.raises(ValueError):
        sample_field(field, 0, np.zeros((3, 3)))
