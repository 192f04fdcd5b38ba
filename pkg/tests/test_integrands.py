import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from degenhom.integrands import (
    Integrand,
    eval_density,
    grad_density,
    gradient_bound,
    integrand_from_dict,
    opnorm,
    truncate,
    truncation_profile,
)

ps = st.sampled_from([1.5, 2.0, 3.0])
mds = st.sampled_from([(1, 2), (1, 3), (2, 2), (3, 3)])
finite = st.floats(-3, 3, allow_nan=False)


def make(kind, p, m, d, rho=0.0):
    return Integrand(kind=kind, p=p, m=m, d=d, rho=rho if kind == "perturbed" else 0.0)


@st.composite
def points(draw):
    p = draw(ps)
    m, d = draw(mds)
    kind = draw(st.sampled_from(["power", "perturbed"]))
    rho = draw(st.floats(0, 1))
    f = make(kind, p, m, d, rho)
    A = draw(arrays(float, d, elements=st.floats(0.1, 5)))
    lam = draw(st.floats(0, 3))
    xi = draw(arrays(float, (m, d), elements=finite))
    return f, A, lam, xi


def test_power_density_value():
    f = Integrand(p=3.0, m=1, d=2)
    assert eval_density(f, [2.0, 1.0], 0.5, [[1.0, 2.0]]) == pytest.approx((4 + 4) ** 1.5 + 0.5)


def test_opnorm_matches_svd(rng):
    M = rng.standard_normal((5, 3, 2))
    assert np.allclose(opnorm(M), [np.linalg.svd(a, compute_uv=False)[0] for a in M])


@given(points())
def test_growth_sandwich(pt):
    f, A, lam, xi = pt
    lo, hi = f.growth_bounds(A[None], np.array([lam]), xi[None])
    val = eval_density(f, A, lam, xi)
    assert lo[0] <= val + 1e-9 * (1 + abs(val))
    assert val <= hi[0] + 1e-9 * (1 + abs(val))


@given(points())
def test_gradient_matches_finite_differences(pt):
    f, A, lam, xi = pt
    g = grad_density(f, A, lam, xi)
    h = 1e-6
    fd = np.zeros_like(xi)
    for idx in np.ndindex(*xi.shape):
        E = np.zeros_like(xi)
        E[idx] = h
        fd[idx] = (eval_density(f, A, lam, xi + E) - eval_density(f, A, lam, xi - E)) / (2 * h)
    assert np.allclose(g, fd, rtol=1e-4, atol=1e-4 * (1 + np.abs(g).max()))


@given(points(), arrays(float, (3, 3), elements=finite), st.floats(0, 1))
def test_convexity_along_segments(pt, other, s):
    f, A, lam, xi = pt
    eta = other[: xi.shape[0], : xi.shape[1]]
    mid = eval_density(f, A, lam, s * xi + (1 - s) * eta)
    chord = s * eval_density(f, A, lam, xi) + (1 - s) * eval_density(f, A, lam, eta)
    assert mid <= chord + 1e-9 * (1 + abs(chord))


@given(points(), arrays(float, (3, 3), elements=finite))
def test_local_lipschitz_bound(pt, z):
    f, A, lam, xi = pt
    lhs, rhs = gradient_bound(f, A, lam, xi, z[: xi.shape[0], : xi.shape[1]])
    assert lhs <= rhs * (1 + 1e-9) + 1e-12


def test_regularized_density_close_for_small_delta():
    f = Integrand(p=1.5, regularization_delta=1e-4)
    f0 = f.with_delta(0.0)
    xi = [[0.3, -0.7]]
    assert eval_density(f, [1, 1], 0, xi) == pytest.approx(eval_density(f0, [1, 1], 0, xi), abs=1e-4)
    assert Integrand(p=3.0, regularization_delta=0.1).delta == 0.0


def test_is_quadratic():
    assert Integrand(p=2.0).is_quadratic
    assert Integrand(kind="perturbed", p=2.0, rho=0.5).is_quadratic
    assert not Integrand(p=3.0).is_quadratic


def test_invalid_integrands():
    with pytest.raises(ValueError):
        Integrand(p=1.0)
    with pytest.raises(ValueError):
        Integrand(kind="power", rho=0.5)
    with pytest.raises(ValueError):
        Integrand(kind="other")
    with pytest.raises(ValueError):
        eval_density(Integrand(), [0.0, 1.0], 0.0, [[1.0, 0.0]])


def test_from_dict_roundtrip():
    f = Integrand(kind="perturbed", p=3.0, m=2, d=2, rho=0.3, lambda_weight=0.5)
    assert integrand_from_dict(f.to_dict()) == f


@given(st.floats(0, 5))
def test_truncation_profile_properties(t):
    phi = float(truncation_profile(np.array([t]))[0])
    assert phi <= t + 1e-15
    assert 0 <= phi <= 9 / 8 + 1e-15
    if t <= 1:
        assert phi == t
    if t >= 3:
        assert phi == 0.0


def test_truncation_profile_lipschitz_and_c1():
    t = np.linspace(0, 4, 40001)
    phi = truncation_profile(t)
    slope = np.diff(phi) / np.diff(t)
    assert np.all(np.abs(slope) <= 1 + 1e-9)
    assert np.max(np.abs(np.diff(slope))) < 1e-2
    assert phi.max() == pytest.approx(9 / 8, abs=1e-6)


@given(arrays(float, (6, 2), elements=st.floats(-10, 10)), arrays(float, (6, 2), elements=st.floats(-10, 10)),
       st.floats(0.1, 5))
def test_truncate_is_1_lipschitz(u, v, r):
    tu, tv = truncate(u, r), truncate(v, r)
    du = np.linalg.norm(tu - tv, axis=1)
    assert np.all(du <= np.linalg.norm(u - v, axis=1) + 1e-9)
    assert np.all(np.linalg.norm(tu, axis=1) <= 2 * r + 1e-9)
    small = np.linalg.norm(u, axis=1) <= r
    assert np.allclose(tu[small], u[small])
