import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lipglobal.expr import parse_problem
from lipglobal.theorems import (
    compare_conditions,
    fit_decay,
    hadamard_levy_integrand,
    hadamard_levy_profile,
    ioffe_sur,
    liusternik_check,
    matrix_lower_bound,
    pourciau_m,
)

from conftest import fixture_problem

IDENTITY = parse_problem("n = 2\nF1 = x1\nF2 = x2")
DOUBLE = parse_problem("n = 2\nF1 = 2*x1\nF2 = 2*x2")


def test_matrix_lower_bound_examples():
    assert matrix_lower_bound(np.eye(3)) == pytest.approx(1.0)
    assert matrix_lower_bound([[3.0, 0.0], [0.0, -0.5]]) == pytest.approx(0.5)
    assert matrix_lower_bound([[1.0, 1.0], [1.0, 1.0]]) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        matrix_lower_bound(np.ones((2, 3)))


invertible = st.integers(1, 4).flatmap(lambda n: arrays(float, (n, n), elements=st.floats(-5, 5).map(lambda v: round(v, 6)))).filter(
    lambda A: np.linalg.cond(A) < 1e8
)


@given(invertible)
def test_lower_bound_times_inverse_norm(A):
    assert matrix_lower_bound(A) * np.linalg.norm(np.linalg.inv(A), 2) == pytest.approx(1.0, rel=1e-6)


@given(invertible, st.floats(-10, 10).filter(lambda c: abs(c) > 1e-3))
def test_lower_bound_scales(A, c):
    assert matrix_lower_bound(c * A) == pytest.approx(abs(c) * matrix_lower_bound(A), rel=1e-9, abs=1e-12)


@given(invertible)
def test_lower_bound_is_infimum_over_samples(A):
    rng = np.random.default_rng(0)
    U = rng.standard_normal((200, A.shape[0]))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    assert np.all(np.linalg.norm(U @ A.T, axis=1) >= matrix_lower_bound(A) * (1 - 1e-9))


def test_fit_decay_exact_power():
    t = np.geomspace(1, 100, 20)
    p, c, res = fit_decay(t, 3.0 * t**-2.0)
    assert p == pytest.approx(-2.0) and c == pytest.approx(3.0) and res <= 1e-12


def test_pourciau_linear_maps_diverge():
    for q, level in ((IDENTITY, 1.0), (DOUBLE, 2.0)):
        prof = pourciau_m(q)
        np.testing.assert_allclose(prof.values, level, rtol=1e-12)
        assert prof.verdict == "diverges-likely"


def test_pourciau_running_minimum_is_nonincreasing():
    prof = pourciau_m(fixture_problem("fa", a=0.5))
    assert np.all(np.diff(prof.values) <= 0)
    assert np.all(np.diff(prof.integral) >= 0)


def test_hadamard_levy_integrand_matches_dense_grid():
    p = fixture_problem("fa", a=0.5)
    th = np.linspace(0.0, 2 * np.pi, 400_001)
    x1 = 2.0 * np.cos(th)
    J = np.zeros((th.size, 2, 2))
    J[:, 0, 0] = np.where(x1 >= 0, 1.5, 0.5)
    J[:, 1, 0] = 3 * x1**2
    J[:, 1, 1] = 1.0
    oracle = np.linalg.svd(J, compute_uv=False)[:, -1].min()
    assert hadamard_levy_integrand(p, 2.0) == pytest.approx(oracle, rel=1e-6)


def test_hadamard_levy_identity():
    prof = hadamard_levy_profile(IDENTITY, r_grid=(1.0, 10.0, 100.0))
    np.testing.assert_allclose(prof.values, 1.0)
    assert prof.integral[-1] == pytest.approx(99.0)


def test_sur_linear():
    # f = 2x maps B(x, t) onto B(2x, 2t)
    est = ioffe_sur(DOUBLE, [0.3, -0.2], 0.5)
    assert est.winding == 1
    assert est.value == pytest.approx(1.0, rel=1e-6)
    one = ioffe_sur(parse_problem("n = 1\nF1 = 3*x1"), [1.0], 0.25)
    assert one.value == pytest.approx(0.75)


def test_sur_fold_is_zero():
    # x -> x^2 at 0: the image of a ball is one-sided
    est = ioffe_sur(parse_problem("n = 1\nF1 = x1*x1"), [0.0], 0.5)
    assert est.value == 0.0


def test_liusternik_smooth_point():
    p = parse_problem("n = 2\nF1 = x1 + x2*x2\nF2 = x2 + 0.5*x1*x1")
    chk = liusternik_check(p, [0.3, 0.4])
    J = np.array([[1.0, 0.8], [0.3, 1.0]])
    assert chk.sigma_min == pytest.approx(np.linalg.svd(J, compute_uv=False)[-1])
    assert chk.relative_error <= 0.05


def test_compare_identity():
    rep = compare_conditions(IDENTITY, targets=8, y_count=2, liusternik_points=1)
    assert rep.row("hadamard-palais").holds
    assert rep.row("pourciau").verdict == "diverges-likely"
    assert rep.row("hadamard-levy").verdict == "diverges-likely"
    assert all(r[3] == "unique" for r in rep.inversions)
    assert rep.table().splitlines()[0].split() == ["condition", "holds", "verdict", "detail"]


def test_compare_cubic_rank_fails_but_inverts():
    # x -> x^3 is a homeomorphism whose derivative vanishes at 0
    p = parse_problem("n = 1\nbox = [-10, 10]\nF1 = x1^3")
    rep = compare_conditions(p, targets=8, y_count=2, liusternik_points=0)
    assert rep.row("hadamard-palais").holds is False
    assert rep.rank.verdict == "rank-deficient-witness"
    # every target is inverted; phi_y is also stationary at the singular point x = 0,
    # so targets other than 0 carry a stationary non-root beside the root
    for y, x, err, verdict in rep.inversions:
        assert x is not None and err <= 1e-8
        assert x[0] == pytest.approx(np.cbrt(y[0]), abs=1e-8)
        assert verdict in ("unique", "suspect")
    assert rep.row("audited-inversion").holds is False
    with pytest.raises(KeyError):
        rep.row("liusternik")
