import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lipglobal.clarke import (
    FunctionObjective,
    LeastSquares,
    NonsmoothSamplingError,
    ball_points,
    jacobian_family,
    min_norm_element,
    phi_subgradients,
    sample_gradients,
)
from lipglobal.expr import (
    activity,
    algebraic_map,
    algebraic_system,
    eval_selection_jacobian,
    inverse_problem,
    parse_problem,
)

ABS = FunctionObjective(lambda x: abs(x[0]), 1, grad=lambda x: np.sign(x), nonsmooth=lambda x: x[0] == 0.0)


# --- Jacobian families ------------------------------------------------------


def test_fa_family_at_kink(fa):
    fam = jacobian_family(fa, [0.0, 0.0])
    np.testing.assert_array_equal(fam.base, np.eye(2))
    assert len(fam.directions) == 1
    np.testing.assert_array_equal(fam.directions[0], [[0.5, 0.0], [0.0, 0.0]])
    assert fam.exact
    np.testing.assert_array_equal(fam.member([-1.0]), [[0.5, 0.0], [0.0, 1.0]])


def test_fa_family_is_singleton_away_from_kink(fa):
    fam = jacobian_family(fa, [2.0, -3.0])
    assert fam.is_singleton
    np.testing.assert_array_equal(fam.base, [[1.5, 0.0], [12.0, 1.0]])


def test_identity_map_family():
    fam = jacobian_family(parse_problem("n = 1\nF1 = x1"), [0.3])
    assert fam.is_singleton and fam.base.tolist() == [[1.0]]


def test_example1_outer_family_shares_one_parameter(example1):
    fam = jacobian_family(algebraic_map(example1), [0.0, 0.0], mode="outer-global")
    # Ax - F at 0: the 4*x1 terms cancel in row 2
    np.testing.assert_array_equal(fam.base, [[-2.0, 1.0], [0.0, -3.0]])
    # both abs(x2) occurrences are one parameter: d/dx2 of Ax - F picks up -t twice
    assert fam.n_params == 1
    np.testing.assert_array_equal(fam.directions[0], [[0.0, -1.0], [0.0, -1.0]])
    assert not fam.exact


def test_member_validates_parameters(fa):
    fam = jacobian_family(fa, [0.0, 0.0])
    with pytest.raises(ValueError):
        fam.member([1.5])
    with pytest.raises(ValueError):
        fam.member([0.0, 0.0])


def test_nested_kinks_are_flagged_outer():
    p = parse_problem("n = 1\nF1 = abs(abs(x1)) + x1")
    fam = jacobian_family(p, [0.0])
    assert not fam.exact
    # the inactive outer kink of |(|x| - 1)| + |x| cancels: the map is constant near 0
    q = parse_problem("n = 1\nF1 = abs(abs(x1) - 1) + abs(x1)")
    assert jacobian_family(q, [0.0]).min_singular_value() == 0.0


def test_dependent_kinks_are_flagged_outer():
    p = parse_problem("n = 2\nF1 = abs(x1 + x2)\nF2 = abs(2*x1 + 2*x2 + 0)")
    fam = jacobian_family(p, [0.0, 0.0])
    assert fam.n_params == 2 and not fam.exact


@given(arrays(float, 2, elements=st.floats(-3, 3)))
def test_pointwise_family_at_smooth_point_is_selection_jacobian(x):
    p = parse_problem("n = 2\nF1 = x1^3 + abs(x2 - x1)\nF2 = abs(x1)*x2 + x1")
    assume(all(abs(r.argument) > 1e-6 for r in activity(p, x)))
    fam = jacobian_family(p, x)
    assert fam.is_singleton
    np.testing.assert_allclose(fam.base, eval_selection_jacobian(p, x), rtol=1e-14, atol=1e-14)


@given(
    st.floats(-2, 2),
    st.floats(-2, 2),
    st.floats(-2, 2),
)
def test_vertex_images_reach_the_family_minimum(a, b, c):
    # three independent kinks at the origin; residual r = F(0) + (a, b, c) offsets
    p = parse_problem(f"n = 3\nF1 = abs(x1) + x2 + {a}\nF2 = abs(x2) - x3 + {b}\nF3 = abs(x3) + x1 + {c}")
    sub = phi_subgradients(p, [0.0, 0.0, 0.0])
    grid = np.linspace(-1, 1, 21)
    T = np.array(np.meshgrid(grid, grid, grid)).reshape(3, -1).T
    fam = sub.family
    imgs = np.array([fam.member(t).T @ sub.residual for t in T])
    brute = np.min(np.linalg.norm(imgs, axis=1))
    assert sub.measure.norm <= brute + 1e-9
    # every hull point of the vertex images is a family image (affine family), so it cannot go lower
    assert sub.measure.norm >= brute - 0.1 * np.max(np.abs(sub.residual)) - 1e-12


# --- gradient sampling --------------------------------------------------------


def test_abs_bundle_has_both_signs():
    b = sample_gradients(ABS, [0.0], 0.1, k=8, seed=3)
    assert set(np.unique(b.gradients)) == {-1.0, 1.0}
    assert np.all(np.abs(b.points - b.center) <= 0.1)


def test_smooth_bundle_is_tight():
    q = FunctionObjective(lambda x: 0.5 * x[0] ** 2, 1, grad=lambda x: x)
    b = sample_gradients(q, [1.0], 1e-3, seed=1)
    assert len(b) >= 2
    np.testing.assert_allclose(b.gradients, 1.0, atol=1e-3)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_bundles_are_deterministic(seed, n):
    q = FunctionObjective(lambda x: float(np.sum(np.abs(x))), n, grad=np.sign)
    u = np.linspace(-0.01, 0.01, n)
    a = sample_gradients(q, u, 0.05, seed=seed)
    b = sample_gradients(q, u, 0.05, seed=seed)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.gradients.tobytes() == b.gradients.tobytes()
    assert len(a) >= n + 1
    assert np.all(np.linalg.norm(a.points - u, axis=1) <= 0.05 * (1 + 1e-12))


def test_ball_points_inside_unit_ball():
    P = ball_points(3, 200, seed=5)
    assert P.shape == (200, 3) and np.all(np.linalg.norm(P, axis=1) <= 1.0)


def test_sampling_gives_up_on_persistent_kinks():
    everywhere = FunctionObjective(lambda x: 0.0, 1, grad=lambda x: np.zeros(1), nonsmooth=lambda x: True)
    with pytest.raises(NonsmoothSamplingError):
        sample_gradients(everywhere, [0.0], 0.1, max_resample=2)
    with pytest.raises(ValueError):
        sample_gradients(ABS, [0.0], 0.0)


def test_example1_bundle_at_root_is_stationary(example1):
    q = LeastSquares(algebraic_system(example1), [0.0, 0.0])
    b = sample_gradients(q, [0.0, 0.0], 1e-9, seed=0)
    assert min_norm_element(b).norm <= 1e-8


# --- min-norm element ---------------------------------------------------------


def test_min_norm_examples():
    m = min_norm_element(np.array([[-1.0], [1.0]]))
    assert m.norm == 0.0
    m = min_norm_element(np.array([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_allclose(m.vector, [0.5, 0.5], atol=1e-10)
    assert abs(m.norm - np.sqrt(0.5)) <= 1e-10
    m = min_norm_element(np.array([[2.0]]))
    assert m.vector.tolist() == [2.0] and m.norm == 2.0
    with pytest.raises(ValueError):
        min_norm_element(np.zeros((0, 2)))


@given(arrays(float, st.tuples(st.integers(1, 12), st.integers(1, 5)), elements=st.floats(-100, 100)))
def test_min_norm_optimality(G):
    m = min_norm_element(G)
    assert m.converged
    assert np.all(m.weights >= 0.0) and abs(m.weights.sum() - 1.0) <= 1e-12
    scale = max(1.0, np.max(np.abs(G)))
    np.testing.assert_allclose(m.weights @ G, m.vector, atol=1e-10 * scale)
    # first-order optimality: <g - v, v> >= 0 for every bundle element
    assert np.all(G @ m.vector - m.vector @ m.vector >= -1e-9 * scale**2)


# --- chain-rule set ---------------------------------------------------------


def test_phi_subgradients_at_example1_root(example1):
    sub = phi_subgradients(algebraic_system(example1), [0.0, 0.0], [0.0, 0.0])
    assert sub.is_root and sub.stationary
    assert np.all(sub.images == 0.0)


def test_phi_subgradients_linear_nonstationary():
    sub = phi_subgradients(parse_problem("n=1 m=1; F1 = x1 - y1"), [1.0], [0.0])
    assert sub.residual.tolist() == [1.0]
    assert sub.images.tolist() == [[1.0]]
    assert not sub.stationary


def test_phi_subgradients_stationary_nonroot(twowell):
    sub = phi_subgradients(twowell, [0.0])
    assert sub.residual.tolist() == [-1.0]
    assert sub.stationary and not sub.is_root
    assert sub.rank_deficient_explains


def test_chain_rule_inclusion_sampled(fa, rng):
    inv = inverse_problem(fa)
    y = np.array([0.3, -1.2])
    q = LeastSquares(inv, y)
    X = rng.uniform(-3, 3, size=(200, 2))
    for x in X:
        if abs(x[0]) < 1e-3:
            continue
        h = 1e-6
        fd = np.array([(q(x + h * e) - q(x - h * e)) / (2 * h) for e in np.eye(2)])
        sub = phi_subgradients(inv, x, y)
        d = min_norm_element(sub.images - fd).norm
        assert d <= 1e-5 * max(1.0, np.linalg.norm(fd))
