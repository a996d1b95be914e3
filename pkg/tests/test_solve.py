import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipglobal.clarke import FunctionObjective, LeastSquares
from lipglobal.expr import parse_problem
from lipglobal.solve import (
    MultipleRoots,
    NoRootFound,
    SolveOptions,
    StationaryNonroot,
    find_roots,
    implicit_atlas,
    implicit_eval,
    invert,
    minimize_nonsmooth,
    rank_deficiency,
    solve_algebraic,
    start_points,
)

from conftest import fixture_problem

FAST = SolveOptions(multistart=16)


def test_minimize_smooth_quadratic():
    obj = FunctionObjective(lambda x: float((x - 1) @ (x - 1)), 2, grad=lambda x: 2 * (x - 1))
    res = minimize_nonsmooth(obj, [5.0, -3.0])
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)
    assert res.converged


def test_minimize_nonsmooth_abs():
    # f(x) = |x1| + 2|x2|, minimized at the origin where it is not differentiable
    obj = FunctionObjective(
        lambda x: float(abs(x[0]) + 2 * abs(x[1])), 2, grad=lambda x: np.array([np.sign(x[0]), 2 * np.sign(x[1])])
    )
    res = minimize_nonsmooth(obj, [0.7, -0.4])
    assert res.value <= 1e-6
    np.testing.assert_allclose(res.x, 0.0, atol=1e-6)


def test_history_is_nonincreasing():
    obj = FunctionObjective(lambda x: float(abs(x[0] - 2) + x[1] ** 2), 2,
                            grad=lambda x: np.array([np.sign(x[0] - 2), 2 * x[1]]))
    res = minimize_nonsmooth(obj, [-4.0, 3.0])
    assert np.all(np.diff(res.history) <= 1e-15)


def test_start_points_center_first():
    box = np.array([[-2.0, 4.0], [0.0, 1.0]])
    P = start_points(box, 20, 3)
    np.testing.assert_allclose(P[0], [1.0, 0.5])
    assert np.all((P >= box[:, 0]) & (P <= box[:, 1]))
    np.testing.assert_array_equal(P, start_points(box, 20, 3))


def test_example1_unique_root(example1):
    rs = find_roots(example1)
    assert rs.verdict == "unique"
    np.testing.assert_allclose(rs.roots[0].x, [0.0, 0.0], atol=1e-8)
    assert rs.roots[0].residual <= 1e-9


def test_twowell_two_roots():
    rs = find_roots(fixture_problem("twowell"))
    assert rs.verdict == "multiple"
    xs = sorted(float(r.x[0]) for r in rs.roots)
    np.testing.assert_allclose(xs, [-1.0, 1.0], atol=1e-8)
    for s in rs.nonroots:
        assert abs(s.x[0]) <= 1e-6
        assert s.value == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(MultipleRoots) as ei:
        implicit_eval(fixture_problem("twowell"))
    assert ei.value.rootset is rs or ei.value.rootset.verdict == "multiple"


def test_linear_implicit():
    p = parse_problem("n = 1\nm = 1\nF1 = x1 - y1")
    root = implicit_eval(p, [7.0], FAST)
    assert root.x[0] == pytest.approx(7.0, abs=1e-9)


def test_cubic_implicit(cubic):
    assert implicit_eval(cubic, [0.0]).x[0] == pytest.approx(0.0, abs=1e-9)
    assert implicit_eval(cubic, [2.0]).x[0] == pytest.approx(1.0, abs=1e-9)


def test_no_root_found():
    p = parse_problem("n = 1\nF1 = x1*x1 + 1")
    with pytest.raises(NoRootFound):
        implicit_eval(p, opts=FAST)


def test_suspect_raises():
    # x^3 - 3x + 3 has one real root near -2.1 and a stationary non-root of phi at x = 1
    p = parse_problem("n = 1\nbox = [-3, 3]\nF1 = x1^3 - 3*x1 + 3")
    rs = find_roots(p)
    assert rs.verdict == "suspect"
    with pytest.raises(StationaryNonroot):
        implicit_eval(p)
    assert rank_deficiency(p, rs.nonroots[0]) <= 1e-6


def test_invert_fa(fa):
    np.testing.assert_allclose(invert(fa, [0, 0], FAST).x, [0.0, 0.0], atol=1e-8)
    # f(2, 1) = (2 + 0.5*2, 8 + 1) = (3, 9)
    np.testing.assert_allclose(invert(fa, [3, 9], FAST).x, [2.0, 1.0], atol=1e-8)


def test_invert_identity():
    p = parse_problem("n = 1\nF1 = x1")
    assert invert(p, [4.0], FAST).x[0] == pytest.approx(4.0, abs=1e-9)


@settings(max_examples=10)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_invert_fa_roundtrip(u, v):
    fa = fixture_problem("fa")
    x = np.array([u, v])
    target = [x[0] + 0.5 * abs(x[0]), x[0] ** 3 + x[1]]
    got = invert(fa, target, FAST).x
    np.testing.assert_allclose(got, x, atol=1e-7 * (1 + np.abs(x).max()))


def test_atlas_cubic(cubic):
    ys = np.linspace(-2, 2, 21)
    at = implicit_atlas(cubic, ys, FAST)
    assert len(at) == 21 and at.breaks == 0
    for e in at.entries:
        x = e.x[0]
        assert abs(x**3 + x - e.y[0]) <= 1e-9


def test_atlas_linear_ratio():
    p = parse_problem("n = 1\nm = 1\nF1 = x1 - y1")
    at = implicit_atlas(p, np.linspace(0, 1, 11), FAST, audit_every=5)
    np.testing.assert_allclose(at.xs.ravel(), np.linspace(0, 1, 11), atol=1e-9)
    np.testing.assert_allclose([e.ratio for e in at.entries[1:]], 1.0, atol=1e-6)
    assert [e.audited for e in at.entries].count(True) == 3


def test_thread_determinism(example2):
    a = find_roots(example2, opts=SolveOptions(workers=1))
    b = find_roots(example2, opts=SolveOptions(workers=3))
    assert a.verdict == b.verdict
    for r, s in zip(a.roots, b.roots):
        np.testing.assert_array_equal(r.x, s.x)


def test_seed_determinism(fa):
    a = invert(fa, [1.0, 2.0], SolveOptions(multistart=8, seed=5))
    b = invert(fa, [1.0, 2.0], SolveOptions(multistart=8, seed=5))
    np.testing.assert_array_equal(a.x, b.x)


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(eps_r=0)
    with pytest.raises(ValueError):
        SolveOptions(multistart=0)


def test_algebraic_example1(example1):
    sol = solve_algebraic(example1)
    c = sol.checklist
    assert c.spectral.a1 and c.theorem == "theorem7" and c.route == "f-minus-ax"
    assert c.rank.holds and c.coercivity.coercive
    assert sol.claim == "evidenced"
    np.testing.assert_allclose(sol.root.x, [0.0, 0.0], atol=1e-8)


def test_algebraic_example2(example2):
    sol = solve_algebraic(example2)
    c = sol.checklist
    assert not c.spectral.a1 and c.theorem == "corollary10"
    assert sol.claim == "evidenced"
    # the family determinant attains its minimum 13.5 at the origin
    assert c.rank.det_range.lo == pytest.approx(13.5, rel=1e-9)
    np.testing.assert_allclose(sol.root.x, [0.0, 0.0], atol=1e-8)
    assert any(line.startswith("claim = evidenced") for line in c.lines())


def test_algebraic_linear():
    p = parse_problem("n = 2\nA = [[2, 0], [0, 2]]\nxi = [6, -2]\nF1 = 0\nF2 = 0")
    sol = solve_algebraic(p, opts=FAST)
    assert sol.checklist.theorem == "theorem6"
    np.testing.assert_allclose(sol.root.x, [3.0, -1.0], atol=1e-8)
