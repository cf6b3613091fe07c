"""Solver checks against small LPs with hand-computable optima.

The solver is intentionally self-contained so that the occupation LP
can be cross-checked against an independent construction; the last test
pins that independence down.
"""

import pathlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minwork.simplex import SimplexResult, solve_simplex


def test_equality_only():
    # min x + y  s.t.  x + 2y = 4: put everything on y
    res = solve_simplex(c=[1.0, 1.0], A_eq=[[1.0, 2.0]], b_eq=[4.0])
    assert res.optimal
    assert res.value == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(res.x, [0.0, 2.0], atol=1e-12)


def test_inequality_binding():
    # min -x  s.t.  x <= 3
    res = solve_simplex(c=[-1.0], A_ub=[[1.0]], b_ub=[3.0])
    assert res.optimal
    assert res.value == pytest.approx(-3.0, abs=1e-12)


def test_mixed_constraints():
    # min 2x + y  s.t.  x + y = 1, x - y <= 0: optimum at x = 0, y = 1
    res = solve_simplex(
        c=[2.0, 1.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], A_ub=[[1.0, -1.0]], b_ub=[0.0]
    )
    assert res.optimal
    np.testing.assert_allclose(res.x, [0.0, 1.0], atol=1e-12)
    assert res.value == pytest.approx(1.0, abs=1e-12)


def test_negative_rhs_is_normalized():
    # x - y = -2 with x, y >= 0: min y hits y = 2
    res = solve_simplex(c=[0.0, 1.0], A_eq=[[1.0, -1.0]], b_eq=[-2.0])
    assert res.optimal
    np.testing.assert_allclose(res.x, [0.0, 2.0], atol=1e-12)


def test_infeasible():
    res = solve_simplex(c=[1.0, 1.0], A_eq=[[1.0, 1.0], [1.0, 1.0]], b_eq=[1.0, 2.0])
    assert res.status == "infeasible"
    assert res.x is None and res.value is None


def test_unbounded():
    # min -x with no constraint touching x beyond x >= 0
    res = solve_simplex(c=[-1.0, 0.0], A_eq=[[0.0, 1.0]], b_eq=[1.0])
    assert res.status == "unbounded"


def test_redundant_equality_rows():
    # second row is the first times two; rank deficiency must not upset
    # phase one
    res = solve_simplex(
        c=[1.0, 1.0, 0.0],
        A_eq=[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]],
        b_eq=[1.0, 2.0],
    )
    assert res.optimal
    assert res.value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(res.x, [0.0, 0.0, 1.0], atol=1e-12)


def test_degenerate_vertex_terminates():
    # classic cycling-prone instance; Bland's entering rule must leave it
    c = [-0.75, 150.0, -0.02, 6.0]
    A_ub = [
        [0.25, -60.0, -0.04, 9.0],
        [0.5, -90.0, -0.02, 3.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
    b_ub = [0.0, 0.0, 1.0]
    res = solve_simplex(c=c, A_ub=A_ub, b_ub=b_ub)
    assert res.optimal
    assert res.value == pytest.approx(-0.05, abs=1e-9)


def test_zero_objective_reports_feasible_point():
    res = solve_simplex(c=[0.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[1.0])
    assert res.optimal
    assert res.value == pytest.approx(0.0, abs=1e-15)
    assert res.x.sum() == pytest.approx(1.0, abs=1e-12)


def test_requires_constraints():
    with pytest.raises(ValueError):
        solve_simplex(c=[1.0])


def test_result_shape():
    res = solve_simplex(c=[1.0, 2.0, 3.0], A_eq=[[1.0, 1.0, 1.0]], b_eq=[1.0])
    assert isinstance(res, SimplexResult)
    assert res.x.shape == (3,)
    assert np.all(res.x >= 0.0)


@settings(max_examples=150, deadline=None)
@given(data=st.data())
def test_random_feasible_systems(data):
    # build A x0 = b from a known nonnegative x0, so feasibility is
    # guaranteed; any optimum must then be no worse than x0
    m = data.draw(st.integers(1, 4))
    n = data.draw(st.integers(1, 6))
    unit = st.floats(min_value=-2.0, max_value=2.0)
    A = np.array(data.draw(st.lists(st.lists(unit, min_size=n, max_size=n), min_size=m, max_size=m)))
    x0 = np.array(data.draw(st.lists(st.floats(0.0, 3.0), min_size=n, max_size=n)))
    c = np.array(data.draw(st.lists(unit, min_size=n, max_size=n)))
    b = A @ x0
    res = solve_simplex(c=c, A_eq=A, b_eq=b)
    assert res.status in ("optimal", "unbounded")
    if res.status == "optimal":
        assert np.all(res.x >= -1e-9)
        assert np.max(np.abs(A @ res.x - b)) < 1e-7 * (1.0 + np.abs(b).max())
        assert res.value <= c @ x0 + 1e-7


def test_no_external_lp_dependency():
    # the whole point of this module is an independent simplex route
    src = (pathlib.Path(__file__).parent.parent / "src" / "minwork" / "simplex.py").read_text()
    assert "linprog" not in src
    assert "scipy" not in src
