import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbpsat.errors import GridTooSmall, UnsupportedOrder
from sbpsat.operators import (
    SUPPORTED_ORDERS,
    AccuracyOrder,
    FirstDerivativeOperator,
    as_order,
    boundary_width,
    build_first_derivative,
    build_second_derivative,
    compose_wide_second_derivative,
    verify_first_derivative,
    verify_second_derivative,
)

ORDERS = [(2, 1), (4, 2), (6, 3)]


def test_second_order_operator_by_hand():
    op = build_first_derivative((2, 1), 5, 0.25)
    np.testing.assert_allclose(op.P, 0.25 * np.array([0.5, 1, 1, 1, 0.5]))
    u = np.array([0.3, -1.2, 2.0, 0.7, 5.0])
    Du = op.D @ u
    assert Du[0] == pytest.approx((u[1] - u[0]) / 0.25)
    assert Du[-1] == pytest.approx((u[-1] - u[-2]) / 0.25)
    for i in range(1, 4):
        assert Du[i] == pytest.approx((u[i + 1] - u[i - 1]) / 0.5)


@pytest.mark.parametrize("order", ORDERS)
@pytest.mark.parametrize("n", [17, 33, 65])
def test_operator_certification(order, n):
    report = verify_first_derivative(build_first_derivative(order, n))
    assert report.max_sbp_residual <= 1e-13
    assert max(report.required_residuals()) <= 1e-10
    assert report.passed


@pytest.mark.parametrize("order", ORDERS)
def test_constants_and_linears(order):
    op = build_first_derivative(order, 33)
    x = op.nodes()
    np.testing.assert_allclose(op.D @ np.ones(op.n), 0.0, atol=1e-12)
    np.testing.assert_allclose(op.D @ x, 1.0, atol=1e-12)
    assert op.P.sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("order", ORDERS)
def test_closure_is_not_more_accurate_than_claimed(order):
    # degree r+1 must fail at the boundary, otherwise the table is mislabelled
    order = as_order(order)
    report = verify_first_derivative(build_first_derivative(order, 33))
    boundary = {k: b for k, _, b in report.accuracy}
    assert boundary[order.r + 1] > 1e-6


def test_perturbed_q_is_caught():
    op = build_first_derivative((4, 2), 33)
    Q = op.Q.copy()
    Q[1, 2] += 1e-6
    bad = FirstDerivativeOperator(op.n, op.h, op.P, Q, op.order)
    report = verify_first_derivative(bad)
    assert report.max_sbp_residual == pytest.approx(1e-6, rel=1e-6)
    assert not report.passed


def test_second_order_quadratic_boundary_error():
    report = verify_first_derivative(build_first_derivative((2, 1), 33))
    _, interior, boundary = report.accuracy[2]
    assert interior <= 1e-12
    # one-sided difference of s^2 at s=0 is h/L^2 = 1/32 on [0, 1]
    assert boundary == pytest.approx(1 / 32, rel=1e-10)


@pytest.mark.parametrize("order,n", [((2, 1), 2), ((4, 2), 8), ((6, 3), 9), ((6, 3), 12)])
def test_grid_too_small(order, n):
    with pytest.raises(GridTooSmall):
        build_first_derivative(order, n)


def test_minimum_grids_build():
    for order in SUPPORTED_ORDERS:
        n = 2 * boundary_width(order) + 1
        assert verify_first_derivative(build_first_derivative(order, n)).passed


@pytest.mark.parametrize("bad", [(8, 4), (4, 1), 5, 3, 0])
def test_unsupported_orders(bad):
    with pytest.raises(UnsupportedOrder):
        as_order(bad)


def test_order_coercion():
    assert as_order(4) == AccuracyOrder(4, 2)
    assert as_order([6, 3]) == AccuracyOrder(6, 3)
    assert str(as_order(2)) == "(2,1)"


def test_negative_spacing_rejected():
    with pytest.raises(ValueError):
        build_first_derivative((2, 1), 9, -0.1)


@pytest.mark.parametrize("order", ORDERS)
def test_json_round_trip(order):
    op = build_first_derivative(order, 21, 0.05)
    back = FirstDerivativeOperator.from_json(op.to_json())
    assert back.order == op.order and back.n == op.n and back.h == op.h
    np.testing.assert_array_equal(back.Q, op.Q)
    np.testing.assert_array_equal(back.P, op.P)


def test_json_shape_mismatch():
    data = build_first_derivative((2, 1), 9).to_dict()
    data["n"] = 10
    with pytest.raises(ValueError):
        FirstDerivativeOperator.from_dict(data)


@settings(max_examples=30, deadline=None)
@given(order=st.sampled_from(ORDERS), n=st.integers(13, 80),
       h=st.floats(1e-3, 10.0))
def test_sbp_property_any_grid(order, n, h):
    op = build_first_derivative(order, n, h)
    residual = np.abs(op.Q + op.Q.T - op.B).max()
    assert residual <= 1e-13
    assert np.all(op.P > 0)
    # summation by parts: u^T P D v + (D u)^T P v = u_N v_N - u_0 v_0
    rng = np.random.default_rng(n)
    u, v = rng.standard_normal((2, n))
    lhs = u @ (op.P * (op.D @ v)) + (op.D @ u) @ (op.P * v)
    assert lhs == pytest.approx(u[-1] * v[-1] - u[0] * v[0], abs=1e-10 * (1 + abs(lhs)))


# -- second derivative -------------------------------------------------------

def test_narrow_second_order_interior_stencil():
    op = build_second_derivative((2, 1), 9, 0.125)
    row = op.D2[4]
    np.testing.assert_allclose(row[3:6] * 0.125**2, [1, -2, 1], atol=1e-12)
    assert np.count_nonzero(row) == 3


@pytest.mark.parametrize("order", ORDERS)
@pytest.mark.parametrize("n", [17, 33, 65])
def test_narrow_second_derivative_certification(order, n):
    op = build_second_derivative(order, n)
    report = verify_second_derivative(op)
    assert report.passed, report.to_dict()
    assert report.spd_check
    assert report.reconstruction_residual <= 1e-13
    x = op.nodes()
    np.testing.assert_allclose(op.D2 @ np.ones(n), 0.0, atol=1e-8)
    np.testing.assert_allclose(op.D2 @ x, 0.0, atol=1e-8)


@pytest.mark.parametrize("order", ORDERS)
def test_narrow_interior_bandwidth(order):
    order = as_order(order)
    op = build_second_derivative(order, 33)
    mid = op.n // 2
    assert np.count_nonzero(op.D2[mid]) == order.p + 1


@pytest.mark.parametrize("order", ORDERS)
def test_dissipation_is_semidefinite_with_constant_null_space(order):
    op = build_second_derivative(order, 33)
    ev = np.linalg.eigvalsh(op.dissipation)
    assert ev[0] >= -1e-10 * ev[-1]
    np.testing.assert_allclose(op.dissipation @ np.ones(op.n), 0.0, atol=1e-9)
    # M / h spectrum stays O(1): the scaled eigenvalue bounds are grid independent
    lo, hi = verify_second_derivative(op).m_eigen_bounds
    assert 0 < lo < hi < 3


def test_wide_second_derivative():
    op = build_first_derivative((2, 1), 33)
    x = op.nodes()
    DD = compose_wide_second_derivative(op)
    np.testing.assert_allclose(DD @ np.ones(op.n), 0.0, atol=1e-10)
    assert np.abs((DD @ x**2 - 2.0)[2:-2]).max() <= 1e-12 * op.n**2


def test_wide_fourth_order_boundary_is_first_order():
    errs = []
    for n in (33, 65):
        op = build_first_derivative((4, 2), n)
        x = op.nodes()
        DD = compose_wide_second_derivative(op)
        # D is exact on quadratics at the boundary, so D D is too; cubics
        # are the first monomials that expose the O(h) boundary error
        np.testing.assert_allclose(DD @ x**2, 2.0, atol=1e-9)
        res = DD @ x**3 - 6 * x
        errs.append(np.abs(res[:4]).max())
    # boundary accuracy r - 1 = 1: errors halve with h
    assert np.log2(errs[0] / errs[1]) == pytest.approx(1.0, abs=0.15)
