import math

import numpy as np
import pytest

from sbpsat.errors import (
    NonFiniteState,
    PowerIterationNoConverge,
    SingularSystem,
    UnsupportedOrder,
)
from sbpsat.operators import build_first_derivative
from sbpsat.problems import (
    SemiDiscreteSystem,
    assemble_advection,
    assemble_advection_diffusion,
    assemble_steady_transport,
)
from sbpsat.timestepping import (
    SbpTimeProblem,
    TimeGrid,
    cfl_timestep,
    rk4_integrate,
    sbp_time_solve,
    solve_steady,
    spectral_radius,
)


def scalar_system(rate=-1.0):
    return SemiDiscreteSystem(
        name="scalar", weights=np.ones(1), rhs=lambda u, t=0.0: rate * u,
        rate_terms=lambda u, t=0.0: {"decay": 2 * rate * u[0] * u[0]},
        linear_part=lambda v: rate * v)


def frozen_system(n=4):
    return SemiDiscreteSystem(
        name="frozen", weights=np.ones(n), rhs=lambda u, t=0.0: np.zeros_like(u),
        rate_terms=lambda u, t=0.0: {}, linear_part=lambda v: np.zeros_like(v))


def test_time_grid():
    grid = TimeGrid.from_max_dt(1.0, 0.3)
    assert grid.n_steps == 4 and grid.dt == 0.25
    assert TimeGrid.from_max_dt(1.0, 0.25).n_steps == 4
    with pytest.raises(ValueError):
        TimeGrid(0.0, 3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_zero_rhs_keeps_state():
    u0 = np.array([1.0, -2.0, 3.0, 0.5])
    traj = rk4_integrate(frozen_system(), u0, TimeGrid(1.0, 7))
    np.testing.assert_array_equal(traj.final_state, u0)
    assert traj.times[-1] == 1.0


def test_scalar_decay_is_fourth_order():
    traj = rk4_integrate(scalar_system(), np.ones(1), TimeGrid(1.0, 100))
    assert traj.final_state[0] == pytest.approx(math.exp(-1), abs=1e-9)
    errs = [abs(rk4_integrate(scalar_system(), np.ones(1), TimeGrid(1.0, n)).final_state[0]
                - math.exp(-1)) for n in (10, 20)]
    assert math.log2(errs[0] / errs[1]) == pytest.approx(4.0, abs=0.1)


def test_sampling_records_first_and_last():
    traj = rk4_integrate(scalar_system(), np.ones(1), TimeGrid(1.0, 10), sample_every=4)
    np.testing.assert_allclose(traj.times, [0.0, 0.4, 0.8, 1.0])
    rows = list(traj.csv_rows())
    assert len(rows) == 4 and len(rows[0]) == 5
    # measured and predicted rates agree exactly for the scalar identity
    assert max(r[4] for r in rows) <= 1e-15


def test_advection_accuracy_at_cfl_half():
    op = build_first_derivative((4, 2), 65)
    k = 2 * np.pi
    sys_ = assemble_advection(1.0, op, -1.0, lambda t: np.sin(-k * t))
    x = op.nodes()
    grid = TimeGrid.from_max_dt(0.5, cfl_timestep(sys_, 0.5))
    traj = rk4_integrate(sys_, np.sin(k * x), grid, sample_every=grid.n_steps)
    err = traj.final_state - np.sin(k * (x - 0.5))
    assert math.sqrt(np.sum(op.P * err**2)) <= 1.5e-4  # ~ C h^3 with C from the study


def test_blowup_detection():
    sys_ = scalar_system(rate=50.0)
    with pytest.raises(NonFiniteState) as info:
        rk4_integrate(sys_, np.ones(1), TimeGrid(100.0, 50))
    assert info.value.step >= 1
    traj = rk4_integrate(sys_, np.ones(1), TimeGrid(100.0, 50), raise_on_blowup=False)
    assert traj.blowup_step == info.value.step
    assert np.all(np.isfinite(traj.states))  # energies may overflow first


def test_dissipative_energy_is_nonincreasing():
    op = build_first_derivative((4, 2), 33)
    sys_ = assemble_advection_diffusion(1.0, 0.05, op, "narrow")
    u0 = np.random.default_rng(0).standard_normal(op.n)
    grid = TimeGrid.from_max_dt(0.5, cfl_timestep(sys_))
    e = rk4_integrate(sys_, u0, grid).energies
    assert np.all(np.diff(e) <= 1e-12 * e[:-1])


def test_spectral_radius_of_diagonal():
    d = np.array([1.0, -3.0, 2.0, 0.5])
    assert spectral_radius(lambda v: d * v, 4) == pytest.approx(3.0, rel=1e-3)
    assert spectral_radius(lambda v: 0 * v, 4) == 0.0


def test_spectral_radius_budget():
    rot = np.array([[0.0, -1.0], [1.0, 0.0]]) * 2.0
    # a pure rotation pair never settles within a handful of iterations
    with pytest.raises(PowerIterationNoConverge):
        spectral_radius(lambda v: rot @ v + 1e-3 * np.sin(v), 2, max_iter=45, rtol=1e-12)


def test_cfl_advection_scaling():
    dts = []
    for n in (65, 129):
        op = build_first_derivative((2, 1), n)
        sys_ = assemble_advection(1.0, op, -1.0)
        dt = cfl_timestep(sys_, 0.5)
        rho = 0.5 * 2.6 / dt
        exact = np.abs(np.linalg.eigvals(sys_.matrix.toarray())).max()
        assert rho == pytest.approx(exact, rel=1e-2)
        # central differences keep |lambda| just below a/h
        assert 0.99 / op.h <= rho <= math.pi / op.h
        dts.append(dt)
    assert dts[0] / dts[1] == pytest.approx(2.0, rel=0.05)


def test_cfl_diffusion_scaling():
    dts = []
    for n in (65, 129):
        op = build_first_derivative((2, 1), n)
        dts.append(cfl_timestep(assemble_advection_diffusion(1.0, 1.0, op, "narrow")))
    assert dts[0] / dts[1] == pytest.approx(4.0, rel=0.1)


def test_cfl_unconstrained():
    assert cfl_timestep(frozen_system(), t_final=2.0) == 2.0
    assert cfl_timestep(frozen_system()) == math.inf
    with pytest.raises(ValueError):
        cfl_timestep(frozen_system(), safety=1.5)


def test_solve_steady_examples():
    np.testing.assert_allclose(solve_steady(np.eye(3), [1.0, 2.0, 3.0]), [1, 2, 3])
    np.testing.assert_allclose(solve_steady([[2.0, 0.0], [0.0, 4.0]], [2.0, 4.0]), [1, 1])
    M, b = assemble_steady_transport(build_first_derivative((4, 2), 33), np.cos, 0.0)
    x = solve_steady(M, b)
    assert np.linalg.norm(M @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_solve_steady_singular():
    with pytest.raises(SingularSystem):
        solve_steady(np.ones((3, 3)), np.arange(3.0))
    with pytest.raises(ValueError):
        solve_steady(np.eye(3), np.ones(2))


# -- SBP in time -------------------------------------------------------------

ORDERS = [(2, 1), (4, 2), (6, 3)]
LAMBDAS = [-1, -100, -1e4, -1 + 5j, -0.1 + 10j]


def test_sbp_time_constant_solution():
    U, diag = sbp_time_solve(SbpTimeProblem(0.0, 2.0 - 1.0j, 1.0, 21))
    np.testing.assert_allclose(U, 2.0 - 1.0j, atol=1e-13)
    assert diag.initial_mismatch <= 1e-13


def test_sbp_time_decay():
    U, _ = sbp_time_solve(SbpTimeProblem(-1.0, 1.0, 1.0, 21, (4, 2)))
    assert abs(U[-1] - math.exp(-1)) <= 1e-3


@pytest.mark.parametrize("order", [(2, 1), (4, 2)])
def test_sbp_time_stiff_coarse(order):
    U, diag = sbp_time_solve(SbpTimeProblem(-1e4, 1.0, 1.0, 11, order))
    assert abs(U[-1]) <= 1.0
    assert diag.identity_residual <= 1e-10 * (1 + diag.energy)


@pytest.mark.parametrize("order", ORDERS)
@pytest.mark.parametrize("lam", LAMBDAS)
def test_sbp_time_identity(order, lam):
    U, diag = sbp_time_solve(SbpTimeProblem(lam, 1.0, 1.0, 21, order))
    assert diag.relative_residual <= 1e-10
    assert abs(U[-1]) <= 1.0 + 1e-10
    assert not diag.flagged_unstable


@pytest.mark.parametrize("order", [(2, 1), (4, 2)])
def test_sbp_time_initial_mismatch_shrinks(order):
    mismatch = [sbp_time_solve(SbpTimeProblem(-1 + 5j, 1.0, 1.0, n, order))[1].initial_mismatch
                for n in (11, 21, 41, 81)]
    assert all(b < a for a, b in zip(mismatch, mismatch[1:]))
    assert mismatch[0] > 0


def test_sbp_time_growth_is_flagged_not_refused():
    U, diag = sbp_time_solve(SbpTimeProblem(1.0, 1.0, 1.0, 21))
    assert diag.flagged_unstable
    assert abs(U[-1] - math.e) < 1e-2
    assert diag.relative_residual <= 1e-10


def test_sbp_time_bad_order():
    with pytest.raises(UnsupportedOrder):
        sbp_time_solve(SbpTimeProblem(-1.0, 1.0, 1.0, 21, (8, 4)))
