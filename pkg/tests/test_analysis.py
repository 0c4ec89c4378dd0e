import warnings
from types import SimpleNamespace

import numpy as np
import pytest

from sbpsat import experiments
from sbpsat.analysis import (
    ConvergenceReport,
    FunctionalSpec,
    LevelRecord,
    discrete_norm,
    energy_rate_audit,
    estimate_growth,
    evaluate_functional,
    fit_rate,
    interface_conservation_check,
    run_convergence_study,
    run_functional_study,
)
from sbpsat.errors import DimensionMismatch, NonPositiveEnergy
from sbpsat.operators import build_first_derivative
from sbpsat.problems import MappingSpec, assemble_advection, assemble_stretched_advection
from sbpsat.timestepping import TimeGrid, cfl_timestep, rk4_integrate

ORDERS = [(2, 1), (4, 2), (6, 3)]


@pytest.mark.parametrize("order", ORDERS)
def test_norm_of_constant_is_domain_length(order):
    op = build_first_derivative(order, 33)
    assert discrete_norm(np.ones(33), op, squared=True) == pytest.approx(1.0, abs=1e-12)
    assert discrete_norm(np.zeros(33), op) == 0.0


def test_norm_of_sine():
    op = build_first_derivative((4, 2), 65)
    u = np.sin(2 * np.pi * op.nodes())
    assert discrete_norm(u, op, squared=True) == pytest.approx(0.5, abs=1e-6)


def test_norm_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        discrete_norm(np.ones(5), build_first_derivative((2, 1), 9))


def test_audit_zero_state():
    sys_ = assemble_advection(1.0, build_first_derivative((4, 2), 17), -1.0)
    assert tuple(energy_rate_audit(sys_, np.zeros(17))) == (0.0, 0.0, 0.0)


def test_audit_random_advection():
    sys_ = assemble_advection(1.0, build_first_derivative((6, 3), 33), -1.0)
    rng = np.random.default_rng(7)
    for _ in range(20):
        u = rng.standard_normal(33)
        assert energy_rate_audit(sys_, u).residual <= 1e-11 * (1 + sys_.norm_sq(u))


def test_audit_stretched_prediction():
    sys_ = assemble_stretched_advection(MappingSpec.sine_stretch(0.2),
                                        build_first_derivative((4, 2), 33), 0.0)
    u = np.linspace(1.0, 2.0, 33)
    assert energy_rate_audit(sys_, u).predicted == pytest.approx(-4.0)


# -- rate fitting ------------------------------------------------------------

def levels_from(hs, errs):
    return [LevelRecord(int(1 / h) + 1, h, e, e) for h, e in zip(hs, errs)]


def test_fit_rate_exact_power_law():
    hs = [0.1, 0.05, 0.025, 0.0125]
    rate, r2 = fit_rate(hs, [3 * h**2.5 for h in hs])
    assert rate == pytest.approx(2.5) and r2 == pytest.approx(1.0)


def test_report_drops_polluted_coarsest_level():
    hs = [0.2, 0.1, 0.05, 0.025, 0.0125]
    errs = [h**3 for h in hs]
    errs[0] = 1e-6  # pre-asymptotic junk on the coarsest grid
    report = ConvergenceReport(levels_from(hs, errs), expected_rate=3.0)
    assert report.dropped_coarsest
    assert report.fitted_rate == pytest.approx(3.0, abs=1e-10)
    assert report.passes()


def test_report_invariants():
    with pytest.raises(ValueError):
        ConvergenceReport(levels_from([0.1, 0.05], [1e-2, 1e-3]))
    with pytest.raises(ValueError):
        ConvergenceReport(levels_from([0.1, 0.1, 0.05], [1e-2, 1e-2, 1e-3]))
    with pytest.raises(ValueError):
        ConvergenceReport(levels_from([0.1, 0.05, 0.025], [1, 0.1, 0.01])).passes()


def test_local_rates():
    hs = [0.1, 0.05, 0.025]
    report = ConvergenceReport(levels_from(hs, [h**2 for h in hs]))
    np.testing.assert_allclose(report.local_rates, [2.0, 2.0])


@pytest.mark.parametrize("order,rate", [((2, 1), 2.0), ((4, 2), 3.0)])
def test_advection_convergence_study(order, rate):
    study = experiments.advection(order)
    report = run_convergence_study(study.factory, study.exact, study.levels,
                                   study.t_final, expected_rate=study.expected_rate)
    assert study.expected_rate == rate
    assert report.fitted_rate == pytest.approx(rate, abs=0.25)
    assert report.r_squared >= 0.98
    assert all(lv.error_max >= lv.error_P for lv in report.levels)


def test_time_error_is_subdominant():
    # shrinking every step by 4 leaves the sixth-order study unchanged
    study = experiments.advection((6, 3))
    levels = study.levels[:3]
    base = run_convergence_study(study.factory, study.exact, levels, study.t_final)
    finer = run_convergence_study(study.factory, study.exact, levels, study.t_final,
                                  time_refinement=0.25)
    for a, b in zip(base.levels, finer.levels):
        assert b.n_steps >= 3.9 * a.n_steps
        assert a.error_P == pytest.approx(b.error_P, rel=0.02)


# -- growth ------------------------------------------------------------------

def trajectory(times, energies):
    return SimpleNamespace(times=np.asarray(times), energies=np.asarray(energies))


def test_growth_of_exact_exponential():
    t = np.linspace(0, 2, 41)
    assert estimate_growth(trajectory(t, np.exp(-2 * t))).alpha == pytest.approx(-1.0, abs=1e-6)
    assert estimate_growth(trajectory(t, np.full_like(t, 3.0))).alpha == pytest.approx(0.0, abs=1e-12)


def test_growth_window_and_errors():
    t = np.linspace(0, 2, 41)
    e = np.where(t < 1, np.exp(2 * t), np.exp(2.0))
    est = estimate_growth(trajectory(t, e), window=(0.0, 0.9))
    assert est.alpha == pytest.approx(1.0, abs=1e-6) and est.window == (0.0, 0.9)
    with pytest.raises(NonPositiveEnergy):
        estimate_growth(trajectory(t, np.zeros_like(t)))
    with pytest.raises(ValueError):
        estimate_growth(trajectory(t, e), window=(5.0, 6.0))


@pytest.mark.parametrize("n", [33, 65, 129])
def test_split_variable_growth_bound(n):
    study = experiments.split_variable((4, 2), homogeneous=True)
    sys_ = study.factory(n)
    traj = rk4_integrate(sys_, study.initial_state(sys_.nodes),
                         TimeGrid.from_max_dt(0.5, cfl_timestep(sys_)))
    assert estimate_growth(traj).alpha <= 0.5 + 0.1


# -- functionals -------------------------------------------------------------

def test_functional_examples():
    op = build_first_derivative((4, 2), 33)
    assert evaluate_functional(FunctionalSpec.from_operator(op), np.ones(33)) == pytest.approx(1.0, abs=1e-12)
    zero = FunctionalSpec.from_operator(op, lambda x: 0 * x)
    assert evaluate_functional(zero, np.ones(33)) == 0.0
    with pytest.raises(DimensionMismatch):
        evaluate_functional(zero, np.ones(17))


def test_functional_superconvergence():
    u, forcing, exact = experiments.steady_transport_exact()
    assert exact == pytest.approx(0.45970, abs=1e-5)
    study = run_functional_study((4, 2), [17, 33, 65, 129, 257], forcing, u, exact)
    assert study.solution.fitted_rate == pytest.approx(3.0, abs=0.25)
    assert study.functional_rate == pytest.approx(4.0, abs=0.3)


# -- interface conservation --------------------------------------------------

def phi(x):
    return np.cos(0.5 * np.pi * x)


def run_two_block(sigma_l, sigma_r=None, n=49):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        study = experiments.two_block((4, 2), sigma_l=sigma_l, sigma_r=sigma_r)
    sys_ = study.factory(n)
    grid = TimeGrid.from_max_dt(0.3, cfl_timestep(sys_))
    return sys_, rk4_integrate(sys_, study.initial_state(sys_.nodes), grid, sample_every=5)


@pytest.mark.parametrize("sigma_l", [0.5, 0.0, -0.7])
def test_conservative_coupling_cancels(sigma_l):
    sys_, traj = run_two_block(sigma_l)
    result = interface_conservation_check(sys_, phi, traj)
    assert result.residual <= 1e-12 * result.scale


def test_perturbed_coupling_matches_jump():
    sys_, traj = run_two_block(0.0, sigma_r=-1.0 + 0.1)
    result = interface_conservation_check(sys_, phi, traj)
    nl = sys_.labels["n_left"]
    jumps = np.abs(traj.states[:, nl - 1] - traj.states[:, nl])
    # the telescoping breaks by delta * jump * phi(0), phi(0) = 1
    np.testing.assert_allclose(result.per_sample, 0.1 * jumps, rtol=1e-6, atol=1e-15)
    assert result.residual > 0


def test_continuous_state_conserves_for_any_sigma():
    sys_, _ = run_two_block(0.0, sigma_r=-0.3)
    state = np.sin(sys_.nodes)
    fake = SimpleNamespace(times=[0.0], states=[state])
    result = interface_conservation_check(sys_, phi, fake)
    assert result.residual <= 1e-12 * result.scale


def test_test_function_must_match_at_interface():
    sys_, traj = run_two_block(0.0)
    nl = sys_.labels["n_left"]

    def broken(x):
        out = phi(x)
        out[nl:] += 0.5
        return out

    with pytest.raises(ValueError):
        interface_conservation_check(sys_, broken, traj)
