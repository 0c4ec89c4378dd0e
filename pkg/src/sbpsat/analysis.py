"""Norms, energy audits, convergence studies and growth-rate estimates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from sbpsat.errors import DimensionMismatch, NonPositiveEnergy
from sbpsat.timestepping import TimeGrid, cfl_timestep, rk4_integrate, solve_steady

MIN_R_SQUARED = 0.98


def _weights_of(obj) -> np.ndarray:
    if hasattr(obj, "weights"):
        return np.asarray(obj.weights)
    if hasattr(obj, "P"):
        return np.asarray(obj.P)
    return np.asarray(obj, dtype=float)


def discrete_norm(state, system, squared: bool = False) -> float:
    """``sqrt(u^T W u)`` for the diagonal norm ``W`` of a system or operator."""
    w = _weights_of(system)
    u = np.asarray(state)
    if u.shape != w.shape:
        raise DimensionMismatch(f"state has shape {u.shape}, norm has {w.shape}")
    value = float(np.sum(w * np.abs(u) ** 2))
    return value if squared else float(np.sqrt(value))


class EnergyAudit(NamedTuple):
    measured: float
    predicted: float
    residual: float


def energy_rate_audit(system, state, t: float = 0.0) -> EnergyAudit:
    """Compare ``2 <u, rhs(u)>`` with the system's exact energy-rate identity."""
    u = np.asarray(state, dtype=float)
    measured = 2.0 * system.inner(u, system.rhs(u, t))
    predicted = system.boundary_rate(u, t)
    return EnergyAudit(measured, predicted, abs(measured - predicted))


@dataclass(frozen=True)
class LevelRecord:
    n: int
    h: float
    error_P: float
    error_max: float
    n_steps: int = 0


def fit_rate(h, err):
    """Least-squares slope of ``log err`` against ``log h`` and its r^2."""
    lh, le = np.log(np.asarray(h, float)), np.log(np.asarray(err, float))
    slope, intercept = np.polyfit(lh, le, 1)
    resid = le - (slope * lh + intercept)
    ss_tot = float(np.sum((le - le.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


@dataclass
class ConvergenceReport:
    levels: list
    fitted_rate: float = float("nan")
    r_squared: float = float("nan")
    dropped_coarsest: bool = False
    label: str = ""
    expected_rate: float | None = None

    def __post_init__(self):
        if len(self.levels) < 3:
            raise ValueError("a convergence study needs at least 3 levels")
        hs = [lv.h for lv in self.levels]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValueError("grid spacings must be strictly decreasing")
        if np.isnan(self.fitted_rate):
            self._fit()

    def _fit(self):
        levels = self.levels
        rate, r2 = fit_rate([lv.h for lv in levels], [lv.error_P for lv in levels])
        if r2 < MIN_R_SQUARED and len(levels) >= 5:
            rest = levels[1:]
            rate, r2 = fit_rate([lv.h for lv in rest], [lv.error_P for lv in rest])
            self.dropped_coarsest = True
        self.fitted_rate, self.r_squared = rate, r2

    @property
    def local_rates(self) -> list:
        return [float(np.log(a.error_P / b.error_P) / np.log(a.h / b.h))
                for a, b in zip(self.levels, self.levels[1:])]

    def passes(self, tol: float = 0.25, min_r2: float = MIN_R_SQUARED) -> bool:
        if self.expected_rate is None:
            raise ValueError("no expected rate registered")
        return (abs(self.fitted_rate - self.expected_rate) <= tol
                and self.r_squared >= min_r2)


def _time_step(system, cfl, h, h_coarse, expected_rate):
    dt = cfl_timestep(system, cfl)
    # keep RK4's O(dt^4) error below the spatial error when the expected
    # spatial rate exceeds 4
    if expected_rate is not None and expected_rate > 4:
        dt *= (h / h_coarse) ** ((expected_rate - 4) / 4)
    return dt


def run_convergence_study(problem_factory: Callable, exact: Callable, levels,
                          t_final: float, cfl: float = 0.5, *,
                          expected_rate: float | None = None,
                          time_refinement: float = 1.0,
                          label: str = "") -> ConvergenceReport:
    """Integrate each level with RK4 and measure the final-time error.

    ``problem_factory(n)`` returns a system whose ``labels["h"]`` is its grid
    spacing and whose ``nodes`` are passed to ``exact(nodes, t)``.
    ``time_refinement`` (< 1) shrinks every time step further; it is used to
    check that the time error is subdominant.
    """
    records = []
    systems = [problem_factory(n) for n in levels]
    h_coarse = systems[0].labels["h"]
    for n, system in zip(levels, systems):
        h = system.labels["h"]
        dt = _time_step(system, cfl, h, h_coarse, expected_rate) * time_refinement
        grid = TimeGrid.from_max_dt(t_final, dt)
        u0 = np.ravel(exact(system.nodes, 0.0))
        traj = rk4_integrate(system, u0, grid, sample_every=grid.n_steps)
        err = traj.final_state - np.ravel(exact(system.nodes, t_final))
        records.append(LevelRecord(
            n=n, h=h, error_P=discrete_norm(err, system),
            error_max=float(np.abs(err).max()), n_steps=grid.n_steps))
    return ConvergenceReport(records, label=label, expected_rate=expected_rate)


@dataclass(frozen=True)
class FunctionalSpec:
    """Linear functional ``J(u) = w^T P u`` using the operator's own norm."""

    weights: np.ndarray
    P: np.ndarray

    @classmethod
    def from_operator(cls, op, weight_fn=None):
        x = op.nodes()
        w = np.ones(op.n) if weight_fn is None else np.asarray(weight_fn(x), float)
        return cls(weights=w * np.ones(op.n), P=np.asarray(op.P))


def evaluate_functional(spec: FunctionalSpec, state) -> float:
    u = np.asarray(state)
    if u.shape != spec.P.shape:
        raise DimensionMismatch(f"state has shape {u.shape}, functional has {spec.P.shape}")
    return float(np.sum(spec.weights * spec.P * u))


@dataclass
class FunctionalStudy:
    solution: ConvergenceReport
    functional_levels: list
    functional_rate: float
    functional_r_squared: float
    values: list = field(default_factory=list)


def run_functional_study(order, levels, forcing, exact_solution, exact_functional,
                         g0: float = 0.0, weight_fn=None) -> FunctionalStudy:
    """Steady transport ``u_x = F``: solution error and functional error per level."""
    from sbpsat.operators import build_first_derivative
    from sbpsat.problems import assemble_steady_transport

    records, ferr, values, hs = [], [], [], []
    for n in levels:
        op = build_first_derivative(order, n)
        matrix, rhs = assemble_steady_transport(op, forcing, g0)
        u = solve_steady(matrix, rhs)
        err = u - exact_solution(op.nodes())
        records.append(LevelRecord(n, op.h, discrete_norm(err, op),
                                   float(np.abs(err).max())))
        J = evaluate_functional(FunctionalSpec.from_operator(op, weight_fn), u)
        values.append(J)
        ferr.append(abs(J - exact_functional))
        hs.append(op.h)
    rate, r2 = fit_rate(hs, ferr)
    return FunctionalStudy(
        solution=ConvergenceReport(records, label="steady solution"),
        functional_levels=list(zip(levels, hs, ferr)),
        functional_rate=rate, functional_r_squared=r2, values=values)


@dataclass(frozen=True)
class GrowthEstimate:
    alpha: float
    window: tuple


def estimate_growth(trajectory, window=None) -> GrowthEstimate:
    """Growth exponent ``alpha_d``: half the slope of ``log(energy)`` in ``t``."""
    t = np.asarray(trajectory.times)
    e = np.asarray(trajectory.energies)
    if window is None:
        window = (float(t[0]), float(t[-1]))
    mask = (t >= window[0]) & (t <= window[1])
    if mask.sum() < 2:
        raise ValueError("growth window must contain at least two samples")
    if np.any(e[mask] <= 0):
        raise NonPositiveEnergy("energy must be positive on the growth window")
    slope = np.polyfit(t[mask], np.log(e[mask]), 1)[0]
    return GrowthEstimate(alpha=0.5 * float(slope), window=tuple(window))


@dataclass
class ConservationResult:
    residual: float
    scale: float
    per_sample: np.ndarray

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else 0.0


def interface_conservation_check(system, test_function: Callable, trajectory
                                 ) -> ConservationResult:
    """Discrete weak-form residual of a two-block advection system.

    For each sampled state ``w`` the residual is
    ``phi^T P w_t - a (D phi)^T P w`` summed over both blocks, with ``w_t``
    taken from the scheme.  When ``phi`` vanishes at the outer boundaries only
    the interface terms survive, and they cancel exactly when
    ``sigma_r = sigma_l - a``.  ``scale`` is the sum of the magnitudes of the
    cancelling terms, the natural roundoff yardstick.
    """
    labels = system.labels
    op_l, op_r, a = labels["op_left"], labels["op_right"], labels["a"]
    x = np.asarray(system.nodes)
    nl = op_l.n
    phi = np.asarray(test_function(x), dtype=float)
    phi_l, phi_r = phi[:nl], phi[nl:]
    if abs(phi_l[-1] - phi_r[0]) > 1e-14 * max(1.0, abs(phi_l[-1])):
        raise ValueError("test function restrictions must agree at the interface")
    w = system.weights
    dphi = np.concatenate([op_l.D @ phi_l, op_r.D @ phi_r])
    residuals, scale = [], 0.0
    for t, state in zip(trajectory.times, trajectory.states):
        time_terms = w * phi * system.rhs(state, t)
        flux_terms = a * w * dphi * state
        residuals.append(float(np.sum(time_terms) - np.sum(flux_terms)))
        scale = max(scale, float(np.sum(np.abs(time_terms)) + np.sum(np.abs(flux_terms))))
    residuals = np.abs(np.array(residuals))
    return ConservationResult(residual=float(residuals.max()), scale=scale,
                              per_sample=residuals)
