"""Explicit RK4, spectral CFL estimates, dense solves and SBP-SAT in time."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from sbpsat.errors import NonFiniteState, PowerIterationNoConverge, SingularSystem
from sbpsat.operators import FirstDerivativeOperator, as_order, build_first_derivative

# imaginary-axis extent of the classical RK4 stability region is 2*sqrt(2);
# 2.6 leaves room for eigenvalues slightly off the axis
RK4_STABILITY_RADIUS = 2.6
DEFAULT_SAFETY = 0.5


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1 or not self.t_final > 0:
            raise ValueError("time grid needs t_final > 0 and n_steps >= 1")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    @classmethod
    def from_max_dt(cls, t_final: float, max_dt: float) -> TimeGrid:
        """Smallest uniform grid on ``[0, t_final]`` with ``dt <= max_dt``."""
        return cls(t_final, max(1, math.ceil(t_final / max_dt - 1e-12)))


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    measured_rates: np.ndarray
    predicted_rates: np.ndarray
    blowup_step: int | None = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def csv_rows(self):
        for t, e, m, p in zip(self.times, self.energies, self.measured_rates,
                              self.predicted_rates):
            yield t, e, m, p, abs(m - p)


def _record(system, u, t):
    f = system.rhs(u, t)
    measured = 2.0 * system.inner(u, f)
    return system.norm_sq(u), measured, system.boundary_rate(u, t)


def rk4_integrate(system, u0, grid: TimeGrid, sample_every: int = 1,
                  raise_on_blowup: bool = True) -> TrajectoryRecord:
    """Classical four-stage RK4 on a uniform time grid.

    Energy (in the system's own norm) and the measured and predicted energy
    rates are recorded every ``sample_every`` steps and at the final time.
    A non-finite state raises :class:`NonFiniteState`; with
    ``raise_on_blowup=False`` the trajectory is truncated instead and the
    step index is kept in ``blowup_step``.
    """
    f = system.rhs
    dt = grid.dt
    u = np.array(u0, dtype=float, copy=True)
    times, states, energies, measured, predicted = [], [], [], [], []

    def sample(t):
        e, m, p = _record(system, u, t)
        times.append(t)
        states.append(u.copy())
        energies.append(e)
        measured.append(m)
        predicted.append(p)

    sample(0.0)
    blowup = None
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, grid.n_steps + 1):
            t = (step - 1) * dt
            k1 = f(u, t)
            k2 = f(u + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = f(u + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = f(u + dt * k3, t + dt)
            u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(u)):
                if raise_on_blowup:
                    raise NonFiniteState(step, step * dt)
                blowup = step
                break
            if step % sample_every == 0 or step == grid.n_steps:
                sample(step * dt if step < grid.n_steps else grid.t_final)

    return TrajectoryRecord(
        times=np.array(times), states=np.array(states),
        energies=np.array(energies), measured_rates=np.array(measured),
        predicted_rates=np.array(predicted), blowup_step=blowup)


def spectral_radius(apply, dim: int, *, max_iter: int = 2000, rtol: float = 1e-3,
                    seed: int = 0) -> float:
    """Estimate the spectral radius of a linear map by power iteration.

    The matrices here are non-normal and usually have complex-conjugate
    dominant pairs, so the per-step ratio ``||A v||/||v||`` oscillates.  The
    estimate is the geometric mean of the ratios over the second half of the
    iterations (Gelfand's formula with the transient discarded).
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    logs = []
    previous = None
    for k in range(1, max_iter + 1):
        w = apply(v)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        if not math.isfinite(nrm):
            raise PowerIterationNoConverge("power iteration overflowed")
        logs.append(math.log(nrm))
        v = w / nrm
        if k >= 40 and k % 20 == 0:
            estimate = math.exp(float(np.mean(logs[k // 2:])))
            if previous is not None and abs(estimate - previous) <= rtol * estimate:
                return estimate
            previous = estimate
    raise PowerIterationNoConverge(
        f"spectral radius estimate did not settle within {max_iter} iterations")


def cfl_timestep(system, safety: float = DEFAULT_SAFETY, *, t_final=None,
                 u0=None, t0: float = 0.0) -> float:
    """Largest stable RK4 step, ``safety * 2.6 / rho``.

    ``rho`` is the power-iteration estimate of the spectral radius of the
    right-hand side's linear part; nonlinear systems are linearized at
    ``u0`` (zero state by default) with a finite-difference Jacobian.  A
    vanishing linear part means no constraint: ``t_final`` (or ``inf``).
    """
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    if system.is_linear:
        apply = system.linear_part
    else:
        base = np.zeros(system.state_dim) if u0 is None else np.asarray(u0, float)
        f0 = system.rhs(base, t0)
        scale = max(1.0, float(np.abs(base).max(initial=0.0)))

        def apply(v):
            eps = 1e-7 * scale
            return (system.rhs(base + eps * v, t0) - f0) / eps

    rho = spectral_radius(apply, system.state_dim)
    if rho == 0.0:
        return math.inf if t_final is None else float(t_final)
    dt = safety * RK4_STABILITY_RADIUS / rho
    return dt if t_final is None else min(dt, float(t_final))


def solve_steady(matrix, rhs, rtol: float = 1e-10) -> np.ndarray:
    """Dense LU solve with a residual check."""
    A = np.asarray(matrix.toarray() if hasattr(matrix, "toarray") else matrix)
    b = np.asarray(rhs)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible shapes {A.shape} and {b.shape}")
    try:
        x = sla.solve(A, b)
    except (ValueError, sla.LinAlgError) as exc:
        raise SingularSystem(str(exc)) from exc
    residual = np.linalg.norm(A @ x - b)
    if residual > rtol * np.linalg.norm(b):
        raise SingularSystem(f"solve residual {residual:.3e} exceeds tolerance")
    return x


@dataclass(frozen=True)
class SbpTimeProblem:
    """``u_t = lam u`` on ``[0, T]`` with ``u(0) = f`` imposed weakly."""

    lam: complex
    f: complex
    t_final: float
    n_nodes: int
    order: object = (4, 2)
    sigma: float = field(default=-1.0, init=False)

    @property
    def unstable(self) -> bool:
        return complex(self.lam).real >= 0

    def operator(self) -> FirstDerivativeOperator:
        return build_first_derivative(as_order(self.order), self.n_nodes,
                                      self.t_final / (self.n_nodes - 1))


@dataclass
class SbpTimeDiagnostics:
    identity_residual: float
    relative_residual: float
    initial_mismatch: float
    energy: float
    flagged_unstable: bool


def sbp_time_solve(problem: SbpTimeProblem):
    """Solve the global SBP-SAT time discretization.

    ``P^{-1} Q U = lam U + P^{-1} sigma (U_0 - f) e_0`` with ``sigma = -1`` is
    rearranged to ``(Q - lam P - sigma e_0 e_0^T) U = -sigma f e_0`` and
    solved densely in complex arithmetic.  The diagnostics carry the residual
    of the discrete identity
    ``|U_N|^2 - 2 Re(lam) ||U||_P^2 = |f|^2 - |U_0 - f|^2``.
    """
    op = problem.operator()
    lam = complex(problem.lam)
    f = complex(problem.f)
    sigma = problem.sigma
    n = op.n
    A = op.Q.astype(complex) - lam * np.diag(op.P)
    A[0, 0] -= sigma
    b = np.zeros(n, dtype=complex)
    b[0] = -sigma * f
    try:
        lu, piv = sla.lu_factor(A)
    except (ValueError, sla.LinAlgError) as exc:
        raise SingularSystem(str(exc)) from exc
    if np.any(np.diag(lu) == 0):
        raise SingularSystem("SBP-in-time system is singular")
    U = sla.lu_solve((lu, piv), b)

    energy = float(np.sum(op.P * np.abs(U) ** 2))
    lhs = abs(U[-1]) ** 2 - 2.0 * lam.real * energy
    rhs = abs(f) ** 2 - abs(U[0] - f) ** 2
    residual = abs(lhs - rhs)
    scale = max(abs(f) ** 2, abs(U[-1]) ** 2, abs(lam.real) * energy, 1e-300)
    diag = SbpTimeDiagnostics(
        identity_residual=float(residual),
        relative_residual=float(residual / scale),
        initial_mismatch=float(abs(U[0] - f)),
        energy=energy,
        flagged_unstable=problem.unstable)
    return U, diag
