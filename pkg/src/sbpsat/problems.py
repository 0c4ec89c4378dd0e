"""SBP-SAT semi-discretizations of the model problems.

Every assembler returns a :class:`SemiDiscreteSystem`.  Besides the right-hand
side, a system carries its norm weights and a dictionary of exact energy-rate
contributions (``rate_terms``) whose sum is the predicted
``d/dt ||u||^2``.  The rate terms include dissipation and forcing terms, so
``2 <u, rhs(u)>_norm == boundary_rate(u)`` holds as an equality up to
roundoff for every state.  That equality is what the energy audits check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from sbpsat.errors import (
    DimensionMismatch,
    InadmissiblePenalty,
    InadmissiblePenaltyWarning,
    NonpositiveCoefficient,
    NotSymmetric,
    SingularMapping,
)
from sbpsat.operators import (
    FirstDerivativeOperator,
    build_second_derivative,
    compose_wide_second_derivative,
)

INADMISSIBLE = "inadmissible_penalty"


@dataclass(frozen=True)
class Grid1D:
    n_points: int
    h: float
    nodes: np.ndarray

    @classmethod
    def for_operator(cls, op: FirstDerivativeOperator, x0: float = 0.0):
        return cls(op.n, op.h, op.nodes(x0))


@dataclass(frozen=True)
class BoundarySignal:
    """Boundary or forcing data as a function of time.

    1-D signals are called as ``g(t)``; 2-D far-field signals as
    ``g(coords, t)`` returning an array of shape ``(len(coords), m)``.
    """

    evaluator: Callable
    description: str = ""

    def __call__(self, *args):
        return self.evaluator(*args)

    @classmethod
    def constant(cls, value, description=None):
        return cls(lambda *args: value, description or f"constant {value!r}")

    @classmethod
    def zero(cls):
        return cls(lambda *args: 0.0, "homogeneous")


def _signal(g):
    if g is None:
        return BoundarySignal.zero()
    if isinstance(g, BoundarySignal):
        return g
    if callable(g):
        return BoundarySignal(g)
    return BoundarySignal.constant(g)


@dataclass(frozen=True)
class PenaltyConfig:
    """Named SAT penalty strengths for one model problem."""

    problem: str
    values: Mapping[str, float] = field(default_factory=dict)

    def violations(self, a: float = 1.0) -> list[str]:
        v = self.values
        out = []
        if self.problem == "advection" and not v.get("sigma", -1.0) < -0.5:
            out.append(f"advection requires sigma < -1/2, got {v['sigma']}")
        if self.problem == "advection_diffusion":
            for name in ("sigma0", "sigma1"):
                if v.get(name, -1.0) != -1.0:
                    out.append(f"advection-diffusion requires {name} = -1")
        if self.problem == "two_block":
            sl = v.get("sigma_l", 0.0)
            if sl > a / 2:
                out.append(f"interface requires sigma_l <= a/2 = {a / 2}, got {sl}")
            sr = v.get("sigma_r", sl - a)
            if abs(sr - (sl - a)) > 1e-14 * max(1.0, abs(a)):
                out.append("interface requires sigma_r = sigma_l - a")
        return out

    @property
    def admissible(self) -> bool:
        return not self.violations(self.values.get("a", 1.0))


@dataclass(frozen=True, eq=False)
class SemiDiscreteSystem:
    name: str
    weights: np.ndarray
    rhs: Callable[[np.ndarray, float], np.ndarray]
    rate_terms: Callable[[np.ndarray, float], dict]
    nodes: object = None
    linear_part: Callable[[np.ndarray], np.ndarray] | None = None
    matrix: object = None
    flags: frozenset = frozenset()
    labels: dict = field(default_factory=dict)

    @property
    def state_dim(self) -> int:
        return self.weights.size

    @property
    def is_linear(self) -> bool:
        return self.linear_part is not None

    def boundary_rate(self, u, t=0.0) -> float:
        return float(sum(self.rate_terms(u, t).values()))

    def norm_sq(self, u) -> float:
        u = np.asarray(u)
        return float(np.real(np.sum(self.weights * np.abs(u) ** 2)))

    def inner(self, u, v) -> float:
        return float(np.sum(self.weights * u * v))


def _forcing(F, x):
    if F is None:
        return lambda t: 0.0
    return lambda t: F(x, t)


def _linear_system(name, L, source, weights, rate_terms, nodes, flags=(),
                   labels=None):
    L = sp.csr_matrix(L)

    def rhs(u, t=0.0):
        return L @ u + source(t)

    return SemiDiscreteSystem(
        name=name, weights=weights, rhs=rhs, rate_terms=rate_terms,
        nodes=nodes, linear_part=lambda v: L @ v, matrix=L,
        flags=frozenset(flags), labels=dict(labels or {}))


def _penalty_flag(condition, message, allow_unstable, strict):
    """Return the flags for a penalty check; raise in strict mode."""
    if condition:
        return ()
    if strict and not allow_unstable:
        raise InadmissiblePenalty(message)
    warnings.warn(message, InadmissiblePenaltyWarning, stacklevel=3)
    return (INADMISSIBLE,)


def assemble_advection(a: float, op: FirstDerivativeOperator, sigma: float,
                       g0=None, forcing=None) -> SemiDiscreteSystem:
    """``u_t + a u_x = F`` on the operator's grid, inflow SAT at ``x_0``.

    The SAT is ``sigma * a * P^{-1} e_0 (u_0 - g0(t))``; ``sigma < -1/2``
    gives strong stability.  Other values are assembled with the
    ``inadmissible_penalty`` flag so instability can be demonstrated.
    """
    if not a > 0:
        raise ValueError("advection speed must be positive")
    flags = _penalty_flag(sigma < -0.5, f"sigma={sigma} violates sigma < -1/2",
                          True, strict=False)
    g0 = _signal(g0)
    x = op.nodes()
    F = _forcing(forcing, x)
    P = op.P
    L = -a * op.D
    L[0, 0] += sigma * a / P[0]
    e0 = np.zeros(op.n)
    e0[0] = 1.0

    def source(t):
        return -sigma * a * g0(t) / P[0] * e0 + F(t)

    def rate_terms(u, t=0.0):
        g = g0(t)
        return {
            "inflow": a * (1 + 2 * sigma) * u[0] ** 2 - 2 * a * sigma * u[0] * g,
            "outflow": -a * u[-1] ** 2,
            "forcing": 2.0 * float(np.sum(P * u * F(t))),
        }

    return _linear_system(
        "advection", L, source, P.copy(), rate_terms, x, flags,
        {"a": a, "sigma": sigma, "order": str(op.order), "n": op.n, "h": op.h})


def assemble_advection_diffusion(a: float, eps: float,
                                 op: FirstDerivativeOperator,
                                 d2_mode: str = "wide", g0=None, g1=None,
                                 forcing=None) -> SemiDiscreteSystem:
    """``u_t + a u_x = eps u_xx + F`` with far-field SATs at both ends.

    Boundary conditions ``a u - eps u_x = g0`` at ``x_0`` and
    ``eps u_x = g1`` at ``x_N``, both with penalty ``-1``.  ``d2_mode`` picks
    the wide ``D D`` or the narrow ``D2`` second derivative; the narrow
    variant uses the boundary rows of ``S`` in the SATs.
    """
    if not (a > 0 and eps > 0):
        raise ValueError("advection-diffusion needs a > 0 and eps > 0")
    sigma0 = sigma1 = -1.0
    g0, g1 = _signal(g0), _signal(g1)
    x = op.nodes()
    F = _forcing(forcing, x)
    P, D = op.P, op.D
    n = op.n

    if d2_mode == "wide":
        second = compose_wide_second_derivative(op)
        flux = D

        def dissipation(u):
            du = D @ u
            return float(np.sum(P * du * du))
    elif d2_mode == "narrow":
        op2 = build_second_derivative(op.order, n, op.h)
        second = op2.D2
        flux = op2.S
        Mh = op2.dissipation

        def dissipation(u):
            return float(u @ (Mh @ u))
    else:
        raise ValueError(f"d2_mode must be 'wide' or 'narrow', got {d2_mode!r}")

    L = -a * D + eps * second
    L[0, 0] += sigma0 * a / P[0]
    L[0] -= sigma0 * eps * flux[0] / P[0]
    L[-1] += sigma1 * eps * flux[-1] / P[-1]

    def source(t):
        s = np.zeros(n) + F(t)
        s[0] -= sigma0 * g0(t) / P[0]
        s[-1] -= sigma1 * g1(t) / P[-1]
        return s

    def rate_terms(u, t=0.0):
        ga, gb = g0(t), g1(t)
        return {
            "left": (ga**2 - (a * u[0] - ga) ** 2) / a,
            "right": -((a * u[-1] - gb) ** 2 - gb**2) / a,
            "dissipation": -2.0 * eps * dissipation(u),
            "forcing": 2.0 * float(np.sum(P * u * F(t))),
        }

    return _linear_system(
        f"advection_diffusion_{d2_mode}", L, source, P.copy(), rate_terms, x,
        labels={"a": a, "eps": eps, "d2_mode": d2_mode,
                "order": str(op.order), "n": n, "h": op.h})


def assemble_two_block_advection(a: float, op_left: FirstDerivativeOperator,
                                 op_right: FirstDerivativeOperator,
                                 sigma_l: float, g_left=None, *,
                                 sigma_r: float | None = None,
                                 sigma_boundary: float = -1.0,
                                 allow_unstable: bool = False
                                 ) -> SemiDiscreteSystem:
    """Advection on ``[-L_left, 0] U [0, L_right]`` with a weak interface.

    The state is the left solution ``v`` followed by the right solution
    ``u``.  ``sigma_r`` defaults to the conservative ``sigma_l - a``; passing
    anything else is allowed but flags the system as non-conservative.
    """
    if not a > 0:
        raise ValueError("advection speed must be positive")
    flags = list(_penalty_flag(sigma_l <= a / 2,
                               f"sigma_l={sigma_l} violates sigma_l <= a/2",
                               allow_unstable, strict=True))
    if sigma_r is None:
        sigma_r = sigma_l - a
    elif sigma_r != sigma_l - a:
        flags.append("nonconservative_interface")
    g = _signal(g_left)
    nl, nr = op_left.n, op_right.n
    length_left = (nl - 1) * op_left.h
    x = np.concatenate([op_left.nodes(-length_left), op_right.nodes(0.0)])
    PL, PR = op_left.P, op_right.P
    iv, iu = nl - 1, nl  # v_N and u_0 in the composite state

    L = sp.lil_matrix((nl + nr, nl + nr))
    L[:nl, :nl] = -a * op_left.D
    L[nl:, nl:] = -a * op_right.D
    L[0, 0] += sigma_boundary * a / PL[0]
    L[iv, iv] += sigma_l / PL[-1]
    L[iv, iu] -= sigma_l / PL[-1]
    L[iu, iu] += sigma_r / PR[0]
    L[iu, iv] -= sigma_r / PR[0]

    def source(t):
        s = np.zeros(nl + nr)
        s[0] = -sigma_boundary * a * g(t) / PL[0]
        return s

    def rate_terms(w, t=0.0):
        v0, vn, u0, um = w[0], w[iv], w[iu], w[-1]
        gl = g(t)
        return {
            "left_boundary": (a * (1 + 2 * sigma_boundary) * v0**2
                              - 2 * a * sigma_boundary * v0 * gl),
            "interface": (-a * vn**2 + a * u0**2
                          + 2 * sigma_l * vn * (vn - u0)
                          + 2 * sigma_r * u0 * (u0 - vn)),
            "outflow": -a * um**2,
        }

    return _linear_system(
        "two_block_advection", L, source, np.concatenate([PL, PR]), rate_terms,
        x, flags,
        {"a": a, "sigma_l": sigma_l, "sigma_r": sigma_r, "n_left": nl,
         "n_right": nr, "h_left": op_left.h, "h_right": op_right.h,
         "h": max(op_left.h, op_right.h), "op_left": op_left,
         "op_right": op_right})


def interface_energy(a: float, sigma_l: float, jump: float) -> float:
    """Interface energy rate ``(2 sigma_l - a) (v_N - u_0)^2``."""
    return (2 * sigma_l - a) * jump**2


def assemble_split_variable_advection(a_fn: Callable, op: FirstDerivativeOperator,
                                      g_left=None, sigma: float = -1.0
                                      ) -> SemiDiscreteSystem:
    """Skew-symmetric split form of ``u_t + (a(x) u)_x = 0``.

    ``u_t = -1/2 D(A u) - 1/2 A D u - 1/2 A_x u + SAT`` where
    ``A_x = diag(D a)``; the inflow SAT is ``sigma a_0 P^{-1} e_0 (u_0 - g)``.
    """
    x = op.nodes()
    avals = np.asarray(a_fn(x), dtype=float) * np.ones(op.n)
    if np.any(avals <= 0):
        raise NonpositiveCoefficient("a(x) must be positive at every node")
    g = _signal(g_left)
    P, D = op.P, op.D
    ax = D @ avals
    A = np.diag(avals)
    L = -0.5 * (D @ A) - 0.5 * (A @ D) - 0.5 * np.diag(ax)
    L[0, 0] += sigma * avals[0] / P[0]

    def source(t):
        s = np.zeros(op.n)
        s[0] = -sigma * avals[0] * g(t) / P[0]
        return s

    def rate_terms(u, t=0.0):
        return {
            "boundary": -(avals[-1] * u[-1] ** 2 - avals[0] * u[0] ** 2),
            "inflow_penalty": 2 * sigma * avals[0] * u[0] * (u[0] - g(t)),
            "coefficient_growth": -float(np.sum(P * ax * u * u)),
        }

    return _linear_system(
        "split_variable_advection", L, source, P.copy(), rate_terms, x,
        labels={"sigma": sigma, "max_abs_ax": float(np.abs(ax).max()),
                "order": str(op.order), "n": op.n, "h": op.h})


@dataclass(frozen=True)
class MappingSpec:
    """Monotone map ``x(xi)`` of ``[0, 1]`` with its metric ``xi_x(xi)``."""

    x: Callable
    xi_x: Callable
    description: str = ""

    @classmethod
    def identity(cls):
        return cls(lambda xi: np.asarray(xi, dtype=float),
                   lambda xi: np.ones_like(np.asarray(xi, dtype=float)),
                   "identity")

    @classmethod
    def sine_stretch(cls, amplitude: float = 0.2):
        return cls(
            lambda xi: xi + amplitude * np.sin(np.pi * xi) / np.pi,
            lambda xi: 1.0 / (1.0 + amplitude * np.cos(np.pi * xi)),
            f"x = xi + {amplitude} sin(pi xi)/pi")


def assemble_stretched_advection(mapping: MappingSpec,
                                 op: FirstDerivativeOperator, g_left=None
                                 ) -> SemiDiscreteSystem:
    """``u_t + xi_x u_xi = 0`` on a mapped grid, in the norm ``v^T A^{-1} P v``.

    ``A = diag(xi_x)``; the inflow SAT is ``-1/2 A_00 P^{-1}_0 (u_0 - g)``.
    The diagonal norm is what makes the weighted energy identity exact.
    """
    xi = op.nodes()
    metric = np.asarray(mapping.xi_x(xi), dtype=float) * np.ones(op.n)
    if not np.all(np.isfinite(metric)) or np.any(metric <= 0):
        raise SingularMapping("xi_x must be positive and finite at every node")
    g = _signal(g_left)
    P = op.P
    L = -metric[:, None] * op.D
    L[0, 0] += -0.5 * metric[0] / P[0]

    def source(t):
        s = np.zeros(op.n)
        s[0] = 0.5 * metric[0] * g(t) / P[0]
        return s

    def rate_terms(u, t=0.0):
        return {"outflow": -u[-1] ** 2, "inflow": u[0] * g(t)}

    return _linear_system(
        "stretched_advection", L, source, P / metric, rate_terms,
        np.asarray(mapping.x(xi), dtype=float),
        labels={"mapping": mapping.description, "order": str(op.order),
                "n": op.n, "h": op.h})


def matrix_signed_parts(A, tol: float = 1e-12):
    """Split a symmetric matrix into its positive and negative parts."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"matrix must be square, got shape {A.shape}")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > tol * scale:
        raise NotSymmetric("matrix is not symmetric")
    lam, X = np.linalg.eigh(0.5 * (A + A.T))
    plus = (X * np.maximum(lam, 0.0)) @ X.T
    minus = (X * np.minimum(lam, 0.0)) @ X.T
    return 0.5 * (plus + plus.T), 0.5 * (minus + minus.T)


@dataclass(frozen=True)
class SymmetricPair:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if A.shape != B.shape or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise DimensionMismatch("A and B must be square and the same size")
        for name, X in (("A", A), ("B", B)):
            if np.abs(X - X.T).max() > 1e-14 * max(1.0, np.abs(X).max()):
                raise NotSymmetric(f"{name} is not symmetric")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def m(self) -> int:
        return self.A.shape[0]


SIDES = ("west", "east", "south", "north")


def assemble_2d_hyperbolic(pair: SymmetricPair, op_x: FirstDerivativeOperator,
                           op_y: FirstDerivativeOperator,
                           g: Mapping[str, object] | None = None
                           ) -> SemiDiscreteSystem:
    """``u_t + A u_x + B u_y = 0`` on the unit square with far-field SATs.

    The state is ordered component fastest, then x, then y, so it reshapes to
    ``(ny, nx, m)``.  Derivatives are applied along axes; no Kronecker
    product is ever formed.
    """
    m = pair.m
    nx, ny = op_x.n, op_y.n
    g = dict(g or {})
    unknown = set(g) - set(SIDES)
    if unknown:
        raise ValueError(f"unknown sides {sorted(unknown)}")
    signals = {s: g.get(s) for s in SIDES}
    Ap, Am = matrix_signed_parts(pair.A)
    Bp, Bm = matrix_signed_parts(pair.B)
    A, B = pair.A, pair.B
    Dx, Dy = sp.csr_matrix(op_x.D), sp.csr_matrix(op_y.D)
    Px, Py = op_x.P, op_y.P
    x, y = op_x.nodes(), op_y.nodes()
    coords = {"west": y, "east": y, "south": x, "north": x}
    shape = (ny, nx, m)
    weights = (Py[:, None, None] * Px[None, :, None] * np.ones(m)).ravel()

    def data(side, t):
        sig = signals[side]
        if sig is None:
            return np.zeros((coords[side].size, m))
        val = np.asarray(sig(coords[side], t), dtype=float)
        return np.broadcast_to(val.reshape(-1, m) if val.ndim else val,
                               (coords[side].size, m))

    def traces(v):
        return {"west": v[:, 0], "east": v[:, -1],
                "south": v[0], "north": v[-1]}

    def apply(v, t, homogeneous):
        v = v.reshape(shape)
        vx = (Dx @ v.transpose(1, 0, 2).reshape(nx, -1)).reshape(nx, ny, m)
        vy = (Dy @ v.reshape(ny, -1)).reshape(ny, nx, m)
        out = -(vx.transpose(1, 0, 2) @ A.T) - vy @ B.T
        gs = ({s: 0.0 for s in SIDES} if homogeneous
              else {s: data(s, t) for s in SIDES})
        out[:, 0] -= (v[:, 0] - gs["west"]) @ Ap.T / Px[0]
        out[:, -1] += (v[:, -1] - gs["east"]) @ Am.T / Px[-1]
        out[0] -= (v[0] - gs["south"]) @ Bp.T / Py[0]
        out[-1] += (v[-1] - gs["north"]) @ Bm.T / Py[-1]
        return out.ravel()

    def rhs(v, t=0.0):
        return apply(v, t, homogeneous=False)

    def quad(w, u, K):
        return float(np.sum(w * np.einsum("ij,jk,ik->i", u, K, u)))

    def rate_terms(v, t=0.0):
        tr = traces(np.asarray(v).reshape(shape))
        terms = {}
        inflow = {"west": Ap, "east": -Am, "south": Bp, "north": -Bm}
        outflow = {"west": Am, "east": -Ap, "south": Bm, "north": -Bp}
        side_w = {"west": Py, "east": Py, "south": Px, "north": Px}
        for s in SIDES:
            gs = data(s, t)
            w = side_w[s]
            diff = tr[s] - gs
            terms[f"{s}_data"] = quad(w, gs, inflow[s])
            terms[f"{s}_penalty"] = -quad(w, diff, inflow[s])
            terms[f"{s}_outflow"] = quad(w, tr[s], outflow[s])
        return terms

    return SemiDiscreteSystem(
        name="hyperbolic_2d", weights=weights, rhs=rhs, rate_terms=rate_terms,
        nodes=(x, y), linear_part=lambda v: apply(v, 0.0, homogeneous=True),
        labels={"m": m, "nx": nx, "ny": ny, "order": str(op_x.order),
                "h": max(op_x.h, op_y.h)})


def assemble_burgers_split(op: FirstDerivativeOperator, g_left=None
                           ) -> SemiDiscreteSystem:
    """Energy-stable split form ``u_t + 1/3 (u^2)_x + 1/3 u u_x = 0``.

    Inflow SAT ``-(2/3) max(u_0, 0) P^{-1}_0 (u_0 - g)``: its strength follows
    the local wave speed, and it vanishes when ``x_0`` is an outflow point.
    """
    g = _signal(g_left)
    P, D = op.P, sp.csr_matrix(op.D)

    def rhs(u, t=0.0):
        out = -(D @ (u * u)) / 3.0 - u * (D @ u) / 3.0
        out[0] -= (2.0 / 3.0) * max(u[0], 0.0) * (u[0] - g(t)) / P[0]
        return out

    def rate_terms(u, t=0.0):
        return {
            "flux": -(2.0 / 3.0) * (u[-1] ** 3 - u[0] ** 3),
            "inflow_penalty": -(4.0 / 3.0) * max(u[0], 0.0) * u[0] * (u[0] - g(t)),
        }

    return SemiDiscreteSystem(
        name="burgers_split", weights=P.copy(), rhs=rhs, rate_terms=rate_terms,
        nodes=op.nodes(), labels={"order": str(op.order), "n": op.n, "h": op.h})


def assemble_steady_transport(op: FirstDerivativeOperator, forcing, g0: float,
                              sigma: float = -1.0, a: float = 1.0):
    """Dual-consistent discretization of ``a u_x = F``, ``u(0) = g0``.

    Returns ``(matrix, rhs)`` for ``a D u = F + sigma P^{-1} e_0 (u_0 - g0)``
    rearranged to a linear system.
    """
    if sigma != -1.0:
        raise InadmissiblePenalty("steady transport is dual consistent only for sigma = -1")
    x = op.nodes()
    F = np.asarray(forcing(x) if callable(forcing) else forcing, dtype=float)
    F = F * np.ones(op.n)
    matrix = a * op.D
    matrix[0, 0] -= sigma / op.P[0]
    rhs = F.copy()
    rhs[0] -= sigma * g0 / op.P[0]
    return matrix, rhs
