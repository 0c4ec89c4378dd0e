"""Registered model-problem experiments: factories, exact solutions, expected rates.

Each builder takes an order and keyword parameters and returns a
:class:`Study`.  The CLI and the acceptance suite both draw from
``STUDIES`` so the two never disagree about a setup.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from sbpsat.errors import InadmissiblePenalty
from sbpsat.operators import as_order, build_first_derivative
from sbpsat.problems import (
    MappingSpec,
    SymmetricPair,
    assemble_2d_hyperbolic,
    assemble_advection,
    assemble_advection_diffusion,
    assemble_burgers_split,
    assemble_split_variable_advection,
    assemble_stretched_advection,
    assemble_two_block_advection,
)

TWO_PI = 2.0 * np.pi


@dataclass
class Study:
    name: str
    factory: Callable  # n -> SemiDiscreteSystem
    exact: Callable | None  # (nodes, t) -> state
    expected_rate: float | None
    levels: tuple
    t_final: float
    initial: Callable | None = None  # nodes -> state, when there is no exact solution
    growth_bound: float | None = None  # analytic alpha_c or its upper bound

    def initial_state(self, nodes):
        if self.exact is not None:
            return np.ravel(self.exact(nodes, 0.0))
        return np.ravel(self.initial(nodes))


def _zero_or(flag, fn):
    return (lambda *args: 0.0) if flag else fn


def advection(order, a=1.0, sigma=-1.0, homogeneous=False, allow_unstable=False,
              **_):
    """``u_t + a u_x = 0`` on [0, 1] with ``u = sin(2 pi (x - a t))``."""
    order = as_order(order)
    if not sigma < -0.5 and not allow_unstable:
        raise InadmissiblePenalty(f"sigma={sigma} violates sigma < -1/2")

    def exact(x, t):
        return np.sin(TWO_PI * (x - a * t))

    g0 = _zero_or(homogeneous, lambda t: np.sin(-TWO_PI * a * t))

    def factory(n):
        return assemble_advection(a, build_first_derivative(order, n), sigma, g0)

    return Study("advection", factory, None if homogeneous else exact, float(min(order.r + 1, order.p)),
                 (33, 65, 129, 257), 1.0,
                 initial=lambda x: np.exp(-50 * (x - 0.5) ** 2), growth_bound=0.0)


def _advection_diffusion(order, mode, a=1.0, eps=0.1, homogeneous=False, **_):
    order = as_order(order)
    k = TWO_PI
    if homogeneous:
        exact = None
        g0 = g1 = forcing = None
    else:
        def exact(x, t):
            return np.exp(-t) * np.sin(k * x)

        def ux(x, t):
            return k * np.exp(-t) * np.cos(k * x)

        def forcing(x, t):
            return np.exp(-t) * (-np.sin(k * x) + a * k * np.cos(k * x)
                                 + eps * k * k * np.sin(k * x))

        def g0(t):
            return a * exact(0.0, t) - eps * ux(0.0, t)

        def g1(t):
            return eps * ux(1.0, t)

    def factory(n):
        op = build_first_derivative(order, n)
        return assemble_advection_diffusion(a, eps, op, mode, g0, g1, forcing)

    rate = min(order.r + (1 if mode == "wide" else 2), order.p)
    return Study(f"advection_diffusion_{mode}", factory, exact, float(rate),
                 (33, 65, 129, 257), 0.5,
                 initial=lambda x: np.exp(-50 * (x - 0.5) ** 2), growth_bound=0.0)


def advection_diffusion_wide(order, **kw):
    """``u_t + a u_x = eps u_xx + F`` with ``u = exp(-t) sin(2 pi x)``, wide D D."""
    return _advection_diffusion(order, "wide", **kw)


def advection_diffusion_narrow(order, **kw):
    """As :func:`advection_diffusion_wide` with the narrow second derivative."""
    return _advection_diffusion(order, "narrow", **kw)


def two_block_sizes(n_right: int):
    """Left node count giving ``h_left = 1.5 h_right`` on unit-length blocks."""
    if (n_right - 1) % 3:
        raise ValueError("two-block levels need n_right - 1 divisible by 3")
    return 2 * (n_right - 1) // 3 + 1


def two_block(order, a=1.0, sigma_l=0.0, sigma_r=None, homogeneous=False,
              allow_unstable=False, **_):
    """Advection across [-1, 0] U [0, 1] with ``u = sin(pi (x - a t))``."""
    order = as_order(order)
    k = np.pi

    def exact(x, t):
        return np.sin(k * (x - a * t))

    g = _zero_or(homogeneous, lambda t: np.sin(k * (-1.0 - a * t)))

    def factory(n):
        op_l = build_first_derivative(order, two_block_sizes(n))
        op_r = build_first_derivative(order, n)
        return assemble_two_block_advection(a, op_l, op_r, sigma_l, g,
                                            sigma_r=sigma_r,
                                            allow_unstable=allow_unstable)

    return Study("two_block", factory, None if homogeneous else exact, float(min(order.r + 1, order.p)),
                 (49, 97, 193, 385), 1.0,
                 initial=lambda x: np.exp(-20 * x**2), growth_bound=0.0)


PLANE_WAVE_A = np.array([[1.0, 0.5], [0.5, -1.0]])
PLANE_WAVE_B = np.array([[0.0, 1.0], [1.0, 0.5]])


def plane_wave_2d(order, kx=TWO_PI, ky=TWO_PI, homogeneous=False, **_):
    """``u_t + A u_x + B u_y = 0`` with a plane wave along an eigenvector.

    ``w`` is the top eigenvector of ``kx A + ky B`` with eigenvalue ``s``, so
    ``u = sin(kx x + ky y - s t) w`` is exact; it also supplies the data on
    all four sides.
    """
    order = as_order(order)
    lam, vecs = np.linalg.eigh(kx * PLANE_WAVE_A + ky * PLANE_WAVE_B)
    s, w = lam[-1], vecs[:, -1]

    def wave(x, y, t):
        return np.sin(kx * x + ky * y - s * t)[..., None] * w

    def exact(nodes, t):
        x, y = nodes
        return wave(x[None, :], y[:, None], t)

    if homogeneous:
        data = None
    else:
        data = {"west": lambda c, t: wave(0.0, c, t), "east": lambda c, t: wave(1.0, c, t),
                "south": lambda c, t: wave(c, 0.0, t), "north": lambda c, t: wave(c, 1.0, t)}

    def factory(n):
        op = build_first_derivative(order, n)
        return assemble_2d_hyperbolic(SymmetricPair(PLANE_WAVE_A, PLANE_WAVE_B), op, op, data)

    def initial(nodes):
        x, y = nodes
        bump = np.exp(-30 * ((x[None, :] - 0.5) ** 2 + (y[:, None] - 0.5) ** 2))
        return bump[..., None] * np.array([1.0, -0.5])

    return Study("plane_wave_2d", factory, None if homogeneous else exact, float(min(order.r + 1, order.p)),
                 (17, 33, 65, 129), 0.5, initial=initial, growth_bound=0.0)


def stretched(order, amplitude=0.2, homogeneous=False, **_):
    """``u_t + u_x = 0`` on a sine-stretched grid, ``u = sin(2 pi (x - t))``."""
    order = as_order(order)
    mapping = MappingSpec.sine_stretch(amplitude)

    def exact(x, t):
        return np.sin(TWO_PI * (x - t))

    g = _zero_or(homogeneous, lambda t: np.sin(-TWO_PI * t))

    def factory(n):
        return assemble_stretched_advection(mapping, build_first_derivative(order, n), g)

    return Study("stretched", factory, None if homogeneous else exact, float(min(order.r + 1, order.p)),
                 (33, 65, 129, 257), 1.0,
                 initial=lambda x: np.exp(-50 * (x - 0.4) ** 2), growth_bound=0.0)


def split_variable(order, homogeneous=False, **_):
    """Split-form ``u_t + (a u)_x = 0`` with ``a = 1 + x/2``; no exact solution."""
    order = as_order(order)
    g = _zero_or(homogeneous, lambda t: np.sin(TWO_PI * t))

    def factory(n):
        return assemble_split_variable_advection(lambda x: 1.0 + 0.5 * x,
                                                 build_first_derivative(order, n), g)

    return Study("split_variable", factory, None, None, (33, 65, 129), 1.0,
                 initial=lambda x: np.exp(-50 * (x - 0.5) ** 2), growth_bound=0.5)


def burgers(order, inflow=0.5, **_):
    """Split-form Burgers with a positive inflow state; energy runs only."""
    order = as_order(order)

    def factory(n):
        return assemble_burgers_split(build_first_derivative(order, n), inflow)

    return Study("burgers", factory, None, None, (33, 65, 129), 0.2,
                 initial=lambda x: inflow + 0.25 * np.sin(TWO_PI * x))


STUDIES = {
    "advection": advection,
    "advection_diffusion_wide": advection_diffusion_wide,
    "advection_diffusion_narrow": advection_diffusion_narrow,
    "two_block": two_block,
    "plane_wave_2d": plane_wave_2d,
    "stretched": stretched,
    "split_variable": split_variable,
    "burgers": burgers,
}

# the rate table the acceptance suite asserts: (study, order) -> expected rate
RATE_TABLE = (
    ("advection", (2, 1), 2.0),
    ("advection", (4, 2), 3.0),
    ("advection", (6, 3), 4.0),
    ("advection_diffusion_wide", (4, 2), 3.0),
    ("advection_diffusion_narrow", (4, 2), 4.0),
    ("two_block", (4, 2), 3.0),
    ("plane_wave_2d", (4, 2), 3.0),
)


def build_study(name: str, order, **params) -> Study:
    try:
        builder = STUDIES[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(STUDIES)}") from None
    return builder(order, **params)


def random_state(system, rng, scale: float = 1.0) -> np.ndarray:
    return scale * rng.standard_normal(system.state_dim)


def steady_transport_exact():
    """``u_x = cos x``, ``u(0) = 0`` on [0, 1]: solution, forcing, exact integral."""
    return np.sin, np.cos, 1.0 - np.cos(1.0)


def instability_probe(order, sigma: float, n: int = 129, n_steps: int = 10_000,
                      reference_sigma: float = -0.6):
    """Homogeneous advection from data concentrated on the inflow node.

    With ``g = 0`` the energy rate is ``(1 + 2 sigma) u_0^2 - u_N^2``, so a
    penalty with ``sigma > -1/2`` lets energy grow whenever the inflow node
    dominates; ``e_0`` is the initial state that maximizes that rate.  The
    time step comes from the admissible ``reference_sigma`` system so two
    probes with different ``sigma`` share identical settings.
    """
    from sbpsat.timestepping import TimeGrid, cfl_timestep, rk4_integrate

    study = advection(order, sigma=sigma, homogeneous=True, allow_unstable=True)
    reference = advection(order, sigma=reference_sigma, homogeneous=True,
                          allow_unstable=True).factory(n)
    dt = cfl_timestep(reference)
    system = study.factory(n)
    u0 = np.zeros(n)
    u0[0] = 1.0
    return rk4_integrate(system, u0, TimeGrid(n_steps * dt, n_steps),
                         raise_on_blowup=False)
