"""Diagonal-norm summation-by-parts operators on uniform grids.

The first-derivative operator is ``D = P^{-1} Q`` with ``P`` diagonal and
``Q + Q^T = B = diag(-1, 0, ..., 0, 1)``.  The narrow second-derivative
operator is ``D2 = P^{-1} (-S^T M S + B S)`` where the first and last rows of
``S`` are one-sided boundary derivatives and ``M`` is symmetric positive
definite.

Coefficients come from :mod:`sbpsat._tables`; they are assembled from exact
rationals and rounded to floating point once per entry, which keeps
``Q + Q^T - B`` exactly zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from sbpsat._tables import TABLES
from sbpsat.errors import GridTooSmall, UnsupportedOrder

SBP_TOL = 1e-13
ACCURACY_TOL = 1e-10


@dataclass(frozen=True)
class AccuracyOrder:
    """Interior order ``p`` and boundary-closure order ``r``."""

    p: int
    r: int

    def __post_init__(self):
        if (self.p, self.r) not in TABLES:
            supported = ", ".join(f"({p},{r})" for p, r in sorted(TABLES))
            raise UnsupportedOrder(
                f"unsupported order ({self.p},{self.r}); supported: {supported}")

    def __str__(self):
        return f"({self.p},{self.r})"


SUPPORTED_ORDERS = tuple(AccuracyOrder(p, r) for p, r in sorted(TABLES))


def as_order(order) -> AccuracyOrder:
    """Coerce ``AccuracyOrder``, a ``(p, r)`` pair, or an interior order ``p``."""
    if isinstance(order, AccuracyOrder):
        return order
    if isinstance(order, (tuple, list)):
        return AccuracyOrder(int(order[0]), int(order[1]))
    p = int(order)
    if p != order or p < 2 or p % 2:
        raise UnsupportedOrder(f"unsupported interior order {order!r}")
    return AccuracyOrder(p, p // 2)


def boundary_width(order) -> int:
    """Number of rows in each boundary closure block."""
    order = as_order(order)
    return len(TABLES[order.p, order.r]["norm"])


def _check_grid(order, n, h):
    b = boundary_width(order)
    if n < 2 * b + 1:
        raise GridTooSmall(
            f"order {order} needs n >= {2 * b + 1} points "
            f"(boundary blocks of width {b} would overlap at n={n})")
    if not h > 0:
        raise ValueError(f"grid spacing must be positive, got {h!r}")


def _norm_weights(table, n):
    w = np.ones(n)
    left = np.array([float(v) for v in table["norm"]])
    w[:left.size] = left
    w[n - left.size:] = left[::-1]
    return w


@dataclass(frozen=True, eq=False)
class FirstDerivativeOperator:
    n: int
    h: float
    P: np.ndarray
    Q: np.ndarray
    order: AccuracyOrder

    @cached_property
    def D(self) -> np.ndarray:
        return self.Q / self.P[:, None]

    @property
    def norm_matrix(self) -> np.ndarray:
        return np.diag(self.P)

    @property
    def B(self) -> np.ndarray:
        b = np.zeros((self.n, self.n))
        b[0, 0] = -1.0
        b[-1, -1] = 1.0
        return b

    @property
    def boundary_width(self) -> int:
        return boundary_width(self.order)

    def nodes(self, x0: float = 0.0) -> np.ndarray:
        return x0 + self.h * np.arange(self.n)

    def to_dict(self) -> dict:
        return {
            "order": {"p": self.order.p, "r": self.order.r},
            "n": self.n,
            "h": self.h,
            "P": self.P.tolist(),
            "Q": self.Q.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> FirstDerivativeOperator:
        order = AccuracyOrder(int(data["order"]["p"]), int(data["order"]["r"]))
        P = np.asarray(data["P"], dtype=float)
        Q = np.asarray(data["Q"], dtype=float)
        n = int(data["n"])
        if P.shape != (n,) or Q.shape != (n, n):
            raise ValueError("serialized operator has inconsistent shapes")
        return cls(n=n, h=float(data["h"]), P=P, Q=Q, order=order)

    @classmethod
    def from_json(cls, text: str) -> FirstDerivativeOperator:
        return cls.from_dict(json.loads(text))


def build_first_derivative(order, n: int, h: float | None = None
                           ) -> FirstDerivativeOperator:
    """Assemble the diagonal-norm ``(p, r)`` first-derivative operator.

    ``h`` defaults to ``1/(n-1)``, i.e. the grid covers ``[0, 1]``.
    """
    order = as_order(order)
    if h is None:
        h = 1.0 / (n - 1)
    _check_grid(order, n, h)
    table = TABLES[order.p, order.r]

    Q = np.zeros((n, n))
    for k, q in enumerate(table["q_interior"], start=1):
        val = float(q)
        idx = np.arange(n - k)
        Q[idx, idx + k] = val
        Q[idx + k, idx] = -val

    block = table["q_block"]
    b = len(block)
    width = len(block[0])
    # clear the band in the closure rows before writing the block
    Q[:b, :] = 0.0
    Q[n - b:, :] = 0.0
    for i, row in enumerate(block):
        for j, q in enumerate(row):
            val = float(q)
            Q[i, j] = val
            Q[n - 1 - i, n - 1 - j] = -val
    # interior rows whose stencils reach into the closure columns keep the
    # skew pattern of the block (Q[j, i] = -Q[i, j] for i < b <= j)
    for i in range(b):
        for j in range(b, width):
            Q[j, i] = -Q[i, j]
            Q[n - 1 - j, n - 1 - i] = Q[i, j]

    P = h * _norm_weights(table, n)
    return FirstDerivativeOperator(n=n, h=float(h), P=P, Q=Q, order=order)


@dataclass(frozen=True)
class OperatorReport:
    order: AccuracyOrder
    n: int
    max_sbp_residual: float
    accuracy: list  # (degree, interior residual, boundary residual)
    spd_check: bool
    reconstruction_residual: float | None = None
    m_eigen_bounds: tuple | None = None
    tolerances: dict = field(default_factory=lambda: {
        "sbp": SBP_TOL, "accuracy": ACCURACY_TOL})

    @property
    def passed(self) -> bool:
        if not self.spd_check or self.max_sbp_residual > self.tolerances["sbp"]:
            return False
        if (self.reconstruction_residual is not None
                and self.reconstruction_residual > self.tolerances["sbp"]):
            return False
        return all(not math.isnan(x) and x <= self.tolerances["accuracy"]
                   for x in self.required_residuals())

    def required_residuals(self):
        """Residuals that must vanish for the claimed ``(p, r)`` accuracy."""
        exact_interior, exact_boundary = self._exact_degrees
        for k, interior, boundary in self.accuracy:
            if k <= exact_interior:
                yield interior
            if k <= exact_boundary:
                yield boundary

    @property
    def _exact_degrees(self):
        if self.reconstruction_residual is None:
            return self.order.p, self.order.r
        # second derivative: O(h^p) interior, O(h^r) boundary
        return self.order.p + 1, self.order.r + 1

    def to_dict(self) -> dict:
        return {
            "order": {"p": self.order.p, "r": self.order.r},
            "n": self.n,
            "max_sbp_residual": self.max_sbp_residual,
            "accuracy": [
                {"degree": k, "interior": i, "boundary": b}
                for k, i, b in self.accuracy],
            "spd_check": self.spd_check,
            "reconstruction_residual": self.reconstruction_residual,
            "m_eigen_bounds": (None if self.m_eigen_bounds is None
                               else list(self.m_eigen_bounds)),
            "tolerances": dict(self.tolerances),
            "passed": self.passed,
        }


def _monomial_residuals(matrix, n, h, bw, max_degree, deriv):
    # monomials of x/L on [0, L], L = (n-1) h, so the test domain is [0, 1]
    L = (n - 1) * h
    x = h * np.arange(n)
    s = x / L
    interior = slice(bw, n - bw)
    boundary = np.r_[0:bw, n - bw:n]
    out = []
    for k in range(max_degree + 1):
        if deriv == 1:
            exact = k * s ** (k - 1) / L if k >= 1 else np.zeros(n)
        else:
            exact = k * (k - 1) * s ** (k - 2) / L**2 if k >= 2 else np.zeros(n)
        res = np.abs(matrix @ s**k - exact)
        out.append((k, float(res[interior].max()), float(res[boundary].max())))
    return out


def verify_first_derivative(op: FirstDerivativeOperator) -> OperatorReport:
    sbp = float(np.abs(op.Q + op.Q.T - op.B).max())
    accuracy = _monomial_residuals(op.D, op.n, op.h, op.boundary_width,
                                   op.order.p + 1, deriv=1)
    return OperatorReport(
        order=op.order, n=op.n, max_sbp_residual=sbp, accuracy=accuracy,
        spd_check=bool(np.all(op.P > 0)))


@dataclass(frozen=True, eq=False)
class SecondDerivativeOperator:
    """Narrow ``D2 = P^{-1}(-S^T M + B) S``.

    ``dissipation`` is ``S^T M S`` (symmetric, positive semidefinite, with the
    constants as its null space).  ``M`` itself is reconstructed lazily from
    it: interior rows of ``S`` are backward differences, so ``S`` has rank
    ``n-1`` and ``M = S^{+T} (S^T M S) S^{+} + h w w^T`` with ``w`` spanning
    the left null space of ``S``.
    """

    n: int
    h: float
    order: AccuracyOrder
    P: np.ndarray
    D2: np.ndarray
    S: np.ndarray
    dissipation: np.ndarray

    @property
    def B(self) -> np.ndarray:
        b = np.zeros((self.n, self.n))
        b[0, 0] = -1.0
        b[-1, -1] = 1.0
        return b

    @cached_property
    def M(self) -> np.ndarray:
        u, _, _ = np.linalg.svd(self.S)
        w = u[:, -1]
        s_pinv = np.linalg.pinv(self.S)
        m = s_pinv.T @ self.dissipation @ s_pinv + self.h * np.outer(w, w)
        return 0.5 * (m + m.T)

    def reconstruct(self) -> np.ndarray:
        return ((-self.S.T @ self.M + self.B) @ self.S) / self.P[:, None]

    def nodes(self, x0: float = 0.0) -> np.ndarray:
        return x0 + self.h * np.arange(self.n)


def build_second_derivative(order, n: int, h: float | None = None
                            ) -> SecondDerivativeOperator:
    order = as_order(order)
    if h is None:
        h = 1.0 / (n - 1)
    _check_grid(order, n, h)
    table = TABLES[order.p, order.r]

    stencil = [float(c) for c in table["d2_interior"]]
    w = len(stencil) // 2
    M = np.zeros((n, n))
    for k in range(-w, w + 1):
        idx = np.arange(max(0, -k), min(n, n - k))
        M[idx, idx + k] = -stencil[k + w]
    block = np.array([[float(v) for v in row] for row in table["m_block"]])
    b = block.shape[0]
    M[:b, :b] = block
    M[n - b:, n - b:] = block[::-1, ::-1]
    M /= h

    s0 = np.array([float(v) for v in table["s_boundary"]]) / h
    S = np.zeros((n, n))
    S[0, :s0.size] = s0
    S[-1, n - s0.size:] = -s0[::-1]
    idx = np.arange(1, n - 1)
    S[idx, idx] = 1.0 / h
    S[idx, idx - 1] = -1.0 / h

    BS = np.zeros((n, n))
    BS[0] = -S[0]
    BS[-1] = S[-1]
    P = h * _norm_weights(table, n)
    D2 = (-M + BS) / P[:, None]
    return SecondDerivativeOperator(n=n, h=float(h), order=order, P=P, D2=D2,
                                    S=S, dissipation=M)


def verify_second_derivative(op: SecondDerivativeOperator) -> OperatorReport:
    scale = float(np.abs(op.D2).max())
    recon = float(np.abs(op.reconstruct() - op.D2).max()) / scale
    M = op.M
    sym = float(np.abs(M - M.T).max())
    try:
        np.linalg.cholesky(M)
        spd = True
    except np.linalg.LinAlgError:
        spd = False
    ev = np.linalg.eigvalsh(M)
    bw = boundary_width(op.order)
    accuracy = _monomial_residuals(op.D2, op.n, op.h, bw, op.order.p + 2,
                                   deriv=2)
    # scale-free residuals: D2 entries grow like 1/h^2
    accuracy = [(k, i * op.h**2, b * op.h**2) for k, i, b in accuracy]
    return OperatorReport(
        order=op.order, n=op.n, max_sbp_residual=sym, accuracy=accuracy,
        spd_check=spd, reconstruction_residual=recon,
        m_eigen_bounds=(float(ev[0] / op.h), float(ev[-1] / op.h)))


def compose_wide_second_derivative(op: FirstDerivativeOperator) -> np.ndarray:
    """``D @ D``: the wide second derivative with ``S = D`` and ``M = P``."""
    return op.D @ op.D
