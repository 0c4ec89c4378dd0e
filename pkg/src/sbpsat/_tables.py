"""Diagonal-norm SBP coefficient tables, stored as exact rationals.

Each entry is keyed by ``(p, r)``.  All values are for unit grid spacing;
``P`` scales with ``h``, ``Q`` is dimensionless, and the second-derivative
blocks scale with ``1/h``.

``norm``
    Leading diagonal norm weights (the remaining interior weights are 1).
``q_block``
    Upper-left boundary rows of ``Q``.  The lower-right block is obtained by
    the antisymmetric mirror ``Q[n-1-i, n-1-j] = -Q[i, j]``.
``q_interior``
    Coefficients of the interior central stencil for offsets ``1..w``;
    ``Q[i, i+k] = q[k-1]`` and ``Q[i, i-k] = -q[k-1]``.
``d2_interior``
    Symmetric narrow second-derivative stencil for offsets ``-w2..w2``.
``m_block``
    Symmetric upper-left block of ``M = -P D2 + B S`` (the dissipation form).
``s_boundary``
    One-sided first-derivative stencil at ``x_0``.
"""

from fractions import Fraction as F

TABLES = {
    (2, 1): {
        "norm": [F(1, 2)],
        "q_block": [
            [F(-1, 2), F(1, 2)],
        ],
        "q_interior": [F(1, 2)],
        "d2_interior": [F(1), F(-2), F(1)],
        "m_block": [
            [F(1)],
        ],
        "s_boundary": [F(-3, 2), F(2), F(-1, 2)],
    },
    (4, 2): {
        "norm": [F(17, 48), F(59, 48), F(43, 48), F(49, 48)],
        "q_block": [
            [F(-1, 2), F(59, 96), F(-1, 12), F(-1, 32), F(0), F(0)],
            [F(-59, 96), F(0), F(59, 96), F(0), F(0), F(0)],
            [F(1, 12), F(-59, 96), F(0), F(59, 96), F(-1, 12), F(0)],
            [F(1, 32), F(0), F(-59, 96), F(0), F(2, 3), F(-1, 12)],
        ],
        "q_interior": [F(2, 3), F(-1, 12)],
        "d2_interior": [F(-1, 12), F(4, 3), F(-5, 2), F(4, 3), F(-1, 12)],
        "m_block": [
            [F(9, 8), F(-59, 48), F(1, 12), F(1, 48)],
            [F(-59, 48), F(59, 24), F(-59, 48), F(0)],
            [F(1, 12), F(-59, 48), F(55, 24), F(-59, 48)],
            [F(1, 48), F(0), F(-59, 48), F(59, 24)],
        ],
        "s_boundary": [F(-11, 6), F(3), F(-3, 2), F(1, 3)],
    },
}


def _m_block_63(t):
    # one-parameter family solving the accuracy conditions; t is the (5, 5) entry
    rows = {
        (0, 0): t - F(19697, 12960),
        (0, 1): F(2098907, 172800) - 5 * t,
        (0, 2): 10 * t - F(3475609, 129600),
        (0, 3): F(6987397, 259200) - 10 * t,
        (0, 4): 5 * t - F(193649, 14400),
        (0, 5): F(278033, 103680) - t,
        (1, 1): 25 * t - F(839647, 12960),
        (1, 2): F(6921397, 51840) - 50 * t,
        (1, 3): 50 * t - F(387859, 2880),
        (1, 4): F(6969449, 103680) - 25 * t,
        (1, 5): 5 * t - F(1739359, 129600),
        (2, 2): 100 * t - F(577009, 2160),
        (2, 3): F(1388617, 5184) - 100 * t,
        (2, 4): 50 * t - F(3481031, 25920),
        (2, 5): F(2321591, 86400) - 10 * t,
        (3, 3): 100 * t - F(1726033, 6480),
        (3, 4): F(2298631, 17280) - 50 * t,
        (3, 5): 10 * t - F(3473101, 129600),
        (4, 4): 25 * t - F(26189, 405),
        (4, 5): F(6235729, 518400) - 5 * t,
        (5, 5): t,
    }
    block = [[F(0)] * 6 for _ in range(6)]
    for (i, j), v in rows.items():
        block[i][j] = block[j][i] = v
    return block


# M_63 is positive semidefinite only for t >= ~2.6745; 67/25 keeps the
# spectral radius of P^{-1} M at the interior value.
M63_PARAMETER = F(67, 25)

TABLES[6, 3] = {
    "norm": [
        F(13649, 43200), F(12013, 8640), F(2711, 4320),
        F(5359, 4320), F(7877, 8640), F(43801, 43200),
    ],
    "q_block": [
        [F(-1, 2), F(104009, 172800), F(30443, 259200), F(-33311, 86400),
         F(5621, 28800), F(-601, 20736), F(0), F(0), F(0)],
        [F(-104009, 172800), F(0), F(-311, 51840), F(6743, 5760),
         F(-24337, 34560), F(36661, 259200), F(0), F(0), F(0)],
        [F(-30443, 259200), F(311, 51840), F(0), F(-2231, 5184),
         F(41287, 51840), F(-7333, 28800), F(0), F(0), F(0)],
        [F(33311, 86400), F(-6743, 5760), F(2231, 5184), F(0),
         F(4147, 17280), F(25427, 259200), F(1, 60), F(0), F(0)],
        [F(-5621, 28800), F(24337, 34560), F(-41287, 51840), F(-4147, 17280),
         F(0), F(342523, 518400), F(-3, 20), F(1, 60), F(0)],
        [F(601, 20736), F(-36661, 259200), F(7333, 28800), F(-25427, 259200),
         F(-342523, 518400), F(0), F(3, 4), F(-3, 20), F(1, 60)],
    ],
    "q_interior": [F(3, 4), F(-3, 20), F(1, 60)],
    "d2_interior": [
        F(1, 90), F(-3, 20), F(3, 2), F(-49, 18), F(3, 2), F(-3, 20), F(1, 90),
    ],
    "m_block": _m_block_63(M63_PARAMETER),
    "s_boundary": [F(-25, 12), F(4), F(-3), F(4, 3), F(-1, 4)],
}
