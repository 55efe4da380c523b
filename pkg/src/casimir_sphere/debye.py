r"""Correction polynomials for the large-order expansion of modified Bessel
functions.

The polynomials :math:`U_k(p)` enter the large-order expansions

.. math::
    I_\nu(\nu z) \sim \frac{e^{\nu\eta}}{\sqrt{2\pi\nu}\,(1+z^2)^{1/4}}
        \sum_{k\ge 0} \frac{U_k(p)}{\nu^k},
    \qquad
    K_\nu(\nu z) \sim \sqrt{\frac{\pi}{2\nu}}\,
        \frac{e^{-\nu\eta}}{(1+z^2)^{1/4}}
        \sum_{k\ge 0} (-1)^k\frac{U_k(p)}{\nu^k},

with :math:`\eta = \sqrt{1+z^2} + \ln\bigl(z/(1+\sqrt{1+z^2})\bigr)` and
:math:`p = (1+z^2)^{-1/2}`.  They satisfy :math:`U_0 = 1` and

.. math::
    U_{k+1}(p) = \tfrac{1}{2}p^2(1-p^2)U_k'(p)
                 + \tfrac{1}{8}\int_0^p (1-5t^2)\,U_k(t)\,dt .

The recurrence is carried out in exact rational arithmetic so the
coefficients are reproduced bit-identically on every run; the float tables
used by the evaluation hot path are derived from the exact ones once at
import time.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

MAX_ORDER = 8


def _next_u(u: list[Fraction]) -> list[Fraction]:
    """One application of the recurrence, exactly."""
    du = [Fraction(i) * u[i] for i in range(1, len(u))]
    out = [Fraction(0)] * (len(u) + 3)
    # (1/2) p^2 (1 - p^2) u'(p)
    for i, c in enumerate(du):
        out[i + 2] += c / 2
        out[i + 4] -= c / 2
    # (1/8) int_0^p (1 - 5 t^2) u(t) dt
    prod = [Fraction(0)] * (len(u) + 2)
    for i, c in enumerate(u):
        prod[i] += c
        prod[i + 2] -= 5 * c
    for i, c in enumerate(prod):
        out[i + 1] += c / Fraction(8 * (i + 1))
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return out


@dataclass(frozen=True)
class DebyeExpansion:
    """Exact coefficient tables U_0 .. U_max_k plus float copies.

    ``u_polys[k][i]`` is the exact coefficient of ``p**i`` in ``U_k``;
    ``u_float[k]`` / ``du_float[k]`` are float arrays of ``U_k`` and
    ``U_k'`` coefficients in ascending power order.  Each ``U_k`` only has
    powers k, k+2, ..., 3k, so the hot path evaluates ``U_k = p^k V_k(p^2)``
    and ``U_k' = p^{k-1} W_k(p^2)`` from the dense tables ``v_float`` /
    ``w_float``.
    """

    max_k: int
    u_polys: tuple[tuple[Fraction, ...], ...]
    u_float: tuple[np.ndarray, ...]
    du_float: tuple[np.ndarray, ...]
    v_float: tuple[np.ndarray, ...]
    w_float: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not 0 <= self.max_k <= MAX_ORDER:
            raise ValueError(f"max_k must lie in [0, {MAX_ORDER}], got {self.max_k}")


def generate_u_polynomials(max_k: int) -> DebyeExpansion:
    """Generate U_0 .. U_max_k by the exact recurrence.

    Parameters
    ----------
    max_k : int
        Highest correction order, 0 <= max_k <= 8.  U_0 = 1 and each U_k
        has degree 3k.

    Returns
    -------
    DebyeExpansion
    """
    if not 0 <= max_k <= MAX_ORDER:
        raise ValueError(f"max_k must lie in [0, {MAX_ORDER}], got {max_k}")
    polys = [[Fraction(1)]]
    for _ in range(max_k):
        polys.append(_next_u(polys[-1]))
    u_float = tuple(np.array([float(c) for c in poly]) for poly in polys)
    du_float = tuple(
        np.array([float(i * c) for i, c in enumerate(poly)][1:] or [0.0])
        for poly in polys
    )
    v_float, w_float = [], []
    for k, poly in enumerate(polys):
        v = [float(poly[k + 2 * j]) if k + 2 * j < len(poly) else 0.0
             for j in range(k + 1)]
        w = [float((k + 2 * j) * poly[k + 2 * j]) if k + 2 * j < len(poly) else 0.0
             for j in range(k + 1)]
        v_float.append(np.array(v))
        w_float.append(np.array(w))
    return DebyeExpansion(
        max_k=max_k,
        u_polys=tuple(tuple(p) for p in polys),
        u_float=u_float,
        du_float=du_float,
        v_float=tuple(v_float),
        w_float=tuple(w_float),
    )


# Shared by all evaluations; generation is exact and takes microseconds.
DEFAULT_EXPANSION = generate_u_polynomials(MAX_ORDER)
