r"""Renormalized stress components by mode summation and frequency quadrature.

The dimensionless radial component computed here is

.. math::
    s_{rr}(\rho) \equiv \frac{r^2 \sigma_r^r\, a^2}{\hbar c}
    = \frac{1}{8\pi^2}\sum_{l\ge 1}(2l+1)\int_0^\infty
      C\,\Bigl[(l(l+1) + y_i^2\rho^2)\frac{B(y_i\rho)^2}{\rho}
      - \Bigl(\frac{d}{d\rho}\sqrt{\rho}\,B(y_i\rho)\Bigr)^2\Bigr]\,dy ,

with :math:`B = I_{l+1/2}`, :math:`C = C_\text{i}`, :math:`y_i = y_1` inside
and :math:`B = K_{l+1/2}`, :math:`C = C_\text{o}`, :math:`y_i = y_2` outside.
The bracket is the coincidence limit of the derivative operator
:math:`(d/d\rho)\rho\,(d/d\rho')\rho'` acting on the product form of the
mode function; the reduction is exercised against numerical
:math:`\rho'`-differentiation and against the per-mode divergence identity
in the test suite.  The tangential component replaces the bracket by
:math:`-l(l+1)\,B(y_i\rho)^2/\rho`.

The frequency integral decays like :math:`e^{-2 y n_i \delta'}` with
:math:`\delta' = |1-\rho|`, so panels grow geometrically from ``y_min`` and
are capped at the decay length; the mode sum decays like
:math:`e^{-2 l \delta'}` and is truncated by a geometric tail estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import bessel, scattering
from .errors import ConvergenceFailure, DomainError, SurfaceSingularity
from .scattering import MediaConfig

PREFACTOR = 1.0 / (8.0 * np.pi ** 2)


@dataclass(frozen=True)
class QuadratureSpec:
    """Frequency-quadrature policy.

    ``u_cap`` bounds the truncated tail: integration stops at
    y_max = u_cap / (2 n delta'), where the integrand envelope has fallen
    to e^{-u_cap} of its scale.
    """

    rel_tol: float = 1e-11
    y_min: float = 1e-4
    u_cap: float = 45.0
    nodes: int = 16
    max_refine: int = 8

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise DomainError("rel_tol must be positive")
        if not (0 < self.y_min <= 0.01):
            raise DomainError("y_min must lie in (0, 0.01]")
        if self.u_cap < 30.0:
            raise DomainError("u_cap below 30 cannot support rel_tol ~ 1e-11")


@dataclass(frozen=True)
class TruncationPolicy:
    """Mode-sum truncation policy."""

    tail_tol: float = 1e-11
    l_start: int = 1
    cap_factor: float = 50.0
    l_max_override: int | None = None

    def __post_init__(self):
        if self.tail_tol <= 0:
            raise DomainError("tail_tol must be positive")
        if self.l_start != 1:
            raise DomainError("the mode sum starts at l = 1")

    def hard_cap(self, delta_p: float) -> int:
        if self.l_max_override is not None:
            return self.l_max_override
        return int(max(400.0, self.cap_factor / delta_p))


@dataclass(frozen=True)
class StressValue:
    """Dimensionless stress components at one radius."""

    rho: float
    s_rr: float
    s_tt: float
    err_estimate: float


@dataclass(frozen=True)
class StressSample:
    """One sampled value of the stress jump D(delta)."""

    delta: float
    value: float
    err_estimate: float


def _build_edges(delta_p: float, n_side: float, quad: QuadratureSpec,
                 split: int = 0) -> np.ndarray:
    """Panel edges: geometric growth capped at the decay length."""
    width_cap = 1.0 / (n_side * delta_p) / (1 << split)
    y_max = quad.u_cap / (2.0 * n_side * delta_p)
    edges = [quad.y_min]
    while edges[-1] < y_max:
        nxt = min(edges[-1] * (2.0 if split == 0 else 1.0 + 1.0 / (1 << split)),
                  edges[-1] + width_cap)
        edges.append(min(nxt, y_max))
    return np.asarray(edges)


def _nodes_weights(edges: np.ndarray, nodes: int):
    gx, gw = leggauss(nodes)
    a = edges[:-1]
    b = edges[1:]
    mid = 0.5 * (a + b)[:, None]
    half = 0.5 * (b - a)[:, None]
    y = (mid + half * gx[None, :]).ravel()
    w = (half * gw[None, :]).ravel()
    return y, w


def _block_mode_integrals(media: MediaConfig, rho: float, ls: np.ndarray,
                          y: np.ndarray, w: np.ndarray, order: int,
                          nu_switch: float):
    """Per-mode frequency integrals (T_rr[l], T_tt[l]) over the given rule."""
    inside = rho < 1.0
    shape = (len(ls), len(y))
    yg1 = np.broadcast_to(media.n_in * y, shape)
    p1 = bessel.stress_parts(ls, yg1, order=order, nu_switch=nu_switch,
                             combos=False)
    if media.same_speed():
        p2, yg2 = p1, yg1
    else:
        yg2 = np.broadcast_to(media.n_out * y, shape)
        p2 = bessel.stress_parts(ls, yg2, order=order, nu_switch=nu_switch,
                                 combos=False)
    ci_m, co_m, _ = scattering.coefficient_mantissas(media, p1, p2, yg1, yg2)

    xg = rho * (yg1 if inside else yg2)
    px = bessel.stress_parts(ls, xg, order=order, nu_switch=nu_switch)
    two_l1 = (2.0 * ls + 1.0)[:, None]
    L = (ls * (ls + 1.0))[:, None]
    if inside:
        shift = bessel.exponent_shift(ls, media.n_in * y, rho, nu_switch)
        expo = 2.0 * shift
        c = ci_m
        bracket = px.small_i * px.big_i
        prof2 = px.m_i * px.m_i
    else:
        shift = bessel.exponent_shift(ls, media.n_out * y, rho, nu_switch)
        expo = -2.0 * shift
        c = co_m
        bracket = px.small_k * px.big_k
        prof2 = px.m_k * px.m_k
    damp = np.exp(expo)
    t_rr = two_l1 * c * bracket / rho * damp
    t_tt = -two_l1 * L * c * prof2 / rho * damp
    return t_rr @ w, t_tt @ w


def _mode_integrals(media: MediaConfig, rho: float, ls: np.ndarray,
                    rule: tuple[np.ndarray, np.ndarray], quad: QuadratureSpec,
                    order: int, nu_switch: float):
    y, w = rule
    T_rr, T_tt = _block_mode_integrals(media, rho, ls, y, w, order, nu_switch)
    lim_rr, lim_tt = scattering.low_frequency_limits(media, ls, rho)
    return T_rr + quad.y_min * lim_rr, T_tt + quad.y_min * lim_tt


def _calibrate_edges(media: MediaConfig, rho: float, quad: QuadratureSpec,
                     trunc: TruncationPolicy, order: int, nu_switch: float):
    """Refine the panel set until probe modes are stable to rel_tol / 4."""
    delta_p = abs(1.0 - rho)
    n_side = media.n_in if rho < 1.0 else media.n_out
    probes = np.unique(np.array(
        [1, max(2, int(0.5 / delta_p)), max(3, int(2.0 / delta_p))], dtype=int))
    probes = probes[probes <= trunc.hard_cap(delta_p)]
    err = np.inf
    for split in range(quad.max_refine + 1):
        edges = _build_edges(delta_p, n_side, quad, split)
        coarse, _ = _mode_integrals(media, rho, probes,
                                    _nodes_weights(edges, quad.nodes),
                                    quad, order, nu_switch)
        finer = np.sort(np.concatenate([edges, 0.5 * (edges[:-1] + edges[1:])]))
        fine, _ = _mode_integrals(media, rho, probes,
                                  _nodes_weights(finer, quad.nodes),
                                  quad, order, nu_switch)
        scale = np.max(np.abs(fine)) + 1e-300
        err = float(np.max(np.abs(fine - coarse))) / scale
        if err <= quad.rel_tol / 4.0:
            return edges, err
    raise ConvergenceFailure(
        f"frequency quadrature did not stabilize at rho={rho}: "
        f"residual {err:.2e} after {quad.max_refine} refinements")


def compute_stress(media: MediaConfig, rho: float,
                   quad: QuadratureSpec | None = None,
                   trunc: TruncationPolicy | None = None,
                   order: int = 6,
                   nu_switch: float = bessel.NU_SWITCH) -> StressValue:
    """Both renormalized stress components at rho = r/a (rho != 1)."""
    quad = quad or QuadratureSpec()
    trunc = trunc or TruncationPolicy()
    if rho <= 0:
        raise DomainError(f"rho must be positive, got {rho}")
    if abs(rho - 1.0) < 1e-6:
        raise SurfaceSingularity(
            f"stress diverges at the surface; rho={rho} is closer than 1e-6")
    if media.identical():
        return StressValue(rho=rho, s_rr=0.0, s_tt=0.0, err_estimate=0.0)

    delta_p = abs(1.0 - rho)
    edges, quad_err = _calibrate_edges(media, rho, quad, trunc, order, nu_switch)
    rule = _nodes_weights(edges, quad.nodes)
    cap = trunc.hard_cap(delta_p)
    block = 96

    tot_rr = kah_rr = 0.0
    tot_tt = kah_tt = 0.0
    prev = None
    decreasing = 0
    tail_ok = 0
    tail_abs = np.inf
    l0 = 1
    stopped = False
    while l0 <= cap and not stopped:
        ls = np.arange(l0, min(l0 + block, cap + 1))
        T_rr, T_tt = _mode_integrals(media, rho, ls, rule, quad, order, nu_switch)
        for j in range(len(ls)):
            t = float(T_rr[j])
            yc = t - kah_rr
            tt = tot_rr + yc
            kah_rr = (tt - tot_rr) - yc
            tot_rr = tt
            t2 = float(T_tt[j])
            yc = t2 - kah_tt
            tt = tot_tt + yc
            kah_tt = (tt - tot_tt) - yc
            tot_tt = tt
            mag = max(abs(t), abs(t2))
            if prev is not None and prev > 0:
                if mag < prev:
                    decreasing += 1
                else:
                    decreasing = 0
                    tail_ok = 0
                if decreasing >= 1 and mag > 0 and prev > 0:
                    r = mag / prev
                    # each component's tail must be small against its own sum
                    scale = min(abs(tot_rr), abs(tot_tt)) + 1e-300
                    tail_abs = mag * r / max(1.0 - r, 1e-3)
                    if decreasing >= 3 and tail_abs < trunc.tail_tol * scale:
                        tail_ok += 1
                        if tail_ok >= 3:
                            stopped = True
                            break
                    else:
                        tail_ok = 0
            prev = mag
        l0 += block
    if not stopped and trunc.l_max_override is None:
        scale = min(abs(tot_rr), abs(tot_tt)) + 1e-300
        if not (tail_abs < 1e3 * trunc.tail_tol * scale):
            raise ConvergenceFailure(
                f"mode sum hit the hard cap l={cap} at rho={rho} with tail "
                f"estimate {tail_abs:.2e} (tolerance {trunc.tail_tol:.1e})")
    scale = max(abs(tot_rr), abs(tot_tt))
    err = (quad_err * scale
           + (0.0 if trunc.l_max_override is not None else min(tail_abs, np.inf))
           + 1e-14 * scale)
    return StressValue(rho=rho, s_rr=PREFACTOR * tot_rr,
                       s_tt=PREFACTOR * tot_tt, err_estimate=PREFACTOR * err)


def radial_stress(media: MediaConfig, rho: float,
                  quad: QuadratureSpec | None = None,
                  trunc: TruncationPolicy | None = None,
                  **kw) -> StressValue:
    """Dimensionless r^2 sigma_r^r a^2/(hbar c) at rho (and s_tt alongside)."""
    return compute_stress(media, rho, quad, trunc, **kw)


def tangential_stress(media: MediaConfig, rho: float,
                      quad: QuadratureSpec | None = None,
                      trunc: TruncationPolicy | None = None,
                      **kw) -> StressValue:
    """Dimensionless r^2 sigma_theta^theta a^2/(hbar c) at rho."""
    return compute_stress(media, rho, quad, trunc, **kw)


def _jump_block(media: MediaConfig, delta: float, ls: np.ndarray,
                rule_in, rule_out, quad: QuadratureSpec, order: int,
                nu_switch: float):
    """Per-mode jump terms (T_in[l], T_out[l]) with the y->0 piece folded in.

    When both sides use one rule the coefficient grids are evaluated once.
    """
    two_l1 = (2.0 * ls + 1.0)[:, None]
    shared = rule_in is rule_out
    coeff = None
    sides = []
    for inside, rule in ((True, rule_in), (False, rule_out)):
        y, w = rule
        shape = (len(ls), len(y))
        if coeff is None or not shared:
            yg1 = np.broadcast_to(media.n_in * y, shape)
            p1 = bessel.stress_parts(ls, yg1, order=order, nu_switch=nu_switch,
                                     combos=False)
            if media.same_speed():
                p2, yg2 = p1, yg1
            else:
                yg2 = np.broadcast_to(media.n_out * y, shape)
                p2 = bessel.stress_parts(ls, yg2, order=order,
                                         nu_switch=nu_switch, combos=False)
            ci_m, co_m, _ = scattering.coefficient_mantissas(
                media, p1, p2, yg1, yg2)
            coeff = (p1, p2, yg1, yg2, ci_m, co_m)
        p1, p2, yg1, yg2, ci_m, co_m = coeff
        rho = 1.0 - delta if inside else 1.0 + delta
        if inside:
            px = bessel.stress_parts(ls, rho * yg1, order=order,
                                     nu_switch=nu_switch)
            shift = bessel.exponent_shift(ls, media.n_in * y, rho, nu_switch)
            t = (two_l1 * ci_m * (px.small_i * px.big_i) / rho
                 * np.exp(2.0 * shift))
        else:
            px = bessel.stress_parts(ls, rho * yg2, order=order,
                                     nu_switch=nu_switch)
            shift = bessel.exponent_shift(ls, media.n_out * y, rho, nu_switch)
            t = (two_l1 * co_m * (px.small_k * px.big_k) / rho
                 * np.exp(-2.0 * shift))
        lim, _ = scattering.low_frequency_limits(media, ls, rho)
        sides.append(t @ w + quad.y_min * lim)
    return sides[0], sides[1]


def _jump_rules(media: MediaConfig, delta: float, quad: QuadratureSpec,
                split: int):
    """One shared rule when the two decay scales are close, else per side."""
    n1, n2 = media.n_in, media.n_out
    if max(n1, n2) / min(n1, n2) <= 4.0:
        edges = _build_edges(delta, max(n1, n2), quad, split)
        y_max = quad.u_cap / (2.0 * min(n1, n2) * delta)
        width = edges[-1] - edges[-2]
        while edges[-1] < y_max:
            edges = np.append(edges, min(edges[-1] + width, y_max))
        return edges, edges
    return (_build_edges(delta, n1, quad, split),
            _build_edges(delta, n2, quad, split))


def _jump_calibrate(media: MediaConfig, delta: float, quad: QuadratureSpec,
                    trunc: TruncationPolicy, order: int, nu_switch: float):
    """Panel sets for both sides, refined until probe modes are stable."""
    probes = np.unique(np.array(
        [1, max(2, int(0.5 / delta)), max(3, int(2.0 / delta))], dtype=int))
    probes = probes[probes <= trunc.hard_cap(delta)]
    err = np.inf
    for split in range(quad.max_refine + 1):
        e_in, e_out = _jump_rules(media, delta, quad, split)
        feats = []
        for refine in (False, True):
            ei, eo = e_in, e_out
            if refine:
                ei = np.sort(np.concatenate([ei, 0.5 * (ei[:-1] + ei[1:])]))
                eo = np.sort(np.concatenate([eo, 0.5 * (eo[:-1] + eo[1:])])) \
                    if eo is not e_in else ei
            r_in = _nodes_weights(ei, quad.nodes)
            r_out = r_in if eo is ei else _nodes_weights(eo, quad.nodes)
            T_in, T_out = _jump_block(media, delta, probes, r_in, r_out,
                                      quad, order, nu_switch)
            feats.append(np.concatenate([T_in, T_out]))
        scale = np.max(np.abs(feats[1])) + 1e-300
        err = float(np.max(np.abs(feats[1] - feats[0]))) / scale
        if err <= quad.rel_tol / 4.0:
            return e_in, e_out, err
    raise ConvergenceFailure(
        f"frequency quadrature did not stabilize for the jump at "
        f"delta={delta}: residual {err:.2e} after {quad.max_refine} refinements")


def stress_jump(media: MediaConfig, delta: float,
                quad: QuadratureSpec | None = None,
                trunc: TruncationPolicy | None = None,
                order: int = 6,
                nu_switch: float = bessel.NU_SWITCH) -> StressSample:
    """D(delta) = s_rr(1+delta) - s_rr(1-delta), in units hbar c / a^2.

    Computed in a single interleaved mode sum whose truncation targets the
    jump itself rather than the much larger one-sided components.
    """
    if not 1e-4 <= delta <= 0.5:
        raise DomainError(f"delta must lie in [1e-4, 0.5], got {delta}")
    if media.identical():
        return StressSample(delta=delta, value=0.0, err_estimate=0.0)
    quad = quad or QuadratureSpec()
    trunc = trunc or TruncationPolicy()

    e_in, e_out, quad_err = _jump_calibrate(media, delta, quad, trunc, order,
                                            nu_switch)
    rule_in = _nodes_weights(e_in, quad.nodes)
    rule_out = rule_in if e_out is e_in else _nodes_weights(e_out, quad.nodes)
    cap = trunc.hard_cap(delta)
    block = 96

    total = kah = 0.0
    side_sum = 0.0
    prev = None
    decreasing = 0
    tail_ok = 0
    tail_abs = np.inf
    l0 = 1
    stopped = False
    while l0 <= cap and not stopped:
        ls = np.arange(l0, min(l0 + block, cap + 1))
        T_in, T_out = _jump_block(media, delta, ls, rule_in, rule_out,
                                  quad, order, nu_switch)
        TD = T_out - T_in
        side_sum += float(np.sum(np.abs(T_in)) + np.sum(np.abs(T_out)))
        for j in range(len(ls)):
            t = float(TD[j])
            yc = t - kah
            tt = total + yc
            kah = (tt - total) - yc
            total = tt
            mag = abs(t)
            if prev is not None and prev > 0:
                if mag < prev:
                    decreasing += 1
                else:
                    decreasing = 0
                    tail_ok = 0
                if decreasing >= 1 and mag > 0:
                    r = mag / prev
                    tail_abs = mag * r / max(1.0 - r, 1e-3)
                    if decreasing >= 3 and tail_abs < trunc.tail_tol * (
                            abs(total) + 1e-300):
                        tail_ok += 1
                        if tail_ok >= 3:
                            stopped = True
                            break
                    else:
                        tail_ok = 0
            prev = mag
        l0 += block
    if not stopped and trunc.l_max_override is None:
        if not (tail_abs < 1e3 * trunc.tail_tol * (abs(total) + 1e-300)):
            raise ConvergenceFailure(
                f"jump mode sum hit the hard cap l={cap} at delta={delta} "
                f"with tail estimate {tail_abs:.2e}")
    err = (quad_err * side_sum
           + (0.0 if trunc.l_max_override is not None else tail_abs)
           + 1e-15 * side_sum)
    return StressSample(delta=delta, value=PREFACTOR * total,
                        err_estimate=PREFACTOR * err)


def divergence_residual(media: MediaConfig, l: int, y: float,
                        rho: float) -> float:
    """Relative residual of the per-mode radial force-density identity.

    The radial force density (1/r^2) d/dr (r^2 sigma_r^r) - (2/r)
    sigma_theta^theta vanishes off the surface for every (l, y) separately;
    this evaluates d t_rr/d rho + 2 l(l+1) C B^2/rho^2 from the analytic
    rho-derivative of the integrand and normalizes it by the largest
    constituent term.
    """
    if rho <= 0 or abs(rho - 1.0) < 1e-9:
        raise DomainError("rho must be positive and off the surface")
    if media.identical():
        return 0.0
    point = scattering.ModePoint(l=l, y=y)
    inside = rho < 1.0
    y1, y2 = point.scaled(media)
    yi = y1 if inside else y2
    x = rho * yi
    b = bessel.bundle(point.nu, x)
    nu = point.nu
    L = l * (l + 1.0)
    if inside:
        mB, mdB = b.m_i, b.m_di
    else:
        mB, mdB = b.m_k, b.m_dk
    # second derivative from the modified Bessel equation
    md2B = mB * (1.0 + nu * nu / (x * x)) - mdB / x
    D = mB / (2 * np.sqrt(rho)) + np.sqrt(rho) * yi * mdB
    dD = yi * mdB / np.sqrt(rho) - mB / (4 * rho ** 1.5) + np.sqrt(rho) * yi * yi * md2B
    terms = np.array([
        2 * x * yi * mB * mB / rho,
        (L + x * x) * 2 * mB * mdB * yi / rho,
        -(L + x * x) * mB * mB / (rho * rho),
        -2 * D * dD,
    ])
    residual = terms.sum() + 2 * L * mB * mB / (rho * rho)
    scale = np.max(np.abs(terms)) + 2 * L * mB * mB / (rho * rho)
    return float(abs(residual) / scale)
