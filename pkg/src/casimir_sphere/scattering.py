r"""Mode reflection coefficients of the sphere and the scalar mode function.

For mode index ``l`` and normalized imaginary frequency ``y`` the inside and
outside coefficients are sums over the two polarizations
:math:`\nu \in \{\epsilon, \mu\}`:

.. math::
    C_\text{i} = \sum_\nu
    \frac{\frac{\nu_1}{\sqrt{y_1}}K(y_1)\bigl(\sqrt{y_2}K(y_2)\bigr)'
        - \frac{\nu_2}{\sqrt{y_2}}K(y_2)\bigl(\sqrt{y_1}K(y_1)\bigr)'}
       {\frac{\nu_2}{\sqrt{y_2}}K(y_2)\bigl(\sqrt{y_1}I(y_1)\bigr)'
        - \frac{\nu_1}{\sqrt{y_1}}I(y_1)\bigl(\sqrt{y_2}K(y_2)\bigr)'}

and the mirrored expression with :math:`K \to I` in the numerator for
:math:`C_\text{o}`; all Bessel orders are :math:`l + 1/2`, primes are
derivatives with respect to the full argument, and
:math:`y_i = y\sqrt{\epsilon_i\mu_i}`.  The perfectly conducting shell uses
the boundary-condition limits

.. math::
    C_\text{i} = -\frac{K(y)}{I(y)}
                 - \frac{(\sqrt{y}K(y))'}{(\sqrt{y}I(y))'},
    \qquad
    C_\text{o} = -\frac{I(y)}{K(y)}
                 - \frac{(\sqrt{y}I(y))'}{(\sqrt{y}K(y))'}

with vacuum constants everywhere.

Exponential scalings are kept symbolic: :math:`C_\text{i}` carries the exact
factor :math:`e^{-2E(y_1)}` and :math:`C_\text{o}` the factor
:math:`e^{+2E(y_2)}`, where ``E`` is the bundle exponent of
:mod:`casimir_sphere.bessel`, so products with the radial profiles stay
representable at every frequency.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bessel
from .errors import DegenerateDenominator, DomainError, SideMismatch


@dataclass(frozen=True)
class MediaConfig:
    """Material constants of the sphere interior (1) and background (2)."""

    eps_in: float = 1.0
    mu_in: float = 1.0
    eps_out: float = 1.0
    mu_out: float = 1.0
    conductor: bool = False

    def __post_init__(self):
        for name in ("eps_in", "mu_in", "eps_out", "mu_out"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and positive, got {v}")
        if self.conductor and (self.eps_in, self.mu_in, self.eps_out, self.mu_out) != (
                1.0, 1.0, 1.0, 1.0):
            raise DomainError(
                "the perfect-conductor shell fixes all material constants to 1")

    @classmethod
    def sphere(cls, eps: float) -> "MediaConfig":
        """Dielectric sphere of permittivity eps in vacuum."""
        return cls(eps_in=eps)

    @classmethod
    def cavity(cls, eps: float) -> "MediaConfig":
        """Vacuum cavity inside a background of permittivity eps."""
        return cls(eps_out=eps)

    @classmethod
    def perfect_conductor(cls) -> "MediaConfig":
        return cls(conductor=True)

    @property
    def n_in(self) -> float:
        return float(np.sqrt(self.eps_in * self.mu_in))

    @property
    def n_out(self) -> float:
        return float(np.sqrt(self.eps_out * self.mu_out))

    def identical(self) -> bool:
        """True when sphere and background are the same medium."""
        return (not self.conductor and self.eps_in == self.eps_out
                and self.mu_in == self.mu_out)

    def same_speed(self) -> bool:
        return self.conductor or self.n_in == self.n_out

    def contrast(self) -> tuple[float, float]:
        """Per-polarization static contrast factors ((e1-e2)/(e1+e2), mu-part)."""
        return ((self.eps_in - self.eps_out) / (self.eps_in + self.eps_out),
                (self.mu_in - self.mu_out) / (self.mu_in + self.mu_out))

    def as_dict(self) -> dict:
        if self.conductor:
            return {"conductor": True}
        return {"eps_in": self.eps_in, "mu_in": self.mu_in,
                "eps_out": self.eps_out, "mu_out": self.mu_out}

    def label(self) -> str:
        if self.conductor:
            return "perfect-conductor-shell"
        return (f"eps1={self.eps_in:g},mu1={self.mu_in:g},"
                f"eps2={self.eps_out:g},mu2={self.mu_out:g}")


@dataclass(frozen=True)
class ModePoint:
    """One (l, y) mode-sum/integration point."""

    l: int
    y: float

    def __post_init__(self):
        if self.l < 1:
            raise DomainError(f"mode index must be >= 1, got {self.l}")
        if not (np.isfinite(self.y) and self.y > 0):
            raise DomainError(f"normalized frequency must be positive, got {self.y}")

    @property
    def nu(self) -> float:
        return self.l + 0.5

    def scaled(self, media: MediaConfig) -> tuple[float, float]:
        """(y1, y2) = (y n_in, y n_out)."""
        return self.y * media.n_in, self.y * media.n_out


@dataclass(frozen=True)
class ModeCoefficients:
    """C_i, C_o with per-polarization parts and scaling bookkeeping.

    ``c_in = c_in_mantissa * exp(c_in_exponent)`` (0.0 if it underflows);
    same for ``c_out``.  Parts follow the same convention.
    """

    c_in: float
    c_out: float
    c_in_mantissa: float
    c_in_exponent: float
    c_out_mantissa: float
    c_out_exponent: float
    parts_in: tuple[float, float] = field(default=(0.0, 0.0))
    parts_out: tuple[float, float] = field(default=(0.0, 0.0))


def _sqrt_deriv_mantissas(m_i, m_k, m_di, m_dk, y):
    """Mantissas of (sqrt(y) I(y))' and (sqrt(y) K(y))'."""
    sq = np.sqrt(y)
    ih = m_i / (2 * sq) + sq * m_di
    kh = m_k / (2 * sq) + sq * m_dk
    return ih, kh


def coefficient_mantissas(media: MediaConfig, p1, p2, y1, y2):
    """Vector C mantissas from bessel parts at arguments y1 and y2.

    Returns (ci_mant, co_mant, parts) where C_i = ci_mant * exp(-2 E1),
    C_o = co_mant * exp(+2 E2); parts holds the per-polarization pieces
    (eps term, mu term) of each mantissa.
    """
    if media.conductor:
        ih, kh = _sqrt_deriv_mantissas(p1.m_i, p1.m_k, p1.m_di, p1.m_dk, y1)
        part_i = (-p1.m_k / p1.m_i, -kh / ih)
        part_o = (-p1.m_i / p1.m_k, -ih / kh)
        return (part_i[0] + part_i[1], part_o[0] + part_o[1],
                (part_i, part_o))
    ih1, kh1 = _sqrt_deriv_mantissas(p1.m_i, p1.m_k, p1.m_di, p1.m_dk, y1)
    ih2, kh2 = _sqrt_deriv_mantissas(p2.m_i, p2.m_k, p2.m_di, p2.m_dk, y2)
    s1 = 1.0 / np.sqrt(y1)
    s2 = 1.0 / np.sqrt(y2)
    ci_parts = []
    co_parts = []
    for nu1, nu2 in ((media.eps_in, media.eps_out), (media.mu_in, media.mu_out)):
        den = nu2 * s2 * p2.m_k * ih1 - nu1 * s1 * p1.m_i * kh2
        scale = np.abs(nu2 * s2 * p2.m_k * ih1) + np.abs(nu1 * s1 * p1.m_i * kh2)
        if np.any(np.abs(den) <= 1e-13 * scale):
            raise DegenerateDenominator(
                "scattering denominator vanished on the imaginary axis; "
                "this cannot happen for passive media and indicates a bug")
        num_i = nu1 * s1 * p1.m_k * kh2 - nu2 * s2 * p2.m_k * kh1
        num_o = nu1 * s1 * p1.m_i * ih2 - nu2 * s2 * p2.m_i * ih1
        ci_parts.append(num_i / den)
        co_parts.append(num_o / den)
    return (ci_parts[0] + ci_parts[1], co_parts[0] + co_parts[1],
            ((ci_parts[0], ci_parts[1]), (co_parts[0], co_parts[1])))


def _scalar_parts(media: MediaConfig, point: ModePoint, order=None):
    y1, y2 = point.scaled(media)
    b1 = bessel.bundle(point.nu, y1, order=order)
    b2 = b1 if y1 == y2 else bessel.bundle(point.nu, y2, order=order)
    return b1, b2, y1, y2


def mode_coefficients(media: MediaConfig, point: ModePoint) -> ModeCoefficients:
    """Renormalized mode coefficients C_i, C_o for general media.

    The plain ``c_in``/``c_out`` floats underflow to 0 at large y where the
    true coefficients fall below the double range; the mantissa/exponent
    pair stays exact.
    """
    if media.conductor:
        return conductor_coefficients(point)
    b1, b2, y1, y2 = _scalar_parts(media, point)
    ci_m, co_m, parts = coefficient_mantissas(media, b1, b2, y1, y2)
    e_in = -2.0 * b1.exponent
    e_out = 2.0 * b2.exponent
    with np.errstate(over="ignore", under="ignore"):
        return ModeCoefficients(
            c_in=float(ci_m * np.exp(e_in)),
            c_out=float(co_m * np.exp(e_out)),
            c_in_mantissa=float(ci_m), c_in_exponent=e_in,
            c_out_mantissa=float(co_m), c_out_exponent=e_out,
            parts_in=tuple(float(p * np.exp(e_in)) for p in parts[0]),
            parts_out=tuple(float(p * np.exp(e_out)) for p in parts[1]),
        )


def conductor_coefficients(point: ModePoint) -> ModeCoefficients:
    """Perfect-conductor-shell limits of the mode coefficients."""
    b = bessel.bundle(point.nu, point.y)
    ih, kh = _sqrt_deriv_mantissas(b.m_i, b.m_k, b.m_di, b.m_dk, point.y)
    part_i = (-b.m_k / b.m_i, -kh / ih)
    part_o = (-b.m_i / b.m_k, -ih / kh)
    e_in = -2.0 * b.exponent
    e_out = 2.0 * b.exponent
    with np.errstate(over="ignore", under="ignore"):
        return ModeCoefficients(
            c_in=float((part_i[0] + part_i[1]) * np.exp(e_in)),
            c_out=float((part_o[0] + part_o[1]) * np.exp(e_out)),
            c_in_mantissa=float(part_i[0] + part_i[1]), c_in_exponent=e_in,
            c_out_mantissa=float(part_o[0] + part_o[1]), c_out_exponent=e_out,
            parts_in=tuple(float(p * np.exp(e_in)) for p in part_i),
            parts_out=tuple(float(p * np.exp(e_out)) for p in part_o),
        )


def mode_function(media: MediaConfig, point: ModePoint,
                  rho: float, rho_prime: float) -> float:
    """Scalar mode function g_l(y, rho, rho') of the renormalized stress.

    Both radial points must lie on the same side of the surface.
    """
    if rho <= 0 or rho_prime <= 0:
        raise DomainError("radial coordinates must be positive")
    if (rho - 1.0) * (rho_prime - 1.0) <= 0:
        raise SideMismatch(
            f"rho={rho} and rho'={rho_prime} must lie strictly on one side "
            "of the surface")
    if media.identical():
        return 0.0
    inside = rho < 1.0
    y1, y2 = point.scaled(media)
    if media.conductor:
        coeffs = conductor_coefficients(point)
        b_at = point.y
    else:
        coeffs = mode_coefficients(media, point)
        b_at = y1 if inside else y2
    ya = b_at * rho
    yb = b_at * rho_prime
    ba = bessel.bundle(point.nu, ya)
    bb = bessel.bundle(point.nu, yb)
    if inside:
        mant = coeffs.c_in_mantissa * ba.m_i * bb.m_i
        expo = coeffs.c_in_exponent + ba.exponent + bb.exponent
    else:
        mant = coeffs.c_out_mantissa * ba.m_k * bb.m_k
        expo = coeffs.c_out_exponent - ba.exponent - bb.exponent
    with np.errstate(over="ignore", under="ignore"):
        return float(mant / np.sqrt(rho * rho_prime) * np.exp(expo))


def low_frequency_limits(media: MediaConfig, ls: np.ndarray, rho: float):
    """y -> 0 limits of the radial and tangential integrand summands.

    Derived from the leading power laws I ~ y^(l+1/2), K ~ y^-(l+1/2);
    the combination C * (profile products) stays finite.  Returns
    (t_rr_limit, t_tt_limit) arrays over ``ls``.
    """
    ls = np.asarray(ls, dtype=float)
    inside = rho < 1.0
    if media.conductor:
        if inside:
            return rho ** (2 * ls), ls * rho ** (2 * ls)
        return rho ** (-2 * ls - 2), -(ls + 1) * rho ** (-2 * ls - 2)
    lam = sum(media.contrast())
    if inside:
        base = lam * ls * rho ** (2 * ls)
        return base, ls * base
    base = lam * ls * rho ** (-2 * ls - 2)
    return base, -(ls + 1) * base
