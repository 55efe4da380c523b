r"""Half-integer-order modified Bessel functions, exponentially scaled.

Two evaluation paths cover all regimes met by the stress integrand:

* ``bessel_direct`` -- closed forms for half-integer order (finite
  exponential sums for K and for I at large argument, ascending series for
  I at small argument) plus three-term order recurrences for derivatives.
  Used for orders below ``NU_SWITCH``.
* ``bessel_uniform`` -- the large-order expansion with correction
  polynomials :math:`U_k(p)` (see :mod:`casimir_sphere.debye`), with
  derivative series obtained by differentiating the expansion analytically
  through :math:`\eta(z)` and :math:`p(z)`.  Used for orders at or above
  ``NU_SWITCH``.

All values are returned as (mantissa, exponent) pairs with

.. math::
    I_\nu(x) = m_I e^{+E},\quad K_\nu(x) = m_K e^{-E},\quad
    I'_\nu(x) = m_{I'} e^{+E},\quad K'_\nu(x) = m_{K'} e^{-E},

where :math:`E = x` on the direct path and :math:`E = \nu\eta(x/\nu)` on the
uniform path.  Products such as :math:`I(x_1)K(x_2)` are then formed from
mantissas with explicit exponent bookkeeping and never overflow.

The module also provides the radial combinations

.. math::
    \text{small}_I = (G - \tfrac12)m_I - x\,m_{I'}, \qquad
    \text{small}_K = (G + \tfrac12)m_K + x\,m_{K'} + (G - \ldots),

with :math:`G = \sqrt{l(l+1) + x^2}`, which the stress integrand needs.
Computed naively these difference combinations lose up to
:math:`\epsilon\,x^3/\nu^2` relative accuracy at :math:`x \gg \nu`; here
they are evaluated from rearranged series in which the cancellation has
been carried out exactly, keeping the integrand at full double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .debye import DEFAULT_EXPANSION, DebyeExpansion
from .errors import AccuracyError, DomainError

try:  # optional accelerator; the numpy path below is the reference
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None

#: Order threshold between the direct and uniform paths.
NU_SWITCH = 10.0

#: Largest mode index served by the direct path.
L_DIRECT_MAX = 80


# ---------------------------------------------------------------------------
# exact coefficient tables for the closed forms
# ---------------------------------------------------------------------------

def _c_row(l: int) -> list[Fraction]:
    """c_{l,k} = (l+k)! / (k! (l-k)!) for k = 0..l; row [1] for l = -1."""
    if l < 0:
        return [Fraction(1)]
    row = []
    for k in range(l + 1):
        row.append(Fraction(math.factorial(l + k),
                            math.factorial(k) * math.factorial(l - k)))
    return row


class _DirectTables:
    """Float copies of the exact closed-form coefficients, built lazily."""

    def __init__(self):
        self._c: dict[int, np.ndarray] = {}
        self._e: dict[int, np.ndarray] = {}

    def c(self, l: int) -> np.ndarray:
        if l not in self._c:
            self._c[l] = np.array([float(v) for v in _c_row(l)])
        return self._c[l]

    def e(self, l: int) -> np.ndarray:
        """e_{l,j} = (c_{l,j+1} - c_{l-1,j+1})/2 - l c_{l,j}, exact, j=0..l."""
        if l not in self._e:
            cl = _c_row(l)
            cm = _c_row(l - 1)
            out = []
            for j in range(l + 1):
                d = (cl[j + 1] if j + 1 <= l else Fraction(0)) - (
                    cm[j + 1] if j + 1 <= l - 1 else Fraction(0))
                out.append(d / 2 - l * cl[j])
            arr = np.array([float(v) for v in out])
            assert arr[0] == 0.0
            self._e[l] = arr
        return self._e[l]


_TABLES = _DirectTables()


def _polyval_ascending(coefs: np.ndarray, w) -> np.ndarray:
    """Horner evaluation of ascending-order coefficients."""
    acc = np.zeros_like(w) + coefs[-1]
    for c in coefs[-2::-1]:
        acc = acc * w + c
    return acc


# ---------------------------------------------------------------------------
# direct path (nu < NU_SWITCH), vectorized over the argument
# ---------------------------------------------------------------------------

def _i_series_mantissa(l: int, x: np.ndarray) -> np.ndarray:
    """e^{-x} I_{l+1/2}(x) by the ascending series; positive terms only."""
    nu = l + 0.5
    logt0 = nu * np.log(x / 2) - math.lgamma(nu + 1) - x
    q = x * x / 4
    term = np.ones_like(x)
    total = np.ones_like(x)
    shift = np.zeros_like(x)
    m = 0
    active = np.ones(x.shape, dtype=bool)
    while active.any() and m < 40000:
        term = term * q / ((m + 1) * (nu + m + 1))
        total += term
        big = total > 1e250
        if big.any():
            total[big] *= 1e-250
            term[big] *= 1e-250
            shift[big] += 250 * math.log(10)
        active = term > 1e-18 * total
        m += 1
    return np.exp(logt0 + np.log(total) + shift)


def _pq_sums(l: int, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P_l(w) = sum (-1)^k c_{lk} w^k and Q_l(w) = sum c_{lk} w^k."""
    c = _TABLES.c(l)
    signs = np.where(np.arange(len(c)) % 2 == 0, 1.0, -1.0)
    return _polyval_ascending(c * signs, w), _polyval_ascending(c, w)


def _x_switch(l: int) -> float:
    """Argument above which the exponential closed form is stable.

    The exact-coefficient series still descends fast enough here (its first
    term ratio is ~2), while the naive difference combination below the
    switch keeps its cancellation loss under ~2e-13 relative.
    """
    return max(12.0, 0.25 * l * (l + 1))


@dataclass
class StressParts:
    """Vectorized bundle plus stable radial combinations, shape (L, Y).

    ``small_i * big_i`` equals ``(l(l+1)+x^2) mI^2 - (mI/2 + x mdI)^2`` and
    analogously on the K side; exponents are ``+E`` for every I-side factor
    and ``-E`` for every K-side factor.
    """

    m_i: np.ndarray
    m_k: np.ndarray
    m_di: np.ndarray
    m_dk: np.ndarray
    exponent: np.ndarray
    small_i: np.ndarray
    big_i: np.ndarray
    small_k: np.ndarray
    big_k: np.ndarray


def _direct_row(l: int, x: np.ndarray) -> tuple[np.ndarray, ...]:
    """Direct-path mantissas and combos for one order, any positive x."""
    nu = l + 0.5
    L = l * (l + 1.0)
    G = np.sqrt(L + x * x)
    w = 0.5 / x
    sqKpref = np.sqrt(np.pi * w)        # sqrt(pi / (2x))
    sqIpref = 1.0 / np.sqrt(2 * np.pi * x)

    _, Ql = _pq_sums(l, w)
    _, Qlm = _pq_sums(l - 1, w)
    _, Qlp = _pq_sums(l + 1, w)
    m_k = sqKpref * Ql
    m_km = sqKpref * Qlm
    m_kp = sqKpref * Qlp
    m_dk = -0.5 * (m_km + m_kp)

    xs = _x_switch(l)
    use_exp = x >= xs
    m_i = np.empty_like(x)
    m_im = np.empty_like(x)
    m_ip = np.empty_like(x)
    for order, target in ((l - 1, m_im), (l, m_i), (l + 1, m_ip)):
        if use_exp.any():
            P, Q = _pq_sums(order, w[use_exp])
            sig = 1.0 if (order + 1) % 2 == 0 else -1.0
            target[use_exp] = sqIpref[use_exp] * (
                P + sig * np.exp(-2 * x[use_exp]) * Q)
        if (~use_exp).any():
            target[~use_exp] = _i_series_mantissa(order, x[~use_exp])
    m_di = 0.5 * (m_im + m_ip)

    # stable small combos
    small_i = np.empty_like(x)
    small_k = np.empty_like(x)
    if use_exp.any():
        ws = w[use_exp]
        xe = x[use_exp]
        Ge = G[use_exp]
        e = _TABLES.e(l)
        js = np.arange(len(e))
        e_alt = e * np.where(js % 2 == 0, -1.0, 1.0)   # (-1)^{j+1} e_j
        ser_alt = _polyval_ascending(e_alt, ws) if len(e) > 1 else np.zeros_like(ws)
        ser_pos = _polyval_ascending(e, ws) if len(e) > 1 else np.zeros_like(ws)
        Pl, Qle = _pq_sums(l, ws)
        _, Qlme = _pq_sums(l - 1, ws)
        LG = L / (Ge + xe)
        sig = 1.0 if (l + 1) % 2 == 0 else -1.0
        corr = sig * np.exp(-2 * xe) * ((Ge + l) * Qle + xe * Qlme)
        small_i[use_exp] = sqIpref[use_exp] * (ser_alt + LG * Pl + corr)
        small_k[use_exp] = sqKpref[use_exp] * (ser_pos + LG * Qle)
    if (~use_exp).any():
        m = ~use_exp
        small_i[m] = (G[m] - 0.5) * m_i[m] - x[m] * m_di[m]
        small_k[m] = (G[m] + 0.5) * m_k[m] + x[m] * m_dk[m]
    big_i = (G + 0.5) * m_i + x * m_di
    big_k = (G + nu - 0.5) * m_k + x * m_km   # = G mK - mK/2 - x mdK
    return m_i, m_k, m_di, m_dk, x, small_i, big_i, small_k, big_k


# ---------------------------------------------------------------------------
# uniform path (nu >= NU_SWITCH), vectorized over (order, argument)
# ---------------------------------------------------------------------------

def _pack_tables(expansion: DebyeExpansion):
    """Padded (k, j) tables of V_k, W_k for the fused kernel."""
    n = expansion.max_k + 1
    V = np.zeros((n, n))
    W = np.zeros((n, n))
    for k in range(n):
        V[k, : k + 1] = expansion.v_float[k]
        W[k, : k + 1] = expansion.w_float[k]
    return V, W


_TABLE_CACHE: dict[int, tuple] = {}


def _tables_for(expansion: DebyeExpansion):
    key = id(expansion)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = (expansion,) + _pack_tables(expansion)
    return _TABLE_CACHE[key][1:]


def _uniform_kernel_py(nu, x, order, V, W, combos):
    """Flat-array uniform evaluation; numba-compiled when available."""
    n = nu.shape[0]
    out = np.empty((9, n))
    for i in range(n):
        nui = nu[i]
        z = x[i] / nui
        s = math.sqrt(1.0 + z * z)
        p = 1.0 / s
        q = p * p
        eta = s + math.log(z / (1.0 + s))
        acc_e = 1.0
        acc_o = 0.0
        dacc_e = 0.0
        dacc_o = 0.0
        r = p / nui
        rk = 1.0
        for k in range(1, order + 1):
            rk *= r
            vk = V[k, k]
            wk = W[k, k]
            for j in range(k - 1, -1, -1):
                vk = vk * q + V[k, j]
                wk = wk * q + W[k, j]
            if k & 1:
                acc_o += rk * vk
                dacc_o += rk * wk
            else:
                acc_e += rk * vk
                dacc_e += rk * wk
        f0I = math.sqrt(p / (2.0 * math.pi * nui))
        f0K = math.sqrt(math.pi * p / (2.0 * nui))
        m_i = f0I * (acc_e + acc_o)
        m_k = f0K * (acc_e - acc_o)
        zp2 = z * p * z * p
        zhI = -zp2 * f0I * (dacc_e + dacc_o)
        zhK = -zp2 * f0K * (dacc_e - dacc_o)
        S = nui * s
        out[0, i] = m_i
        out[1, i] = m_k
        out[2, i] = (S * m_i + zhI - 0.5 * zp2 * m_i) / x[i]
        out[3, i] = (-S * m_k + zhK - 0.5 * zp2 * m_k) / x[i]
        out[4, i] = nui * eta
        if combos:
            G = math.sqrt(nui * nui - 0.25 + x[i] * x[i])
            quarter = 0.25 / (G + S)
            out[5, i] = -quarter * m_i - 0.5 * q * m_i - zhI
            out[6, i] = (G + S) * m_i + 0.5 * m_i + zhI - 0.5 * zp2 * m_i
            out[7, i] = -quarter * m_k + 0.5 * q * m_k + zhK
            out[8, i] = (G + S) * m_k - 0.5 * m_k - zhK + 0.5 * zp2 * m_k
    return out


if _njit is not None:
    _uniform_kernel = _njit(cache=True)(_uniform_kernel_py)
else:  # pragma: no cover
    _uniform_kernel = _uniform_kernel_py


def _uniform_grid(nu, x, order: int, expansion: DebyeExpansion,
                  combos: bool = True):
    """Uniform-expansion mantissas and combos; nu and x broadcastable."""
    z = x / nu
    s = np.sqrt(1.0 + z * z)
    p = 1.0 / s
    q = p * p
    eta = s + np.log(z / (1.0 + s))
    # even/odd split gives the I and K sums in one accumulation pass;
    # the sparse tables keep only the q = p^2 structure of each U_k
    acc_e = np.ones_like(z)
    acc_o = np.zeros_like(z)
    dacc_e = np.zeros_like(z)
    dacc_o = np.zeros_like(z)
    r = p / nu
    rk = None
    for k in range(1, order + 1):
        rk = r if k == 1 else rk * r
        term = rk * _polyval_ascending(expansion.v_float[k], q)
        dterm = rk * _polyval_ascending(expansion.w_float[k], q)
        if k % 2:
            acc_o += term
            dacc_o += dterm
        else:
            acc_e += term
            dacc_e += dterm
    f0I = np.sqrt(p / (2 * np.pi * nu))
    f0K = np.sqrt(np.pi * p / (2 * nu))
    m_i = f0I * (acc_e + acc_o)
    m_k = f0K * (acc_e - acc_o)
    # d/dx = (1/nu) d/dz; eta' = s/z; p' = -z p^3; the z^2 p^2 part of the
    # mantissa derivative is kept symbolic so the radial combos below stay
    # cancellation-free (1 - z^2 p^2 = p^2 exactly).  The derivative sums
    # carry dU_k = p^{k-1} W_k(q), hence one net power of p less than rk.
    zp = z * p
    zp2 = zp * zp
    zhI = -zp2 * f0I * (dacc_e + dacc_o)
    zhK = -zp2 * f0K * (dacc_e - dacc_o)
    S = nu * s
    m_di = (S * m_i + zhI - 0.5 * zp2 * m_i) / x
    m_dk = (-S * m_k + zhK - 0.5 * zp2 * m_k) / x
    if not combos:
        return m_i, m_k, m_di, m_dk, nu * eta, None, None, None, None
    G = np.sqrt(nu * nu - 0.25 + x * x)
    quarter = 0.25 / (G + S)
    small_i = -quarter * m_i - 0.5 * q * m_i - zhI
    big_i = (G + S) * m_i + 0.5 * m_i + zhI - 0.5 * zp2 * m_i
    small_k = -quarter * m_k + 0.5 * q * m_k + zhK
    big_k = (G + S) * m_k - 0.5 * m_k - zhK + 0.5 * zp2 * m_k
    return m_i, m_k, m_di, m_dk, nu * eta, small_i, big_i, small_k, big_k


def _uniform_tail_estimate(nu, x, order: int, expansion: DebyeExpansion):
    """Relative size of the first omitted (or last kept) correction term."""
    z = x / nu
    p = 1.0 / np.sqrt(1.0 + z * z)
    k = min(order + 1, expansion.max_k)
    uk = _polyval_ascending(expansion.u_float[k], p)
    return np.abs(uk) / np.asarray(nu, dtype=float) ** k + 1e-15


def stress_parts(ls: np.ndarray, x: np.ndarray, order: int = 6,
                 expansion: DebyeExpansion = DEFAULT_EXPANSION,
                 nu_switch: float = NU_SWITCH,
                 combos: bool = True) -> StressParts:
    """Bundles and radial combos for mode rows ``ls`` at arguments ``x``.

    Parameters
    ----------
    ls : (L,) int array of mode indices l >= 1
    x : (L, Y) positive arguments
    order : highest correction order used on the uniform path
    combos : skip the radial combinations when only mantissas are needed
    """
    ls = np.asarray(ls)
    nu_col = ls[:, None] + 0.5
    n_field = 9 if combos else 5
    out = [np.empty(x.shape) for _ in range(n_field)]
    rows = ls + 0.5 >= nu_switch
    if rows.any():
        xs = np.ascontiguousarray(x[rows])
        nus = np.broadcast_to(nu_col[rows], xs.shape)
        V, W = _tables_for(expansion)
        res = _uniform_kernel(np.ascontiguousarray(nus.ravel()), xs.ravel(),
                              order, V, W, combos)
        for f in range(n_field):
            out[f][rows] = res[f].reshape(xs.shape)
    for i, l in enumerate(ls):
        if l + 0.5 < nu_switch:
            res = _direct_row(int(l), np.ascontiguousarray(x[i]))
            for tgt, val in zip(out, res):
                tgt[i] = val
    if not combos:
        out += [None, None, None, None]
    return StressParts(*out)


# ---------------------------------------------------------------------------
# scalar bundle API
# ---------------------------------------------------------------------------

def exponent_shift(ls: np.ndarray, y: np.ndarray, rho: float,
                   nu_switch: float = NU_SWITCH) -> np.ndarray:
    """E(nu, rho*y) - E(nu, y) per mode row, computed difference-stably.

    The bundle exponents grow like nu*eta ~ 1e5 while the physical damping
    exponent is their O(1) difference; subtracting the two large values
    would leave ~1e-11 absolute noise that the series fit amplifies.  Here
    the difference is assembled from exactly-cancelling pieces:

        eta(rho z) - eta(z) = (s_x - s_y) + log(rho)
                              + log1p((s_y - s_x)/(1 + s_x)),
        s_x - s_y = z^2 (rho^2 - 1)/(s_x + s_y).
    """
    ls = np.asarray(ls)
    nu = ls[:, None] + 0.5
    out = np.empty(np.broadcast_shapes(nu.shape, (1, len(y))))
    rows = ls + 0.5 >= nu_switch
    if rows.any():
        nur = nu[rows]
        z = y[None, :] / nur
        zx = rho * z
        s = np.sqrt(1.0 + z * z)
        sx = np.sqrt(1.0 + zx * zx)
        ds = z * z * (rho * rho - 1.0) / (sx + s)
        out[rows] = nur * (ds + math.log(rho) + np.log1p((s - sx) / (1.0 + sx)))
    small = ~rows
    if small.any():
        out[small] = (rho - 1.0) * np.broadcast_to(y[None, :], out.shape)[small]
    return out


@dataclass(frozen=True)
class BesselBundle:
    """Exponentially scaled I, K and derivatives at one (nu, x).

    ``i_scaled = I e^{-x}``, ``k_scaled = K e^{+x}`` and correspondingly
    scaled derivatives; ``mantissa``/``exponent`` expose the internal
    representation ``I = m_I e^{+E}`` used for product bookkeeping.
    """

    nu: float
    x: float
    i_scaled: float
    k_scaled: float
    di_scaled: float
    dk_scaled: float
    rel_err_estimate: float
    m_i: float
    m_k: float
    m_di: float
    m_dk: float
    exponent: float

    def wronskian_residual(self) -> float:
        """|x (I K' - I' K) + 1| evaluated from mantissas (exponents cancel)."""
        return abs(self.x * (self.m_i * self.m_dk - self.m_di * self.m_k) + 1.0)


def _as_bundle(nu, x, parts, rel_err) -> BesselBundle:
    m_i, m_k, m_di, m_dk, E = parts
    shift = E - x
    # the e^{+-x} scaled views can legitimately over/underflow at extreme
    # order/argument ratios; the mantissa/exponent fields never do
    with np.errstate(over="ignore", under="ignore"):
        return BesselBundle(
            nu=float(nu), x=float(x),
            i_scaled=float(m_i * np.exp(shift)),
            k_scaled=float(m_k * np.exp(-shift)),
            di_scaled=float(m_di * np.exp(shift)),
            dk_scaled=float(m_dk * np.exp(-shift)),
            rel_err_estimate=float(rel_err),
            m_i=float(m_i), m_k=float(m_k), m_di=float(m_di), m_dk=float(m_dk),
            exponent=float(E),
        )


def bessel_direct(nu: float, x: float) -> BesselBundle:
    """Closed-form evaluation for half-integer nu = l + 1/2, l >= 0.

    Stable for any x > 0; meant for small orders where the uniform
    expansion has not yet converged.
    """
    if x <= 0:
        raise DomainError(f"argument must be positive, got {x}")
    l = int(round(nu - 0.5))
    if abs(nu - (l + 0.5)) > 1e-12 or l < 0:
        raise DomainError(f"order must be half-integer >= 1/2, got {nu}")
    if l > L_DIRECT_MAX:
        raise DomainError(f"direct path supports l <= {L_DIRECT_MAX}, got {l}")
    xv = np.array([float(x)])
    m_i, m_k, m_di, m_dk, E, *_ = _direct_row(l, xv)
    return _as_bundle(nu, x, (m_i[0], m_k[0], m_di[0], m_dk[0], E[0]), 5e-15)


def bessel_uniform(nu: float, z: float,
                   expansion: DebyeExpansion = DEFAULT_EXPANSION,
                   order: int | None = None,
                   tol: float | None = None,
                   nu_min: float = NU_SWITCH) -> BesselBundle:
    """Large-order evaluation of I_nu(nu z), K_nu(nu z) and derivatives.

    Parameters
    ----------
    nu : order, must be >= ``nu_min`` (default 10)
    z : the argument is x = nu * z
    order : highest correction term; defaults to everything the expansion
        carries (the full table reaches ~2e-10 worst-case relative error at
        nu = 10; see the accuracy map of the ``bessel-check`` subcommand)
    tol : optional requested tolerance; AccuracyError if the truncation
        estimate exceeds it
    """
    if z <= 0:
        raise DomainError(f"argument must be positive, got z={z}")
    if nu < nu_min:
        raise DomainError(f"uniform path needs nu >= {nu_min}, got {nu}")
    if order is None:
        order = expansion.max_k
    if order > expansion.max_k:
        raise DomainError(
            f"order {order} exceeds the expansion table (max {expansion.max_k})")
    x = np.array([float(nu) * float(z)])
    nuv = np.array([float(nu)])
    m_i, m_k, m_di, m_dk, E, *_ = _uniform_grid(nuv, x, order, expansion)
    rel = float(_uniform_tail_estimate(nuv, x, order, expansion)[0])
    if tol is not None and rel > tol:
        raise AccuracyError(
            f"estimated truncation error {rel:.2e} exceeds tolerance {tol:.2e} "
            f"at nu={nu}, z={z}")
    return _as_bundle(nu, x[0], (m_i[0], m_k[0], m_di[0], m_dk[0], E[0]), rel)


def bundle(nu: float, x: float, order: int | None = None,
           nu_switch: float = NU_SWITCH) -> BesselBundle:
    """Dispatch to the direct or uniform path on the order threshold."""
    if nu < nu_switch:
        return bessel_direct(nu, x)
    return bessel_uniform(nu, x / nu, order=order, nu_min=nu_switch)
