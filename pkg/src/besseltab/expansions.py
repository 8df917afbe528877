"""Series and asymptotic expansions for Bessel's equation.

Three families live here:

* small-argument power series for J_nu, Y_nu and their logarithms,
  including the near-integer-order interpolation path for Y_nu;
* Debye's large-order expansions of log J_nu and log(-Y_nu) for t < nu,
  driven by the u_j polynomial recurrence (exact rational coefficients);
* the large-t expansions of the nonoscillatory phase derivative
  alpha', its antiderivative alpha, and alpha'', driven by the r_n/s_n
  coefficient recurrences.

All double-precision paths guard against overflow/underflow by working with
logarithms; the near-integer Y path evaluates its interpolation stencil in
80-bit extended precision (binary64 cancellation in the quotient formula
would otherwise cap the stencil accuracy near 1e-13).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from besseltab.cheb import _bary_weights, _reference_nodes_cached

__all__ = [
    "NonConvergenceError",
    "series_j",
    "series_y",
    "log_neg_y",
    "debye_u_polys",
    "debye_log_j",
    "debye_log_neg_y",
    "AlphaAsymCoeffs",
    "alpha_asym_coeffs",
    "alphap_asym",
    "alpha_asym",
    "alphapp_asym",
]

# Near-integer-order threshold for Y_nu and the interpolation stencil:
# 12 Chebyshev nodes on [n - 0.05, n + 0.05], none of which is the integer.
DELTA_INT = 1e-4
_STENCIL_HALFWIDTH = 0.05
_STENCIL_ORDER = 11

_SERIES_TERM_CAP = 200
_SERIES_RTOL = 1e-20

_LD = np.longdouble
_PI_LD = _LD("3.14159265358979323846264338328")


class NonConvergenceError(RuntimeError):
    """A series failed to converge within its term budget."""


# ---------------------------------------------------------------------------
# Power series (Sections on small arguments)
# ---------------------------------------------------------------------------


def _series_bracket(nu, t, xp=float):
    """sum_j (-1)^j Gamma(nu+1) / (j! Gamma(j+nu+1)) (t/2)^{2j}.

    The j-th over (j-1)-th term ratio is -(t/2)^2 / (j (j+nu)), so the
    bracket is the J series normalized to start at 1.
    """
    q = xp(t) * xp(t) / xp(4)
    term = xp(1)
    total = xp(1)
    small_run = 0
    for j in range(1, _SERIES_TERM_CAP + 1):
        term = -term * q / (xp(j) * (xp(j) + xp(nu)))
        total += term
        if abs(term) < _SERIES_RTOL * abs(total):
            small_run += 1
            if small_run >= 2:
                return total
        else:
            small_run = 0
    raise NonConvergenceError(
        f"J series did not converge for nu={nu}, t={t} within {_SERIES_TERM_CAP} terms"
    )


def series_j(nu: float, t: float, with_log: bool = False) -> float:
    """J_nu(t) by its power series; log J_nu(t) when `with_log`.

    The log form avoids underflow for t << nu: it returns
    -log Gamma(nu+1) + nu log(t/2) + log(bracket).  Requires t > 0 and
    nu > -1 for the log form; intended for t up to roughly max(2, nu).
    Negative non-integer orders (used by the Y_nu quotient formula) are
    supported in the plain form, with Gamma's sign carried through.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    s = _series_bracket(nu, t)
    if with_log:
        if nu <= -1:
            raise ValueError("log form requires nu > -1")
        if not s > 0:
            raise ValueError(
                f"log J series bracket is nonpositive at nu={nu}, t={t}"
            )
        return nu * math.log(0.5 * t) - math.lgamma(nu + 1.0) + math.log(s)
    if nu >= 0:
        log_pre = nu * math.log(0.5 * t) - math.lgamma(nu + 1.0)
        if log_pre > 700.0:
            raise OverflowError("J_nu overflows binary64; use with_log")
        return math.exp(log_pre) * s
    return (0.5 * t) ** nu / math.gamma(nu + 1.0) * s


def _trig_nupi_ld(nu: float):
    """(cos(nu*pi), sin(nu*pi)) in extended precision via range reduction
    about the nearest integer."""
    n0 = math.floor(nu + 0.5)
    d = _LD(nu) - _LD(n0)
    sign = _LD(1) if n0 % 2 == 0 else _LD(-1)
    return sign * np.cos(d * _PI_LD), sign * np.sin(d * _PI_LD)


@lru_cache(maxsize=512)
def _gamma_ld(x: float) -> np.longdouble:
    """Gamma(x) to extended precision (mpmath seed, parsed as long double)."""
    import mpmath

    with mpmath.workdps(30):
        return _LD(mpmath.nstr(mpmath.gamma(mpmath.mpf(x)), 27))


def _series_j_value_ld(nu: float, t: float) -> np.longdouble:
    """J_nu(t) in extended precision (nu may be negative non-integer; the
    sign of Gamma(nu+1) carries through)."""
    s = _series_bracket(nu, t, xp=_LD)
    pre = np.power(_LD(t) / 2, _LD(nu)) / _gamma_ld(nu + 1.0)
    return pre * s


def _series_log_j_signed(nu: float, t: float, xp=float):
    """(log |J_nu(t)|, sign) without under/overflow.

    For nu < -1 < ... < 0 ranges used by the quotient formula the sign is
    that of Gamma(nu+1) times the bracket.
    """
    if xp is float:
        s = _series_bracket(nu, t)
        # lgamma is log|Gamma|; the sign is recovered separately.
        logabs = nu * math.log(0.5 * t) - math.lgamma(nu + 1.0) + math.log(abs(s))
        sign = _gamma_sign(nu + 1.0) * (1.0 if s > 0 else -1.0)
        return logabs, sign
    s = _series_bracket(nu, t, xp=_LD)
    g = _gamma_ld(nu + 1.0)
    logabs = _LD(nu) * np.log(_LD(t) / 2) - np.log(np.abs(g)) + np.log(np.abs(s))
    sign = (1.0 if g > 0 else -1.0) * (1.0 if s > 0 else -1.0)
    return logabs, sign


def _gamma_sign(x: float) -> float:
    # Gamma is positive for x > 0 and alternates sign between poles below:
    # negative on (-1, 0), positive on (-2, -1), and so on.
    if x > 0:
        return 1.0
    return -1.0 if (-math.floor(x)) % 2 == 1 else 1.0


def _y_noninteger_ld(nu: float, t: float) -> np.longdouble:
    """Y_nu(t) = (cos(nu pi) J_nu - J_{-nu}) / sin(nu pi), extended."""
    c, s = _trig_nupi_ld(nu)
    jp = _series_j_value_ld(nu, t)
    jm = _series_j_value_ld(-nu, t)
    return (c * jp - jm) / s


def _log_neg_y_noninteger(nu: float, t: float, xp=float):
    """log(-Y_nu(t)) for non-integer nu > 0, immune to overflow.

    -Y = (J_{-nu} - cos(nu pi) J_nu) / sin(nu pi); the exponential of the
    larger of log|J_{+nu}|, log|J_{-nu}| is factored out so the inner
    quotient stays representable for any t > 0.
    """
    if xp is float:
        lj_p, sg_p = _series_log_j_signed(nu, t)
        lj_m, sg_m = _series_log_j_signed(-nu, t)
        c, s = math.cos(math.pi * nu), math.sin(math.pi * nu)
        exp, log = math.exp, math.log
    else:
        lj_p, sg_p = _series_log_j_signed(nu, t, xp=_LD)
        lj_m, sg_m = _series_log_j_signed(-nu, t, xp=_LD)
        c, s = _trig_nupi_ld(nu)
        exp, log = np.exp, np.log
    if lj_m >= lj_p:
        inner = (sg_m - c * sg_p * exp(lj_p - lj_m)) / s
        base = lj_m
    else:
        inner = (sg_m * exp(lj_m - lj_p) - c * sg_p) / s
        base = lj_p
    if not inner > 0:
        raise ValueError(f"Y_nu(t) is not negative at nu={nu}, t={t}")
    return base + log(inner)


def _stencil_nodes(center: int):
    ref = _reference_nodes_cached(_STENCIL_ORDER)
    return center + _STENCIL_HALFWIDTH * ref


def _stencil_interp(center: int, nu: float, node_values: np.ndarray) -> float:
    w = _bary_weights(_STENCIL_ORDER)
    nodes = _stencil_nodes(center)
    diff = nu - nodes
    if np.any(diff == 0.0):
        return float(node_values[np.argmax(diff == 0.0)])
    r = w / diff
    return float((r @ node_values) / r.sum())


def series_y(nu: float, t: float) -> float:
    """Y_nu(t) in the small-argument regime.

    Non-integer orders away from integers use the quotient formula
    directly.  Orders within DELTA_INT of an integer (including exact
    integers) are computed by 12-node Chebyshev interpolation in the order
    across [n - 0.05, n + 0.05], with the stencil evaluated in extended
    precision.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    n0 = math.floor(nu + 0.5)
    if abs(nu - n0) < DELTA_INT:
        vals = np.array(
            [float(_y_noninteger_ld(nk, t)) for nk in _stencil_nodes(n0)]
        )
        return _stencil_interp(n0, nu, vals)
    c, s = math.cos(math.pi * nu), math.sin(math.pi * nu)
    return (c * series_j(nu, t) - series_j(-nu, t)) / s


def log_neg_y(nu: float, t: float) -> float:
    """log(-Y_nu(t)) in the small-argument nonoscillatory regime, immune to
    the overflow of Y itself.

    Near-integer orders interpolate the (analytic-in-nu) log values over
    the same stencil as :func:`series_y`.  Raises when the premise
    Y_nu(t) < 0 fails.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    n0 = math.floor(nu + 0.5)
    if abs(nu - n0) < DELTA_INT:
        vals = np.array(
            [
                float(_log_neg_y_noninteger(nk, t, xp=_LD))
                for nk in _stencil_nodes(n0)
            ]
        )
        return _stencil_interp(n0, nu, vals)
    return _log_neg_y_noninteger(nu, t)


# ---------------------------------------------------------------------------
# Debye expansions (t < nu)
# ---------------------------------------------------------------------------


def _poly_mul(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] += a * b
    return out


def _poly_deriv(p):
    return [k * c for k, c in enumerate(p)][1:] or [Fraction(0)]


def _poly_integ(p):
    # definite integral from 0: constant term zero
    return [Fraction(0)] + [c / (k + 1) for k, c in enumerate(p)]


@lru_cache(maxsize=None)
def debye_u_polys(N: int) -> tuple:
    """Exact coefficient lists (ascending powers, Fractions) of u_0..u_N.

    u_0 = 1;  u_{n+1}(t) = (t^2 - t^4)/2 * u_n'(t)
                          + (1/8) * int_0^t (1 - 5 tau^2) u_n(tau) dtau.
    deg(u_n) = 3n.
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    if N == 0:
        return ([Fraction(1)],)
    prev = debye_u_polys(N - 1)
    un = prev[-1]
    half_t2_t4 = [Fraction(0), Fraction(0), Fraction(1, 2), Fraction(0), Fraction(-1, 2)]
    kernel = [Fraction(1, 8), Fraction(0), Fraction(-5, 8)]
    term1 = _poly_mul(half_t2_t4, _poly_deriv(un))
    term2 = _poly_integ(_poly_mul(kernel, un))
    size = max(len(term1), len(term2))
    new = [
        (term1[k] if k < len(term1) else 0) + (term2[k] if k < len(term2) else 0)
        for k in range(size)
    ]
    while len(new) > 1 and new[-1] == 0:
        new.pop()
    return prev + (new,)


@lru_cache(maxsize=None)
def _u_float(N: int) -> tuple[np.ndarray, ...]:
    return tuple(np.array([float(c) for c in p]) for p in debye_u_polys(N))


@lru_cache(maxsize=None)
def _u_deriv_float(N: int) -> tuple[np.ndarray, ...]:
    out = []
    for p in debye_u_polys(N):
        d = _poly_deriv(p)
        out.append(np.array([float(c) for c in d]))
    return tuple(out)


def _horner(coef: np.ndarray, x: float) -> float:
    acc = 0.0
    for c in coef[::-1]:
        acc = acc * x + c
    return acc


def _debye_geometry(nu: float, t: float):
    if not 0 < t < nu:
        raise ValueError(f"Debye expansions require 0 < t < nu (nu={nu}, t={t})")
    w = math.sqrt((nu - t) * (nu + t))
    p = nu / w
    eta = nu * math.log(nu / t + math.sqrt((nu / t) ** 2 - 1.0)) - w
    return w, p, eta


def _debye_sum(nu: float, p: float, N: int, alternating: bool) -> float:
    polys = _u_float(N)
    total = 0.0
    inv_nu_pow = 1.0
    for j in range(N + 1):
        term = _horner(polys[j], p) * inv_nu_pow
        total += -term if (alternating and j % 2 == 1) else term
        inv_nu_pow /= nu
    return total


def debye_log_j(nu: float, t: float, N: int = 18) -> float:
    """log J_nu(t) by the logarithm form of Debye's expansion (0 < t < nu)."""
    w, p, eta = _debye_geometry(nu, t)
    s = _debye_sum(nu, p, N, alternating=False)
    return -eta - 0.5 * math.log(w) - 0.5 * math.log(2.0 * math.pi) + math.log(s)


def debye_log_neg_y(nu: float, t: float, N: int = 18) -> float:
    """log(-Y_nu(t)) by the logarithm form of Debye's expansion (0 < t < nu)."""
    w, p, eta = _debye_geometry(nu, t)
    s = _debye_sum(nu, p, N, alternating=True)
    return eta - 0.5 * math.log(w) + 0.5 * math.log(2.0 / math.pi) + math.log(s)


def debye_dlog_j(nu: float, t: float, N: int = 18) -> float:
    """d/dt log J_nu(t) from the Debye form: w/t + t/(2 w^2) + S'/S dp/dt."""
    w, p, eta = _debye_geometry(nu, t)
    s = _debye_sum(nu, p, N, alternating=False)
    dp = nu * t / w**3
    polys = _u_deriv_float(N)
    ds = 0.0
    inv_nu_pow = 1.0
    for j in range(N + 1):
        ds += _horner(polys[j], p) * inv_nu_pow
        inv_nu_pow /= nu
    return w / t + t / (2.0 * w * w) + ds * dp / s


# ---------------------------------------------------------------------------
# Large-t expansions of the phase function
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlphaAsymCoeffs:
    """Raw r_n / s_n coefficient lists with mu = 4 nu^2.

    r_0 = 1, r_n = r_{n-1} (mu - (2n-1)^2)/4 * (2n-1)/(2n);
    s_0 = 1, s_n = -sum_{j=1..n} s_{n-j} r_j.

    Raw coefficients overflow binary64 once (mu/4)^n exceeds ~1e308 (huge
    nu with n ~ 20); the evaluators below use t-folded recurrences instead
    and never form these.
    """

    mu: float
    r: np.ndarray
    s: np.ndarray


def alpha_asym_coeffs(nu: float, K: int = 30) -> AlphaAsymCoeffs:
    mu = 4.0 * nu * nu
    r = np.empty(K + 1)
    s = np.empty(K + 1)
    r[0] = 1.0
    s[0] = 1.0
    for n in range(1, K + 1):
        r[n] = r[n - 1] * ((mu - (2 * n - 1) ** 2) / 4.0) * ((2 * n - 1) / (2.0 * n))
        s[n] = -np.dot(s[n - 1 :: -1][: n], r[1 : n + 1])
    return AlphaAsymCoeffs(mu=mu, r=r, s=s)


def _scaled_s_terms(nu: float, t: float, K: int) -> np.ndarray:
    """Terms s_n / t^{2n} of the alpha' expansion, via the recurrence with
    the t powers folded in (overflow-free for nu up to 1e9).

    The factor (mu - (2n-1)^2)/4 is computed as c - n(n-1) with
    c = nu^2 - 1/4, which keeps s_1/t^2 = -c/(2 t^2) *exactly* tied to the
    floating-point c used by the phase ODE's coefficient.
    """
    c = nu * nu - 0.25
    inv_t2 = 1.0 / (t * t)
    rh = np.empty(K + 1)
    sh = np.empty(K + 1)
    rh[0] = 1.0
    sh[0] = 1.0
    for n in range(1, K + 1):
        rh[n] = rh[n - 1] * ((c - n * (n - 1.0)) * inv_t2) * (
            (2 * n - 1) / (2.0 * n)
        )
        sh[n] = -np.dot(sh[n - 1 :: -1][: n], rh[1 : n + 1])
    return sh


def _alpha_series_scaled(nu: float, t: float, K: int):
    """(alpha, alpha', alpha'') from the first K+1 asymptotic terms."""
    sh = _scaled_s_terms(nu, t, K)
    alphap = float(np.sum(sh))
    n_idx = np.arange(1, K + 1)
    alpha = (
        -0.25 * math.pi
        - 0.5 * math.pi * nu
        + t
        + float(np.sum(sh[1:] * t / (1.0 - 2.0 * n_idx)))
    )
    alphapp = float(np.sum(sh[1:] * (-2.0 * n_idx) / t))
    return alpha, alphap, alphapp


def alpha_deviation_terminal(nu: float, t: float, K: int = 30):
    """(u, u') of the phase deviation u = q - (alpha')^2 at large t.

    Squaring the alpha' expansion term by term cancels q's non-constant
    part exactly at order t^-2 (s_1/t^2 = -c/(2t^2) with q = 1 - c/t^2),
    so u and u' are pure k >= 2 tail sums -- no subtractive cancellation,
    which is the whole point of solving for u instead of alpha'.
    """
    sh = _scaled_s_terms(nu, t, K)
    n_idx = np.arange(0, K + 1)
    dh = sh * (-2.0 * n_idx) / t  # terms of alpha''
    u = 0.0
    up = 0.0
    for k in range(2, K + 1):
        u -= float(np.dot(sh[: k + 1], sh[k::-1]))
        up -= 2.0 * float(np.dot(sh[: k + 1], dh[k::-1]))
    return u, up


# Outer edge of the table region; the expansions are used at or beyond it.
_ASYM_GATE = 0.999e3


def _check_asym_regime(nu: float, t: float):
    if not t >= _ASYM_GATE * max(nu, 1.0):
        raise ValueError(
            f"alpha asymptotics require t >= ~1000*max(nu,1); got nu={nu}, t={t}"
        )


def alphap_asym(nu: float, t: float, K: int = 30) -> float:
    """alpha_nu'(t) = sum_n s_n t^{-2n}, truncated after K+1 terms."""
    _check_asym_regime(nu, t)
    return _alpha_series_scaled(nu, t, K)[1]


def alpha_asym(nu: float, t: float, K: int = 30) -> float:
    """alpha_nu(t) ~ -pi/4 - (pi/2) nu + t + termwise antiderivative."""
    _check_asym_regime(nu, t)
    return _alpha_series_scaled(nu, t, K)[0]


def alphapp_asym(nu: float, t: float, K: int = 30) -> float:
    """alpha_nu''(t), the termwise derivative of the alpha' expansion."""
    _check_asym_regime(nu, t)
    return _alpha_series_scaled(nu, t, K)[2]
