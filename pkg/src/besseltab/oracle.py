"""High-precision reference values (mpmath arithmetic, own formulas).

The acceptance protocols compare the table-driven evaluator against this
module.  Reference values are produced from first principles rather than a
black-box special-function call, with one method per regime:

* power series in j for t <= 30 (any order) and for the nonoscillatory
  region at moderate cost (the series needs O(t) terms), with working
  precision raised adaptively to absorb alternating-series or sin(nu pi)
  cancellation;
* the large-argument (Hankel) modulus/phase expansions for small orders
  and t >= 60;
* a Steed-style route bridging 30 < t < max(60, 2 mu): Y by stable upward
  recurrence from small-order Hankel seeds, the ratio J_{nu+1}/J_nu by the
  standard continued fraction, and J from the Wronskian;
* Debye's logarithm-form expansions at N = 40 deep in the nonoscillatory
  region;
* the phase-derivative tail series for alpha' when t >= ~4 nu.

Every regime is cross-validated against its neighbours on overlap strips in
the test suite.  Integer-order Hankel references use the three-term
recurrence from (nu = 0, 1) seeds, in mp arithmetic up to order 1e4 and in
compiled binary64 above (where the comparison tolerances dwarf sqrt(n)*eps
rounding growth).
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
from mpmath import mp, mpf

from besseltab.expansions import debye_u_polys

__all__ = [
    "jy",
    "alphap",
    "log_j",
    "log_neg_y",
    "debye_log_pair",
    "hankel_integer_reference",
]

_SERIES_T_MAX = 30.0


def _lost_digits(max_term, total):
    if total == 0:
        return mp.dps
    return max(0, int(mpmath.log10(abs(max_term) / abs(total))) + 1)


def _series_j_mp(nu, t):
    """(J_nu(t), digits lost to cancellation) at the current precision."""
    q = (t / 2) ** 2
    term = mpf(1)
    total = mpf(1)
    max_term = mpf(1)
    tol = mpf(10) ** (-(mp.dps + 5))
    j = 1
    while True:
        term = -term * q / (j * (j + nu))
        total += term
        if abs(term) > max_term:
            max_term = abs(term)
        if abs(term) < tol * abs(total):
            break
        j += 1
        if j > 10**7:
            raise RuntimeError("series oracle did not converge")
    val = (t / 2) ** nu / mpmath.gamma(nu + 1) * total
    return val, _lost_digits(max_term, total)


def _y_integer_series_mp(n, t):
    """Y_n(t) by the integer-order limit series (log + finite + psi sums)."""
    half = t / 2
    jn, _ = _series_j_mp(mpf(n), t)
    s1 = (2 / mpmath.pi) * jn * mpmath.log(half)
    s2 = mpf(0)
    for k in range(n):
        s2 += mpmath.factorial(n - k - 1) / mpmath.factorial(k) * half ** (2 * k - n)
    s2 /= mpmath.pi
    s3 = mpf(0)
    tol = mpf(10) ** (-(mp.dps + 5))
    k = 0
    term_pre = half**n
    while True:
        psi_sum = mpmath.digamma(k + 1) + mpmath.digamma(n + k + 1)
        term = (
            (-1) ** k
            * psi_sum
            / (mpmath.factorial(k) * mpmath.factorial(n + k))
            * term_pre
        )
        s3 += term
        if abs(term) < tol * (abs(s3) + 1):
            break
        term_pre *= half**2
        k += 1
        if k > 10**6:
            raise RuntimeError("integer Y series did not converge")
    s3 /= mpmath.pi
    total = s1 - s2 - s3
    scale = max(abs(s1), abs(s2), abs(s3))
    return total, _lost_digits(scale, total if total != 0 else scale)


def _jy_series(nu: float, t: float, prec: int):
    """J, Y via power series with adaptive precision (t <= ~a few 1e3)."""
    nu_i = round(nu)
    is_int = nu == nu_i
    # first pass estimates the cancellation, second pass absorbs it
    lost = 0
    for _ in range(3):
        with mpmath.workdps(prec + 12 + lost):
            tm = mpf(t)
            num = mpf(nu)
            jp, lost_p = _series_j_mp(num, tm)
            if is_int:
                yv, lost_y = _y_integer_series_mp(int(nu_i), tm)
                lost_new = max(lost_p, lost_y)
            else:
                jm, lost_m = _series_j_mp(-num, tm)
                s = mpmath.sinpi(num)
                c = mpmath.cospi(num)
                yv = (c * jp - jm) / s
                sin_loss = max(0, int(-mpmath.log10(abs(s))) + 1)
                quot_loss = _lost_digits(
                    max(abs(c * jp), abs(jm)), abs(c * jp - jm) + mpf(10) ** (-mp.dps)
                )
                lost_new = max(lost_p, lost_m) + sin_loss + quot_loss
            if lost_new <= lost:
                return jp, yv
            lost = lost_new
    with mpmath.workdps(prec + 12 + lost):
        return _jy_series(nu, t, prec + lost)  # pragma: no cover


def _hankel_pq(nu, t):
    """Modulus/phase large-argument sums; returns (P, Q, min_term)."""
    mu = 4 * nu * nu
    b = mpf(1)
    P = mpf(1)
    Q = mpf(0)
    min_term = mpf(1)
    tol = mpf(10) ** (-(mp.dps + 5))
    k = 1
    while True:
        b = b * (mu - (2 * k - 1) ** 2) / (8 * k * t)
        ab = abs(b)
        if ab >= min_term and k > 4:
            break  # asymptotic tail started growing; stop at the best term
        min_term = min(min_term, ab)
        if k % 2 == 1:
            Q += b * (-1) ** ((k - 1) // 2)
        else:
            P += b * (-1) ** (k // 2)
        if ab < tol:
            break
        k += 1
        if k > 4 * mp.dps + 200:
            break
    return P, Q, min_term


def _jy_hankel(nu: float, t: float, prec: int):
    with mpmath.workdps(prec + 15):
        tm = mpf(t)
        num = mpf(nu)
        P, Q, min_term = _hankel_pq(num, tm)
        floor = float(mpmath.log10(min_term + mpf(10) ** (-4 * prec)))
        if floor > -(prec + 5) and floor > -26:
            raise ValueError(
                f"Hankel expansion floor 1e{floor:.0f} too weak at nu={nu}, t={t}"
            )
        chi = tm - (num / 2 + mpf(1) / 4) * mpmath.pi
        c, s = mpmath.cos(chi), mpmath.sin(chi)
        amp = mpmath.sqrt(2 / (mpmath.pi * tm))
        return amp * (P * c - Q * s), amp * (P * s + Q * c)


def _cf1_ratio_mp(nu, t):
    """J_{nu+1}(t)/J_nu(t) by the standard continued fraction

        r_nu = 1 / (b_1 - 1 / (b_2 - ...)),   b_k = 2 (nu + k) / t,

    evaluated by the modified Lentz method (cancellation-free)."""
    tiny = mpf(10) ** (-mp.dps * 4)
    tol = mpf(10) ** (-(mp.dps + 5))
    f = tiny
    C = f
    D = mpf(0)
    k = 1
    while True:
        b = 2 * (nu + k) / t
        a = mpf(1) if k == 1 else mpf(-1)
        D = b + a * D
        if D == 0:
            D = tiny
        C = b + a / C
        if C == 0:
            C = tiny
        D = 1 / D
        delta = C * D
        f = f * delta
        if abs(delta - 1) < tol:
            return f
        k += 1
        if k > 10**7:
            raise RuntimeError("CF1 did not converge")


def _jy_steed(nu: float, t: float, prec: int):
    """J, Y in the regime 30 < t < ~2 mu: Y by stable upward recurrence
    from small-order Hankel seeds, J from the continued-fraction ratio and
    the Wronskian J_{nu+1} Y_nu - J_nu Y_{nu+1} = 2/(pi t)."""
    base = nu - math.floor(nu)
    steps = int(math.floor(nu))
    with mpmath.workdps(prec + 15):
        tm = mpf(t)
        _, y0 = _jy_hankel(base, t, prec)
        _, y1 = _jy_hankel(base + 1.0, t, prec)
        yk1, yk = y0, y1
        for k in range(1, steps + 1):
            yk, yk1 = 2 * (mpf(base) + k) / tm * yk - yk1, yk
        # after the loop: yk1 = Y_nu, yk = Y_{nu+1}
        y_nu, y_nu1 = yk1, yk
        r = _cf1_ratio_mp(mpf(nu), tm)
        j_nu = 2 / (mpmath.pi * tm) / (r * y_nu - y_nu1)
        return j_nu, y_nu


def jy(nu: float, t: float, prec: int = 60):
    """Reference (J_nu(t), Y_nu(t)) as mpf values.

    Raises for regimes this oracle does not cover (very large order
    together with 30 < t < 2 mu, where the recurrence length is
    prohibitive).
    """
    if t <= _SERIES_T_MAX or (t < nu and t <= 4000.0):
        return _jy_series(nu, t, prec)
    mu = 4.0 * nu * nu
    if t >= max(60.0, 2.0 * mu):
        return _jy_hankel(nu, t, prec)
    if t > 5.0e5 + nu:
        raise ValueError(
            f"oracle recurrence too long for nu={nu}, t={t}; "
            "use the alpha'/log regime oracles instead"
        )
    return _jy_steed(nu, t, prec)


def alphap_tail_mp(nu: float, t: float, prec: int = 60):
    """alpha_nu'(t) by the phase tail series in mp; returns (value, floor)
    where floor bounds the truncation error relative to the value."""
    with mpmath.workdps(prec + 15):
        mu = 4 * mpf(nu) ** 2
        inv_t2 = 1 / mpf(t) ** 2
        K = 4 * prec + 60
        rh = [mpf(1)]
        sh = [mpf(1)]
        total = mpf(1)
        min_term = mpf(1)
        tol = mpf(10) ** (-(prec + 10))
        for n in range(1, K + 1):
            rn = rh[-1] * ((mu - (2 * n - 1) ** 2) * inv_t2 / 4) * mpf(2 * n - 1) / (2 * n)
            rh.append(rn)
            sn = -mpmath.fsum(sh[n - j] * rh[j] for j in range(1, n + 1))
            sh.append(sn)
            if abs(sn) >= min_term and n > 4:
                break
            min_term = min(min_term, abs(sn))
            total += sn
            if abs(sn) < tol:
                break
        return total, float(min_term)


def alphap(nu: float, t: float, prec: int = 60):
    """Reference alpha_nu'(t) = (2/(pi t)) / (J^2 + Y^2).

    Uses the tail series when it converges below the target (t >= ~4 nu),
    else falls back to J, Y.
    """
    if t >= max(_SERIES_T_MAX, 4.0 * nu):
        val, floor = alphap_tail_mp(nu, t, prec)
        if floor < 10.0 ** (-(prec + 5)) or floor < 1e-26:
            return val
    j, y = jy(nu, t, prec)
    with mpmath.workdps(prec + 15):
        return (2 / (mpmath.pi * mpf(t))) / (j * j + y * y)


def debye_log_pair(nu: float, t: float, N: int = 40, prec: int = 60):
    """(log J_nu(t), log(-Y_nu(t))) by Debye's logarithm forms in mp."""
    if not 0 < t < nu:
        raise ValueError("Debye oracle requires 0 < t < nu")
    polys = debye_u_polys(N)
    with mpmath.workdps(prec + 25):
        num = mpf(nu)
        tm = mpf(t)
        w = mpmath.sqrt((num - tm) * (num + tm))
        p = num / w
        eta = num * mpmath.log(num / tm + mpmath.sqrt((num / tm) ** 2 - 1)) - w
        s_j = mpf(0)
        s_y = mpf(0)
        inv_pow = mpf(1)
        for jdx in range(N + 1):
            u = mpmath.polyval([mpf(c.numerator) / c.denominator for c in polys[jdx][::-1]], p)
            s_j += u * inv_pow
            s_y += (-1) ** jdx * u * inv_pow
            inv_pow /= num
        lj = -eta - mpmath.log(w) / 2 - mpmath.log(2 * mpmath.pi) / 2 + mpmath.log(s_j)
        ly = eta - mpmath.log(w) / 2 + mpmath.log(2 / mpmath.pi) / 2 + mpmath.log(s_y)
        return lj, ly


def log_j(nu: float, t: float, prec: int = 60):
    """Reference log J_nu(t) in the nonoscillatory region."""
    if nu >= 200.0 and t < 0.9 * nu:
        return debye_log_pair(nu, t, prec=prec)[0]
    j, _ = jy(nu, t, prec)
    with mpmath.workdps(prec + 15):
        return mpmath.log(j)


def log_neg_y(nu: float, t: float, prec: int = 60):
    """Reference log(-Y_nu(t)) in the nonoscillatory region."""
    if nu >= 200.0 and t < 0.9 * nu:
        return debye_log_pair(nu, t, prec=prec)[1]
    _, y = jy(nu, t, prec)
    with mpmath.workdps(prec + 15):
        return mpmath.log(-y)


# ---------------------------------------------------------------------------
# Integer-order recurrence references (Hankel-function protocol)
# ---------------------------------------------------------------------------


def _seed_jy01(t: float, prec: int):
    j0, y0 = jy(0.0, t, prec)
    j1, y1 = jy(1.0, t, prec)
    return j0, y0, j1, y1


def hankel_integer_reference(n: int, ts: np.ndarray, prec: int = 60):
    """(J_n, Y_n) at each t by upward three-term recurrence from the
    order-0/1 seeds.

    mp arithmetic for n <= 1e4; compiled binary64 above (recurrence
    rounding grows like sqrt(n)*eps, far below the comparison tolerances
    used at those orders).
    """
    ts = np.asarray(ts, dtype=float)
    if n <= 10**4:
        out_j = np.empty_like(ts)
        out_y = np.empty_like(ts)
        for i, t in enumerate(ts):
            j0, y0, j1, y1 = _seed_jy01(float(t), prec)
            with mpmath.workdps(prec + 10):
                tm = mpf(float(t))
                jk1, jk = j0, j1
                yk1, yk = y0, y1
                if n == 0:
                    jk, yk = j0, y0
                else:
                    for k in range(1, n):
                        jk, jk1 = 2 * k / tm * jk - jk1, jk
                        yk, yk1 = 2 * k / tm * yk - yk1, yk
                out_j[i] = float(jk)
                out_y[i] = float(yk)
        return out_j, out_y
    j0 = np.empty_like(ts)
    y0 = np.empty_like(ts)
    j1 = np.empty_like(ts)
    y1 = np.empty_like(ts)
    for i, t in enumerate(ts):
        a, b, c, d = _seed_jy01(float(t), 40)
        j0[i], y0[i], j1[i], y1[i] = float(a), float(b), float(c), float(d)
    return _recurrence_f64(n, ts, j0, y0, j1, y1)


def _recurrence_f64(n, ts, j0, y0, j1, y1):
    from numba import njit, prange

    @njit(cache=True, parallel=True)
    def run(n, ts, j0, y0, j1, y1, out_j, out_y):  # pragma: no cover
        for i in prange(len(ts)):
            t = ts[i]
            jk1, jk = j0[i], j1[i]
            yk1, yk = y0[i], y1[i]
            for k in range(1, n):
                fac = 2.0 * k / t
                jk, jk1 = fac * jk - jk1, jk
                yk, yk1 = fac * yk - yk1, yk
            out_j[i] = jk
            out_y[i] = yk

    out_j = np.empty_like(ts)
    out_y = np.empty_like(ts)
    run(n, ts, j0, y0, j1, y1, out_j, out_y)
    return out_j, out_y
