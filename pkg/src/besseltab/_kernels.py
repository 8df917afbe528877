"""Compiled evaluation kernels over the packed table arrays.

Everything here is numba-jitted and allocation-free per call.  The packed
layout flattens each table section into: breakpoint arrays, per-rectangle
retained x-degree M, a row-length array (m_i per retained row), and one
concatenated weighted-coefficient array.  Evaluation is Clenshaw along
each retained row in y, then Clenshaw across rows in x.

Region codes returned by eval_core: 1 oscillatory, 0 nonoscillatory,
-1 near-integer small-argument query (caller falls back to the extended
precision Python path), -2 invalid.
"""

import math

import numpy as np
from numba import njit

_SERIES_CAP = 200


@njit(cache=True)
def locate_k(bp, x):
    # half-open [bp_j, bp_{j+1}) intervals, last one closed
    lo = 0
    hi = len(bp) - 1
    if x <= bp[0]:
        return 0
    if x >= bp[hi]:
        return hi - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if x >= bp[mid]:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def eval_section(xbp, ybp, M, row_ptr, rows_m, coeff_ptr, coeffs, ny, x, y):
    i = locate_k(xbp, x)
    j = locate_k(ybp, y)
    r = i * ny + j
    xa, xb = xbp[i], xbp[i + 1]
    ya, yb = ybp[j], ybp[j + 1]
    xhat = (2.0 * x - (xb + xa)) / (xb - xa)
    yhat = (2.0 * y - (yb + ya)) / (yb - ya)
    if xhat > 1.0:
        xhat = 1.0
    elif xhat < -1.0:
        xhat = -1.0
    if yhat > 1.0:
        yhat = 1.0
    elif yhat < -1.0:
        yhat = -1.0
    m_lo = row_ptr[r]
    m_hi = row_ptr[r + 1]
    pos = coeff_ptr[r]
    twoy = 2.0 * yhat
    # row values, then outer Clenshaw downward over x-degrees
    b1 = 0.0
    b2 = 0.0
    twox = 2.0 * xhat
    n_rows = m_hi - m_lo
    rowvals = np.empty(n_rows)
    for ridx in range(n_rows):
        m_i = rows_m[m_lo + ridx]
        if m_i < 0:
            rowvals[ridx] = 0.0
            continue
        c1 = 0.0
        c2 = 0.0
        for k in range(m_i, 0, -1):
            c1, c2 = twoy * c1 - c2 + coeffs[pos + k], c1
        rowvals[ridx] = yhat * c1 - c2 + coeffs[pos]
        pos += m_i + 1
    for ridx in range(n_rows - 1, 0, -1):
        b1, b2 = twox * b1 - b2 + rowvals[ridx], b1
    return xhat * b1 - b2 + rowvals[0]


@njit(cache=True)
def alpha_series_k(nu, t):
    """(alpha, alpha') by the 30-term tail expansion, t-folded."""
    K = 30
    mu = 4.0 * nu * nu
    inv_t2 = 1.0 / (t * t)
    rh = np.empty(K + 1)
    sh = np.empty(K + 1)
    rh[0] = 1.0
    sh[0] = 1.0
    alphap = 1.0
    alpha = -0.25 * math.pi - 0.5 * math.pi * nu + t
    for n in range(1, K + 1):
        rh[n] = (
            rh[n - 1]
            * ((mu - (2.0 * n - 1.0) ** 2) * 0.25 * inv_t2)
            * ((2.0 * n - 1.0) / (2.0 * n))
        )
        s = 0.0
        for j in range(1, n + 1):
            s -= sh[n - j] * rh[j]
        sh[n] = s
        alphap += s
        alpha += s * t / (1.0 - 2.0 * n)
    return alpha, alphap


@njit(cache=True)
def series_bracket_k(nu, t):
    """Normalized J series bracket; returns (value, converged)."""
    q = 0.25 * t * t
    term = 1.0
    total = 1.0
    small = 0
    for j in range(1, _SERIES_CAP + 1):
        term = -term * q / (j * (j + nu))
        total += term
        if abs(term) < 1e-20 * abs(total):
            small += 1
            if small >= 2:
                return total, True
        else:
            small = 0
    return total, False


@njit(cache=True)
def gamma_sign_k(x):
    if x > 0.0:
        return 1.0
    if (-math.floor(x)) % 2 == 1:
        return -1.0
    return 1.0


@njit(cache=True)
def series_j_k(nu, t):
    """J_nu(t) (binary64 series; nu may be negative non-integer)."""
    s, _ = series_bracket_k(nu, t)
    logabs = nu * math.log(0.5 * t) - math.lgamma(nu + 1.0)
    sign = gamma_sign_k(nu + 1.0)
    if logabs > 700.0:
        return math.inf * sign * s
    return sign * math.exp(logabs) * s


@njit(cache=True)
def series_log_j_signed_k(nu, t):
    s, _ = series_bracket_k(nu, t)
    logabs = nu * math.log(0.5 * t) - math.lgamma(nu + 1.0) + math.log(abs(s))
    sign = gamma_sign_k(nu + 1.0) * (1.0 if s > 0.0 else -1.0)
    return logabs, sign


@njit(cache=True)
def series_y_k(nu, t):
    """Y_nu(t) by the quotient formula (non-integer nu only)."""
    c = math.cos(math.pi * nu)
    s = math.sin(math.pi * nu)
    return (c * series_j_k(nu, t) - series_j_k(-nu, t)) / s


@njit(cache=True)
def series_log_neg_y_k(nu, t):
    """log(-Y_nu(t)) via the overflow-free factored quotient."""
    lj_p, sg_p = series_log_j_signed_k(nu, t)
    lj_m, sg_m = series_log_j_signed_k(-nu, t)
    c = math.cos(math.pi * nu)
    s = math.sin(math.pi * nu)
    if lj_m >= lj_p:
        inner = (sg_m - c * sg_p * math.exp(lj_p - lj_m)) / s
        base = lj_m
    else:
        inner = (sg_m * math.exp(lj_m - lj_p) - c * sg_p) / s
        base = lj_p
    if inner <= 0.0:
        return math.nan
    return base + math.log(inner)


@njit(cache=True)
def debye_pair_k(nu, t, u_coeffs, u_degs):
    """(log J, log(-Y)) by the Debye logarithm forms, t < nu."""
    w = math.sqrt((nu - t) * (nu + t))
    p = nu / w
    eta = nu * math.log(nu / t + math.sqrt((nu / t) ** 2 - 1.0)) - w
    s_j = 0.0
    s_y = 0.0
    inv_pow = 1.0
    for j in range(u_degs.shape[0]):
        acc = 0.0
        for k in range(u_degs[j], -1, -1):
            acc = acc * p + u_coeffs[j, k]
        s_j += acc * inv_pow
        if j % 2 == 1:
            s_y -= acc * inv_pow
        else:
            s_y += acc * inv_pow
        inv_pow /= nu
    lj = -eta - 0.5 * math.log(w) - 0.5 * math.log(2.0 * math.pi) + math.log(s_j)
    ly = eta - 0.5 * math.log(w) + 0.5 * math.log(2.0 / math.pi) + math.log(s_y)
    return lj, ly


@njit(cache=True)
def _exp_guarded(lg):
    # exponentiation attempted only when representable
    if lg > 700.0:
        return math.inf
    if lg < -700.0:
        return 0.0
    return math.exp(lg)


@njit(cache=True)
def eval_core(
    nu,
    t,
    a1_xbp, a1_ybp, a1_M, a1_rp, a1_rm, a1_cp, a1_c, a1_ny,
    c1_xbp, c1_ybp, c1_M, c1_rp, c1_rm, c1_cp, c1_c, c1_ny,
    a2_xbp, a2_ybp, a2_M, a2_rp, a2_rm, a2_cp, a2_c, a2_ny,
    c2_xbp, c2_ybp, c2_M, c2_rp, c2_rm, c2_cp, c2_c, c2_ny,
    b1_xbp, b1_ybp, b1_M, b1_rp, b1_rm, b1_cp, b1_c, b1_ny,
    b2_xbp, b2_ybp, b2_M, b2_rp, b2_rm, b2_cp, b2_c, b2_ny,
    u_coeffs, u_degs,
    out,
):
    """Dispatch one (nu, t) query; fills out[0:6] with
    (j, y, alpha, alphap, log_j, log_neg_y) and returns the region code."""
    if nu >= 2.0:
        a = math.sqrt(nu * nu - 0.25)
        if t >= a:
            if t <= 1000.0 * nu:
                x = 1.0 / nu
                yy = (t - a) / (1000.0 * nu - a)
                if yy < 0.0:
                    yy = 0.0
                elif yy > 1.0:
                    yy = 1.0
                alpha = nu * eval_section(
                    a1_xbp, a1_ybp, a1_M, a1_rp, a1_rm, a1_cp, a1_c, a1_ny, x, yy
                )
                alphap = nu * eval_section(
                    c1_xbp, c1_ybp, c1_M, c1_rp, c1_rm, c1_cp, c1_c, c1_ny, x, yy
                )
            else:
                alpha, alphap = alpha_series_k(nu, t)
            amp = math.sqrt(2.0 / (math.pi * t)) / math.sqrt(alphap)
            out[0] = amp * math.cos(alpha)
            out[1] = amp * math.sin(alpha)
            out[2] = alpha
            out[3] = alphap
            return 1
        elif t >= nu / 1000.0:
            x = 1.0 / nu
            yy = (t - nu / 1000.0) / (a - nu / 1000.0)
            if yy < 0.0:
                yy = 0.0
            elif yy > 1.0:
                yy = 1.0
            b1v = eval_section(
                b1_xbp, b1_ybp, b1_M, b1_rp, b1_rm, b1_cp, b1_c, b1_ny, x, yy
            )
            b2v = eval_section(
                b2_xbp, b2_ybp, b2_M, b2_rp, b2_rm, b2_cp, b2_c, b2_ny, x, yy
            )
            lj = nu * (b1v + 1.0) - 0.5 * math.log(t)
            ly = nu * (b2v - 1.0) - 0.5 * math.log(t)
            out[0] = _exp_guarded(lj)
            out[1] = -_exp_guarded(ly)
            out[4] = lj
            out[5] = ly
            return 0
        else:
            lj, ly = debye_pair_k(nu, t, u_coeffs, u_degs)
            out[0] = _exp_guarded(lj)
            out[1] = -_exp_guarded(ly)
            out[4] = lj
            out[5] = ly
            return 0
    else:
        if t >= 2.0:
            if t <= 1000.0:
                x = 0.5 * nu
                yy = (t - 2.0) / 998.0
                alpha = eval_section(
                    a2_xbp, a2_ybp, a2_M, a2_rp, a2_rm, a2_cp, a2_c, a2_ny, x, yy
                )
                alphap = eval_section(
                    c2_xbp, c2_ybp, c2_M, c2_rp, c2_rm, c2_cp, c2_c, c2_ny, x, yy
                )
            else:
                alpha, alphap = alpha_series_k(nu, t)
            amp = math.sqrt(2.0 / (math.pi * t)) / math.sqrt(alphap)
            out[0] = amp * math.cos(alpha)
            out[1] = amp * math.sin(alpha)
            out[2] = alpha
            out[3] = alphap
            return 1
        # small order, small argument: power series territory
        near_int = abs(nu - math.floor(nu + 0.5)) < 1e-4
        osc = nu <= 0.5 or t * t >= nu * nu - 0.25
        if near_int:
            return -1  # Python fallback (extended-precision stencil)
        if osc:
            jv = series_j_k(nu, t)
            yv = series_y_k(nu, t)
            alphap = 2.0 / (math.pi * t) / (jv * jv + yv * yv)
            alpha = math.atan2(yv, jv)
            out[0] = jv
            out[1] = yv
            out[2] = alpha
            out[3] = alphap
            return 1
        lj = nu * math.log(0.5 * t) - math.lgamma(nu + 1.0)
        s, _ = series_bracket_k(nu, t)
        lj += math.log(s)
        ly = series_log_neg_y_k(nu, t)
        out[0] = _exp_guarded(lj)
        out[1] = -_exp_guarded(ly)
        out[4] = lj
        out[5] = ly
        return 0


@njit(cache=True)
def eval_many_core(
    nus,
    ts,
    a1_xbp, a1_ybp, a1_M, a1_rp, a1_rm, a1_cp, a1_c, a1_ny,
    c1_xbp, c1_ybp, c1_M, c1_rp, c1_rm, c1_cp, c1_c, c1_ny,
    a2_xbp, a2_ybp, a2_M, a2_rp, a2_rm, a2_cp, a2_c, a2_ny,
    c2_xbp, c2_ybp, c2_M, c2_rp, c2_rm, c2_cp, c2_c, c2_ny,
    b1_xbp, b1_ybp, b1_M, b1_rp, b1_rm, b1_cp, b1_c, b1_ny,
    b2_xbp, b2_ybp, b2_M, b2_rp, b2_rm, b2_cp, b2_c, b2_ny,
    u_coeffs, u_degs,
    regions,
    out,
):
    buf = np.empty(6)
    for i in range(len(nus)):
        for k in range(6):
            buf[k] = math.nan
        regions[i] = eval_core(
            nus[i],
            ts[i],
            a1_xbp, a1_ybp, a1_M, a1_rp, a1_rm, a1_cp, a1_c, a1_ny,
            c1_xbp, c1_ybp, c1_M, c1_rp, c1_rm, c1_cp, c1_c, c1_ny,
            a2_xbp, a2_ybp, a2_M, a2_rp, a2_rm, a2_cp, a2_c, a2_ny,
            c2_xbp, c2_ybp, c2_M, c2_rp, c2_rm, c2_cp, c2_c, c2_ny,
            b1_xbp, b1_ybp, b1_M, b1_rp, b1_rm, b1_cp, b1_c, b1_ny,
            b2_xbp, b2_ybp, b2_M, b2_rp, b2_rm, b2_cp, b2_c, b2_ny,
            u_coeffs, u_degs,
            buf,
        )
        for k in range(6):
            out[i, k] = buf[k]
