"""Per-order phase pipeline: nonoscillatory phase and log-solutions.

For one fixed order nu this module produces, in time independent of nu:

* stage one -- alpha', alpha'' by solving the third-order phase equation
  (as a second-order problem for z = alpha') backward from t = b with
  terminal data supplied by the large-t expansions, then alpha by
  piecewise spectral integration anchored at alpha(b);
* the first positive zero t* of J_nu, from alpha(t*) = pi/2 by Newton;
* stage two -- nu + log(-Y_nu(t) sqrt(t)) by a backward Riccati solve
  anchored at the turning point with data built from alpha there;
* stage three -- -nu + log(J_nu(t) sqrt(t)) by a forward Riccati solve
  from t = nu/1000, seeded by Debye's expansion (nu >= 10) or the series
  logarithm (nu < 10).

The oscillatory interval is [sqrt(nu^2 - 1/4), 1000 nu] for nu > 1/2 and
[2, 1000] otherwise; the log-solutions exist only for nu > 1/2.

The stage-two anchor differs deliberately from a first reading of the
t*-anchored variant: every real solution of Bessel's equation vanishes
near the first zero of Y (strictly below t*), so a log-solution cannot be
continued across it, and the solve is anchored at the turning point
instead, where sin(alpha) is O(1) and everything is well-conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from besseltab.cheb import PiecewiseChebFn, UnivariateExpansion, spectral_integration_matrix
from besseltab.expansions import (
    _alpha_series_scaled,
    alpha_asym,
    alpha_deviation_terminal,
    debye_dlog_j,
    debye_log_j,
    series_j,
)
from besseltab.solver import OdeProblem, SolverError, solve

__all__ = [
    "PhaseSolution",
    "oscillatory_interval",
    "compute_phase",
    "find_t_star",
    "compute_log_negy",
    "compute_log_j",
    "phase_solution",
]

_ASYM_TERMS = 30
_DEVIATION_NU = 1.0e4
_PI_LD = np.longdouble("3.14159265358979323846264338328")
_HALF_LOG_HALF_PI = 0.5 * math.log(0.5 * math.pi)


class PhaseError(RuntimeError):
    """A stage of the phase pipeline failed."""


@dataclass(frozen=True)
class PhaseSolution:
    """Everything the table builder needs for one order."""

    nu: float
    a: float
    b: float
    alpha: PiecewiseChebFn
    alphap: PiecewiseChebFn
    alphapp: PiecewiseChebFn
    t_star: float | None = None
    log_negy: PiecewiseChebFn | None = None  # nu + log(-Y sqrt(t)) on [nu/1000, a]
    log_j: PiecewiseChebFn | None = None  # -nu + log(J sqrt(t)) on [nu/1000, a]


def oscillatory_interval(nu: float) -> tuple[float, float]:
    if nu > 0.5:
        return math.sqrt(nu * nu - 0.25), 1000.0 * nu
    return 2.0, 1000.0


def _q_coeff(nu: float):
    """Bessel-equation coefficient q(t) = 1 - (nu^2 - 1/4)/t^2, computed
    stably.

    Near the turning point the plain form leaves an absolute rounding
    residue ~eps while q itself is tiny, which pollutes everything built
    from q at ~eps/q relative; the factored form (t-a)(t+a)/t^2 is exact
    there (Sterbenz: t - a is exact for t < 2a).  Far afield the plain
    form is the accurate one (c/t^2 << 1).  The crossover at 2a keeps each
    branch in its clean regime.
    """
    c = nu * nu - 0.25
    if c <= 0.0:
        return lambda t: 1.0 - c / (t * t)
    a = math.sqrt(c)
    two_a = 2.0 * a

    def q(t):
        if np.ndim(t) == 0:
            t = float(t)
            if t < two_a:
                return (t - a) * (t + a) / (t * t)
            return 1.0 - c / (t * t)
        return np.where(
            t < two_a, (t - a) * (t + a) / (t * t), 1.0 - c / (t * t)
        )

    return q


def _kummer_problem(nu: float, a: float, b: float) -> OdeProblem:
    """Phase equation solved directly for z = alpha' (orders below 1e4).

    z'' = 2 z (q - z^2) + (3/2) z'^2 / z, terminal data from the tail
    expansions.  The balance q - z^2 ~ 1/nu^2 stays well above the rounding
    of z for moderate orders; for large ones see _deviation_problem.
    """
    q = _q_coeff(nu)
    _, zb, zpb = _alpha_series_scaled(nu, b, _ASYM_TERMS)
    return OdeProblem(
        rhs=lambda t, z, zp: 2.0 * z * (q(t) - z * z) + 1.5 * zp * zp / z,
        rhs_dy=lambda t, z, zp: 2.0 * q(t) - 6.0 * z * z - 1.5 * (zp / z) ** 2,
        rhs_dyp=lambda t, z, zp: 3.0 * zp / z,
        a=a,
        b=b,
        boundary_kind="terminal",
        y_bc=zb,
        yp_bc=zpb,
    )


def _deviation_problem(nu: float, a: float, b: float) -> OdeProblem:
    """Phase equation recast for the deviation u = q - (alpha')^2.

    alpha' itself satisfies the third-order phase equation, but for large
    orders the balance q - (alpha')^2 ~ 1/nu^2 sits below the rounding of
    alpha' and binary64 cannot even represent the equation.  Substituting
    alpha' = sqrt(q - u) gives the equivalent, cancellation-free problem

        u'' = q'' - (5/4) (q' - u')^2 / (q - u) - 4 (q - u) u,

    with q, q', q'' available in closed form.  u < 0 and tiny away from
    the turning point; alpha' and alpha'' are recovered exactly from
    (u, u') at the nodes.
    """
    c = nu * nu - 0.25
    q = _q_coeff(nu)
    u_b, up_b = alpha_deviation_terminal(nu, b, _ASYM_TERMS)

    def rhs(t, u, up):
        qmu = q(t) - u
        dq = 2.0 * c / (t * t * t) - up
        return -6.0 * c / (t * t * t * t) - 1.25 * dq * dq / qmu - 4.0 * qmu * u

    def rhs_du(t, u, up):
        qv = q(t)
        qmu = qv - u
        dq = 2.0 * c / (t * t * t) - up
        return -1.25 * (dq / qmu) ** 2 - 4.0 * qv + 8.0 * u

    def rhs_dup(t, u, up):
        qmu = q(t) - u
        dq = 2.0 * c / (t * t * t) - up
        return 2.5 * dq / qmu

    return OdeProblem(
        rhs=rhs,
        rhs_dy=rhs_du,
        rhs_dyp=rhs_dup,
        a=a,
        b=b,
        boundary_kind="terminal",
        y_bc=u_b,
        yp_bc=up_b,
    )


def _shift(fn: PiecewiseChebFn, c: float) -> PiecewiseChebFn:
    return PiecewiseChebFn(
        breakpoints=fn.breakpoints.copy(),
        pieces=tuple(UnivariateExpansion(p.grid, p.values + c) for p in fn.pieces),
    )


def compute_phase(
    nu: float,
    eps: float = 5e-16,
    n: int = 30,
    interval: tuple[float, float] | None = None,
) -> tuple[PiecewiseChebFn, PiecewiseChebFn, PiecewiseChebFn]:
    """(alpha, alpha', alpha'') on the oscillatory interval.

    `interval` overrides the default oscillatory interval (used by the
    small-order table build, which always solves on [2, 1000]).

    For orders above ~20 the solve is segmented at fixed multiples of nu,
    each segment terminal-anchored by the (fully converged there) phase
    asymptotics.  A single right-to-left chain over the whole interval
    would otherwise pass boundary data through hundreds of junctions whose
    rounding noise random-walks into a spurious oscillation near the
    turning point.
    """
    a, b = interval if interval is not None else oscillatory_interval(nu)
    if interval is None and nu >= 20.0:
        cuts = [a] + [m * nu for m in (8.0, 64.0, 1000.0) if a < m * nu < b] + [b]
    else:
        cuts = [a, b]
    c = nu * nu - 0.25
    qfun = _q_coeff(nu)
    use_deviation = nu >= _DEVIATION_NU

    def to_alphap(tn, u):
        # pieces must resolve what the table interpolates: alpha' itself
        return np.sqrt(qfun(tn) - u)

    try:
        if use_deviation:
            segments = [
                solve(
                    _deviation_problem(nu, lo, hi),
                    n=n,
                    eps=eps,
                    accept_values=to_alphap,
                )
                for lo, hi in zip(cuts[:-1], cuts[1:])
            ]
        else:
            segments = [
                solve(_kummer_problem(nu, lo, hi), n=n, eps=eps)
                for lo, hi in zip(cuts[:-1], cuts[1:])
            ]
    except SolverError as exc:
        raise PhaseError(f"stage one failed for nu={nu}: {exc}") from exc
    ap_pieces = []
    app_pieces = []
    bps = [segments[0].y.breakpoints] + [s.y.breakpoints[1:] for s in segments[1:]]
    breakpoints = np.concatenate(bps)
    for seg in segments:
        for pu, pup in zip(seg.y.pieces, seg.yp.pieces):
            if use_deviation:
                # alpha' = sqrt(q - u), alpha'' = (q' - u')/(2 alpha')
                tn = pu.grid.nodes
                z = np.sqrt(qfun(tn) - pu.values)
                zp = (2.0 * c / (tn * tn * tn) - pup.values) / (2.0 * z)
            else:
                z, zp = pu.values, pup.values
            ap_pieces.append(UnivariateExpansion(pu.grid, z))
            app_pieces.append(UnivariateExpansion(pu.grid, zp))
    alphap = PiecewiseChebFn(breakpoints=breakpoints, pieces=tuple(ap_pieces))
    alphapp = PiecewiseChebFn(breakpoints=breakpoints.copy(), pieces=tuple(app_pieces))
    # Integrate alpha' piece by piece and anchor the constant at b.  The
    # per-piece constants are assembled in extended precision: alpha(b) and
    # the cumulative increments are both ~1000 nu while alpha near the
    # turning point is O(1), so a binary64 anchor would leave ~eps*1000*nu
    # of absolute debris exactly where alpha is smallest.
    ld = np.longdouble
    gs = []
    increments = []
    for p in alphap.pieces:
        S = spectral_integration_matrix(p.grid.n, p.grid.a, p.grid.b)
        g = S @ p.values
        gs.append(g)
        increments.append(ld(g[-1]))
    offsets = np.concatenate(([ld(0.0)], np.cumsum(increments)))
    tail = alpha_asym(nu, b, _ASYM_TERMS) - b + 0.25 * math.pi + 0.5 * math.pi * nu
    anchor = (
        ld(b)
        - ld(0.25) * _PI_LD
        - ld(0.5) * _PI_LD * ld(nu)
        + ld(tail)
        - offsets[-1]
    )
    consts = (offsets[:-1] + anchor).astype(float)
    alpha = PiecewiseChebFn(
        breakpoints=alphap.breakpoints.copy(),
        pieces=tuple(
            UnivariateExpansion(p.grid, g + consts[i])
            for i, (p, g) in enumerate(zip(alphap.pieces, gs))
        ),
    )
    return alpha, alphap, alphapp


def find_t_star(alpha: PiecewiseChebFn, alphap: PiecewiseChebFn, max_iter: int = 50) -> float:
    """First positive zero of J_nu: the solution of alpha(t*) = pi/2.

    alpha is increasing with alpha(0+) = -pi/2, so the first J zero sits at
    alpha = +pi/2.  Newton on the piecewise representation, kept inside the
    bracketing piece.
    """
    target = 0.5 * math.pi
    bp = alpha.breakpoints
    vals = np.array([alpha.pieces[0].values[0]] + [p.values[-1] for p in alpha.pieces])
    if vals[0] > target or vals[-1] < target:
        raise PhaseError("alpha does not cross pi/2 on the computed interval")
    j = int(np.searchsorted(vals, target, side="left")) - 1
    j = min(max(j, 0), len(alpha.pieces) - 1)
    lo, hi = float(bp[j]), float(bp[j + 1])
    t = 0.5 * (lo + hi)
    eps_mach = float(np.finfo(float).eps)
    for _ in range(max_iter):
        r = alpha(t) - target
        # 1e-13 in the phase where representable; for large t the phase
        # changes by alpha' * ulp(t) between adjacent doubles, which caps
        # the attainable residual
        tol = max(1e-13, 8.0 * eps_mach * abs(t) * alphap(t))
        if abs(r) < tol or hi - lo <= 4.0 * eps_mach * abs(t):
            return float(t)
        if r > 0:
            hi = t
        else:
            lo = t
        t_new = t - r / alphap(t)
        t = t_new if lo < t_new < hi else 0.5 * (lo + hi)
    raise PhaseError("Newton for t* did not converge in 50 iterations")


def _riccati_problem(nu, a, b, kind, r_bc, rp_bc) -> OdeProblem:
    q = _q_coeff(nu)
    return OdeProblem(
        rhs=lambda t, r, rp: -rp * rp - q(t),
        rhs_dy=lambda t, r, rp: 0.0 * r,
        rhs_dyp=lambda t, r, rp: -2.0 * rp,
        a=a,
        b=b,
        boundary_kind=kind,
        y_bc=r_bc,
        yp_bc=rp_bc,
    )


def compute_log_negy(
    nu: float,
    alpha: PiecewiseChebFn,
    alphap: PiecewiseChebFn,
    alphapp: PiecewiseChebFn,
    eps: float = 5e-16,
    n: int = 30,
) -> PiecewiseChebFn:
    """nu + log(-Y_nu(t) sqrt(t)) on [nu/1000, sqrt(nu^2 - 1/4)].

    Backward Riccati solve for log(-v_nu), v_nu = sqrt(pi t / 2) Y_nu,
    anchored at the turning point with data from the stage-one phase:
    r(a) = log(-sin alpha(a)) - log(alpha'(a))/2 and
    r'(a) = alpha' cot(alpha) - alpha''/(2 alpha').
    """
    if not nu > 0.5:
        raise ValueError("log solutions exist only for nu > 1/2")
    a = math.sqrt(nu * nu - 0.25)
    t0 = nu / 1000.0
    if not t0 < a:
        raise PhaseError(f"empty nonoscillatory interval for nu={nu}")
    alpha_a = float(alpha.pieces[0].values[0])
    ap_a = float(alphap.pieces[0].values[0])
    app_a = float(alphapp.pieces[0].values[0])
    if not -0.5 * math.pi < alpha_a < 0.0:
        raise PhaseError(
            f"alpha({a}) = {alpha_a} outside (-pi/2, 0); stage-two premise fails"
        )
    sin_a, cos_a = math.sin(alpha_a), math.cos(alpha_a)
    r_a = math.log(-sin_a) - 0.5 * math.log(ap_a)
    rp_a = ap_a * cos_a / sin_a - app_a / (2.0 * ap_a)
    try:
        sol = solve(_riccati_problem(nu, t0, a, "terminal", r_a, rp_a), n=n, eps=eps)
    except SolverError as exc:
        raise PhaseError(f"stage two failed for nu={nu}: {exc}") from exc
    return _shift(sol.y, nu - _HALF_LOG_HALF_PI)


def compute_log_j(nu: float, eps: float = 5e-16, n: int = 30) -> PiecewiseChebFn:
    """-nu + log(J_nu(t) sqrt(t)) on [nu/1000, sqrt(nu^2 - 1/4)].

    Forward Riccati solve for log(u_nu), u_nu = sqrt(pi t / 2) J_nu; the
    backward direction would be dominated by the Y-type solution.  Initial
    data at t0 = nu/1000 comes from Debye's logarithm form for nu >= 10
    and from the series logarithm below.
    """
    if not nu > 0.5:
        raise ValueError("log solutions exist only for nu > 1/2")
    a = math.sqrt(nu * nu - 0.25)
    t0 = nu / 1000.0
    if not t0 < a:
        raise PhaseError(f"empty nonoscillatory interval for nu={nu}")
    if nu >= 10.0:
        lj = debye_log_j(nu, t0)
        dlj = debye_dlog_j(nu, t0)
    else:
        lj = series_j(nu, t0, with_log=True)
        dlj = nu / t0 - math.exp(series_j(nu + 1.0, t0, with_log=True) - lj)
    rho0 = lj + 0.5 * math.log(0.5 * math.pi * t0)
    rhop0 = dlj + 0.5 / t0
    try:
        sol = solve(_riccati_problem(nu, t0, a, "initial", rho0, rhop0), n=n, eps=eps)
    except SolverError as exc:
        raise PhaseError(f"stage three failed for nu={nu}: {exc}") from exc
    return _shift(sol.y, -nu - _HALF_LOG_HALF_PI)


def phase_solution(nu: float, eps: float = 5e-16, n: int = 30) -> PhaseSolution:
    """Run the full pipeline for one order."""
    a, b = oscillatory_interval(nu)
    alpha, alphap, alphapp = compute_phase(nu, eps=eps, n=n)
    t_star = None
    log_negy = None
    log_j = None
    if nu > 0.5:
        t_star = find_t_star(alpha, alphap)
        if abs(math.sin(alpha(t_star)) - 1.0) > 1e-10:
            raise PhaseError(f"sin(alpha(t*)) != 1 within tolerance for nu={nu}")
        if nu / 1000.0 < a * (1.0 - 1e-9):
            log_negy = compute_log_negy(nu, alpha, alphap, alphapp, eps=eps, n=n)
            log_j = compute_log_j(nu, eps=eps, n=n)
    return PhaseSolution(
        nu=nu,
        a=a,
        b=b,
        alpha=alpha,
        alphap=alphap,
        alphapp=alphapp,
        t_star=t_star,
        log_negy=log_negy,
        log_j=log_j,
    )
