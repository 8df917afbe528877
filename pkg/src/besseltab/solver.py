"""Adaptive spectral solver for y'' = f(t, y, y').

Robust-over-fast design, intended for precomputation only.  Each candidate
subinterval gets a trapezoidal predictor marched over its Chebyshev nodes,
followed by Newton corrections in which the linearized problem is recast as
an integral equation for sigma = delta'' (so the zero initial conditions of
the correction hold exactly) and collocated at the nodes.  Accepted pieces
must have a relatively negligible Chebyshev coefficient tail; otherwise the
interval is bisected.  Terminal-value problems are solved by reflecting the
independent variable and running the initial-value path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import math

import numpy as np

from besseltab.cheb import (
    ChebGrid,
    PiecewiseChebFn,
    UnivariateExpansion,
    cheb_nodes,
    decision_coeffs,
    spectral_integration_matrix,
    tail_and_scale,
    value_noise_floor,
    _UNDERFLOW_FLOOR,
)

__all__ = ["OdeProblem", "OdeSolution", "SolverError", "solve", "newton_correct"]

_MAX_NEWTON = 50
_PREDICTOR_NEWTON_ITERS = 10


class SolverError(RuntimeError):
    """Adaptive solve failed; carries the offending interval."""

    def __init__(self, message: str, interval=None):
        super().__init__(message)
        self.interval = interval


@dataclass(frozen=True)
class OdeProblem:
    """Second-order problem y'' = rhs(t, y, y') with data at one endpoint.

    rhs_dy and rhs_dyp are the partial derivatives of rhs with respect to
    y and y'.  All three callbacks must work elementwise on ndarray inputs
    (plain arithmetic and numpy ufuncs qualify).  For boundary_kind ==
    "initial" the data (y_bc, yp_bc) is taken at a; for "terminal" it is
    taken at b.
    """

    rhs: Callable[[float, float, float], float]
    rhs_dy: Callable[[float, float, float], float]
    rhs_dyp: Callable[[float, float, float], float]
    a: float
    b: float
    boundary_kind: Literal["initial", "terminal"]
    y_bc: float
    yp_bc: float


@dataclass(frozen=True)
class OdeSolution:
    """y, y', y'' on a shared adaptive partition of [a, b]."""

    y: PiecewiseChebFn
    yp: PiecewiseChebFn
    ypp: PiecewiseChebFn

    @property
    def breakpoints(self) -> np.ndarray:
        return self.y.breakpoints


def _predict(problem: OdeProblem, t: np.ndarray, c1: float, c2: float) -> np.ndarray:
    """Implicit-trapezoid march of (y, y') over the node gaps; returns y''
    values at the nodes.  Only the y'' values are used downstream (y and y'
    are recomputed by spectral integration for internal consistency).

    Each implicit step is solved by Newton on the 2x2 step equations (a
    fixed-point sweep would cap the usable step at ~1/Lipschitz and force
    wavelength-scale pieces on wide smooth intervals)."""
    rhs, rhs_dy, rhs_dyp = problem.rhs, problem.rhs_dy, problem.rhs_dyp
    n = len(t) - 1
    ypp = np.full(n + 1, np.nan)
    y, yp = c1, c2
    fk = rhs(t[0], y, yp)
    ypp[0] = fk
    for k in range(n):
        if not (math.isfinite(y) and math.isfinite(yp) and math.isfinite(fk)):
            return ypp  # candidate interval too wide; caller will split
        h = t[k + 1] - t[k]
        hh = 0.5 * h
        t1 = t[k + 1]
        y1 = y + h * yp + hh * h * fk
        yp1 = yp + h * fk
        for _ in range(_PREDICTOR_NEWTON_ITERS):
            f1 = rhs(t1, y1, yp1)
            r1 = y1 - y - hh * (yp + yp1)
            r2 = yp1 - yp - hh * (fk + f1)
            # Jacobian [[1, -h/2], [-h/2 fy, 1 - h/2 fv]]
            fy = rhs_dy(t1, y1, yp1)
            fv = rhs_dyp(t1, y1, yp1)
            a11, a12 = 1.0, -hh
            a21, a22 = -hh * fy, 1.0 - hh * fv
            det = a11 * a22 - a12 * a21
            if det == 0.0 or not math.isfinite(det):
                break
            dy1 = (r1 * a22 - r2 * a12) / det
            dv1 = (r2 * a11 - r1 * a21) / det
            y1 -= dy1
            yp1 -= dv1
            if max(abs(dy1), abs(dv1)) <= 1e-14 * (abs(y1) + abs(yp1) + 1.0):
                break
        y, yp = y1, yp1
        fk = rhs(t1, y, yp)
        ypp[k + 1] = fk
    return ypp


def newton_correct(
    problem: OdeProblem,
    grid: ChebGrid,
    ypp0: np.ndarray,
    c1: float,
    c2: float,
):
    """Newton-correct a predictor triple on one interval.

    Each iteration solves the collocated integral equation

        sigma - f_y . S^2 sigma - f_y' . S sigma = f(t, y, y') - y''

    for sigma = delta_j'' (so delta_j and delta_j' vanish at the left
    endpoint exactly), and updates the iterate.  Iterations continue while
    the max-norm corrections Delta_j decrease strictly; on the first
    non-decrease the previous iterate is returned.  A hard cap of 50
    iterations applies.

    Returns
    -------
    (y, yp, ypp) : ndarray triple at the nodes
    deltas : list of float
        The Delta_j history (max |delta_j| per iteration).
    """
    t = grid.nodes
    n = grid.n
    S = spectral_integration_matrix(n, grid.a, grid.b)
    S2 = S @ S
    yp0 = c2 + S @ ypp0
    y0 = c1 + S @ yp0
    y, yp, ypp = y0, yp0, ypp0
    deltas: list[float] = []
    eye = np.eye(n + 1)
    shape = t.shape
    for j in range(1, _MAX_NEWTON + 1):
        d1 = np.broadcast_to(np.asarray(problem.rhs_dy(t, y, yp), dtype=float), shape)
        d2 = np.broadcast_to(np.asarray(problem.rhs_dyp(t, y, yp), dtype=float), shape)
        f = np.broadcast_to(np.asarray(problem.rhs(t, y, yp), dtype=float), shape)
        resid = f - ypp
        A = eye - d1[:, None] * S2 - d2[:, None] * S
        try:
            sigma = np.linalg.solve(A, resid)
        except np.linalg.LinAlgError as exc:
            raise SolverError(
                f"singular collocation system on [{grid.a}, {grid.b}]",
                interval=(grid.a, grid.b),
            ) from exc
        delta = S2 @ sigma
        dj = float(np.max(np.abs(delta)))
        if not math.isfinite(dj):
            break
        if j > 1 and dj >= deltas[-1]:
            break  # keep y_{j-1}: the pending update is discarded
        deltas.append(dj)
        y = y + delta
        yp = yp + S @ sigma
        ypp = ypp + sigma
        if dj <= 0.25 * np.finfo(float).eps * float(np.max(np.abs(y)) + 1e-300):
            break  # at the rounding floor; further sweeps only walk noise
    return y, yp, ypp, deltas


def _solve_initial(problem: OdeProblem, n: int, eps: float, max_stack: int, accept_values=None):
    a, b = problem.a, problem.b
    stack = [(a, b, np.inf)]
    out = []
    c1, c2 = problem.y_bc, problem.yp_bc
    # Boundary data chained across pieces carries absolute rounding noise at
    # the scale of the solution seen so far; once a piece's coefficient
    # tail reaches that level, further splitting cannot improve it, so the
    # noise floor tracks the running solution scale rather than only the
    # local piece values.
    scale = 1.0e-30 if accept_values is not None else max(abs(c1), 1.0e-30)
    eps_mach = float(np.finfo(float).eps)
    while stack:
        if len(stack) > max_stack:
            raise SolverError(
                f"solver stack exceeded {max_stack} pending intervals",
                interval=stack[-1],
            )
        eta1, eta2, parent_num = stack.pop()
        if eta2 - eta1 <= 8 * eps_mach * (abs(eta1) + abs(eta2)):
            raise SolverError(
                f"refinement reached a degenerate interval near {eta1}",
                interval=(eta1, eta2),
            )
        grid = cheb_nodes(n, eta1, eta2)
        with np.errstate(all="ignore"):
            ypp0 = _predict(problem, grid.nodes, c1, c2)
            y, yp, ypp, _ = newton_correct(problem, grid, ypp0, c1, c2)
        if not np.all(np.isfinite(y)):
            mid = 0.5 * (eta1 + eta2)
            stack.append((mid, eta2, np.inf))
            stack.append((eta1, mid, np.inf))
            continue
        v = y if accept_values is None else accept_values(grid.nodes, y)
        num, den = tail_and_scale(decision_coeffs(v))
        vmax = float(np.max(np.abs(v)))
        floor = value_noise_floor(n, max(vmax, scale), eps_mach)
        # A split on genuine structure shrinks the tail spectrally (orders
        # of magnitude); if halving bought less than ~4x, the tail is pinned
        # by absolute value noise (chained boundary data, cancellation in
        # the rhs) and further splitting cannot reduce it.
        stuck = num >= 0.25 * parent_num and num <= 16.0 * floor
        if den < _UNDERFLOW_FLOOR or num < eps * den or num <= floor or stuck:
            out.append((grid, y, yp, ypp))
            c1 = float(y[-1])
            c2 = float(yp[-1])
            scale = max(scale, vmax)
        else:
            mid = 0.5 * (eta1 + eta2)
            stack.append((mid, eta2, num))
            stack.append((eta1, mid, num))
    return out


def _reflected(problem: OdeProblem) -> OdeProblem:
    # s = a + b - t maps the terminal problem to an initial one; odd
    # derivatives flip sign.
    a, b = problem.a, problem.b
    rhs, dy, dyp = problem.rhs, problem.rhs_dy, problem.rhs_dyp
    return OdeProblem(
        rhs=lambda s, y, v: rhs(a + b - s, y, -v),
        rhs_dy=lambda s, y, v: dy(a + b - s, y, -v),
        rhs_dyp=lambda s, y, v: -dyp(a + b - s, y, -v),
        a=a,
        b=b,
        boundary_kind="initial",
        y_bc=problem.y_bc,
        yp_bc=-problem.yp_bc,
    )


def solve(
    problem: OdeProblem,
    n: int = 30,
    eps: float = 5e-16,
    max_stack: int = 300,
    accept_values=None,
) -> OdeSolution:
    """Solve the problem adaptively; returns y, y', y'' as piecewise
    Chebyshev functions on a shared ascending partition of [a, b].

    Parameters
    ----------
    problem : OdeProblem
    n : int
        Per-piece grid order (31 nodes by default).
    eps : float
        Tail tolerance for accepting a piece.
    max_stack : int
        Pending-interval budget; exceeding it raises :class:`SolverError`.
    accept_values : callable, optional
        (nodes, values) -> the values whose Chebyshev tail the acceptance
        test measures (identity by default).  Callers who solve for an
        auxiliary unknown but interpolate a derived quantity pass the
        derivation here, so pieces are refined for what is actually
        stored.
    """
    if not problem.a < problem.b:
        raise ValueError("need a < b")
    if problem.boundary_kind == "terminal":
        a, b = problem.a, problem.b
        accept_r = None
        if accept_values is not None:
            accept_r = lambda s, y: accept_values(a + b - s[::-1], y[::-1])
        pieces = _solve_initial(_reflected(problem), n, eps, max_stack, accept_r)
        flipped = []
        for grid, y, yp, ypp in reversed(pieces):
            g = cheb_nodes(n, a + b - grid.b, a + b - grid.a)
            flipped.append((g, y[::-1].copy(), -yp[::-1], ypp[::-1].copy()))
        pieces = flipped
    elif problem.boundary_kind == "initial":
        pieces = _solve_initial(problem, n, eps, max_stack, accept_values)
    else:
        raise ValueError(f"unknown boundary kind {problem.boundary_kind!r}")

    breakpoints = np.array([g.a for g, *_ in pieces] + [pieces[-1][0].b])
    mk = lambda k: PiecewiseChebFn(
        breakpoints=breakpoints,
        pieces=tuple(UnivariateExpansion(g, vals[k]) for g, *vals in pieces),
    )
    return OdeSolution(y=mk(0), yp=mk(1), ypp=mk(2))
