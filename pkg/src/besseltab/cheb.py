"""Chebyshev approximation core.

Grids, value/coefficient transforms, barycentric evaluation, spectral
integration, bivariate tensor expansions with per-row epsilon compression,
and an adaptive interval-subdivision discretizer.  Everything here works on
grids of at most ~51 points, so all transforms are direct dense O(n^2)
matrix applications (no FFT).

Conventions
-----------
A grid of *order* n has n+1 nodes rho_j = -cos(pi*j/n) mapped affinely to
[a, b], in ascending order.  An order-n expansion is

    f(x) = sum''_{k=0..n} b_k T_k(xhat),    xhat in [-1, 1],

where the double prime halves the first and last terms.  Coefficients are
computed from nodal values by the discrete orthogonality relation

    b_k = (2/n) sum''_{l=0..n} T_k(rho_l) f(rho_l).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ChebGrid",
    "UnivariateExpansion",
    "PiecewiseChebFn",
    "BivariateExpansion",
    "CompressedBivariateExpansion",
    "DiscretizationError",
    "cheb_nodes",
    "coeffs_from_values",
    "barycentric_eval",
    "spectral_integrate",
    "spectral_integration_matrix",
    "bivariate_expand",
    "compress",
    "eval_compressed",
    "adaptive_discretize",
    "locate",
]

# Relative slack for "inside the interval" checks; evaluation is never
# extrapolated beyond this.
_EDGE_SLACK = 1e-12

# Denominator guard: below this, a coefficient vector is treated as
# numerically zero and the Delta/Lambda ratio tests accept the piece.
_UNDERFLOW_FLOOR = 1e-300


class DiscretizationError(RuntimeError):
    """Adaptive discretization exceeded its interval budget."""


def _reference_nodes(n: int) -> np.ndarray:
    # sin form keeps the grid exactly antisymmetric: node[j] == -node[n-j].
    j = np.arange(n + 1)
    return np.sin(0.5 * np.pi * (2 * j - n) / n)


@lru_cache(maxsize=None)
def _reference_nodes_cached(n: int) -> np.ndarray:
    nodes = _reference_nodes(n)
    nodes.setflags(write=False)
    return nodes


@dataclass(frozen=True)
class ChebGrid:
    """Order-n Chebyshev grid (n+1 nodes) on [a, b], ascending."""

    n: int
    a: float
    b: float
    nodes: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)


def cheb_nodes(n: int, a: float, b: float) -> ChebGrid:
    """Build the (n+1)-point Chebyshev grid on [a, b].

    Parameters
    ----------
    n : int
        Grid order, n >= 1.
    a, b : float
        Interval endpoints, a < b.

    Returns
    -------
    ChebGrid
        nodes[j] = -((b-a)/2) cos(pi j / n) + (b+a)/2, ascending, with
        nodes[0] == a and nodes[n] == b exactly.
    """
    if n < 1:
        raise ValueError(f"grid order must be >= 1, got {n}")
    if not a < b:
        raise ValueError(f"invalid interval: a={a!r} must be < b={b!r}")
    ref = _reference_nodes_cached(n)
    nodes = 0.5 * (b - a) * ref + 0.5 * (b + a)
    nodes[0] = a
    nodes[-1] = b
    return ChebGrid(n=n, a=float(a), b=float(b), nodes=nodes)


@lru_cache(maxsize=None)
def _coeff_matrix(n: int) -> np.ndarray:
    """Matrix C with (C @ values) = Sigma''-convention coefficients b_k."""
    ref = _reference_nodes_cached(n)
    k = np.arange(n + 1)
    # T_k at the ascending reference nodes.
    tk = np.cos(np.outer(k, np.arccos(np.clip(ref, -1.0, 1.0))))
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    C = (2.0 / n) * tk * w
    C.setflags(write=False)
    return C


@lru_cache(maxsize=None)
def _coeff_matrix_ld(n: int) -> np.ndarray:
    """Extended-precision (80-bit) twin of :func:`_coeff_matrix`.

    The Delta/Lambda refinement tests compare tail coefficients against
    tolerances near 1e-17; a binary64 transform injects tail noise of about
    eps*||f|| which would swamp them, so the decision coefficients are
    computed in long double (values stay binary64).
    """
    ld = np.longdouble
    j = np.arange(n + 1, dtype=ld)
    ref = np.sin(ld(0.5) * np.pi * (2 * j - n) / ld(n))
    k = np.arange(n + 1, dtype=ld)
    tk = np.cos(np.outer(k, np.arccos(np.clip(ref, ld(-1), ld(1)))))
    w = np.ones(n + 1, dtype=ld)
    w[0] = w[-1] = 0.5
    C = (ld(2) / ld(n)) * tk * w
    C.setflags(write=False)
    return C


def decision_coeffs(values: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients of `values` via the extended-precision
    transform, returned as binary64 (used only for Delta/Lambda tests)."""
    values = np.asarray(values, dtype=np.longdouble)
    n = values.shape[-1] - 1
    return (values @ _coeff_matrix_ld(n).T).astype(float)


@lru_cache(maxsize=None)
def _eval_matrix(n: int, ncols: int) -> np.ndarray:
    """Matrix E with E[j, l] = T_l(rho_j), rho on the order-n grid."""
    ref = _reference_nodes_cached(n)
    l = np.arange(ncols)
    E = np.cos(np.outer(np.arccos(np.clip(ref, -1.0, 1.0)), l))
    E.setflags(write=False)
    return E


def coeffs_from_values(values: np.ndarray) -> np.ndarray:
    """Coefficients b_0..b_n of the order-n expansion interpolating `values`.

    The values must be listed at the ascending nodes of the order-n grid
    (n = len(values) - 1).  The returned coefficients follow the halved
    first/last (Sigma'') convention.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1] - 1
    if n < 1:
        raise ValueError("need at least two values")
    return values @ _coeff_matrix(n).T


def values_from_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`coeffs_from_values` (Sigma'' convention)."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1] - 1
    c = coeffs.copy()
    c[..., 0] *= 0.5
    c[..., -1] *= 0.5
    return c @ _eval_matrix(n, n + 1).T


def clenshaw(coeffs: np.ndarray, xhat) -> np.ndarray:
    """Evaluate sum'' b_k T_k(xhat) by the Clenshaw recurrence.

    `xhat` may be a scalar or array in [-1, 1].
    """
    coeffs = np.asarray(coeffs, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    n = coeffs.shape[0] - 1
    b1 = np.zeros_like(xhat)
    b2 = np.zeros_like(xhat)
    twox = 2.0 * xhat
    for k in range(n, 0, -1):
        ck = coeffs[k] if k < n else 0.5 * coeffs[n]
        b1, b2 = twox * b1 - b2 + ck, b1
    return xhat * b1 - b2 + 0.5 * coeffs[0]


@dataclass(frozen=True)
class UnivariateExpansion:
    """Function on [a, b] stored by its values at Chebyshev nodes.

    Coefficients are derived lazily; barycentric interpolation works from
    the values directly and is exact at the nodes.
    """

    grid: ChebGrid
    values: np.ndarray
    _coeffs: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.values.shape != (self.grid.n + 1,):
            raise ValueError("values/grid size mismatch")
        self.values.setflags(write=False)

    @property
    def coeffs(self) -> np.ndarray:
        if not self._coeffs:
            c = coeffs_from_values(self.values)
            c.setflags(write=False)
            self._coeffs.append(c)
        return self._coeffs[0]

    @property
    def a(self) -> float:
        return self.grid.a

    @property
    def b(self) -> float:
        return self.grid.b

    def __call__(self, x):
        return barycentric_eval(self, x)


def from_function(f: Callable, n: int, a: float, b: float) -> UnivariateExpansion:
    """Sample f on the order-n grid on [a, b]."""
    grid = cheb_nodes(n, a, b)
    vals = np.asarray([float(f(t)) for t in grid.nodes])
    return UnivariateExpansion(grid, vals)


@lru_cache(maxsize=None)
def _bary_weights(n: int) -> np.ndarray:
    # Second-kind Chebyshev barycentric weights: (-1)^j, halved at the ends.
    w = np.ones(n + 1)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    w.setflags(write=False)
    return w


def barycentric_eval(fn: UnivariateExpansion, x):
    """Evaluate the interpolant at x (scalar or array) inside [a, b].

    Returns the stored value bit-exactly when x coincides with a node.
    Raises for x outside [a, b] (beyond a ~1e-12 relative slack; evaluation
    is never extrapolated).
    """
    scalar = np.isscalar(x) or np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    grid = fn.grid
    slack = _EDGE_SLACK * (abs(grid.a) + abs(grid.b) + (grid.b - grid.a))
    if np.any(x < grid.a - slack) or np.any(x > grid.b + slack):
        raise ValueError(
            f"evaluation point outside [{grid.a}, {grid.b}]"
        )
    x = np.clip(x, grid.a, grid.b)
    w = _bary_weights(grid.n)
    diff = x[:, None] - grid.nodes[None, :]
    exact = diff == 0.0
    hit = exact.any(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = w / diff
        out = (ratios @ fn.values) / ratios.sum(axis=1)
    if hit.any():
        idx = exact[hit].argmax(axis=1)
        out[hit] = fn.values[idx]
    return float(out[0]) if scalar else out


@lru_cache(maxsize=None)
def _antideriv_matrix(n: int) -> np.ndarray:
    """Map plain T-coefficients a_0..a_n to antiderivative coefficients.

    Output has degree n+1 (plain convention, constant term left at zero):
    int T_0 = T_1, int T_1 = T_2/4, int T_k = (T_{k+1}/(k+1) - T_{k-1}/(k-1))/2.
    """
    D = np.zeros((n + 2, n + 1))
    D[1, 0] = 1.0
    if n >= 1:
        D[2, 1] = 0.25
    for k in range(2, n + 1):
        D[k + 1, k] += 0.5 / (k + 1)
        D[k - 1, k] -= 0.5 / (k - 1)
    D.setflags(write=False)
    return D


@lru_cache(maxsize=None)
def _integration_matrix_ref(n: int) -> np.ndarray:
    """Spectral integration matrix on [-1, 1] (values -> values of the
    running integral from -1), (n+1) x (n+1)."""
    C = _coeff_matrix(n).copy()
    # Sigma'' -> plain coefficients.
    C[0] *= 0.5
    C[-1] *= 0.5
    D = _antideriv_matrix(n)
    E = _eval_matrix(n, n + 2)
    S = E @ (D @ C)
    S -= S[0]  # integral vanishes at the left endpoint exactly
    S.setflags(write=False)
    return S


def spectral_integration_matrix(n: int, a: float, b: float) -> np.ndarray:
    """The (n+1)x(n+1) map from nodal values of f to nodal values of
    g(x) = int_a^x f on the order-n grid on [a, b]."""
    return (0.5 * (b - a)) * _integration_matrix_ref(n)


def spectral_integrate(fn: UnivariateExpansion) -> UnivariateExpansion:
    """Antidifferentiate: returns g with g(x) = int_a^x f, g(a) = 0 exactly."""
    S = spectral_integration_matrix(fn.grid.n, fn.grid.a, fn.grid.b)
    return UnivariateExpansion(fn.grid, S @ fn.values)


# ---------------------------------------------------------------------------
# Bivariate expansions
# ---------------------------------------------------------------------------

Rect = tuple[float, float, float, float]  # (xa, xb, ya, yb)


def _to_hat(lo: float, hi: float, v):
    return (2.0 * v - (hi + lo)) / (hi - lo)


@dataclass(frozen=True)
class BivariateExpansion:
    """Order-n tensor Chebyshev expansion on a rectangle.

    coeffs[i, j] multiplies T_i(xhat) T_j(yhat) under the double-Sigma''
    convention (first/last halved in each index).
    """

    rect: Rect
    order: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs.setflags(write=False)

    def __call__(self, x: float, y: float) -> float:
        xa, xb, ya, yb = self.rect
        tx = _cheb_t_vector(self.order, _to_hat(xa, xb, x))
        ty = _cheb_t_vector(self.order, _to_hat(ya, yb, y))
        w = np.ones(self.order + 1)
        w[0] = w[-1] = 0.5
        return float((w * tx) @ self.coeffs @ (w * ty))


def _cheb_t_vector(n: int, xhat: float) -> np.ndarray:
    t = np.empty(n + 1)
    t[0] = 1.0
    if n >= 1:
        t[1] = xhat
    for k in range(2, n + 1):
        t[k] = 2.0 * xhat * t[k - 1] - t[k - 2]
    return t


def bivariate_grid(rect: Rect, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor grid nodes (x_l, y_k) for sampling f on the rectangle."""
    xa, xb, ya, yb = rect
    return cheb_nodes(n, xa, xb).nodes, cheb_nodes(n, ya, yb).nodes


def bivariate_expand(rect: Rect, samples: np.ndarray) -> BivariateExpansion:
    """Tensor Chebyshev coefficients from samples F[l, k] = f(x_l, y_k).

    b_ij = (4/n^2) sum''_l sum''_k T_i(rho_l) T_j(rho_k) F[l, k].
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] != samples.shape[1]:
        raise ValueError("samples must be a square (n+1) x (n+1) tensor")
    n = samples.shape[0] - 1
    C = _coeff_matrix(n)
    return BivariateExpansion(rect=rect, order=n, coeffs=C @ samples @ C.T)


@dataclass(frozen=True)
class CompressedBivariateExpansion:
    """Epsilon-compressed tensor expansion on one rectangle.

    Retains x-degrees 0..M and, for each retained i, y-degrees 0..m_i
    (m_i = -1 marks an empty row).  The stored coefficients carry the
    1 / 1/2 / 1/4 edge weights, so evaluation is a plain double sum.
    """

    rect: Rect
    order: int
    M: int
    row_lengths: np.ndarray  # m_i for i = 0..M, entries in {-1, 0, .., n}
    coeffs: np.ndarray  # concatenated weighted rows, row i has m_i + 1 entries

    def __post_init__(self):
        self.row_lengths.setflags(write=False)
        self.coeffs.setflags(write=False)

    @property
    def n_stored(self) -> int:
        return int(self.coeffs.size)

    def __call__(self, x: float, y: float) -> float:
        return eval_compressed(self, x, y)


def compress(exp: BivariateExpansion, eps: float) -> CompressedBivariateExpansion:
    """Drop coefficients below eps (absolute) and fold in the edge weights.

    M is the least index such that |b_ij| < eps for every i > M (M = n when
    no such index exists); m_i is defined analogously per row.  M = 0 and
    empty rows (m_i = -1) are permitted.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    B = exp.coeffs
    n = exp.order
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    big = np.abs(B) >= eps
    row_any = big.any(axis=1)
    M = int(np.max(np.nonzero(row_any)[0])) if row_any.any() else 0
    row_lengths = np.empty(M + 1, dtype=np.int64)
    rows = []
    for i in range(M + 1):
        nz = np.nonzero(big[i])[0]
        m_i = int(nz[-1]) if nz.size else -1
        row_lengths[i] = m_i
        if m_i >= 0:
            rows.append(w[i] * w[: m_i + 1] * B[i, : m_i + 1])
    coeffs = np.concatenate(rows) if rows else np.empty(0)
    return CompressedBivariateExpansion(
        rect=exp.rect, order=n, M=M, row_lengths=row_lengths, coeffs=coeffs
    )


def eval_compressed(c: CompressedBivariateExpansion, x: float, y: float) -> float:
    """Evaluate the compressed expansion at (x, y) inside its rectangle."""
    xa, xb, ya, yb = c.rect
    sx = _EDGE_SLACK * (abs(xa) + abs(xb) + (xb - xa))
    sy = _EDGE_SLACK * (abs(ya) + abs(yb) + (yb - ya))
    if not (xa - sx <= x <= xb + sx) or not (ya - sy <= y <= yb + sy):
        raise ValueError(f"point ({x}, {y}) outside rectangle {c.rect}")
    xhat = min(1.0, max(-1.0, _to_hat(xa, xb, x)))
    yhat = min(1.0, max(-1.0, _to_hat(ya, yb, y)))
    # Inner Clenshaw along each retained row, then outer Clenshaw in x.
    r = np.zeros(c.M + 1)
    pos = 0
    for i in range(c.M + 1):
        m_i = int(c.row_lengths[i])
        if m_i < 0:
            continue
        r[i] = _clenshaw_plain(c.coeffs[pos : pos + m_i + 1], yhat)
        pos += m_i + 1
    return _clenshaw_plain(r, xhat)


def _clenshaw_plain(c: np.ndarray, xhat: float) -> float:
    # Plain sum c_k T_k (no end halving; weights already folded in).
    b1 = 0.0
    b2 = 0.0
    twox = 2.0 * xhat
    for k in range(len(c) - 1, 0, -1):
        b1, b2 = twox * b1 - b2 + c[k], b1
    return xhat * b1 - b2 + (c[0] if len(c) else 0.0)


# ---------------------------------------------------------------------------
# Piecewise representation and adaptive discretization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseChebFn:
    """Function on [gamma_0, gamma_m] stored piecewise on Chebyshev grids.

    Interval membership is half-open [gamma_j, gamma_{j+1}) with the final
    interval closed; interior breakpoints resolve to the right piece.
    """

    breakpoints: np.ndarray
    pieces: tuple

    def __post_init__(self):
        self.breakpoints.setflags(write=False)
        if len(self.pieces) != len(self.breakpoints) - 1:
            raise ValueError("pieces/breakpoints mismatch")

    @property
    def a(self) -> float:
        return float(self.breakpoints[0])

    @property
    def b(self) -> float:
        return float(self.breakpoints[-1])

    def piece_index(self, x: float) -> int:
        return locate(self.breakpoints, x)

    def __call__(self, x):
        scalar = np.isscalar(x) or np.ndim(x) == 0
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(xs)
        idx = np.searchsorted(self.breakpoints, xs, side="right") - 1
        idx = np.clip(idx, 0, len(self.pieces) - 1)
        for j in np.unique(idx):
            sel = idx == j
            out[sel] = barycentric_eval(self.pieces[j], xs[sel])
        return float(out[0]) if scalar else out


def locate(breakpoints: np.ndarray, x: float) -> int:
    """Index of the interval containing x (half-open, last one closed)."""
    bp = np.asarray(breakpoints, dtype=float)
    lo, hi = bp[0], bp[-1]
    slack = _EDGE_SLACK * (abs(lo) + abs(hi) + (hi - lo))
    if not (lo - slack <= x <= hi + slack):
        raise ValueError(f"{x} outside [{lo}, {hi}]")
    i = int(np.searchsorted(bp, x, side="right")) - 1
    return min(max(i, 0), len(bp) - 2)


def tail_and_scale(coeffs: np.ndarray) -> tuple[float, float]:
    """(max upper-half |b_k|, max overall |b_k|); upper half starts at
    ceil(n/2) + 1."""
    n = len(coeffs) - 1
    start = n // 2 + 1 if n % 2 == 0 else (n + 1) // 2 + 1
    return float(np.max(np.abs(coeffs[start:]))), float(np.max(np.abs(coeffs)))


def tail_ratio(coeffs: np.ndarray) -> float:
    """Upper-half over overall max coefficient magnitude (the Delta test).

    Returns 0.0 when the denominator underflows (numerically zero vector).
    """
    num, den = tail_and_scale(coeffs)
    if den < _UNDERFLOW_FLOOR:
        return 0.0
    return num / den


def value_noise_floor(n: int, vmax: float, rel_noise: float) -> float:
    """Absolute tail-coefficient magnitude attributable to rounding of the
    sampled values alone.

    Splitting an interval cannot push tail coefficients below this level:
    iid value perturbations of size rel_noise*vmax produce tail
    coefficients of roughly sqrt(2/n)*rel_noise*vmax.  A 4x safety factor
    is included.
    """
    return 4.0 * math.sqrt(2.0 / n) * rel_noise * vmax


def adaptive_discretize(
    f: Callable,
    a: float,
    b: float,
    n: int,
    eps: float,
    max_intervals: int = 300,
    vectorized: bool = False,
    rel_noise: float = float(np.finfo(float).eps),
) -> PiecewiseChebFn:
    """Adaptively partition [a, b] so each piece's order-n expansion has a
    relatively negligible coefficient tail.

    A candidate piece is accepted when Delta < eps, where Delta is the max
    upper-half coefficient magnitude over the max coefficient magnitude,
    or when the tail sits at the rounding floor of the sampled values
    themselves (splitting cannot reduce that floor; see
    :func:`value_noise_floor`).  Failed pieces split at their midpoint.
    Raises :class:`DiscretizationError` when the to-process list exceeds
    `max_intervals` (functions whose evaluation is ill-conditioned on part
    of [a, b], e.g. near a zero, typically blow past any budget).

    Set `vectorized=True` when f accepts ndarray arguments; `rel_noise` is
    the relative accuracy of f's values (machine epsilon by default).
    """
    if not a < b:
        raise ValueError("need a < b")
    if not eps > 0:
        raise ValueError("eps must be positive")
    todo = [(float(a), float(b))]
    done = []
    while todo:
        if len(todo) > max_intervals:
            raise DiscretizationError(
                f"more than {max_intervals} pending subintervals on [{a}, {b}]"
            )
        lo, hi = todo.pop()
        if hi - lo <= 8 * np.finfo(float).eps * (abs(lo) + abs(hi)):
            raise DiscretizationError(
                f"refinement reached a degenerate interval near {lo} "
                f"(evaluation of f is likely ill-conditioned there)"
            )
        grid = cheb_nodes(n, lo, hi)
        if vectorized:
            vals = np.asarray(f(grid.nodes), dtype=float)
        else:
            vals = np.asarray([float(f(t)) for t in grid.nodes])
        num, den = tail_and_scale(decision_coeffs(vals))
        floor = value_noise_floor(n, float(np.max(np.abs(vals))), rel_noise)
        if den < _UNDERFLOW_FLOOR or num < eps * den or num <= floor:
            done.append(UnivariateExpansion(grid, vals))
        else:
            mid = 0.5 * (lo + hi)
            todo.append((lo, mid))
            todo.append((mid, hi))
    done.sort(key=lambda p: p.grid.a)
    breakpoints = np.array([p.grid.a for p in done] + [done[-1].grid.b])
    return PiecewiseChebFn(breakpoints=breakpoints, pieces=tuple(done))
