"""Runtime evaluator: load the table once, dispatch each (nu, t) query.

Branch map (nu in [0, 1e9], t > 0):

1. nu >= 2, sqrt(nu^2-1/4) <= t <= 1000 nu: A1/C1 -> alpha, alpha', then
   J = sqrt(2/(pi t)) cos(alpha)/sqrt(alpha'), Y likewise with sin.
2. nu >= 2, nu/1000 <= t < sqrt(nu^2-1/4): B1/B2 -> logs -> guarded exp.
3. nu >= 2, t < nu/1000: Debye logarithm forms (N = 18).
4. nu < 2, 2 <= t <= 1000: A2/C2, as branch 1.
5. nu < 2, t < 2, oscillatory: power series J and Y, alpha' from the
   Wronskian form, alpha = arctan(Y/J) (no unwrapping needed: the first
   zero of J exceeds 2 for every order, so alpha is in (-pi/2, pi/2)).
6. nu < 2, t < 2, nonoscillatory: series logarithm forms.

Queries beyond the table's outer edge (t > 1000 max(nu, 1)) are served by
the 30-term phase asymptotics, whose error is far below binary64 there;
this extends the documented range rather than rejecting.

Near-integer orders in branches 5-6 leave the compiled path and use the
extended-precision interpolation stencil.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from besseltab import _kernels
from besseltab.expansions import (
    DELTA_INT,
    _u_float,
    log_neg_y as series_log_neg_y,
    series_j,
    series_y,
)
from besseltab.table import BesselTable, TableSection, deserialize

__all__ = ["EvalResult", "Evaluator", "init"]

NU_MAX = 1.0e9
_DEBYE_N = 18


@dataclass(frozen=True)
class EvalResult:
    """Region-tagged output of one evaluation.

    j and y are always populated (0.0 / -inf on under/overflow); alpha and
    alphap only in the oscillatory region; log_j and log_neg_y only in the
    nonoscillatory region.
    """

    nu: float
    t: float
    region: str
    j: float
    y: float
    alpha: float | None = None
    alphap: float | None = None
    log_j: float | None = None
    log_neg_y: float | None = None


class _PackedSection(NamedTuple):
    xbp: np.ndarray
    ybp: np.ndarray
    M: np.ndarray
    row_ptr: np.ndarray
    rows_m: np.ndarray
    coeff_ptr: np.ndarray
    coeffs: np.ndarray
    ny: int


def _pack_section(sec: TableSection) -> _PackedSection:
    M = np.array([r.M for r in sec.rects], dtype=np.int64)
    row_ptr = np.zeros(len(sec.rects) + 1, dtype=np.int64)
    coeff_ptr = np.zeros(len(sec.rects) + 1, dtype=np.int64)
    rows = []
    coeffs = []
    for k, r in enumerate(sec.rects):
        rows.append(np.asarray(r.row_lengths, dtype=np.int64))
        coeffs.append(np.asarray(r.coeffs, dtype=float))
        row_ptr[k + 1] = row_ptr[k] + len(r.row_lengths)
        coeff_ptr[k + 1] = coeff_ptr[k] + len(r.coeffs)
    return _PackedSection(
        xbp=np.ascontiguousarray(sec.x_breakpoints, dtype=float),
        ybp=np.ascontiguousarray(sec.y_breakpoints, dtype=float),
        M=M,
        row_ptr=row_ptr,
        rows_m=np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64),
        coeff_ptr=coeff_ptr,
        coeffs=np.concatenate(coeffs) if coeffs else np.zeros(0),
        ny=len(sec.y_breakpoints) - 1,
    )


def _pack_u_polys(N: int):
    polys = _u_float(N)
    degs = np.array([len(p) - 1 for p in polys], dtype=np.int64)
    width = int(degs.max()) + 1
    coeffs = np.zeros((N + 1, width))
    for j, p in enumerate(polys):
        coeffs[j, : len(p)] = p
    return coeffs, degs


class Evaluator:
    """Immutable once constructed; safe for concurrent readers."""

    def __init__(self, source):
        if isinstance(source, BesselTable):
            table = source
        elif hasattr(source, "read"):
            table = deserialize(source)
        else:
            with open(os.fspath(source), "rb") as fh:
                table = deserialize(fh)
        self.table = table
        self._packed = tuple(
            _pack_section(table.section(name))
            for name in ("A1", "C1", "A2", "C2", "B1", "B2")
        )
        self._u_coeffs, self._u_degs = _pack_u_polys(_DEBYE_N)
        self._args = sum((tuple(p) for p in self._packed), ()) + (
            self._u_coeffs,
            self._u_degs,
        )
        self._buf = np.empty(6)
        # compile the kernels now so the first real call is cheap
        self.eval(3.0, 5.0)
        self.eval(1.0, 500.0)

    def info(self) -> dict:
        return {
            "sections": {
                name: {
                    "rects": len(self.table.section(name).rects),
                    "stored_coeffs": self.table.section(name).n_stored(),
                    "x_intervals": len(self.table.section(name).x_breakpoints) - 1,
                    "y_intervals": len(self.table.section(name).y_breakpoints) - 1,
                }
                for name in ("A1", "C1", "A2", "C2", "B1", "B2")
            },
            "order": self.table.order,
            "precision": self.table.precision,
            "eps_solve": self.table.eps_solve,
            "eps_disc": self.table.eps_disc,
            "eps_compress": self.table.eps_compress,
        }

    def _validate(self, nu: float, t: float):
        if not (isinstance(nu, (int, float)) and isinstance(t, (int, float))):
            raise TypeError("nu and t must be real numbers")
        if math.isnan(nu) or math.isnan(t):
            raise ValueError("NaN input")
        if nu < 0.0 or nu > NU_MAX:
            raise ValueError(f"order out of range [0, 1e9]: {nu}")
        if not t > 0.0:
            raise ValueError(f"argument must be positive: {t}")

    def eval(self, nu: float, t: float) -> EvalResult:
        """Evaluate one (nu, t) query; see the module doc for the branch
        map and the under/overflow conventions."""
        self._validate(nu, t)
        nu = float(nu)
        t = float(t)
        buf = self._buf
        buf[:] = np.nan
        code = _kernels.eval_core(nu, t, *self._args, buf)
        if code == -1:
            return self._near_integer_small(nu, t)
        if code == 1:
            return EvalResult(
                nu=nu,
                t=t,
                region="oscillatory",
                j=buf[0],
                y=buf[1],
                alpha=buf[2],
                alphap=buf[3],
            )
        return EvalResult(
            nu=nu,
            t=t,
            region="nonoscillatory",
            j=buf[0],
            y=buf[1],
            log_j=buf[4],
            log_neg_y=buf[5],
        )

    def eval_many(self, nus, ts):
        """Vectorized evaluation.

        Returns (regions, values) where values[:, k] holds
        (j, y, alpha, alphap, log_j, log_neg_y) and regions is 1 for
        oscillatory, 0 for nonoscillatory.  Near-integer small-argument
        points are finished on the Python path.
        """
        nus = np.ascontiguousarray(nus, dtype=float)
        ts = np.ascontiguousarray(ts, dtype=float)
        if nus.shape != ts.shape:
            raise ValueError("shape mismatch")
        regions = np.empty(len(nus), dtype=np.int64)
        out = np.empty((len(nus), 6))
        _kernels.eval_many_core(nus, ts, *self._args, regions, out)
        for i in np.nonzero(regions == -1)[0]:
            r = self._near_integer_small(float(nus[i]), float(ts[i]))
            if r.region == "oscillatory":
                regions[i] = 1
                out[i] = (r.j, r.y, r.alpha, r.alphap, np.nan, np.nan)
            else:
                regions[i] = 0
                out[i] = (r.j, r.y, np.nan, np.nan, r.log_j, r.log_neg_y)
        return regions, out

    def _near_integer_small(self, nu: float, t: float) -> EvalResult:
        oscillatory = nu <= 0.5 or t * t >= nu * nu - 0.25
        if oscillatory:
            jv = series_j(nu, t)
            yv = series_y(nu, t)
            alphap = 2.0 / (math.pi * t) / (jv * jv + yv * yv)
            alpha = math.atan2(yv, jv)
            return EvalResult(
                nu=nu, t=t, region="oscillatory", j=jv, y=yv, alpha=alpha, alphap=alphap
            )
        lj = series_j(nu, t, with_log=True)
        ly = series_log_neg_y(nu, t)
        j = math.exp(lj) if lj > -700.0 else 0.0
        y = -math.exp(ly) if ly < 700.0 else -math.inf
        return EvalResult(
            nu=nu, t=t, region="nonoscillatory", j=j, y=y, log_j=lj, log_neg_y=ly
        )


def init(source) -> Evaluator:
    """Load a table (path, stream, or in-memory table) into an evaluator."""
    return Evaluator(source)
