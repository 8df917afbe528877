"""Construction, storage and lookup of the precomputed coefficient table.

The table covers four regions with six piecewise compressed bivariate
Chebyshev expansions:

* A1, C1: alpha_nu(t)/nu and alpha_nu'(t)/nu on x = 1/nu in [1e-9, 1/2],
  y = (t - sqrt(nu^2 - 1/4)) / (1000 nu - sqrt(nu^2 - 1/4)) in [0, 1];
* B1, B2: -1 + log(J_nu(t) sqrt(t))/nu and +1 + log(-Y_nu(t) sqrt(t))/nu
  on the same x range, y = (t - nu/1000)/(sqrt(nu^2 - 1/4) - nu/1000);
* A2, C2: alpha_nu(t) and alpha_nu'(t) unscaled on x = nu/2 in [0, 1],
  y = (t - 2)/998 (orders below 2, arguments in [2, 1000]).

The build runs the per-order phase pipeline on 50-point Chebyshev grids of
x over the ten dyadic-ish intervals of the order grid, merges per-order
adaptive discretizations into unified y-breakpoints, samples each
rectangle on a 50 x 50 tensor grid and compresses the expansions at a
relative threshold.

The binary format is little-endian throughout: magic "BESLTBL1", a u32
format version, build metadata, six named sections (breakpoint arrays,
then per-rectangle compressed coefficient payloads), and a trailing
CRC-32 of everything after the magic.
"""

from __future__ import annotations

import io
import math
import struct
import time
import zlib
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

import numpy as np

from besseltab.cheb import (
    CompressedBivariateExpansion,
    PiecewiseChebFn,
    adaptive_discretize,
    bivariate_expand,
    cheb_nodes,
    compress,
    eval_compressed,
    locate,
)
from besseltab.phase import PhaseSolution, compute_phase, phase_solution

__all__ = [
    "BuildConfig",
    "NuGrid",
    "TableSection",
    "BesselTable",
    "TableFormatError",
    "build_table",
    "unify_partitions",
    "serialize",
    "deserialize",
    "eval_A1C1",
    "eval_A2C2",
    "eval_B1B2",
]

MAGIC = b"BESLTBL1"
FORMAT_VERSION = 1

# x = 1/nu interval endpoints of the order grid, ascending.
NU_GRID_BREAKPOINTS = (
    1e-9,
    1e-8,
    1e-7,
    1e-6,
    1e-5,
    1e-4,
    1e-3,
    1e-2,
    1.0 / 50.0,
    1.0 / 10.0,
    0.5,
)


class TableFormatError(RuntimeError):
    """Bad magic, version, truncation or checksum in a table stream."""


class TableBuildError(RuntimeError):
    """A stage of the table build failed."""


@dataclass(frozen=True)
class BuildConfig:
    """Build parameters; the defaults produce the shipped binary64 table.

    eps_solve/eps_disc are the working-precision equivalents of the
    reference build's 1e-20/1e-17 (unreachable in binary64).  eps_compress
    is relative to each rectangle's largest coefficient.
    """

    nu_breakpoints: tuple = NU_GRID_BREAKPOINTS
    nodes_per_interval: int = 50
    order: int = 49
    solver_n: int = 49
    eps_solve: float = 5e-16
    eps_disc: float = 5e-16
    eps_compress: float = 2.5e-16
    disc_noise: float = 5e-16
    small_t_lo: float = 2.0
    small_t_hi: float = 1000.0
    workers: int | None = None


@dataclass(frozen=True)
class NuGrid:
    """Per-interval x-grids of the order parameter x = 1/nu."""

    breakpoints: np.ndarray
    x_nodes: tuple  # one ascending array of nodes per interval

    @property
    def n_intervals(self) -> int:
        return len(self.breakpoints) - 1

    def all_nodes(self) -> np.ndarray:
        return np.concatenate(self.x_nodes)


def make_nu_grid(config: BuildConfig) -> NuGrid:
    bp = np.asarray(config.nu_breakpoints, dtype=float)
    order = config.nodes_per_interval - 1
    nodes = tuple(
        cheb_nodes(order, bp[i], bp[i + 1]).nodes for i in range(len(bp) - 1)
    )
    return NuGrid(breakpoints=bp, x_nodes=nodes)


def unify_partitions(partitions: Sequence[np.ndarray], tol: float = 1e-12) -> np.ndarray:
    """Union of breakpoint sets, deduplicated within `tol` absolute.

    Every interval of every input partition is a union of output
    intervals; shared endpoints merge to a single representative.
    """
    pts = np.sort(np.concatenate([np.asarray(p, dtype=float) for p in partitions]))
    keep = [pts[0]]
    for v in pts[1:]:
        if v - keep[-1] > tol:
            keep.append(v)
    merged = np.array(keep)
    merged[0] = min(p[0] for p in partitions)
    merged[-1] = max(p[-1] for p in partitions)
    return merged


@dataclass(frozen=True)
class TableSection:
    """One stored function: its breakpoint grids and per-rectangle
    compressed expansions, row-major over (x-interval, y-interval)."""

    name: str
    x_breakpoints: np.ndarray
    y_breakpoints: np.ndarray
    rects: tuple  # CompressedBivariateExpansion, len = nx * ny

    def rect_at(self, x: float, y: float) -> CompressedBivariateExpansion:
        i = locate(self.x_breakpoints, x)
        j = locate(self.y_breakpoints, y)
        return self.rects[i * (len(self.y_breakpoints) - 1) + j]

    def n_stored(self) -> int:
        return sum(r.n_stored for r in self.rects)


@dataclass(frozen=True)
class BesselTable:
    """The full precomputed artifact."""

    version: int
    eps_solve: float
    eps_disc: float
    eps_compress: float
    order: int
    precision: str
    sections: dict

    def section(self, name: str) -> TableSection:
        return self.sections[name]

    def stored_values(self) -> dict:
        # coefficients plus the stored index metadata (M and row lengths)
        out = {}
        for name, sec in self.sections.items():
            out[name] = sum(
                r.n_stored + 2 + len(r.row_lengths) for r in sec.rects
            )
        return out


# ---------------------------------------------------------------------------
# Region coordinate maps
# ---------------------------------------------------------------------------


def _turning_point(nu: float) -> float:
    return math.sqrt(nu * nu - 0.25)


def osc_t_from_y(nu: float, y) -> float:
    a = _turning_point(nu)
    return a + (1000.0 * nu - a) * y


def osc_y_from_t(nu: float, t: float) -> float:
    a = _turning_point(nu)
    return (t - a) / (1000.0 * nu - a)


def nonosc_t_from_y(nu: float, y) -> float:
    a = _turning_point(nu)
    t0 = nu / 1000.0
    return t0 + (a - t0) * y


def nonosc_y_from_t(nu: float, t: float) -> float:
    a = _turning_point(nu)
    t0 = nu / 1000.0
    return (t - t0) / (a - t0)


# ---------------------------------------------------------------------------
# Build
# ---------------------------------------------------------------------------


def _phase_worker(args):
    x, eps, n = args
    nu = 1.0 / x
    try:
        return phase_solution(nu, eps=eps, n=n)
    except Exception as exc:  # propagate with the offending order attached
        raise TableBuildError(f"phase pipeline failed at nu={nu}: {exc}") from exc


def _small_phase_worker(args):
    x, eps, n, t_lo, t_hi = args
    nu = 2.0 * x
    try:
        alpha, alphap, _ = compute_phase(nu, eps=eps, n=n, interval=(t_lo, t_hi))
        return alpha, alphap
    except Exception as exc:
        raise TableBuildError(f"small-order phase failed at nu={nu}: {exc}") from exc


def _parallel_map(fn, items, workers):
    if workers is None:
        import os

        workers = os.cpu_count() or 1
    if workers <= 1 or len(items) <= 2:
        return [fn(it) for it in items]
    import multiprocessing as mp_mod

    with mp_mod.get_context("fork").Pool(workers) as pool:
        return pool.map(fn, items, chunksize=4)


def _discretize_on_unit(f, n, eps, noise):
    return adaptive_discretize(
        f, 0.0, 1.0, n=n, eps=eps, vectorized=True, rel_noise=noise
    )


def _build_pair(
    name_pairs, x_breaks, x_nodes_per_int, y_breaks, samplers, order, eps_compress
):
    """Sample and compress a family of functions over the rectangle grid.

    samplers[k](interval_index, x_nodes, y_nodes) must return the
    (n+1) x (n+1) tensor of values of function k.
    """
    ny = len(y_breaks) - 1
    sections = {name: [] for name in name_pairs}
    for i in range(len(x_breaks) - 1):
        xs = x_nodes_per_int[i]
        for j in range(ny):
            ys = cheb_nodes(order, y_breaks[j], y_breaks[j + 1]).nodes
            rect = (x_breaks[i], x_breaks[i + 1], y_breaks[j], y_breaks[j + 1])
            for name in name_pairs:
                F = samplers[name](i, xs, ys)
                exp = bivariate_expand(rect, F)
                cutoff = eps_compress * max(np.max(np.abs(exp.coeffs)), 1e-300)
                sections[name].append(compress(exp, cutoff))
    return sections


def build_table(config: BuildConfig = BuildConfig()) -> BesselTable:
    """Run the full four-stage build and return the table."""
    grid = make_nu_grid(config)
    order = config.order

    # stage one: the phase pipeline at every sampled order
    tasks = [(float(x), config.eps_solve, config.solver_n) for x in grid.all_nodes()]
    solutions: list[PhaseSolution] = _parallel_map(_phase_worker, tasks, config.workers)

    # stage two: per-order discretizations of the y-profiles, then unify
    osc_parts = []
    nonosc_parts = []
    for ps in solutions:
        nu = ps.nu
        f = lambda y: ps.alpha(osc_t_from_y(nu, y))
        osc_parts.append(
            _discretize_on_unit(
                f, order, config.eps_disc, config.disc_noise
            ).breakpoints
        )
        g = lambda y: ps.log_j(nonosc_t_from_y(nu, y))
        h = lambda y: ps.log_negy(nonosc_t_from_y(nu, y))
        nonosc_parts.append(
            unify_partitions(
                [
                    _discretize_on_unit(
                        g, order, config.eps_disc, config.disc_noise
                    ).breakpoints,
                    _discretize_on_unit(
                        h, order, config.eps_disc, config.disc_noise
                    ).breakpoints,
                ]
            )
        )
    a_breaks = unify_partitions(osc_parts)
    b_breaks = unify_partitions(nonosc_parts)

    # stages three and four: tensor sampling + compression per rectangle
    by_interval = [
        solutions[i * config.nodes_per_interval : (i + 1) * config.nodes_per_interval]
        for i in range(grid.n_intervals)
    ]

    def sample_A1(i, xs, ys):
        sols = by_interval[i]
        return np.array(
            [s.alpha(osc_t_from_y(s.nu, ys)) / s.nu for s in sols]
        )

    def sample_C1(i, xs, ys):
        sols = by_interval[i]
        return np.array(
            [s.alphap(osc_t_from_y(s.nu, ys)) / s.nu for s in sols]
        )

    def sample_B1(i, xs, ys):
        sols = by_interval[i]
        return np.array(
            [-1.0 + s.log_j(nonosc_t_from_y(s.nu, ys)) / s.nu for s in sols]
        )

    def sample_B2(i, xs, ys):
        sols = by_interval[i]
        return np.array(
            [1.0 + s.log_negy(nonosc_t_from_y(s.nu, ys)) / s.nu for s in sols]
        )

    big = _build_pair(
        ("A1", "C1"),
        grid.breakpoints,
        grid.x_nodes,
        a_breaks,
        {"A1": sample_A1, "C1": sample_C1},
        order,
        config.eps_compress,
    )
    big.update(
        _build_pair(
            ("B1", "B2"),
            grid.breakpoints,
            grid.x_nodes,
            b_breaks,
            {"B1": sample_B1, "B2": sample_B2},
            order,
            config.eps_compress,
        )
    )

    # small-order region (A2/C2): adaptive x-partition by probing, shared
    # y-partition, phase solves on [small_t_lo, small_t_hi]
    small = _build_small_order(config)

    sections = {
        "A1": TableSection("A1", grid.breakpoints, a_breaks, tuple(big["A1"])),
        "C1": TableSection("C1", grid.breakpoints, a_breaks, tuple(big["C1"])),
        "A2": small["A2"],
        "C2": small["C2"],
        "B1": TableSection("B1", grid.breakpoints, b_breaks, tuple(big["B1"])),
        "B2": TableSection("B2", grid.breakpoints, b_breaks, tuple(big["B2"])),
    }
    return BesselTable(
        version=FORMAT_VERSION,
        eps_solve=config.eps_solve,
        eps_disc=config.eps_disc,
        eps_compress=config.eps_compress,
        order=order,
        precision="binary64",
        sections=sections,
    )


def _build_small_order(config: BuildConfig) -> dict:
    order = config.order
    t_lo, t_hi = config.small_t_lo, config.small_t_hi
    cache: dict = {}

    def solve_at(x: float):
        if x not in cache:
            cache[x] = _small_phase_worker(
                (x, config.eps_solve, config.solver_n, t_lo, t_hi)
            )
        return cache[x]

    def t_from_y(y):
        return t_lo + (t_hi - t_lo) * y

    # x-direction partition: probe alpha at a few spread-out y values
    probe_ys = (0.0, 0.0337, 0.21, 0.55, 1.0)
    x_parts = []
    for yp in probe_ys:
        tp = float(t_from_y(yp))

        def fx(xv):
            out = np.empty_like(np.atleast_1d(xv))
            for k, x in enumerate(np.atleast_1d(xv)):
                out[k] = solve_at(float(x))[0](tp)
            return out

        x_parts.append(
            adaptive_discretize(
                fx, 0.0, 1.0, n=order, eps=config.eps_disc,
                vectorized=True, rel_noise=config.disc_noise,
            ).breakpoints
        )
    x_breaks = unify_partitions(x_parts)

    # y-direction partition: unify adaptive discretizations over all x nodes
    x_nodes_per_int = tuple(
        cheb_nodes(order, x_breaks[i], x_breaks[i + 1]).nodes
        for i in range(len(x_breaks) - 1)
    )
    y_parts = []
    for xs in x_nodes_per_int:
        for x in xs:
            alpha, _ = solve_at(float(x))
            y_parts.append(
                _discretize_on_unit(
                    lambda y: alpha(t_from_y(y)),
                    order,
                    config.eps_disc,
                    config.disc_noise,
                ).breakpoints
            )
    y_breaks = unify_partitions(y_parts)

    def sample_A2(i, xs, ys):
        return np.array([solve_at(float(x))[0](t_from_y(ys)) for x in xs])

    def sample_C2(i, xs, ys):
        return np.array([solve_at(float(x))[1](t_from_y(ys)) for x in xs])

    built = _build_pair(
        ("A2", "C2"),
        x_breaks,
        x_nodes_per_int,
        y_breaks,
        {"A2": sample_A2, "C2": sample_C2},
        order,
        config.eps_compress,
    )
    return {
        "A2": TableSection("A2", x_breaks, y_breaks, tuple(built["A2"])),
        "C2": TableSection("C2", x_breaks, y_breaks, tuple(built["C2"])),
    }


# ---------------------------------------------------------------------------
# Lookup
# ---------------------------------------------------------------------------


def eval_A1C1(table: BesselTable, nu: float, t: float) -> tuple[float, float]:
    """(alpha_nu(t), alpha_nu'(t)) from the large-order oscillatory
    sections; valid for nu >= 2, sqrt(nu^2-1/4) <= t <= 1000 nu."""
    x = 1.0 / nu
    y = min(max(osc_y_from_t(nu, t), 0.0), 1.0)
    a1 = table.section("A1").rect_at(x, y)
    c1 = table.section("C1").rect_at(x, y)
    return nu * eval_compressed(a1, x, y), nu * eval_compressed(c1, x, y)


def eval_A2C2(table: BesselTable, nu: float, t: float) -> tuple[float, float]:
    """(alpha_nu(t), alpha_nu'(t)) for nu < 2, 2 <= t <= 1000 (unscaled)."""
    x = nu / 2.0
    y = (t - 2.0) / 998.0
    y = min(max(y, 0.0), 1.0)
    a2 = table.section("A2").rect_at(x, y)
    c2 = table.section("C2").rect_at(x, y)
    return eval_compressed(a2, x, y), eval_compressed(c2, x, y)


def eval_B1B2(table: BesselTable, nu: float, t: float) -> tuple[float, float]:
    """(log J_nu(t), log(-Y_nu(t))) from the nonoscillatory sections;
    valid for nu >= 2, nu/1000 <= t < sqrt(nu^2 - 1/4)."""
    x = 1.0 / nu
    y = min(max(nonosc_y_from_t(nu, t), 0.0), 1.0)
    b1 = table.section("B1").rect_at(x, y)
    b2 = table.section("B2").rect_at(x, y)
    log_j = nu * (eval_compressed(b1, x, y) + 1.0) - 0.5 * math.log(t)
    log_neg_y = nu * (eval_compressed(b2, x, y) - 1.0) - 0.5 * math.log(t)
    return log_j, log_neg_y


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_SECTION_ORDER = ("A1", "C1", "A2", "C2", "B1", "B2")


def _w_u32(buf, v):
    buf.write(struct.pack("<I", v))


def _w_f64s(buf, arr):
    buf.write(np.asarray(arr, dtype="<f8").tobytes())


def serialize(table: BesselTable, sink: BinaryIO) -> None:
    """Write the table in the binary format described in the module doc."""
    body = io.BytesIO()
    _w_u32(body, table.version)
    _w_f64s(body, [table.eps_solve, table.eps_disc, table.eps_compress])
    _w_u32(body, table.order)
    _w_u32(body, 0 if table.precision == "binary64" else 1)
    _w_u32(body, len(_SECTION_ORDER))
    for name in _SECTION_ORDER:
        sec = table.sections[name]
        body.write(name.encode("ascii").ljust(4, b"\0"))
        _w_u32(body, len(sec.x_breakpoints))
        _w_f64s(body, sec.x_breakpoints)
        _w_u32(body, len(sec.y_breakpoints))
        _w_f64s(body, sec.y_breakpoints)
        _w_u32(body, len(sec.rects))
        for r in sec.rects:
            _w_u32(body, r.M)
            # row lengths are stored as m_i + 1 (0 marks an empty row)
            _w_u32(body, len(r.row_lengths))
            body.write(
                (np.asarray(r.row_lengths, dtype=np.int64) + 1)
                .astype("<u4")
                .tobytes()
            )
            _w_u32(body, len(r.coeffs))
            _w_f64s(body, r.coeffs)
    payload = body.getvalue()
    sink.write(MAGIC)
    sink.write(payload)
    sink.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TableFormatError("truncated table stream")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64s(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(float)

    def u32s(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * n), dtype="<u4").astype(np.int64)


def deserialize(source: BinaryIO) -> BesselTable:
    """Read a table stream; raises :class:`TableFormatError` on a bad
    magic, version, truncation or checksum."""
    raw = source.read()
    if len(raw) < len(MAGIC) + 4:
        raise TableFormatError("truncated table stream")
    if raw[: len(MAGIC)] != MAGIC:
        raise TableFormatError("bad magic; not a table file")
    payload, crc_stored = raw[len(MAGIC) : -4], raw[-4:]
    if struct.unpack("<I", crc_stored)[0] != (zlib.crc32(payload) & 0xFFFFFFFF):
        raise TableFormatError("checksum mismatch; table file is corrupted")
    rd = _Reader(payload)
    version = rd.u32()
    if version != FORMAT_VERSION:
        raise TableFormatError(f"unsupported format version {version}")
    eps_solve, eps_disc, eps_compress = rd.f64s(3)
    order = rd.u32()
    precision = "binary64" if rd.u32() == 0 else "extended"
    n_sections = rd.u32()
    sections = {}
    for _ in range(n_sections):
        name = rd.take(4).rstrip(b"\0").decode("ascii")
        xbp = rd.f64s(rd.u32())
        ybp = rd.f64s(rd.u32())
        n_rects = rd.u32()
        nx, ny = len(xbp) - 1, len(ybp) - 1
        if n_rects != nx * ny:
            raise TableFormatError(f"rectangle count mismatch in section {name}")
        rects = []
        for k in range(n_rects):
            M = rd.u32()
            n_rows = rd.u32()
            row_lengths = rd.u32s(n_rows) - 1
            n_coeffs = rd.u32()
            coeffs = rd.f64s(n_coeffs)
            i, j = divmod(k, ny)
            rect = (xbp[i], xbp[i + 1], ybp[j], ybp[j + 1])
            rects.append(
                CompressedBivariateExpansion(
                    rect=rect,
                    order=order,
                    M=M,
                    row_lengths=row_lengths,
                    coeffs=coeffs,
                )
            )
        sections[name] = TableSection(name, xbp, ybp, tuple(rects))
    return BesselTable(
        version=version,
        eps_solve=eps_solve,
        eps_disc=eps_disc,
        eps_compress=eps_compress,
        order=order,
        precision=precision,
        sections=sections,
    )
