"""Grids, snapshot matrices and their assembly, noise, averaging and storage."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .errors import ConfigError, DataIOError, GridMismatchError, MalformedFileError, ShapeMismatchError
from .spectral import (
    CoefficientFamily,
    EigenFamily,
    axis_expansions,
    eigenfunction_eval,
    eigenvalue,
    expansion_1d,
    required_modes,
)

# noise is drawn in fixed blocks of columns so a column's noise depends only on (seed, column)
NOISE_BLOCK = 1024
# refuse to materialize factored matrices beyond this many entries (~1.6 GB)
MAX_DENSE_ENTRIES = 200_000_000


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    if nodes.size == 1:
        return np.ones(1)
    d = np.diff(nodes)
    w = np.empty_like(nodes)
    w[0] = d[0] / 2
    w[-1] = d[-1] / 2
    w[1:-1] = (d[:-1] + d[1:]) / 2
    return w


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SpaceGrid:
    """Tensor grid with trapezoid weights; nodes are ordered x-major (C order)."""

    axes: tuple[np.ndarray, ...]
    axis_weights: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        axes = tuple(_frozen(a) for a in self.axes)
        if len(axes) not in (1, 2):
            raise ConfigError("space grids are 1D or 2D")
        for a in axes:
            if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0):
                raise ConfigError("axis nodes must be strictly increasing with at least two nodes")
        if self.axis_weights:
            ws = tuple(_frozen(w) for w in self.axis_weights)
            if len(ws) != len(axes) or any(w.shape != a.shape for w, a in zip(ws, axes)):
                raise ConfigError("one weight per axis node is required")
        else:
            ws = tuple(_frozen(trapezoid_weights(a)) for a in axes)
        if any(np.any(w <= 0) for w in ws):
            raise ConfigError("quadrature weights must be positive")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "axis_weights", ws)

    @classmethod
    def uniform(cls, lengths, counts) -> "SpaceGrid":
        lengths = tuple(np.atleast_1d(lengths))
        counts = tuple(np.atleast_1d(counts))
        if len(counts) == 1 and len(lengths) > 1:
            counts = counts * len(lengths)
        return cls(tuple(np.linspace(0.0, float(L), int(n)) for L, n in zip(lengths, counts)))

    @classmethod
    def for_family(cls, family: EigenFamily, nodes: int = 1001) -> "SpaceGrid":
        return cls.uniform(family.lengths, (nodes,) * family.dimension)

    @property
    def dimension(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def weights(self) -> np.ndarray:
        if "_w" not in self.__dict__:
            w = self.axis_weights[0]
            for other in self.axis_weights[1:]:
                w = np.multiply.outer(w, other).ravel()
            object.__setattr__(self, "_w", _frozen(w))
        return self.__dict__["_w"]

    @property
    def sqrt_weights(self) -> np.ndarray:
        if "_sw" not in self.__dict__:
            object.__setattr__(self, "_sw", _frozen(np.sqrt(self.weights)))
        return self.__dict__["_sw"]

    @property
    def measure(self) -> float:
        return float(np.prod([w.sum() for w in self.axis_weights]))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(float(a[-1] - a[0]) for a in self.axes)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Flattened node coordinates, one array per axis."""
        if self.dimension == 1:
            return (self.axes[0],)
        X, Y = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        return (X.ravel(), Y.ravel())

    def inner(self, a, b) -> float:
        return float(np.dot(self.weights * np.asarray(a), np.asarray(b)))

    def norm(self, a) -> float:
        a = np.asarray(a)
        return float(np.linalg.norm(self.sqrt_weights * a))

    def matches(self, other: "SpaceGrid") -> bool:
        if self is other:
            return True
        if self.shape != other.shape:
            return False
        return all(
            np.allclose(a, b, rtol=1e-12, atol=1e-14) and np.allclose(wa, wb, rtol=1e-12, atol=0)
            for a, b, wa, wb in zip(self.axes, other.axes, self.axis_weights, other.axis_weights)
        )

    def to_meta(self) -> dict:
        return {
            "dimension": self.dimension,
            "axis_nodes": [a.tolist() for a in self.axes],
            "axis_weights": [w.tolist() for w in self.axis_weights],
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "SpaceGrid":
        try:
            axes = [np.asarray(a, dtype=float) for a in meta["axis_nodes"]]
            if int(meta["dimension"]) != len(axes):
                raise MalformedFileError("dimension does not match the number of axes")
            aw = meta.get("axis_weights")
            grid = cls(tuple(axes), tuple(np.asarray(w, dtype=float) for w in aw) if aw else ())
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFileError(f"bad grid metadata: {exc}") from exc
        if "weights" in meta and len(meta["weights"]) != grid.size:
            raise ShapeMismatchError(f"{len(meta['weights'])} weights for {grid.size} nodes")
        return grid


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray
    spacing: str = "explicit"

    def __post_init__(self):
        t = _frozen(np.atleast_1d(self.times))
        if t.ndim != 1 or t.size < 1:
            raise ConfigError("time grid needs at least one sample")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("times must be strictly increasing")
        if t[0] < 0 or not np.all(np.isfinite(t)):
            raise ConfigError("times must be finite and non-negative")
        if self.spacing not in ("uniform", "log", "explicit"):
            raise ConfigError(f"unknown spacing {self.spacing!r}")
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, t0: float, t1: float, count: int) -> "TimeGrid":
        _check_span(t0, t1, count)
        return cls(np.linspace(t0, t1, int(count)), "uniform")

    @classmethod
    def log(cls, t0: float, t1: float, count: int) -> "TimeGrid":
        _check_span(t0, t1, count)
        return cls(np.geomspace(t0, t1, int(count)), "log")

    @classmethod
    def with_step(cls, t0: float, t1: float, dt: float) -> "TimeGrid":
        """Uniform grid t0, t0 + dt, ... not exceeding t1."""
        if dt <= 0:
            raise ConfigError("time step must be positive")
        count = int(math.floor((t1 - t0) / dt * (1 + 1e-12))) + 1
        return cls(t0 + dt * np.arange(count), "uniform")

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def count(self) -> int:
        return int(self.times.size)

    @property
    def dt(self) -> float:
        if self.spacing != "uniform":
            raise ConfigError("dt is only defined for uniform grids")
        return (self.t1 - self.t0) / (self.count - 1) if self.count > 1 else 0.0


def _check_span(t0, t1, count):
    if not (t1 > t0 > 0):
        raise ConfigError(f"need t1 > t0 > 0, got [{t0}, {t1}]")
    if int(count) < 2:
        raise ConfigError("need at least two time samples")


@dataclass(frozen=True, eq=False)
class SnapshotMatrix:
    """Samples u(x_i, tau_j): rows are space nodes, columns time samples.

    Separable 2D data may be held as per-axis ``factors`` (A, B) with
    ``u(x_i, y_k, tau_j) = A[i, j] * B[k, j]``; ``values`` is then built on
    first access.
    """

    space_grid: SpaceGrid
    time_grid: TimeGrid
    values_: np.ndarray | None = None
    provenance: str = "clean"
    factors: tuple[np.ndarray, np.ndarray] | None = None
    seed: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if (self.values_ is None) == (self.factors is None):
            raise ConfigError("give exactly one of values or factors")
        if self.values_ is not None:
            v = _frozen(self.values_)
            if v.shape != (self.space_grid.size, self.time_grid.count):
                raise ShapeMismatchError(
                    f"values {v.shape} vs grid ({self.space_grid.size}, {self.time_grid.count})"
                )
            if not np.all(np.isfinite(v)):
                raise ConfigError("snapshot values must be finite")
            object.__setattr__(self, "values_", v)
        else:
            A, B = (_frozen(f) for f in self.factors)
            if self.space_grid.dimension != 2 or A.shape != (self.space_grid.shape[0], self.time_grid.count) or B.shape != (
                self.space_grid.shape[1],
                self.time_grid.count,
            ):
                raise ShapeMismatchError("factor shapes do not match the grids")
            object.__setattr__(self, "factors", (A, B))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.space_grid.size, self.time_grid.count)

    @property
    def is_factored(self) -> bool:
        return self.factors is not None

    @property
    def values(self) -> np.ndarray:
        if self.values_ is not None:
            return self.values_
        if "dense" not in self._cache:
            if self.shape[0] * self.shape[1] > MAX_DENSE_ENTRIES:
                raise ConfigError(f"refusing to materialize a {self.shape} matrix; use factored operations")
            A, B = self.factors
            self._cache["dense"] = _frozen(np.einsum("ij,kj->ikj", A, B).reshape(self.shape))
        return self._cache["dense"]

    def columns(self, start: int, stop: int) -> np.ndarray:
        if self.values_ is not None:
            return self.values_[:, start:stop]
        A, B = self.factors
        return np.einsum("ij,kj->ikj", A[:, start:stop], B[:, start:stop]).reshape(self.shape[0], -1)

    def column_norms(self) -> np.ndarray:
        """Weighted L2 norm of every column."""
        if self.factors is not None:
            A, B = self.factors
            wx, wy = self.space_grid.axis_weights
            return np.sqrt((wx @ A**2) * (wy @ B**2))
        return np.sqrt(self.space_grid.weights @ self.values_**2)


# -- assembly -------------------------------------------------------------------


def _check_family_grid(family: EigenFamily, sg: SpaceGrid) -> None:
    if family.dimension != sg.dimension:
        raise GridMismatchError(f"{family.kind} is {family.dimension}D but the grid is {sg.dimension}D")
    for a, L in zip(sg.axes, family.lengths):
        if a[0] < -1e-12 or a[-1] > L + 1e-12:
            raise GridMismatchError(f"grid axis [{a[0]:g}, {a[-1]:g}] leaves the domain [0, {L:g}]")


def _time_chunks(times: np.ndarray, chunk: int):
    order = np.argsort(times, kind="stable")
    for s in range(0, times.size, chunk):
        yield order[s : s + chunk]


def _assemble_1d(family, coeffs, x, times, tol, chunk=256) -> np.ndarray:
    out = np.empty((x.size, times.size))
    if times.size == 0:
        return out
    nmax = required_modes(family, coeffs, float(times.min()), tol)
    full = expansion_1d(family, coeffs, nmax)
    phi = full.basis(family, x)
    for cols in _time_chunks(times, chunk):
        t = times[cols]
        n = required_modes(family, coeffs, float(t.min()), tol)
        k = len(expansion_1d(family, coeffs, n).indices) if coeffs.rule != "explicit" else len(full.indices)
        amp = full.coefficients[:k, None] * np.exp(-np.outer(full.rates[:k], t))
        out[:, cols] = phi[:, :k] @ amp
    return out


def _assemble_factors(family, coeffs, sg: SpaceGrid, times, tol, chunk=256):
    x, y = sg.axes
    M, N = required_modes(family, coeffs, float(times.min()), tol)
    cx, rx, cy, ry = axis_expansions(family, coeffs, M, N)
    sx = np.sin(np.pi * np.outer(x, np.arange(1, M + 1)))
    sy = np.sin(family.y_wavenumber * np.outer(y, np.arange(1, N + 1)))
    A = np.empty((x.size, times.size))
    B = np.empty((y.size, times.size))
    for cols in _time_chunks(times, chunk):
        t = times[cols]
        m, n = required_modes(family, coeffs, float(t.min()), tol)
        A[:, cols] = sx[:, :m] @ (cx[:m, None] * np.exp(-np.outer(rx[:m], t)))
        B[:, cols] = sy[:, :n] @ (cy[:n, None] * np.exp(-np.outer(ry[:n], t)))
    return A, B


def _assemble_explicit_2d(family, coeffs, sg: SpaceGrid, times) -> np.ndarray:
    X, Y = sg.coordinates()
    idx = [i for i, _ in coeffs.terms]
    c = np.array([v for _, v in coeffs.terms])
    lam = np.array([eigenvalue(family, i) for i in idx])
    phi = np.stack([eigenfunction_eval(family, i, (X, Y)) for i in idx], axis=1)
    return phi @ (c[:, None] * np.exp(-np.outer(lam, times)))


def assemble(
    family: EigenFamily,
    coeffs: CoefficientFamily,
    sg: SpaceGrid,
    tg: TimeGrid,
    tol: float = 1e-15,
) -> SnapshotMatrix:
    """Sample the trajectory on ``sg`` x ``tg``; entries are truncated expansions.

    Separable 2D products come back factored.
    """
    if tol <= 0:
        raise ConfigError("assembly tolerance must be positive")
    _check_family_grid(family, sg)
    times = tg.times
    if family.dimension == 1:
        return SnapshotMatrix(sg, tg, _assemble_1d(family, coeffs, sg.axes[0], times, tol))
    if coeffs.rule == "explicit":
        return SnapshotMatrix(sg, tg, _assemble_explicit_2d(family, coeffs, sg, times))
    return SnapshotMatrix(sg, tg, factors=_assemble_factors(family, coeffs, sg, times, tol))


def field_on_grid(family: EigenFamily, coeffs: CoefficientFamily, sg: SpaceGrid, t: float, tol: float = 1e-15):
    """One snapshot as a flat vector over the grid nodes."""
    m = assemble(family, coeffs, sg, TimeGrid(np.array([t])), tol)
    return np.array(m.columns(0, 1)[:, 0])


def eigenmode_on_grid(family: EigenFamily, idx, sg: SpaceGrid, tau: float = 0.0) -> np.ndarray:
    """e^{-mu tau} phi(x) sampled on the grid nodes."""
    _check_family_grid(family, sg)
    return math.exp(-eigenvalue(family, idx) * tau) * np.asarray(eigenfunction_eval(family, idx, sg.coordinates() if sg.dimension == 2 else sg.axes[0]))


# -- noise ----------------------------------------------------------------------


def noise_block(seed: int, first: int, count: int, rows: int, amplitude: float) -> np.ndarray:
    """U(-amplitude, amplitude) noise for columns [first, first + count)."""
    out = np.empty((rows, count))
    col = first
    while col < first + count:
        blk = col // NOISE_BLOCK
        gen = np.random.Generator(np.random.Philox(key=int(seed) + (blk << 64)))
        draws = gen.uniform(-amplitude, amplitude, (NOISE_BLOCK, rows))
        lo = col - blk * NOISE_BLOCK
        hi = min(NOISE_BLOCK, first + count - blk * NOISE_BLOCK)
        out[:, col - first : col - first + hi - lo] = draws[lo:hi].T
        col += hi - lo
    return out


def add_noise(m: SnapshotMatrix, amplitude: float, seed: int) -> SnapshotMatrix:
    """Perturb every entry by an independent U(-amplitude, amplitude) draw."""
    if m.provenance != "clean":
        raise ConfigError(f"noise goes on clean data, this matrix is {m.provenance}")
    if amplitude < 0:
        raise ConfigError("noise amplitude must be non-negative")
    values = m.values
    if amplitude > 0:
        values = values + noise_block(seed, 0, m.shape[1], m.shape[0], amplitude)
    return SnapshotMatrix(m.space_grid, m.time_grid, np.array(values), provenance=f"noisy({amplitude:g})", seed=seed)


# -- streaming and window averaging ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ColumnStream:
    """Columns on a uniform fine time grid, produced lazily in time order."""

    space_grid: SpaceGrid
    time_grid: TimeGrid
    chunks: Callable[[], Iterator[np.ndarray]]
    noise: float = 0.0

    @classmethod
    def from_matrix(cls, m: SnapshotMatrix, chunk: int = 1024) -> "ColumnStream":
        def gen():
            for s in range(0, m.shape[1], chunk):
                yield m.columns(s, min(s + chunk, m.shape[1]))

        return cls(m.space_grid, m.time_grid, gen)


def trajectory_stream(
    family: EigenFamily,
    coeffs: CoefficientFamily,
    sg: SpaceGrid,
    tg: TimeGrid,
    noise: float = 0.0,
    seed: int | None = None,
    tol: float = 1e-15,
    chunk: int = NOISE_BLOCK,
) -> ColumnStream:
    """Stream (optionally noisy) trajectory columns without building the matrix."""
    if family.dimension != 1:
        raise ConfigError("streaming is implemented for 1D families")
    if noise > 0 and seed is None:
        raise ConfigError("noisy streams need a seed")
    _check_family_grid(family, sg)
    x = sg.axes[0]

    def gen():
        for s in range(0, tg.count, chunk):
            e = min(s + chunk, tg.count)
            cols = _assemble_1d(family, coeffs, x, tg.times[s:e], tol)
            if noise > 0:
                cols += noise_block(seed, s, e - s, x.size, noise)
            yield cols

    return ColumnStream(sg, tg, gen, noise)


class _Reader:
    def __init__(self, it: Iterator[np.ndarray]):
        self._it = it
        self._buf: np.ndarray | None = None
        self.pos = 0

    def take(self, n: int) -> np.ndarray:
        parts = []
        while n > 0:
            if self._buf is None or self._buf.shape[1] == 0:
                try:
                    self._buf = np.asarray(next(self._it))
                except StopIteration:
                    raise ConfigError("stream ended before the last averaging window") from None
                continue
            k = min(n, self._buf.shape[1])
            parts.append(self._buf[:, :k])
            self._buf = self._buf[:, k:]
            n -= k
            self.pos += k
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)


def window_starts(fine: TimeGrid, output_times) -> np.ndarray:
    times = output_times.times if isinstance(output_times, TimeGrid) else np.asarray(output_times, dtype=float)
    dt = fine.dt
    k = np.rint((times - fine.t0) / dt).astype(np.int64)
    if np.any(np.abs(fine.t0 + k * dt - times) > 1e-6 * dt):
        raise ConfigError("output times must sit on the fine grid")
    return k


def averaged_output_grid(fine: TimeGrid, S: int, stride: int = 1) -> TimeGrid:
    """Fine-grid times (every ``stride``-th) whose windows fit in the fine span."""
    last = fine.count - 1 - S
    if last < 0:
        raise ConfigError(f"window of {S + 1} samples exceeds the {fine.count}-sample fine grid")
    k = np.arange(0, last + 1, max(int(stride), 1))
    return TimeGrid(fine.times[k], "uniform" if k.size > 1 else "explicit")


def window_average(source, S: int, output_times, chunk: int = 1024) -> SnapshotMatrix:
    """Average each output sample over S + 1 consecutive fine samples.

    ``v(x, tau_j) = (1/(S+1)) sum_{s=0}^{S} u(x, tau_{j+s})``. The fine
    columns are consumed once, in order; the fine matrix is never formed.
    Window sums are built from prefix and suffix sums inside blocks of S + 1
    fine samples, so no partial sums are ever subtracted.
    """
    stream = source if isinstance(source, ColumnStream) else ColumnStream.from_matrix(source)
    fine = stream.time_grid
    if fine.spacing != "uniform":
        raise ConfigError("window averaging needs a uniform fine grid")
    S = int(S)
    if S < 0:
        raise ConfigError("window parameter S must be non-negative")
    L = S + 1
    starts = window_starts(fine, output_times)
    if starts.size == 0:
        raise ConfigError("no output times")
    if np.any(np.diff(starts) <= 0):
        raise ConfigError("output times must be strictly increasing")
    if starts[0] < 0 or starts[-1] + L > fine.count:
        raise ConfigError(f"averaging window [{S}] exceeds the fine span of {fine.count} samples")
    out_tg = output_times if isinstance(output_times, TimeGrid) else TimeGrid(np.asarray(output_times, dtype=float))

    rows = stream.space_grid.size
    end = int(starts[-1] + L)
    cuts = np.unique(np.concatenate([starts, starts + L, np.arange(0, end + 1, L)]))
    out = np.empty((rows, starts.size))
    reader = _Reader(iter(stream.chunks()))

    first_block = int(starts[0] // L)
    last_block = int((end - 1) // L)
    reader.take(first_block * L) if first_block else None
    prev = None  # (block, cut offsets, suffix sums)
    starts_block = starts // L
    for b in range(first_block, last_block + 1):
        lo, hi = b * L, min((b + 1) * L, end)
        cb = cuts[(cuts >= lo) & (cuts < hi)]
        segs = np.zeros((rows, cb.size))
        pos = lo
        while pos < hi:
            c = min(chunk, hi - pos)
            cols = reader.take(c)
            ids = np.searchsorted(cb, np.arange(pos, pos + c), side="right") - 1
            heads = np.concatenate([[0], np.flatnonzero(np.diff(ids)) + 1])
            segs[:, ids[heads]] += np.add.reduceat(cols, heads, axis=1)
            pos += c
        suffix = np.cumsum(segs[:, ::-1], axis=1)[:, ::-1]
        prefix = np.concatenate([np.zeros((rows, 1)), np.cumsum(segs, axis=1)], axis=1)
        if prev is not None:
            pb, pcb, psuffix = prev
            for j in np.flatnonzero(starts_block == pb):
                i = int(np.searchsorted(pcb, starts[j]))
                off = int(starts[j] - pb * L)
                tail = prefix[:, int(np.searchsorted(cb, lo + off))] if off else 0.0
                out[:, j] = psuffix[:, i] + tail
        prev = (b, cb, suffix)
    pb, pcb, psuffix = prev
    for j in np.flatnonzero(starts_block == pb):
        out[:, j] = psuffix[:, int(np.searchsorted(pcb, starts[j]))]
    out /= L
    return SnapshotMatrix(stream.space_grid, out_tg, out, provenance=f"averaged({S})")


def averaging_gain(rate: float, S: int, dt: float) -> float:
    """(1/(S+1)) (1 - e^{-(S+1) rate dt}) / (1 - e^{-rate dt}), the decay-weighted window mean."""
    if rate * dt == 0:
        return 1.0
    return float(-np.expm1(-(S + 1) * rate * dt) / (-np.expm1(-rate * dt)) / (S + 1))


# -- persistence ----------------------------------------------------------------


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def save_matrix(m: SnapshotMatrix, path) -> None:
    """CSV of the values (row-major, no header) plus ``<path>.meta.json``."""
    path = Path(path)
    try:
        np.savetxt(path, m.values, fmt="%.17g", delimiter=",")
        meta = m.space_grid.to_meta()
        meta.update(
            times=m.time_grid.times.tolist(),
            time_spacing=m.time_grid.spacing,
            provenance=m.provenance,
            seed=m.seed,
        )
        _meta_path(path).write_text(json.dumps(meta))
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def read_meta(path) -> dict:
    path = Path(path)
    mp = _meta_path(path)
    try:
        return json.loads(mp.read_text())
    except FileNotFoundError as exc:
        raise DataIOError(f"missing metadata sidecar {mp}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{mp}: {exc}") from exc


def read_csv_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except FileNotFoundError as exc:
        raise DataIOError(f"missing file {path}") from exc
    except ValueError as exc:
        raise MalformedFileError(f"{path}: {exc}") from exc


def load_matrix(path) -> SnapshotMatrix:
    meta = read_meta(path)
    values = read_csv_matrix(path)
    grid = SpaceGrid.from_meta(meta)
    try:
        tg = TimeGrid(np.asarray(meta["times"], dtype=float), meta.get("time_spacing", "explicit"))
    except KeyError as exc:
        raise MalformedFileError(f"{path}: metadata lacks {exc}") from exc
    if values.shape != (grid.size, tg.count):
        raise ShapeMismatchError(f"{path}: data is {values.shape}, metadata says ({grid.size}, {tg.count})")
    return SnapshotMatrix(grid, tg, values, provenance=meta.get("provenance", "clean"), seed=meta.get("seed"))
