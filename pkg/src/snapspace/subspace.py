"""Weighted SVD subspaces, projection errors, canonical angles and sensor fits."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataIOError, GridMismatchError, MalformedFileError, ShapeMismatchError, SingularFitError
from .snapshot import SnapshotMatrix, SpaceGrid, read_csv_matrix
from .spectral import CoefficientFamily, ModeIndex, _rule_1d_coefficient

UNION_DROP = 1e-13
# per-axis factors of separable data are compressed at this relative level
FACTOR_DROP = 1e-15
SIGN_CONVENTION = "largest-magnitude entry positive"


@dataclass(frozen=True, eq=False)
class Subspace:
    """W-orthonormal basis (columns) on ``space_grid``."""

    basis: np.ndarray
    singular_values: np.ndarray
    threshold: float
    space_grid: SpaceGrid
    source_ranks: tuple[int, ...] = ()
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != self.space_grid.size or b.shape[1] < 1:
            raise ShapeMismatchError(f"basis of shape {b.shape} on a {self.space_grid.size}-node grid")
        b.flags.writeable = False
        object.__setattr__(self, "basis", b)
        sv = np.array(self.singular_values, dtype=float)
        sv.flags.writeable = False
        object.__setattr__(self, "singular_values", sv)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def weighted_basis(self) -> np.ndarray:
        """Basis in W^{1/2} coordinates, where it is Euclidean-orthonormal."""
        if "wb" not in self._cache:
            self._cache["wb"] = self.space_grid.sqrt_weights[:, None] * self.basis
        return self._cache["wb"]

    def gram_defect(self) -> float:
        """max |basis^T W basis - I|."""
        Y = self.weighted_basis
        return float(np.abs(Y.T @ Y - np.eye(self.dim)).max())


@dataclass(frozen=True)
class AngleReport:
    sines: tuple[float, ...]
    frobenius: float
    wedin_rhs: float | None = None
    separation: float | None = None
    error_norm: float | None = None
    vacuous: bool | None = None

    @property
    def holds(self) -> bool | None:
        if self.wedin_rhs is None:
            return None
        return self.frobenius <= self.wedin_rhs

    def to_dict(self) -> dict:
        d = {
            "sines": list(self.sines),
            "frobenius": self.frobenius,
            "wedin_rhs": self.wedin_rhs,
            "separation": self.separation,
            "error_norm": self.error_norm,
            "vacuous": self.vacuous,
            "holds": self.holds,
        }
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


# -- SVD helpers ----------------------------------------------------------------


def left_svd(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left singular vectors and values of A; wide inputs go through a QR of A^T."""
    if A.shape[1] > A.shape[0]:
        R = np.linalg.qr(A.T, mode="r")
        P, s, _ = np.linalg.svd(R.T, full_matrices=False)
        return P, s
    P, s, _ = np.linalg.svd(A, full_matrices=False)
    return P, s


class _FactoredLeft:
    """Left singular structure of a separable matrix without materializing it."""

    def __init__(self, m: SnapshotMatrix, block: int = 1000):
        A, B = m.factors
        wx, wy = (np.sqrt(w) for w in m.space_grid.axis_weights)
        self.Qa, Ra = self._compress(wx[:, None] * A)
        self.Qb, Rb = self._compress(wy[:, None] * B)
        ra, rb = Ra.shape[0], Rb.shape[0]
        pieces = []
        for j in range(0, Ra.shape[1], block):
            K = (Ra[:, None, j : j + block] * Rb[None, :, j : j + block]).reshape(ra * rb, -1)
            pieces.append(left_svd(K))
        smax = max(s[0] for _, s in pieces)
        Z = np.hstack([P[:, s > 1e-16 * smax] * s[s > 1e-16 * smax] for P, s in pieces])
        self.P, self.s = left_svd(Z)

    @staticmethod
    def _compress(F):
        Q, s, Vt = np.linalg.svd(F, full_matrices=False)
        r = int(np.sum(s > FACTOR_DROP * s[0])) if s[0] > 0 else 1
        return Q[:, :r], s[:r, None] * Vt[:r]

    def vectors(self, k: int) -> np.ndarray:
        ra, rb = self.Qa.shape[1], self.Qb.shape[1]
        cols = [(self.Qa @ self.P[:, i].reshape(ra, rb) @ self.Qb.T).ravel() for i in range(k)]
        return np.stack(cols, axis=1)


def _weighted_left(m: SnapshotMatrix):
    """(singular values, function k -> first k left vectors in W^{1/2} coordinates)."""
    if m.is_factored:
        f = _FactoredLeft(m)
        return f.s, f.vectors
    P, s = left_svd(m.space_grid.sqrt_weights[:, None] * m.values)
    return s, lambda k: P[:, :k]


def _fix_signs(Y: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(Y), axis=0)
    signs = np.sign(Y[idx, np.arange(Y.shape[1])])
    signs[signs == 0] = 1.0
    return Y * signs


# -- construction ----------------------------------------------------------------


def build_subspace(
    matrices: SnapshotMatrix | Sequence[SnapshotMatrix],
    threshold: float = 1e-12,
    rank: int | None = None,
) -> Subspace:
    """Leading weighted left singular vectors of one or more snapshot matrices.

    Per matrix, vectors with sigma_i >= threshold * sigma_max are kept (or
    exactly ``rank`` of them when given). Several matrices are merged by an
    SVD of the stacked kept vectors, dropping directions below 1e-13.
    """
    if isinstance(matrices, SnapshotMatrix):
        matrices = [matrices]
    matrices = list(matrices)
    if not matrices:
        raise ConfigError("no snapshot matrices given")
    if not (0 < threshold <= 1):
        raise ConfigError(f"threshold must lie in (0, 1], got {threshold}")
    grid = matrices[0].space_grid
    for m in matrices[1:]:
        if not grid.matches(m.space_grid):
            raise GridMismatchError("all matrices must share one space grid")
    kept, sigmas, ranks = [], [], []
    for m in matrices:
        s, vectors = _weighted_left(m)
        if s.size == 0 or s[0] == 0:
            raise ConfigError("zero snapshot matrix")
        if rank is not None:
            if not (1 <= rank <= s.size):
                raise ConfigError(f"rank {rank} outside [1, {s.size}]")
            k = int(rank)
        else:
            k = int(np.sum(s >= threshold * s[0]))
        kept.append(vectors(k))
        sigmas.append(s[:k])
        ranks.append(k)
    if len(kept) == 1:
        Y = kept[0]
    else:
        P, s = left_svd(np.hstack(kept))
        Y = P[:, : int(np.sum(s > UNION_DROP))]
    Y = _fix_signs(Y)
    basis = Y / grid.sqrt_weights[:, None]
    sv = np.sort(np.concatenate(sigmas))[::-1]
    return Subspace(basis, sv, threshold, grid, tuple(ranks))


# -- evaluation --------------------------------------------------------------------


def _as_field(s: Subspace, w) -> np.ndarray:
    w = np.asarray(w)
    if w.shape[0] != s.space_grid.size:
        raise ShapeMismatchError(f"field has {w.shape[0]} values, grid has {s.space_grid.size} nodes")
    return w


def project(s: Subspace, w) -> np.ndarray:
    """P_V w = basis (basis^T W w). Works column-wise on 2D input."""
    w = _as_field(s, w)
    W = s.space_grid.weights
    coeff = s.basis.T @ (W * w.T).T if w.ndim == 2 else s.basis.T @ (W * w)
    return s.basis @ coeff


def relative_error(s: Subspace, w) -> float | np.ndarray:
    """||w - P_V w||_W / ||w||_W; complex fields use the modulus."""
    w = _as_field(s, w)
    sw = s.space_grid.sqrt_weights
    Y = s.weighted_basis
    v = (sw * w.T).T
    r = v - Y @ (Y.T @ v)
    num = np.sqrt(np.sum(np.abs(r) ** 2, axis=0))
    den = np.sqrt(np.sum(np.abs(v) ** 2, axis=0))
    if np.any(den == 0):
        raise ConfigError("relative error of a zero field")
    eta = num / den
    return float(eta) if np.ndim(eta) == 0 else eta


def _residual_sines(Ya: np.ndarray, Yb: np.ndarray) -> np.ndarray:
    R = Yb - Ya @ (Ya.T @ Yb)
    s = np.linalg.svd(R, compute_uv=False)
    return np.clip(s, 0.0, 1.0)


def canonical_angles(a: Subspace, b: Subspace) -> AngleReport:
    """Sines of the canonical angles between two equal-dimension subspaces.

    Taken from the singular values of (I - P_a) B, which keeps small angles
    accurate (sqrt(1 - cos^2) loses half the digits).
    """
    if not a.space_grid.matches(b.space_grid):
        raise GridMismatchError("subspaces live on different grids")
    if a.dim != b.dim:
        raise ConfigError(f"dimension mismatch {a.dim} vs {b.dim}")
    sines = _residual_sines(a.weighted_basis, b.weighted_basis)
    return AngleReport(tuple(float(x) for x in sines), float(np.sqrt(np.sum(sines**2))))


def wedin_report(clean: SnapshotMatrix, noisy: SnapshotMatrix, rank: int) -> AngleReport:
    """Both sides of ||sin Theta||_F <= sqrt(2 rank) / l * ||E||_F for the leading subspaces.

    Everything is measured in W^{1/2}-weighted coordinates. ``vacuous`` is set
    when the separation l does not exceed ||E||_F or the bound cannot be
    below the trivial value sqrt(rank).
    """
    if clean.shape != noisy.shape:
        raise ShapeMismatchError(f"shapes {clean.shape} and {noisy.shape} differ")
    if not clean.space_grid.matches(noisy.space_grid):
        raise GridMismatchError("matrices live on different grids")
    if not (1 <= rank <= min(clean.shape)):
        raise ConfigError(f"rank must be in [1, {min(clean.shape)}]")
    sw = clean.space_grid.sqrt_weights[:, None]
    A = sw * clean.values
    At = sw * noisy.values
    P, s = left_svd(A)
    Pt, st = left_svd(At)
    sines = _residual_sines(P[:, :rank], Pt[:, :rank])
    frob = float(np.sqrt(np.sum(sines**2)))
    e = float(np.linalg.norm(At - A))
    rest = np.concatenate([st[rank:], np.zeros(max(min(A.shape) - st.size, 0))])
    sep = float(s[:rank].min())
    if rest.size:
        sep = min(sep, float(np.abs(s[:rank, None] - rest[None, :]).min()))
    if e == 0:
        rhs = 0.0
    else:
        rhs = math.sqrt(2 * rank) / sep * e if sep > 0 else math.inf
    vacuous = bool(sep <= e or rhs >= math.sqrt(rank)) if e > 0 else False
    return AngleReport(tuple(float(x) for x in sines), frob, rhs, sep, e, vacuous)


# -- multiplicities -------------------------------------------------------------------


@dataclass(frozen=True)
class MultiplicityReport:
    sigma_min: tuple[float, ...]
    pinv_norms: tuple[float, ...]
    rank_deficient: tuple[int, ...]
    fit: dict | None

    def to_dict(self) -> dict:
        inf_safe = [x if math.isfinite(x) else None for x in self.pinv_norms]
        return {
            "sigma_min": list(self.sigma_min),
            "pinv_norms": inf_safe,
            "rank_deficient": list(self.rank_deficient),
            "fit": self.fit,
        }


def fit_growth(n, values, alphas=None) -> dict:
    """Fit log(values) ~ log L + p n^alpha over a grid of alpha (least squares in (log L, p))."""
    n = np.asarray(n, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    if alphas is None:
        alphas = np.linspace(0.0, 3.0, 301)
    best = None
    for a in alphas:
        X = np.stack([np.ones_like(n), n**a], axis=1)
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        res = float(np.sum((X @ coef - y) ** 2))
        # ties (e.g. constant data) go to the smallest alpha
        if best is None or res < best[0] - 1e-12 * (1 + best[0]):
            best = (res, a, coef)
    res, a, (logL, p) = best
    return {"alpha": float(a), "p": float(p), "L": float(math.exp(logL)), "residual": res}


def multiplicity_rank(blocks: Sequence[np.ndarray], indices: Sequence[int] | None = None, rtol: float = 1e-13) -> MultiplicityReport:
    """sigma_min(B_n) and ||B_n^+|| per eigenvalue, plus a growth fit of the latter."""
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    if not blocks:
        raise ConfigError("no coefficient blocks")
    if indices is None:
        indices = list(range(1, len(blocks) + 1))
    smin, norms, bad = [], [], []
    for n, B in zip(indices, blocks):
        if B.shape[1] > B.shape[0]:
            raise ConfigError(f"block {n} has d_n = {B.shape[1]} > D = {B.shape[0]}")
        s = np.linalg.svd(B, compute_uv=False)
        lo = float(s[-1])
        smin.append(lo)
        if s[0] == 0 or lo <= rtol * s[0]:
            norms.append(math.inf)
            bad.append(int(n))
        else:
            norms.append(1.0 / lo)
    ok = [(n, v) for n, v in zip(indices, norms) if math.isfinite(v) and n > 0]
    fit = fit_growth(*zip(*ok)) if len(ok) >= 3 else None
    return MultiplicityReport(tuple(smin), tuple(norms), tuple(bad), fit)


def _coefficient_at(coeffs: CoefficientFamily, idx: ModeIndex) -> float:
    if coeffs.rule == "explicit":
        for i, c in coeffs.terms:
            if i == idx:
                return c
        return 0.0
    if idx.branch == "const":
        return coeffs.constant
    if idx.branch != coeffs.branch:
        return 0.0
    return float(_rule_1d_coefficient(coeffs, np.array([idx.n]))[0])


def periodic_blocks(trajectories: Sequence[CoefficientFamily], nmax: int) -> list[np.ndarray]:
    """B_0, ..., B_nmax for periodic trajectories: rows are trajectories, columns the branches."""
    out = [np.array([[_coefficient_at(c, ModeIndex(0, branch="const"))] for c in trajectories])]
    for n in range(1, nmax + 1):
        out.append(
            np.array(
                [[_coefficient_at(c, ModeIndex(n, branch=b)) for b in ("sin", "cos")] for c in trajectories]
            )
        )
    return out


# -- sensors ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SensorSet:
    """Point locations, shape (count,) in 1D or (count, 2) in 2D."""

    locations: np.ndarray
    readings: np.ndarray | None = None

    def __post_init__(self):
        z = np.array(self.locations, dtype=float)
        if z.ndim == 2 and z.shape[1] == 1:
            z = z[:, 0]
        if z.size == 0:
            raise ConfigError("need at least one sensor")
        if not np.all(np.isfinite(z)):
            raise ConfigError("sensor locations must be finite")
        object.__setattr__(self, "locations", z)
        if self.readings is not None:
            r = np.array(self.readings, dtype=float)
            if r.shape[0] != self.count:
                raise ShapeMismatchError(f"{r.shape[0]} readings for {self.count} sensors")
            object.__setattr__(self, "readings", r)

    @classmethod
    def uniform_interior(cls, count: int, length: float = 1.0) -> "SensorSet":
        """z_i = i L / (count + 1), i = 1..count."""
        if count < 1:
            raise ConfigError("need at least one sensor")
        return cls(length * np.arange(1, count + 1) / (count + 1))

    @classmethod
    def midpoints(cls, count: int, length: float = 1.0) -> "SensorSet":
        """z_i = (i - 1/2) L / count, i = 1..count: cell midpoints of an even partition."""
        if count < 1:
            raise ConfigError("need at least one sensor")
        return cls(length * (np.arange(1, count + 1) - 0.5) / count)

    @property
    def count(self) -> int:
        return int(self.locations.shape[0])

    @property
    def dimension(self) -> int:
        return 1 if self.locations.ndim == 1 else self.locations.shape[1]


def _hat_weights(axis: np.ndarray, z: np.ndarray):
    """Left node index and weight of the right node for linear interpolation."""
    if np.any(z < axis[0] - 1e-12) or np.any(z > axis[-1] + 1e-12):
        raise ConfigError("sensor outside the grid")
    i = np.clip(np.searchsorted(axis, z, side="right") - 1, 0, axis.size - 2)
    t = np.clip((z - axis[i]) / (axis[i + 1] - axis[i]), 0.0, 1.0)
    return i, t


def interpolation_matrix(grid: SpaceGrid, sensors: SensorSet) -> np.ndarray:
    """Rows evaluate a nodal field at the sensors, (bi)linearly."""
    if sensors.dimension != grid.dimension:
        raise ConfigError(f"{sensors.dimension}D sensors on a {grid.dimension}D grid")
    H = np.zeros((sensors.count, grid.size))
    rows = np.arange(sensors.count)
    if grid.dimension == 1:
        i, t = _hat_weights(grid.axes[0], sensors.locations)
        np.add.at(H, (rows, i), 1 - t)
        np.add.at(H, (rows, i + 1), t)
        return H
    ny = grid.shape[1]
    i, s = _hat_weights(grid.axes[0], sensors.locations[:, 0])
    j, t = _hat_weights(grid.axes[1], sensors.locations[:, 1])
    for di, wi in ((0, 1 - s), (1, s)):
        for dj, wj in ((0, 1 - t), (1, t)):
            np.add.at(H, (rows, (i + di) * ny + j + dj), wi * wj)
    return H


@dataclass(frozen=True)
class Reconstruction:
    coefficients: np.ndarray
    field: np.ndarray
    residual: float | np.ndarray


def reconstruct_from_sensors(s: Subspace, sensors: SensorSet, readings=None, design=None) -> Reconstruction:
    """Least-squares fit of basis coefficients to point readings.

    ``readings`` may hold several columns (one fit per column). ``residual``
    is the RMS misfit at the sensors.
    """
    if readings is None:
        readings = sensors.readings
    if readings is None:
        raise ConfigError("no sensor readings")
    y = np.asarray(readings, dtype=float)
    if y.shape[0] != sensors.count:
        raise ShapeMismatchError(f"{y.shape[0]} readings for {sensors.count} sensors")
    if not np.all(np.isfinite(y)):
        raise ConfigError("sensor readings must be finite")
    if design is None:
        design = sensor_design(s, sensors)
    c, _, rank, sv = np.linalg.lstsq(design, y, rcond=None)
    if rank < s.dim:
        raise SingularFitError(f"design matrix has rank {rank} < {s.dim}")
    field_ = s.basis @ c
    res = np.sqrt(np.mean((design @ c - y) ** 2, axis=0))
    return Reconstruction(c, field_, float(res) if np.ndim(res) == 0 else res)


def sensor_design(s: Subspace, sensors: SensorSet) -> np.ndarray:
    if sensors.count < s.dim:
        warnings.warn(f"{sensors.count} sensors for a {s.dim}-dimensional subspace", stacklevel=2)
    return interpolation_matrix(s.space_grid, sensors) @ s.basis


# -- persistence -------------------------------------------------------------------------


def save_subspace(s: Subspace, path) -> None:
    """Basis CSV (nodes x dim) plus ``<path>.meta.json``."""
    path = Path(path)
    meta = {
        "singular_values": s.singular_values.tolist(),
        "threshold": s.threshold,
        "dim": s.dim,
        "source_ranks": list(s.source_ranks),
        "grid": s.space_grid.to_meta(),
        "sign_convention": SIGN_CONVENTION,
    }
    try:
        np.savetxt(path, s.basis, fmt="%.17g", delimiter=",")
        path.with_name(path.name + ".meta.json").write_text(json.dumps(meta))
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def load_subspace(path) -> Subspace:
    path = Path(path)
    mp = path.with_name(path.name + ".meta.json")
    try:
        meta = json.loads(mp.read_text())
    except FileNotFoundError as exc:
        raise DataIOError(f"missing metadata sidecar {mp}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{mp}: {exc}") from exc
    basis = read_csv_matrix(path)
    try:
        grid = SpaceGrid.from_meta(meta["grid"])
        dim = int(meta["dim"])
        sv = meta["singular_values"]
        thr = float(meta["threshold"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFileError(f"{mp}: {exc}") from exc
    if basis.shape != (grid.size, dim):
        raise ShapeMismatchError(f"{path}: basis is {basis.shape}, metadata says ({grid.size}, {dim})")
    return Subspace(basis, sv, thr, grid, tuple(meta.get("source_ranks", ())))
