"""Closed-form spectra and eigen-expansions of the model operators.

Four operators are covered, plus a user supplied list of eigenvalues:

* ``dirichlet1d``: ``-u_xx`` on [0, 1], Dirichlet; mu_n = pi^2 n^2, sin(n pi x).
* ``periodic1d``: ``-u_xx + u`` on [0, 1]; a constant mode with mu = 1 and
  (sin, cos) pairs with mu_n = n^2 pi^2 + 1.
* ``rect2d``: ``-Laplace`` on [0, 1] x [0, 2^(-1/4)], Dirichlet;
  pi^2 (m^2 + sqrt(2) n^2), sin(m pi x) sin(2^(1/4) n pi y).
* ``fourth2d``: decay rates pi^2 (m^4 + sqrt(2) n^4) on [0, 1] x [0, 2^(-1/8)],
  sin(m pi x) sin(2^(1/8) n pi y).
* ``custom``: explicit ascending eigenvalues paired with sin(n pi x) on [0, 1].

Eigenfunctions are kept unnormalized (plain sines/cosines); every error
measure downstream is a ratio and does not see the normalization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DataIOError, DomainError, InvalidIndexError, MalformedFileError, TruncationError

KINDS = ("dirichlet1d", "periodic1d", "rect2d", "fourth2d", "custom")
RULES = ("alternating_inverse_square", "product_inverse_square", "random_uniform", "explicit")
BRANCHES = ("sin", "cos", "const")

SQRT2 = math.sqrt(2.0)
PI2 = math.pi**2
RECT_HEIGHT = 2.0**-0.25
FOURTH_HEIGHT = 2.0**-0.125
MAX_MODES = 4096
# sum_{n>=1} 1/n^2, majorant of any partial sum of an inverse-square factor
BASEL = PI2 / 6.0
_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class ModeIndex:
    """Index of one eigenfunction.

    1D families use ``n`` only (``n = 0`` with ``branch="const"`` is the
    periodic constant mode). 2D families use the pair ``(m, n)``: ``m`` along
    x and ``n`` along y.
    """

    n: int
    m: int | None = None
    branch: str | None = None

    @classmethod
    def pair(cls, m: int, n: int) -> "ModeIndex":
        return cls(n=n, m=m)

    def label(self) -> str:
        if self.m is not None:
            return f"({self.m},{self.n})"
        if self.branch is not None:
            return f"{self.branch}{self.n}"
        return str(self.n)


def as_index(obj) -> ModeIndex:
    """Coerce ``int``, ``(m, n)`` or ``ModeIndex`` into a ``ModeIndex``."""
    if isinstance(obj, ModeIndex):
        return obj
    if isinstance(obj, (int, np.integer)):
        return ModeIndex(int(obj))
    if isinstance(obj, tuple) and len(obj) == 2:
        a, b = obj
        if isinstance(a, str):
            return ModeIndex(int(b), branch=a)
        return ModeIndex.pair(int(a), int(b))
    raise InvalidIndexError(f"cannot interpret {obj!r} as a mode index")


@dataclass(frozen=True)
class EigenFamily:
    kind: str
    eigenvalues: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown family kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "custom":
            vals = tuple(float(v) for v in self.eigenvalues)
            if not vals:
                raise ConfigError("custom family needs at least one eigenvalue")
            if not all(math.isfinite(v) and v > 0 for v in vals):
                raise ConfigError("custom eigenvalues must be positive and finite")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError("custom eigenvalues must be strictly ascending")
            object.__setattr__(self, "eigenvalues", vals)
        elif self.eigenvalues:
            raise ConfigError(f"{self.kind} is closed-form; eigenvalues are only accepted for custom")

    @classmethod
    def dirichlet1d(cls):
        return cls("dirichlet1d")

    @classmethod
    def periodic1d(cls):
        return cls("periodic1d")

    @classmethod
    def rect2d(cls):
        return cls("rect2d")

    @classmethod
    def fourth2d(cls):
        return cls("fourth2d")

    @classmethod
    def custom(cls, eigenvalues: Sequence[float]):
        return cls("custom", tuple(eigenvalues))

    @property
    def dimension(self) -> int:
        return 2 if self.kind in ("rect2d", "fourth2d") else 1

    @property
    def lengths(self) -> tuple[float, ...]:
        if self.kind == "rect2d":
            return (1.0, RECT_HEIGHT)
        if self.kind == "fourth2d":
            return (1.0, FOURTH_HEIGHT)
        return (1.0,)

    @property
    def power(self) -> int:
        """Exponent of the index in the separable 2D rates."""
        return 4 if self.kind == "fourth2d" else 2

    @property
    def y_wavenumber(self) -> float:
        if self.dimension != 2:
            raise ConfigError(f"{self.kind} has no y axis")
        return math.pi / self.lengths[1]

    def x_rates(self, m):
        """pi^2 m^p, the x part of the separable 2D decay rate."""
        m = np.asarray(m, dtype=float)
        return PI2 * m**self.power

    def y_rates(self, n):
        n = np.asarray(n, dtype=float)
        return SQRT2 * PI2 * n**self.power

    @property
    def max_multiplicity(self) -> int:
        return 2 if self.kind == "periodic1d" else 1


def _check_index(family: EigenFamily, idx: ModeIndex) -> None:
    if family.dimension == 2:
        if idx.m is None or idx.branch is not None:
            raise InvalidIndexError(f"{family.kind} needs a pair index (m, n) without branch")
        if idx.m < 1 or idx.n < 1:
            raise InvalidIndexError(f"{family.kind} indices start at 1, got {idx.label()}")
        return
    if idx.m is not None:
        raise InvalidIndexError(f"{family.kind} takes a single index, got {idx.label()}")
    if family.kind == "periodic1d":
        if idx.branch not in BRANCHES:
            raise InvalidIndexError("periodic1d needs a branch flag: sin, cos or const")
        if (idx.branch == "const") != (idx.n == 0):
            raise InvalidIndexError("the const branch is exactly the n = 0 mode")
        if idx.n < 0:
            raise InvalidIndexError("negative mode index")
        return
    if idx.branch is not None:
        raise InvalidIndexError(f"branch flags are only meaningful for periodic1d, not {family.kind}")
    if idx.n < 1:
        raise InvalidIndexError(f"{family.kind} indices start at 1")
    if family.kind == "custom" and idx.n > len(family.eigenvalues):
        raise InvalidIndexError(f"custom family has only {len(family.eigenvalues)} eigenvalues")


def eigenvalue(family: EigenFamily, idx) -> float:
    idx = as_index(idx)
    _check_index(family, idx)
    kind = family.kind
    if kind == "dirichlet1d":
        return PI2 * idx.n**2
    if kind == "periodic1d":
        return 1.0 if idx.branch == "const" else PI2 * idx.n**2 + 1.0
    if kind == "custom":
        return family.eigenvalues[idx.n - 1]
    return float(family.x_rates(idx.m) + family.y_rates(idx.n))


def _check_domain(family: EigenFamily, coords: Sequence[np.ndarray]) -> None:
    for c, length in zip(coords, family.lengths):
        if np.any(c < -_DOMAIN_SLACK) or np.any(c > length + _DOMAIN_SLACK):
            raise DomainError(f"point outside [0, {length:g}]")


def _split_point(family: EigenFamily, point) -> list[np.ndarray]:
    if family.dimension == 1:
        return [np.asarray(point, dtype=float)]
    try:
        x, y = point
    except (TypeError, ValueError):
        raise DomainError(f"{family.kind} expects an (x, y) point") from None
    return [np.asarray(x, dtype=float), np.asarray(y, dtype=float)]


def eigenfunction_eval(family: EigenFamily, idx, point):
    """Value of the (unnormalized) eigenfunction at ``point``.

    ``point`` may be a scalar or an array for 1D families and an ``(x, y)``
    pair of scalars or broadcastable arrays for 2D families.
    """
    idx = as_index(idx)
    _check_index(family, idx)
    coords = _split_point(family, point)
    _check_domain(family, coords)
    if family.dimension == 2:
        x, y = coords
        out = np.sin(idx.m * math.pi * x) * np.sin(idx.n * family.y_wavenumber * y)
    else:
        x = coords[0]
        if idx.branch == "const":
            out = np.ones_like(x)
        elif idx.branch == "cos":
            out = np.cos(idx.n * math.pi * x)
        else:
            out = np.sin(idx.n * math.pi * x)
    return float(out) if np.ndim(out) == 0 else out


class SpectrumEntry(NamedTuple):
    value: float
    indices: tuple[ModeIndex, ...]
    multiplicity: int


def sorted_spectrum(family: EigenFamily, cutoff: float) -> list[SpectrumEntry]:
    """Distinct eigenvalues ``<= cutoff`` in ascending order with their modes."""
    modes: list[tuple[float, ModeIndex]] = []
    kind = family.kind
    if kind == "dirichlet1d":
        nmax = int(math.sqrt(max(cutoff, 0.0) / PI2)) + 1
        modes = [(PI2 * n * n, ModeIndex(n)) for n in range(1, nmax + 1)]
    elif kind == "periodic1d":
        nmax = int(math.sqrt(max(cutoff - 1.0, 0.0) / PI2)) + 1
        modes = [(1.0, ModeIndex(0, branch="const"))]
        for n in range(1, nmax + 1):
            lam = PI2 * n * n + 1.0
            modes += [(lam, ModeIndex(n, branch="sin")), (lam, ModeIndex(n, branch="cos"))]
    elif kind == "custom":
        modes = [(v, ModeIndex(i + 1)) for i, v in enumerate(family.eigenvalues)]
    else:
        # x rate >= pi^2 m^p and y rate >= sqrt(2) pi^2 n^p bound the index box
        p = family.power
        mmax = int((cutoff / PI2) ** (1.0 / p)) + 1
        nmax = int((cutoff / (SQRT2 * PI2)) ** (1.0 / p)) + 1
        m = np.arange(1, mmax + 1)
        n = np.arange(1, nmax + 1)
        lam = family.x_rates(m)[:, None] + family.y_rates(n)[None, :]
        mi, ni = np.nonzero(lam <= cutoff)
        modes = [(float(lam[a, b]), ModeIndex.pair(int(m[a]), int(n[b]))) for a, b in zip(mi, ni)]
    # stable sort keeps the periodic (sin, cos) order inside a pair
    modes = sorted(((v, i) for v, i in modes if v <= cutoff), key=lambda vi: vi[0])
    out: list[SpectrumEntry] = []
    for value, idx in modes:
        if out and out[-1].value == value:
            prev = out[-1]
            out[-1] = SpectrumEntry(value, prev.indices + (idx,), prev.multiplicity + 1)
        else:
            out.append(SpectrumEntry(value, (idx,), 1))
    return out


# -- coefficient families ---------------------------------------------------


@dataclass(frozen=True)
class CoefficientFamily:
    """Initial-condition coefficients of a sample or target solution.

    ``branch``/``constant`` only matter for ``periodic1d``: the rule feeds the
    chosen trigonometric branch and ``constant`` multiplies the n = 0 mode.
    """

    rule: str
    seed: int | None = None
    count: int = 0
    terms: tuple[tuple[ModeIndex, float], ...] = ()
    branch: str = "sin"
    constant: float = 0.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigError(f"unknown coefficient rule {self.rule!r}")
        if self.branch not in ("sin", "cos"):
            raise ConfigError("branch must be sin or cos")
        if self.rule == "random_uniform":
            if self.seed is None:
                raise ConfigError("random_uniform coefficients need a seed")
            if self.count < 1:
                raise ConfigError("random_uniform coefficients need count >= 1")
        if self.rule == "explicit":
            terms = tuple((as_index(i), float(c)) for i, c in self.terms)
            if not all(math.isfinite(c) for _, c in terms):
                raise ConfigError("explicit coefficients must be finite")
            object.__setattr__(self, "terms", terms)

    @classmethod
    def alternating_inverse_square(cls, branch: str = "sin", constant: float = 0.0):
        return cls("alternating_inverse_square", branch=branch, constant=constant)

    @classmethod
    def product_inverse_square(cls):
        return cls("product_inverse_square")

    @classmethod
    def random_uniform(cls, seed: int, count: int = 1000):
        return cls("random_uniform", seed=seed, count=count)

    @classmethod
    def explicit(cls, values, branch: str | None = None):
        """From a list (1D, entry k is mode k+1) or a mapping index -> value.

        ``branch`` tags list entries for the periodic family.
        """
        if isinstance(values, dict):
            terms = tuple((as_index(k), v) for k, v in values.items())
        else:
            terms = tuple((ModeIndex(k + 1, branch=branch), v) for k, v in enumerate(values))
        return cls("explicit", terms=terms)

    @property
    def is_finite(self) -> bool:
        return self.rule in ("random_uniform", "explicit")

    def omega(self) -> np.ndarray:
        """The random draws omega_1..omega_count, a pure function of (seed, count)."""
        if self.rule != "random_uniform":
            raise ConfigError("omega() is only defined for random_uniform")
        if "omega" not in self._cache:
            self._cache["omega"] = random_uniform_draws(self.seed, self.count)
        return self._cache["omega"]


def random_uniform_draws(seed: int, count: int, low: float = -1.0, high: float = 1.0) -> np.ndarray:
    """Counter-based U(low, high) draws: entry k depends only on (seed, k)."""
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    return gen.uniform(low, high, int(count))


@dataclass(frozen=True)
class Expansion:
    """Truncated 1D expansion: coefficient, decay rate and index per mode."""

    indices: tuple[ModeIndex, ...]
    coefficients: np.ndarray
    rates: np.ndarray

    def basis(self, family: EigenFamily, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cols = np.empty((x.size, len(self.indices)))
        ns = np.array([i.n for i in self.indices], dtype=float)
        branches = [i.branch for i in self.indices]
        sin_cols = [k for k, b in enumerate(branches) if b in (None, "sin")]
        cos_cols = [k for k, b in enumerate(branches) if b == "cos"]
        const_cols = [k for k, b in enumerate(branches) if b == "const"]
        if sin_cols:
            cols[:, sin_cols] = np.sin(np.pi * np.outer(x, ns[sin_cols]))
        if cos_cols:
            cols[:, cos_cols] = np.cos(np.pi * np.outer(x, ns[cos_cols]))
        if const_cols:
            cols[:, const_cols] = 1.0
        return cols


def _rule_1d_coefficient(coeffs: CoefficientFamily, n: np.ndarray) -> np.ndarray:
    if coeffs.rule == "alternating_inverse_square":
        return np.where(n % 2 == 0, 1.0, -1.0) / n.astype(float) ** 2
    if coeffs.rule == "random_uniform":
        om = coeffs.omega()
        out = np.zeros(n.shape)
        ok = n <= coeffs.count
        out[ok] = om[n[ok] - 1]
        return out
    raise ConfigError(f"rule {coeffs.rule} does not apply to 1D families")


def _family_rates_1d(family: EigenFamily, n: np.ndarray) -> np.ndarray:
    if family.kind == "dirichlet1d":
        return PI2 * n.astype(float) ** 2
    if family.kind == "periodic1d":
        return PI2 * n.astype(float) ** 2 + 1.0
    vals = np.asarray(family.eigenvalues)
    return vals[n - 1]


def _mode_limit(family: EigenFamily) -> int:
    return len(family.eigenvalues) if family.kind == "custom" else MAX_MODES


def expansion_1d(family: EigenFamily, coeffs: CoefficientFamily, count: int) -> Expansion:
    """The first ``count`` modes (per rule ordering) of a 1D expansion."""
    if family.dimension != 1:
        raise ConfigError("expansion_1d needs a 1D family")
    if coeffs.rule == "explicit":
        terms = [(i, c) for i, c in coeffs.terms if i.n <= count]
        for i, _ in terms:
            _check_index(family, i)
        idx = tuple(i for i, _ in terms)
        return Expansion(
            idx,
            np.array([c for _, c in terms], dtype=float),
            np.array([eigenvalue(family, i) for i in idx], dtype=float),
        )
    count = min(count, _mode_limit(family))
    n = np.arange(1, count + 1)
    c = _rule_1d_coefficient(coeffs, n)
    rates = _family_rates_1d(family, n)
    branch = coeffs.branch if family.kind == "periodic1d" else None
    idx = tuple(ModeIndex(int(k), branch=branch) for k in n)
    if family.kind == "periodic1d" and coeffs.constant != 0.0:
        idx = (ModeIndex(0, branch="const"),) + idx
        c = np.concatenate([[coeffs.constant], c])
        rates = np.concatenate([[1.0], rates])
    return Expansion(idx, c, rates)


def axis_expansions(family: EigenFamily, coeffs: CoefficientFamily, mx: int, ny: int):
    """Per-axis factors of a separable 2D product expansion.

    Returns ``(coef_x, rate_x, coef_y, rate_y)`` with ``u = (sum_m coef_x e^{-rate_x t}
    sin(m pi x)) * (sum_n coef_y e^{-rate_y t} sin(k_y n y))``.
    """
    if coeffs.rule != "product_inverse_square" or family.dimension != 2:
        raise ConfigError("separable factors need a 2D family with product_inverse_square coefficients")
    m = np.arange(1, mx + 1)
    n = np.arange(1, ny + 1)
    return 1.0 / m.astype(float) ** 2, family.x_rates(m), 1.0 / n.astype(float) ** 2, family.y_rates(n)


def _tail_1d(family: EigenFamily, coeffs: CoefficientFamily, t: float, limit: int) -> np.ndarray:
    """bounds[N-1] majorizes sum over modes beyond the first N, N = 1..limit."""
    N = np.arange(1, limit + 1)
    finite_len = _mode_limit(family)
    nxt = np.minimum(N + 1, finite_len)
    decay = np.exp(-_family_rates_1d(family, nxt) * t)
    if coeffs.rule == "alternating_inverse_square":
        bound = decay / N
    elif coeffs.rule == "random_uniform":
        bound = decay * np.maximum(coeffs.count - N, 0)
    elif coeffs.rule == "explicit":
        ns = np.array([i.n for i, _ in coeffs.terms], dtype=int)
        mags = np.array([abs(c) * math.exp(-eigenvalue(family, i) * t) for i, c in coeffs.terms])
        order = np.argsort(ns)
        ns, mags = ns[order], mags[order]
        # remainder after modes n <= N
        suffix = np.concatenate([np.cumsum(mags[::-1])[::-1], [0.0]])
        bound = suffix[np.searchsorted(ns, N, side="right")]
    else:
        raise ConfigError(f"rule {coeffs.rule} does not apply to {family.kind}")
    if coeffs.rule != "explicit":
        bound = np.where(N >= finite_len, 0.0, bound)
    return bound


def _tail_axis(rates_fn, t: float, limit: int) -> np.ndarray:
    N = np.arange(1, limit + 1)
    return np.exp(-rates_fn(N + 1) * t) / N


def _first_below(bound: np.ndarray, tol: float) -> int | None:
    ok = np.nonzero(bound <= tol)[0]
    return int(ok[0]) + 1 if ok.size else None


def required_modes(family: EigenFamily, coeffs: CoefficientFamily, t: float, tol: float):
    """Smallest truncation meeting ``tol``; an int (1D) or (M, N) pair (2D)."""
    if t < 0:
        raise ConfigError("time must be non-negative")
    if tol < 0:
        raise ConfigError("tolerance must be non-negative")
    if family.dimension == 1:
        if coeffs.rule == "explicit":
            limit = max((i.n for i, _ in coeffs.terms), default=1)
            if tol == 0:
                return limit
        else:
            limit = _mode_limit(family)
            if coeffs.rule == "random_uniform":
                limit = min(limit, coeffs.count)
        if tol == 0 and t == 0 and not coeffs.is_finite:
            raise TruncationError("tol = 0 at t = 0 with infinitely many coefficients cannot terminate")
        N = _first_below(_tail_1d(family, coeffs, t, max(limit, 1)), tol)
        if N is None:
            raise TruncationError(f"tail bound above {tol:g} after {limit} modes at t = {t:g}")
        return N
    if coeffs.rule == "explicit":
        if not coeffs.terms:
            return (1, 1)
        return (max(i.m for i, _ in coeffs.terms), max(i.n for i, _ in coeffs.terms))
    axis_expansions(family, coeffs, 1, 1)
    if tol == 0 and t == 0:
        raise TruncationError("tol = 0 at t = 0 with infinitely many coefficients cannot terminate")
    # |AB - A_M B_N| <= |A - A_M| |B| + |A_M| |B - B_N|, both |A|, |B| <= pi^2/6
    share = tol / (2.0 * BASEL)
    M = _first_below(_tail_axis(family.x_rates, t, MAX_MODES), share)
    N = _first_below(_tail_axis(family.y_rates, t, MAX_MODES), share)
    if M is None or N is None:
        raise TruncationError(f"tail bound above {tol:g} after {MAX_MODES} modes per axis at t = {t:g}")
    return (M, N)


class TrajectoryValue(NamedTuple):
    value: float
    modes: int | tuple[int, int]


def trajectory_eval(family: EigenFamily, coeffs: CoefficientFamily, point, t: float, tol: float = 1e-15):
    """Evaluate sum_n c_n e^{-mu_n t} phi_n(point), truncated adaptively.

    Returns the value and the truncation index actually used.
    """
    coords = _split_point(family, point)
    _check_domain(family, coords)
    N = required_modes(family, coeffs, t, tol)
    if family.dimension == 1:
        ex = expansion_1d(family, coeffs, N)
        phi = ex.basis(family, np.atleast_1d(coords[0]))
        vals = phi @ (ex.coefficients * np.exp(-ex.rates * t))
        value = vals[0] if np.ndim(coords[0]) == 0 else vals.reshape(np.shape(coords[0]))
        return TrajectoryValue(value, N)
    x, y = coords
    if coeffs.rule == "explicit":
        value = sum(
            c * math.exp(-eigenvalue(family, i) * t) * eigenfunction_eval(family, i, (x, y))
            for i, c in coeffs.terms
        )
        return TrajectoryValue(value, N)
    cx, rx, cy, ry = axis_expansions(family, coeffs, *N)
    mx = np.arange(1, N[0] + 1)
    ny = np.arange(1, N[1] + 1)
    a = np.sin(np.pi * np.multiply.outer(x, mx)) @ (cx * np.exp(-rx * t))
    b = np.sin(family.y_wavenumber * np.multiply.outer(y, ny)) @ (cy * np.exp(-ry * t))
    value = a * b
    return TrajectoryValue(float(value) if np.ndim(value) == 0 else value, N)


# -- JSON ingestion -----------------------------------------------------------


def load_custom_json(path) -> tuple[EigenFamily, CoefficientFamily | None]:
    """Read ``{"eigenvalues": [...], "coefficients": [...]}``.

    Eigenvalues must be strictly ascending; coefficients, when present, must
    match them in length.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DataIOError(f"missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or "eigenvalues" not in doc:
        raise MalformedFileError(f"{path}: expected an object with an 'eigenvalues' list")
    family = EigenFamily.custom(doc["eigenvalues"])
    coeffs = None
    if doc.get("coefficients") is not None:
        cs = doc["coefficients"]
        if len(cs) != len(family.eigenvalues):
            raise MalformedFileError(f"{path}: {len(cs)} coefficients for {len(family.eigenvalues)} eigenvalues")
        coeffs = CoefficientFamily.explicit(cs)
    return family, coeffs
