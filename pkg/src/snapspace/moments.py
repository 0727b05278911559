"""Exponential moment problem diagnostics.

Distances d_n from e^{-mu_n t} to the span of the other exponentials,
finite bi-orthogonal norms, Widder tables for Hausdorff-type moments, the
zeta_{0,beta} integral and eigenvalue-gap checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from pathlib import Path
from typing import NamedTuple, Sequence

import mpmath
import numpy as np
from scipy import integrate, special

from .errors import CollisionError, ConfigError, DataIOError, MalformedFileError, NumericalError
from .spectral import PI2, EigenFamily, sorted_spectrum

GRAM_MAX = 30
FLOAT_WIDDER_MAX = 12
# relative spacing below which two exponents are treated as one
COLLISION_RTOL = 64 * np.finfo(float).eps


# -- sequences -------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentSequence:
    """mu_1 < mu_2 < ... with optional growth/gap metadata.

    ``rule = "power"`` means mu_n = M (n + shift)^beta exactly, so terms beyond
    the stored prefix and tail sums are available in closed form.
    """

    values: tuple[float, ...]
    rule: str = "explicit"
    M: float | None = None
    beta: float | None = None
    sigma: float | None = None
    theta: float | None = None
    s: float | None = None
    shift: float = 0.0

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if not v:
            raise ConfigError("empty exponent sequence")
        if any(not math.isfinite(x) or x <= 0 for x in v):
            raise ConfigError("exponents must be finite and positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ConfigError("exponents must be strictly increasing")
        if self.rule not in ("explicit", "power"):
            raise ConfigError(f"unknown exponent rule {self.rule!r}")
        if self.rule == "power" and (self.M is None or self.beta is None):
            raise ConfigError("power rule needs M and beta")
        object.__setattr__(self, "values", v)

    @classmethod
    def power(cls, M: float, beta: float, count: int, shift: float = 0.0, **meta) -> "ExponentSequence":
        """mu_n = M (n + shift)^beta, n = 1..count."""
        if count < 1:
            raise ConfigError("count must be positive")
        n = np.arange(1, count + 1) + shift
        if n[0] <= 0:
            raise ConfigError("shift leaves non-positive exponents")
        return cls(tuple(M * n**beta), "power", M=M, beta=beta, shift=shift, **meta)

    @classmethod
    def dirichlet(cls, count: int) -> "ExponentSequence":
        return cls.power(PI2, 2.0, count, sigma=1.0, theta=3 * PI2, s=0.0)

    @classmethod
    def half_shifted(cls, count: int) -> "ExponentSequence":
        """mu_n = n - 1/2."""
        return cls.power(1.0, 1.0, count, shift=-0.5, theta=1.0, s=0.0)

    @classmethod
    def from_family(cls, family: EigenFamily, count: int) -> "ExponentSequence":
        """The first ``count`` distinct eigenvalues of a closed-form family."""
        if family.kind == "dirichlet1d":
            return cls.dirichlet(count)
        if family.kind == "custom":
            if count > len(family.eigenvalues):
                raise ConfigError(f"family has only {len(family.eigenvalues)} eigenvalues")
            return cls(tuple(family.eigenvalues[:count]))
        cutoff = max(4.0 * PI2, 1.0)
        while True:
            spec = sorted_spectrum(family, cutoff)
            if len(spec) >= count:
                break
            cutoff *= 2
        vals = tuple(e.value for e in spec[:count])
        # Weyl asymptotics: counting function ~ area of {a^p + sqrt2 b^p <= lam / pi^2}
        if family.kind == "periodic1d":
            return cls(vals, M=PI2, beta=2.0)
        if family.kind == "rect2d":
            return cls(vals, M=4 * math.pi * 2**0.25, beta=1.0)
        g = math.gamma(1.25) ** 2 / math.gamma(1.5) * 2**-0.125
        return cls(vals, M=PI2 / g**2, beta=2.0)

    @classmethod
    def load(cls, path) -> "ExponentSequence":
        doc = _load_json(path)
        if "eigenvalues" not in doc:
            raise MalformedFileError(f"{path}: expected an 'eigenvalues' list")
        return cls(tuple(doc["eigenvalues"]))

    @property
    def N(self) -> int:
        return len(self.values)

    def prefix(self, count: int) -> np.ndarray:
        """mu_1..mu_count, generated past the stored values for power rules."""
        if count <= self.N:
            return np.asarray(self.values[:count])
        if self.rule != "power":
            raise ConfigError(f"only {self.N} exponents are known, {count} requested")
        return self.M * (np.arange(1, count + 1) + self.shift) ** self.beta

    def tail_sum(self, J: int) -> float | None:
        """sum_{j > J} 1/mu_j when known in closed form, else None."""
        if self.rule != "power" or self.beta <= 1:
            return None
        return float(special.zeta(self.beta, J + 1 + self.shift)) / self.M

    def to_dict(self) -> dict:
        return {
            "values": list(self.values),
            "rule": self.rule,
            "M": self.M,
            "beta": self.beta,
            "sigma": self.sigma,
            "theta": self.theta,
            "s": self.s,
            "shift": self.shift,
        }


@dataclass(frozen=True)
class MomentSequence:
    """m_1..m_N; Fraction entries keep Widder tables exact."""

    values: tuple
    rule: str = "explicit"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = tuple(v if isinstance(v, (Fraction, int)) else float(v) for v in self.values)
        if any(isinstance(v, float) and not math.isfinite(v) for v in vals):
            raise ConfigError("moments must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def harmonic(cls, count: int) -> "MomentSequence":
        """m_n = 1/n as exact rationals."""
        return cls(tuple(Fraction(1, n) for n in range(1, count + 1)), "harmonic")

    @classmethod
    def from_solution(cls, exponents: ExponentSequence, tau: float, f, c) -> "MomentSequence":
        """m_n = e^{-mu_n tau} f_n / c_n."""
        mu = exponents.prefix(len(f))
        f = np.asarray(f, dtype=float)
        c = np.asarray(c, dtype=float)
        if np.any(c == 0):
            raise ConfigError("coefficients c_n must be nonzero")
        return cls(tuple(np.exp(-mu * tau) * f / c), "from_solution", {"tau": tau})

    @classmethod
    def load(cls, path) -> "MomentSequence":
        doc = _load_json(path)
        vals = doc.get("moments", doc.get("coefficients"))
        if vals is None:
            raise MalformedFileError(f"{path}: expected a 'moments' list")
        return cls(tuple(vals))

    @property
    def is_rational(self) -> bool:
        return all(isinstance(v, (Fraction, int)) for v in self.values)


def _load_json(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DataIOError(f"missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedFileError(f"{path}: expected a JSON object")
    return doc


# -- series classification ---------------------------------------------------------


def series_class(e: ExponentSequence, min_prefix: int = 20) -> dict:
    """Whether sum 1/mu_n converges, by growth exponent.

    With metadata the answer is beta > 1. Otherwise beta is fitted on the last
    half of the prefix (log mu against log n) and must exceed 1.05.
    """
    mu = np.asarray(e.values)
    partial = math.fsum(1.0 / mu)
    out = {"partial_sum": partial, "count": e.N}
    if e.beta is not None:
        out.update(method="metadata", beta=e.beta, cls="convergent" if e.beta > 1 else "divergent")
        tail = e.tail_sum(e.N)
        if tail is not None:
            out["sum_estimate"] = partial + tail
        return out
    if e.N < min_prefix:
        raise ConfigError(f"need growth metadata or at least {min_prefix} exponents")
    n = np.arange(1, e.N + 1)
    half = slice(e.N // 2, None)
    slope = float(np.polyfit(np.log(n[half]), np.log(mu[half]), 1)[0])
    out.update(method="fit", beta=slope, cls="convergent" if slope > 1.05 else "divergent")
    return out


# -- distances and bi-orthogonal norms ----------------------------------------------


class LogValue(NamedTuple):
    value: float
    log: float


def _check_collisions(mu: np.ndarray, n: int) -> None:
    others = np.delete(mu, n - 1)
    if np.any(np.abs(others - mu[n - 1]) <= COLLISION_RTOL * mu[n - 1]):
        raise CollisionError(f"exponent {mu[n - 1]!r} is repeated")


def _log_ratio_terms(mu: np.ndarray, n: int) -> tuple[float, float]:
    """(sum_{j != n} log|1 - x_j|, sum_{j != n} log(1 + x_j)) with x_j = mu_n/mu_j."""
    mn = mu[n - 1]
    others = np.delete(mu, n - 1)
    _check_collisions(mu, n)
    minus = np.log(np.abs(others - mn)) - np.log(others)
    plus = np.log1p(mn / others)
    return math.fsum(minus), math.fsum(plus)


def _exp(logv: float) -> float:
    return math.exp(logv) if logv < 709.78 else math.inf


def dn_infinity_product(e: ExponentSequence, n: int, J: int | None = None, tail: str = "analytic") -> LogValue:
    """d_n(inf) from the product formula over mu_1..mu_J.

    ``tail="analytic"`` multiplies by exp(-2 mu_n sum_{j>J} 1/mu_j), available
    for closed-form power sequences with beta > 1.
    """
    if J is None:
        J = e.N
    if not (1 <= n <= J):
        raise ConfigError(f"need 1 <= n <= J, got n={n}, J={J}")
    if tail not in ("none", "analytic"):
        raise ConfigError("tail must be 'none' or 'analytic'")
    mu = e.prefix(J)
    mn = float(mu[n - 1])
    lminus, lplus = _log_ratio_terms(mu, n)
    logd = 0.5 * math.log(2.0 / mn) + lminus - (lplus + math.log(2.0))
    if tail == "analytic":
        ts = e.tail_sum(J)
        if ts is None:
            raise ConfigError("analytic tail needs a power-law sequence with beta > 1")
        logd -= 2.0 * mn * ts
    return LogValue(_exp(logd), logd)


def dn_gram(
    e: ExponentSequence,
    n: int,
    T: float = math.inf,
    N: int | None = None,
    dps: int = 80,
    tail: str = "none",
) -> float:
    """d_n(T) over the first N exponents from the Gram matrix in extended precision.

    d_n^2 = 1 / (G^{-1})_{nn}, the Schur complement of G_nn. With
    ``tail="analytic"`` (T = inf only) the result is scaled by
    exp(-2 mu_n sum_{j>N} 1/mu_j) to estimate the full-sequence distance.
    """
    if N is None:
        N = e.N
    if not (1 <= n <= N):
        raise ConfigError(f"need 1 <= n <= N, got n={n}, N={N}")
    if N > GRAM_MAX:
        raise ConfigError(f"Gram solves are capped at N = {GRAM_MAX}")
    if dps < 50:
        raise ConfigError("Gram solves need at least 50 digits")
    if not (T > 0):
        raise ConfigError("horizon T must be positive")
    mu_f = e.prefix(N)
    _check_collisions(mu_f, n)
    with mpmath.workdps(dps):
        mu = [mpmath.mpf(float(x)) for x in mu_f]
        G = mpmath.matrix(N, N)
        for i in range(N):
            for j in range(N):
                a = mu[i] + mu[j]
                G[i, j] = 1 / a if math.isinf(T) else -mpmath.expm1(-a * T) / a
        rhs = mpmath.matrix(N, 1)
        rhs[n - 1] = 1
        try:
            x = mpmath.lu_solve(G, rhs)
        except ZeroDivisionError as exc:
            raise NumericalError("Gram matrix is singular at this precision") from exc
        inv_nn = x[n - 1]
        if not inv_nn > 0 or 1 / inv_nn > G[n - 1, n - 1]:
            raise NumericalError("Gram matrix is numerically singular at this precision")
        d = mpmath.sqrt(1 / inv_nn)
        if tail == "analytic":
            if not math.isinf(T):
                raise ConfigError("tail correction is defined for T = inf")
            ts = e.tail_sum(N)
            if ts is None:
                raise ConfigError("analytic tail needs a power-law sequence with beta > 1")
            d *= mpmath.exp(-2 * mu[n - 1] * mpmath.mpf(ts))
        elif tail != "none":
            raise ConfigError("tail must be 'none' or 'analytic'")
        return float(d)


def finite_biorth_norm(e: ExponentSequence, n: int, N: int | None = None) -> LogValue:
    """Norm in L2[0, inf) of the bi-orthogonal partner of e^{-mu_n t} within mu_1..mu_N.

    sqrt(2 mu_n) prod_{j != n} (1 + x_j) / |prod_{j != n} (1 - x_j)|, x_j = mu_n/mu_j.
    """
    if N is None:
        N = e.N
    if not (1 <= n <= N):
        raise ConfigError(f"need 1 <= n <= N, got n={n}, N={N}")
    mu = e.prefix(N)
    mn = float(mu[n - 1])
    lminus, lplus = _log_ratio_terms(mu, n)
    logv = 0.5 * math.log(2.0 * mn) + lplus - lminus
    return LogValue(_exp(logv), logv)


# -- Widder tables -------------------------------------------------------------------


@dataclass(frozen=True)
class WidderTable:
    rows: tuple[tuple, ...]
    sums: tuple
    exact: bool

    @property
    def kmax(self) -> int:
        return len(self.rows) - 1

    def bounded_by(self, L: float) -> bool:
        return all(float(v) < L for v in self.sums)

    def to_dict(self) -> dict:
        def enc(v):
            return {"exact": str(v), "value": float(v)} if isinstance(v, Fraction) else float(v)

        return {
            "kmax": self.kmax,
            "exact": self.exact,
            "rows": [[enc(v) for v in row] for row in self.rows],
            "scaled_sums": [enc(v) for v in self.sums],
            "max_scaled_sum": float(max(self.sums)),
        }


def widder_lambda(m: Sequence, k: int, kp: int):
    """lambda_{k,k'} = C(k,k') sum_l (-1)^{k-k'+l} C(k-k',l) m_{k-l+1}."""
    d = k - kp
    acc = 0
    for l in range(d + 1):
        term = comb(d, l) * m[k - l]
        acc = acc + term if (d + l) % 2 == 0 else acc - term
    return comb(k, kp) * acc


def widder_table(m: MomentSequence, kmax: int, exact: bool | None = None, force: bool = False) -> WidderTable:
    """All lambda_{k,k'} for k <= kmax and the scaled sums (k+1) sum_k' lambda^2.

    Rational (and float, converted exactly) inputs use Fraction arithmetic by
    default. Plain floating point loses about k bits to cancellation and is
    refused for kmax > 12 unless ``force``.
    """
    if kmax < 0:
        raise ConfigError("kmax must be non-negative")
    if len(m.values) < kmax + 1:
        raise ConfigError(f"kmax = {kmax} needs {kmax + 1} moments, have {len(m.values)}")
    if exact is None:
        exact = True
    if exact:
        vals = [Fraction(v) for v in m.values[: kmax + 1]]
    else:
        if kmax > FLOAT_WIDDER_MAX and not force:
            raise ConfigError(f"floating-point Widder tables are refused above k = {FLOAT_WIDDER_MAX}")
        vals = [float(v) for v in m.values[: kmax + 1]]
    rows, sums = [], []
    for k in range(kmax + 1):
        row = tuple(widder_lambda(vals, k, kp) for kp in range(k + 1))
        rows.append(row)
        sums.append((k + 1) * sum(v * v for v in row))
    return WidderTable(tuple(rows), tuple(sums), exact)


def counterexample_moments(count: int, tau: float, p: float, alpha: float, f=None, dps: int = 50):
    """m_n = e^{-(n - 1/2) tau} e^{p n^alpha} f_n as mpmath numbers; f defaults to e_1."""
    with mpmath.workdps(dps):
        if f is None:
            f = [1] + [0] * (count - 1)
        return [
            mpmath.exp(-(n - mpmath.mpf(1) / 2) * tau + p * mpmath.mpf(n) ** alpha) * mpmath.mpf(f[n - 1])
            for n in range(1, count + 1)
        ]


def counterexample_witness(kmax: int, tau: float = 1.0, p: float = 1.0, alpha: float = 0.5, dps: int = 50) -> dict:
    """Scaled Widder sums for the e_1 witness against the lower bound (k+1) e^{-tau + 2p}.

    Also reports max_l A_ll^2, the diagonal bound on sup_f of the scaled sum.
    """
    with mpmath.workdps(dps):
        m = counterexample_moments(kmax + 1, tau, p, alpha, dps=dps)
        sums, bounds, diag = [], [], []
        for k in range(kmax + 1):
            row = [widder_lambda(m, k, kp) for kp in range(k + 1)]
            sums.append((k + 1) * mpmath.fsum(v * v for v in row))
            bounds.append((k + 1) * mpmath.exp(-tau + 2 * p))
            diag.append(
                max(
                    (k + 1) * comb(k, l) ** 2 * mpmath.exp(-(2 * l + 1) * tau + 2 * p * mpmath.mpf(l + 1) ** alpha)
                    for l in range(k + 1)
                )
            )
        return {
            "tau": tau,
            "p": p,
            "alpha": alpha,
            "scaled_sums": [float(v) for v in sums],
            "lower_bound": [float(v) for v in bounds],
            "diagonal_sup": [float(v) for v in diag],
            "ratio": [float(s / b) for s, b in zip(sums, bounds)],
        }


# -- zeta and gaps ----------------------------------------------------------------------


def zeta0(beta: float) -> float:
    """integral_0^inf dy / (y^{1 - 1/beta} (1 + y)), for beta > 1.

    [0, 1] is integrated with the algebraic endpoint weight directly; [1, inf)
    after y = 1/u, which turns it into integral_0^1 u^{-1/beta} / (1 + u) du.
    """
    if not beta > 1:
        raise ConfigError(f"zeta0 diverges for beta <= 1 (got {beta})")
    a, ea = integrate.quad(lambda y: 1.0 / (1.0 + y), 0.0, 1.0, weight="alg", wvar=(1.0 / beta - 1.0, 0.0), epsabs=1e-12, epsrel=1e-13)
    b, eb = integrate.quad(lambda u: 1.0 / (1.0 + u), 0.0, 1.0, weight="alg", wvar=(-1.0 / beta, 0.0), epsabs=1e-12, epsrel=1e-13)
    if ea + eb > 1e-10:
        raise NumericalError(f"quadrature error estimate {ea + eb:.2e} above 1e-10")
    return a + b


@dataclass(frozen=True)
class GapReport:
    min_scaled_gap: float
    empirical_c: float
    count: int
    cutoff: float
    argmin: tuple

    def to_dict(self) -> dict:
        return {
            "min_scaled_gap": self.min_scaled_gap,
            "empirical_c": self.empirical_c,
            "count": self.count,
            "cutoff": self.cutoff,
            "argmin": list(self.argmin),
        }


def gap_check(family: EigenFamily, cutoff: float, min_count: int = 10) -> GapReport:
    """Minimum of (mu_{k+1} - mu_k) mu_{k+1} over the sorted spectrum below ``cutoff``.

    ``empirical_c = sqrt(2) min(...) / pi^4`` is the constant in
    gap >= c pi^4 / (sqrt(2) mu_{k+1}). Raises CollisionError when two
    eigenvalues coincide to rounding.
    """
    if family.kind not in ("rect2d", "fourth2d", "custom"):
        raise ConfigError("gap_check applies to rect2d, fourth2d or custom families")
    spec = sorted_spectrum(family, cutoff)
    vals = np.array([e.value for e in spec])
    if any(e.multiplicity > 1 for e in spec):
        raise CollisionError("repeated eigenvalue in the spectrum")
    if vals.size >= 2:
        gaps = np.diff(vals)
        hit = np.flatnonzero(gaps <= COLLISION_RTOL * vals[1:])
        if hit.size:
            k = int(hit[0])
            raise CollisionError(f"eigenvalues {vals[k]!r} and {vals[k + 1]!r} collide")
    if vals.size < min_count:
        raise ConfigError(f"cutoff {cutoff:g} leaves {vals.size} eigenvalues, need {min_count}")
    scaled = np.diff(vals) * vals[1:]
    k = int(np.argmin(scaled))
    idx = (spec[k].indices[0].label(), spec[k + 1].indices[0].label())
    smin = float(scaled[k])
    return GapReport(smin, math.sqrt(2) * smin / PI2**2, int(vals.size), float(cutoff), idx)
