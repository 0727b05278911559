import math
from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from snapspace.errors import CollisionError, ConfigError
from snapspace.moments import (
    ExponentSequence,
    MomentSequence,
    counterexample_witness,
    dn_gram,
    dn_infinity_product,
    finite_biorth_norm,
    gap_check,
    series_class,
    widder_lambda,
    widder_table,
    zeta0,
)
from snapspace.spectral import EigenFamily, eigenvalue

PI2 = math.pi**2


def exact_inverse_diagonal(mu):
    """(G^{-1})_nn for G_ij = 1/(mu_i + mu_j), in exact rationals."""
    mu = [sympy.Rational(m) for m in mu]
    G = sympy.Matrix(len(mu), len(mu), lambda i, j: 1 / (mu[i] + mu[j]))
    Gi = G.inv()
    return [Gi[i, i] for i in range(len(mu))]


@pytest.mark.parametrize("mu", [[1, 2, 3], [1, 2, 3, 4, 5], [Fraction(1, 2), Fraction(3, 2), Fraction(5, 2), Fraction(7, 2)]])
def test_distance_against_exact_gram_inverse(mu):
    e = ExponentSequence(tuple(float(m) for m in mu))
    diag = exact_inverse_diagonal(mu)
    for n in range(1, len(mu) + 1):
        ref = 1 / math.sqrt(float(diag[n - 1]))
        assert dn_gram(e, n) == pytest.approx(ref, rel=1e-14)
        assert dn_infinity_product(e, n, tail="none").value == pytest.approx(ref, rel=1e-13)
        assert finite_biorth_norm(e, n).value == pytest.approx(math.sqrt(float(diag[n - 1])), rel=1e-13)


def test_hilbert_values():
    # mu_n = n - 1/2 makes G the 3x3 Hilbert matrix
    e = ExponentSequence((0.5, 1.5, 2.5))
    got = [dn_gram(e, n) for n in (1, 2, 3)]
    assert got == pytest.approx([1 / 3, 0.0721687836, 0.0745355992], rel=1e-9)


def test_dirichlet_closed_form():
    e = ExponentSequence.dirichlet(12)
    for n in (1, 2):
        ref = 1 / (math.sqrt(2) * math.sinh(n * math.pi))
        assert dn_infinity_product(e, n, J=100_000).value == pytest.approx(ref, rel=1e-10)
    assert dn_infinity_product(e, 1, J=100_000).value == pytest.approx(0.0612280, abs=5e-8)
    assert dn_infinity_product(e, 2, J=100_000).value == pytest.approx(2.6410e-3, abs=5e-8)


def test_product_and_gram_agree_on_prefix():
    e = ExponentSequence.dirichlet(12)
    for n in range(1, 6):
        a = dn_infinity_product(e, n, J=12, tail="none").value
        b = dn_gram(e, n, N=12)
        assert a == pytest.approx(b, rel=1e-12)


def test_gram_tail_limits():
    e = ExponentSequence.dirichlet(12)
    with pytest.raises(ConfigError):
        dn_gram(e, 1, N=31)
    with pytest.raises(ConfigError):
        dn_gram(e, 1, dps=20)
    with pytest.raises(ConfigError):
        dn_infinity_product(e, 13, J=12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 5.0))
def test_finite_horizon_distance_is_smaller(T):
    e = ExponentSequence((1.0, 2.0, 3.5, 5.0))
    for n in (1, 2):
        dT = dn_gram(e, n, T=T, dps=60)
        assert 0 < dT <= dn_gram(e, n) * (1 + 1e-12)
        assert dT <= dn_gram(e, n, T=2 * T, dps=60) * (1 + 1e-12)


def test_half_shifted_norm_telescopes():
    e = ExponentSequence.half_shifted(200)
    for N in (1, 2, 10, 200):
        assert finite_biorth_norm(e, 1, N).value == pytest.approx(N, rel=1e-12)


def test_tail_sum_matches_direct():
    e = ExponentSequence.dirichlet(5)
    K = 2_000_000
    direct = math.fsum(1.0 / (PI2 * n * n) for n in range(11, K + 1)) + 1.0 / (PI2 * (K + 0.5))
    assert e.tail_sum(10) == pytest.approx(direct, rel=1e-6)
    assert ExponentSequence.half_shifted(5).tail_sum(10) is None


def test_series_class():
    assert series_class(ExponentSequence.dirichlet(5))["cls"] == "convergent"
    assert series_class(ExponentSequence.half_shifted(5))["cls"] == "divergent"
    fit = series_class(ExponentSequence(tuple(float(n) ** 1.5 for n in range(1, 200))))
    assert fit["method"] == "fit" and fit["cls"] == "convergent"
    with pytest.raises(ConfigError):
        series_class(ExponentSequence((1.0, 2.0)))


def test_widder_harmonic_entries():
    # m_n = 1/n gives lambda_{k,k'} = C(k,k') B(k'+1, k-k'+1) = 1/(k+1)
    t = widder_table(MomentSequence.harmonic(16), 15)
    for k, row in enumerate(t.rows):
        assert all(v == Fraction(1, k + 1) for v in row)
    assert all(s == 1 for s in t.sums)


def test_widder_lambda_power_moments():
    # m_n = r^{n-1}: lambda_{k,k'} = C(k,k') r^{k'} (1 - r)^{k-k'}
    r = Fraction(1, 3)
    m = [r**j for j in range(10)]
    for k in range(10):
        for kp in range(k + 1):
            assert widder_lambda(m, k, kp) == math.comb(k, kp) * r**kp * (1 - r) ** (k - kp)


def test_widder_float_refused():
    with pytest.raises(ConfigError):
        widder_table(MomentSequence.harmonic(20), 15, exact=False)
    t = widder_table(MomentSequence.harmonic(10), 8, exact=False)
    assert max(abs(float(s) - 1) for s in t.sums) < 1e-10


def test_counterexample_witness():
    w = counterexample_witness(10)
    assert all(r >= 1 - 1e-12 for r in w["ratio"])
    assert all(d >= s * (1 - 1e-12) for d, s in zip(w["diagonal_sup"], w["scaled_sums"]))


@pytest.mark.parametrize("beta", [1.5, 2.0, 3.0, 7.0])
def test_zeta0_closed_form(beta):
    assert zeta0(beta) == pytest.approx(math.pi / math.sin(math.pi / beta), rel=1e-12)


def test_zeta0_domain():
    with pytest.raises(ConfigError):
        zeta0(1.0)


def test_gap_check_brute_force():
    fam = EigenFamily.rect2d()
    cutoff = 100 * PI2
    vals = sorted(
        eigenvalue(fam, (m, n)) for m in range(1, 20) for n in range(1, 20) if eigenvalue(fam, (m, n)) <= cutoff
    )
    g = min((b - a) * b for a, b in zip(vals, vals[1:]))
    rep = gap_check(fam, cutoff)
    assert rep.count == len(vals)
    assert rep.min_scaled_gap == pytest.approx(g, rel=1e-12)
    assert rep.empirical_c == pytest.approx(math.sqrt(2) * g / math.pi**4, rel=1e-12)


def test_gap_collision():
    with pytest.raises(CollisionError):
        gap_check(EigenFamily.custom([1.0, 2.0, 2.0 * (1 + 1e-16) + 1e-15] + [float(k) for k in range(3, 12)]), 100.0)
