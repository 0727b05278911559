"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (also collected into the
terminal summary) and then asserts the same condition.
"""

import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from snapspace.experiments import ExperimentConfig, run_experiment
from snapspace.moments import (
    ExponentSequence,
    MomentSequence,
    counterexample_witness,
    dn_gram,
    dn_infinity_product,
    finite_biorth_norm,
    gap_check,
    widder_table,
)
from snapspace.snapshot import (
    ColumnStream,
    SnapshotMatrix,
    SpaceGrid,
    TimeGrid,
    add_noise,
    assemble,
    averaged_output_grid,
    window_average,
)
from snapspace.spectral import CoefficientFamily, EigenFamily, eigenvalue, sorted_spectrum
from snapspace.subspace import build_subspace, project, wedin_report

PI2 = math.pi**2
LOG_GRID = {"time_count": 2000, "time_spacing": "log"}


def verdict(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def timed(fn, *args):
    t = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t


def experiment(doc):
    return timed(run_experiment, ExperimentConfig.from_dict(doc))


def eta_summary(rep):
    return ", ".join(f"{r['mode']}={r['eta']:.1e}" for r in rep.etas)


def test_criterion_01_experiment1():
    rep, secs = experiment({"experiment": "1", **LOG_GRID})
    etas = [r["eta"] for r in rep.etas]
    ok_dim = abs(rep.dim - 27) <= 5
    ok_eta = len(etas) == 8 and max(etas) <= 1e-10
    verdict(1, "Exp 1 dim 27+-5, eta<=1e-10, <=60 s", ok_dim and ok_eta and secs <= 60,
            f"dim={rep.dim}, {eta_summary(rep)}, {secs:.1f}s")


def test_criterion_02_experiment2():
    rep, secs = experiment({"experiment": "2"})
    etas = {r["mode"]: r["eta"] for r in rep.etas}
    complex_modes = [etas[str(n)] for n in range(1, 9)]
    ok = abs(rep.dim - 52) <= 6 and max(complex_modes) <= 1e-10 and secs <= 120
    verdict(2, "Exp 2 dim 52+-6, eta<=1e-10 for n=1..8, <=120 s", ok, f"dim={rep.dim}, {eta_summary(rep)}, {secs:.1f}s")


def test_criterion_03_experiment3():
    rep, secs = experiment({"experiment": "3"})
    etas = {r["mode"]: r["eta"] for r in rep.etas}
    ok = etas["(1;1)"] <= 1e-10 and etas["(2;3)"] >= 1e-5 and abs(rep.dim - 34) <= 6 and secs <= 120
    verdict(3, "Exp 3 eta(1,1)<=1e-10, eta(2,3)>=1e-5, dim 34+-6, <=120 s", ok,
            f"dim={rep.dim}, eta(1,1)={etas['(1;1)']:.1e}, eta(2,3)={etas['(2;3)']:.1e}, {secs:.1f}s")


def test_criterion_04_experiment4():
    rep, secs = experiment({"experiment": "4"})
    etas = [r["eta"] for r in rep.etas]
    ok = abs(rep.dim - 23) <= 5 and len(etas) == 8 and max(etas) <= 1e-9 and secs <= 120
    verdict(4, "Exp 4 dim 23+-5, eta<=1e-9 for 8 modes, <=120 s", ok, f"dim={rep.dim}, {eta_summary(rep)}, {secs:.1f}s")


def test_criterion_05_moment_oracles():
    t = time.perf_counter()
    e = ExponentSequence.dirichlet(12)
    worst = 0.0
    for n in range(1, 6):
        a = dn_infinity_product(e, n, J=12, tail="none").value
        b = dn_gram(e, n, N=12)
        worst = max(worst, abs(a - b) / b)
    closed = 0.0
    for n in (1, 2):
        ref = 1 / (math.sqrt(2) * math.sinh(n * math.pi))
        closed = max(closed, abs(dn_infinity_product(e, n, J=100_000).value - ref) / ref)
    secs = time.perf_counter() - t
    verdict(5, "product vs Gram (N=12, n=1..5) and closed form (n=1,2) to 1e-6, <=10 s",
            worst <= 1e-6 and closed <= 1e-6 and secs <= 10,
            f"product/Gram rel={worst:.1e}, closed-form rel={closed:.1e}, {secs:.1f}s")


def test_criterion_06_widder():
    t = time.perf_counter()
    table = widder_table(MomentSequence.harmonic(26), 25, exact=True)
    exact = all(s == 1 for s in table.sums)
    w = counterexample_witness(25, tau=1.0, p=1.0)
    grows = all(s >= b * (1 - 1e-12) for s, b in zip(w["scaled_sums"], w["lower_bound"]))
    secs = time.perf_counter() - t
    verdict(6, "harmonic Widder sums == 1 exactly for k<=25; witness >= (k+1)e^(-tau+2p), <=10 s",
            exact and grows and secs <= 10,
            f"exact={exact}, min ratio={min(w['ratio']):.6f}, {secs:.2f}s")


def test_criterion_07_divergence():
    t = time.perf_counter()
    e = ExponentSequence.half_shifted(200)
    Ns = np.arange(1, 201)
    logs = np.array([finite_biorth_norm(e, 1, int(N)).log for N in Ns])
    increasing = bool(np.all(np.diff(logs) > 0))
    exceeds = bool(np.any(logs > math.log(1e3)))
    harmonic = np.cumsum(1.0 / np.asarray(e.values))
    slope = float(np.polyfit(harmonic, logs, 1)[0])
    ok_slope = abs(slope - 2 * e.values[0]) <= 0.15 * 2 * e.values[0]
    secs = time.perf_counter() - t
    verdict(7, "log-norm increasing, exceeds log(1e3) for N<=200, slope 2mu_1+-15%, <=5 s",
            increasing and exceeds and ok_slope and secs <= 5,
            f"increasing={increasing}, max norm={math.exp(logs.max()):.4g}, slope={slope:.3f}, {secs:.2f}s")


def test_criterion_08_wedin():
    t = time.perf_counter()
    fam = EigenFamily.dirichlet1d()
    sg = SpaceGrid.for_family(fam, 1001)
    m = assemble(fam, CoefficientFamily.alternating_inverse_square(), sg, TimeGrid.log(1e-6, 1.0, 2000))
    worst, violations, vacuous = 0.0, 0, 0
    for seed in range(20):
        rep = wedin_report(m, add_noise(m, 1e-3, seed), 5)
        worst = max(worst, rep.frobenius / rep.wedin_rhs)
        violations += rep.frobenius > rep.wedin_rhs
        vacuous += rep.vacuous
    secs = time.perf_counter() - t
    verdict(8, "||sin Theta||_F <= Wedin rhs over 20 seeds, rank 5, <=60 s", violations == 0 and secs <= 60,
            f"violations={violations}, max lhs/rhs={worst:.3g}, vacuous={vacuous}/20, {secs:.1f}s")


def test_criterion_09_noise_averaging():
    t = time.perf_counter()
    d, S, rows = 1e-3, 999, 200
    fine = TimeGrid.with_step(1e-6, 1e-6 + 30_000 * 1e-3, 1e-3)
    zero = SnapshotMatrix(SpaceGrid.uniform((1.0,), (rows,)), fine, np.zeros((rows, fine.count)))
    noisy = add_noise(zero, d, 2024)
    out = averaged_output_grid(fine, S, stride=S + 1)  # disjoint windows, independent samples
    avg = window_average(ColumnStream.from_matrix(noisy), S, out)
    var = float(np.var(avg.values))
    target = d * d / 3 / (S + 1)
    secs = time.perf_counter() - t
    verdict(9, "averaged noise variance delta^2/3/1000 within 10%, <=30 s",
            abs(var / target - 1) <= 0.10 and secs <= 30,
            f"var={var:.4e}, target={target:.4e}, ratio={var / target:.3f}, {secs:.1f}s")


def test_criterion_10_sensor_curves():
    t = time.perf_counter()
    taus = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1]
    r5 = run_experiment(ExperimentConfig.from_dict({"experiment": "5", "tau_grid": taus}))
    clean = [c["mean_error"] for c in r5.curves]
    monotone = all(b <= a for a, b in zip(clean, clean[1:]))
    drop = clean[0] >= 10 * clean[-1]
    r6 = run_experiment(ExperimentConfig.from_dict({"experiment": "6", "tau_grid": taus}))
    bad = [(c["dt"], c["tau"]) for c in r6.curves if not c["mean_error"] > c["noiseless_error"]]
    secs = time.perf_counter() - t
    verdict(10, "noiseless error monotone, e(1e-5)>=10 e(1e-1); noisy > noiseless at every tau, <=5 min",
            monotone and drop and not bad and secs <= 300,
            f"monotone={monotone}, ratio={clean[0] / clean[-1]:.2g}, noisy<=noiseless at (dt,tau)={bad}, {secs:.0f}s")


def test_criterion_11_property_suite():
    t = time.perf_counter()
    g = np.random.default_rng(7)
    fam = EigenFamily.dirichlet1d()
    sg = SpaceGrid.for_family(fam, 1001)
    tg = TimeGrid.log(1e-6, 1.0, 2000)
    m = assemble(fam, CoefficientFamily.alternating_inverse_square(), sg, tg)
    V = build_subspace(m)
    w = g.standard_normal(sg.size)
    p = project(V, w)
    idem = float(np.max(np.abs(project(V, p) - p)) / np.max(np.abs(p)))
    ortho = V.gram_defect()
    a, b = g.uniform(-2, 2, 2)
    cu = g.standard_normal(12)
    cv = g.standard_normal(12)
    mu = assemble(fam, CoefficientFamily.explicit(list(cu)), sg, tg).values
    mv = assemble(fam, CoefficientFamily.explicit(list(cv)), sg, tg).values
    mw = assemble(fam, CoefficientFamily.explicit(list(a * cu + b * cv)), sg, tg).values
    lin = float(np.max(np.abs(mw - (a * mu + b * mv))))
    spec_ok = True
    for kind, cutoff in (("rect2d", 400 * PI2), ("fourth2d", 4000 * PI2)):
        f = EigenFamily(kind)
        brute = sorted({eigenvalue(f, (i, j)) for i in range(1, 40) for j in range(1, 40)} )
        brute = [v for v in brute if v <= cutoff]
        spec_ok &= [e.value for e in sorted_spectrum(f, cutoff)] == brute
    gaps = [gap_check(EigenFamily.rect2d(), c * PI2).min_scaled_gap for c in (100, 200, 400)]
    secs = time.perf_counter() - t
    ok = idem <= 1e-10 and ortho <= 1e-10 and lin <= 1e-12 and spec_ok and min(gaps) > 0 and secs <= 60
    verdict(11, "idempotence, orthonormality<=1e-10, linearity, spectrum, gap positivity, <=60 s", ok,
            f"idem={idem:.1e}, gram={ortho:.1e}, lin={lin:.1e}, spectrum={spec_ok}, min gap={min(gaps):.3g}, {secs:.1f}s")
