"""Command line front end.

Exit codes: 0 success, 1 validation above tolerance, 2 configuration error,
3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import moments as mom
from .errors import ConfigError, DataIOError, SnapspaceError
from .experiments import FAMILIES, ExperimentConfig, run_experiment
from .snapshot import SpaceGrid, TimeGrid, add_noise, assemble, eigenmode_on_grid, load_matrix, read_csv_matrix, save_matrix
from .spectral import CoefficientFamily, EigenFamily, ModeIndex, load_custom_json
from .subspace import (
    SensorSet,
    build_subspace,
    load_subspace,
    reconstruct_from_sensors,
    relative_error,
    save_subspace,
)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _family(args) -> EigenFamily:
    if getattr(args, "eigenvalues", None):
        return load_custom_json(args.eigenvalues)[0]
    return FAMILIES[args.family]()


def _parse_mode(text: str):
    parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
    try:
        return [int(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad mode {text!r}") from exc


# -- handlers -------------------------------------------------------------------


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    d = cfg.to_dict()
    d["experiment"] = args.id
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = ExperimentConfig.from_dict(d)
    if args.full_scale:
        cfg = cfg.with_full_scale()
    rep = run_experiment(cfg, args.out)
    _emit({"experiment": rep.experiment, "dim": rep.dim, "etas": rep.etas, "curves": rep.curves, "out": args.out})
    return 0


def cmd_assemble(args) -> int:
    family = _family(args)
    if args.eigenvalues:
        coeffs = load_custom_json(args.eigenvalues)[1]
        if coeffs is None:
            raise ConfigError("custom eigenvalue file has no coefficients")
    elif args.coeffs == "alternating_inverse_square":
        coeffs = CoefficientFamily.alternating_inverse_square(args.branch, args.constant)
    elif args.coeffs == "product_inverse_square":
        coeffs = CoefficientFamily.product_inverse_square()
    else:
        coeffs = CoefficientFamily.random_uniform(args.seed, args.count)
    sg = SpaceGrid.for_family(family, args.nodes)
    make = TimeGrid.uniform if args.spacing == "uniform" else TimeGrid.log
    m = assemble(family, coeffs, sg, make(args.t0, args.t1, args.times), args.tol)
    if args.noise:
        m = add_noise(m, args.noise, args.noise_seed)
    save_matrix(m, args.out)
    _emit({"rows": m.shape[0], "columns": m.shape[1], "provenance": m.provenance, "out": args.out})
    return 0


def cmd_subspace_build(args) -> int:
    mats = [load_matrix(p) for p in args.matrix]
    s = build_subspace(mats, args.threshold, rank=args.rank)
    save_subspace(s, args.out)
    _emit({"dim": s.dim, "source_ranks": list(s.source_ranks), "singular_values": s.singular_values.tolist(), "out": args.out})
    return 0


def cmd_subspace_validate(args) -> int:
    s = load_subspace(args.subspace)
    if args.field:
        w = read_csv_matrix(args.field)
        w = w[:, 0] if w.shape[1] == 1 else w.ravel()
    else:
        if not args.mode:
            raise ConfigError("give --mode or --field")
        family = _family(args)
        mode = _parse_mode(args.mode)
        if family.dimension == 2:
            idx = ModeIndex.pair(*mode)
        elif family.kind == "periodic1d":
            idx = ModeIndex(mode[0], branch="const" if mode[0] == 0 else args.branch)
        else:
            idx = ModeIndex(mode[0])
        if not s.space_grid.matches(SpaceGrid.for_family(family, s.space_grid.shape[0])):
            raise ConfigError("subspace grid does not match the family's default grid")
        if family.kind == "periodic1d" and args.branch == "complex" and mode[0] > 0:
            w = eigenmode_on_grid(family, ModeIndex(mode[0], branch="cos"), s.space_grid, args.tau) + 1j * eigenmode_on_grid(
                family, ModeIndex(mode[0], branch="sin"), s.space_grid, args.tau
            )
        else:
            w = eigenmode_on_grid(family, idx, s.space_grid, args.tau)
    eta = float(relative_error(s, w))
    ok = eta <= args.tol
    _emit({"eta": eta, "tol": args.tol, "pass": ok, "dim": s.dim})
    return 0 if ok else 1


def cmd_reconstruct(args) -> int:
    s = load_subspace(args.subspace)
    if args.sensors:
        z = read_csv_matrix(args.sensors)
        sensors = SensorSet(z[:, 0] if z.shape[1] == 1 else z)
    else:
        sensors = SensorSet.midpoints(args.sensor_count, s.space_grid.lengths[0])
    y = read_csv_matrix(args.readings)
    y = y[:, 0] if y.shape[1] == 1 else y
    rec = reconstruct_from_sensors(s, sensors, y)
    if args.out:
        try:
            np.savetxt(args.out, np.atleast_2d(rec.field.T).T, fmt="%.17g", delimiter=",")
        except OSError as exc:
            raise DataIOError(f"cannot write {args.out}: {exc}") from exc
    _emit({"coefficients": rec.coefficients, "residual": rec.residual, "out": args.out})
    return 0


def _exponents(args) -> mom.ExponentSequence:
    if args.exponents:
        return mom.ExponentSequence.load(args.exponents)
    count = args.N
    if args.rule == "half-shifted":
        return mom.ExponentSequence.half_shifted(count)
    if args.family:
        return mom.ExponentSequence.from_family(FAMILIES[args.family](), count)
    return mom.ExponentSequence.dirichlet(count)


def cmd_moments(args) -> int:
    sub = args.sub
    if sub == "dn":
        e = _exponents(args)
        if args.method == "gram":
            T = math.inf if args.T is None else args.T
            val = mom.dn_gram(e, args.n, T, N=min(e.N, args.N), dps=args.dps, tail=args.tail)
            _emit({"n": args.n, "method": "gram", "N": min(e.N, args.N), "T": None if math.isinf(T) else T, "d_n": val})
        else:
            r = mom.dn_infinity_product(e, args.n, args.J, tail=args.tail)
            _emit({"n": args.n, "method": "product", "J": args.J, "tail": args.tail, "d_n": r.value, "log_d_n": r.log})
    elif sub == "biorth":
        e = _exponents(args)
        r = mom.finite_biorth_norm(e, args.n, args.N)
        _emit({"n": args.n, "N": args.N, "norm": r.value if math.isfinite(r.value) else None, "log_norm": r.log})
    elif sub == "widder":
        if args.moments:
            m = mom.MomentSequence.load(args.moments)
        else:
            m = mom.MomentSequence.harmonic(args.kmax + 1)
        t = mom.widder_table(m, args.kmax, exact=not args.float, force=args.force)
        _emit(t.to_dict())
    elif sub == "witness":
        _emit(mom.counterexample_witness(args.kmax, args.tau, args.p, args.alpha))
    elif sub == "zeta":
        _emit({"beta": args.beta, "zeta0": mom.zeta0(args.beta), "closed_form": math.pi / math.sin(math.pi / args.beta)})
    elif sub == "gap":
        cutoff = args.cutoff * (math.pi**2 if args.pi2 else 1.0)
        fam = load_custom_json(args.eigenvalues)[0] if args.eigenvalues else FAMILIES[args.family]()
        _emit(mom.gap_check(fam, cutoff).to_dict())
    elif sub == "series":
        _emit(mom.series_class(_exponents(args)))
    return 0


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snapspace", description="Snapshot subspaces of parabolic evolutions.")
    sp = p.add_subparsers(dest="command", required=True)

    e = sp.add_parser("experiment", help="run one of the reference experiments")
    e.add_argument("id", choices=["1", "2", "3", "4", "5", "6", "custom"])
    e.add_argument("--config", help="JSON config document")
    e.add_argument("--out", help="output directory")
    e.add_argument("--seed", type=int)
    e.add_argument("--full-scale", "--paper-scale", dest="full_scale", action="store_true", help="1000 realizations and dt down to 1e-8")
    e.set_defaults(func=cmd_experiment)

    a = sp.add_parser("assemble", help="sample a trajectory into a CSV snapshot matrix")
    a.add_argument("--family", choices=sorted(FAMILIES), default="dirichlet1d")
    a.add_argument("--eigenvalues", help="custom JSON with eigenvalues and coefficients")
    a.add_argument("--coeffs", choices=["alternating_inverse_square", "product_inverse_square", "random_uniform"], default="alternating_inverse_square")
    a.add_argument("--branch", choices=["sin", "cos"], default="sin")
    a.add_argument("--constant", type=float, default=0.0)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--count", type=int, default=1000)
    a.add_argument("--nodes", type=int, default=1001)
    a.add_argument("--t0", type=float, default=1e-6)
    a.add_argument("--t1", type=float, default=1.0)
    a.add_argument("--times", type=int, default=10001)
    a.add_argument("--spacing", choices=["uniform", "log"], default="uniform")
    a.add_argument("--tol", type=float, default=1e-15)
    a.add_argument("--noise", type=float, default=0.0)
    a.add_argument("--noise-seed", type=int, default=0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_assemble)

    s = sp.add_parser("subspace", help="build or validate subspaces")
    ss = s.add_subparsers(dest="action", required=True)
    b = ss.add_parser("build")
    b.add_argument("--matrix", action="append", required=True, help="snapshot CSV (repeat for a union)")
    b.add_argument("--threshold", type=float, default=1e-12)
    b.add_argument("--rank", type=int)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_subspace_build)
    v = ss.add_parser("validate")
    v.add_argument("--subspace", required=True)
    v.add_argument("--field", help="CSV field on the subspace grid")
    v.add_argument("--mode", help="eigenmode index, e.g. 3 or 2,3")
    v.add_argument("--family", choices=sorted(FAMILIES), default="dirichlet1d")
    v.add_argument("--eigenvalues", help="custom JSON family")
    v.add_argument("--branch", choices=["sin", "cos", "complex"], default="complex")
    v.add_argument("--tau", type=float, default=0.1)
    v.add_argument("--tol", type=float, default=1e-10)
    v.set_defaults(func=cmd_subspace_validate)

    r = sp.add_parser("reconstruct", help="least-squares fit from sensor readings")
    r.add_argument("--subspace", required=True)
    r.add_argument("--readings", required=True, help="CSV, one row per sensor")
    r.add_argument("--sensors", help="CSV of sensor locations")
    r.add_argument("--sensor-count", type=int, default=50)
    r.add_argument("--out")
    r.set_defaults(func=cmd_reconstruct)

    m = sp.add_parser("moments", help="moment-problem diagnostics (JSON on stdout)")
    ms = m.add_subparsers(dest="sub", required=True)
    for name in ("dn", "biorth", "series"):
        q = ms.add_parser(name)
        q.add_argument("--family", choices=sorted(FAMILIES))
        q.add_argument("--exponents", help="JSON with an 'eigenvalues' list")
        q.add_argument("--rule", choices=["half-shifted"])
        q.add_argument("--N", type=int, default=12 if name == "dn" else 200)
        if name != "series":
            q.add_argument("--n", type=int, default=1)
        if name == "dn":
            q.add_argument("--method", choices=["product", "gram"], default="product")
            q.add_argument("--J", type=int, default=100_000)
            q.add_argument("--tail", choices=["analytic", "none"], default="analytic")
            q.add_argument("--T", type=float)
            q.add_argument("--dps", type=int, default=80)
        q.set_defaults(func=cmd_moments)
    w = ms.add_parser("widder")
    w.add_argument("--rule", choices=["harmonic"], default="harmonic")
    w.add_argument("--moments", help="JSON with a 'moments' list")
    w.add_argument("--kmax", type=int, default=25)
    w.add_argument("--float", action="store_true", help="floating point instead of rationals")
    w.add_argument("--force", action="store_true")
    w.set_defaults(func=cmd_moments)
    x = ms.add_parser("witness")
    x.add_argument("--kmax", type=int, default=25)
    x.add_argument("--tau", type=float, default=1.0)
    x.add_argument("--p", type=float, default=1.0)
    x.add_argument("--alpha", type=float, default=0.5)
    x.set_defaults(func=cmd_moments)
    z = ms.add_parser("zeta")
    z.add_argument("--beta", type=float, required=True)
    z.set_defaults(func=cmd_moments)
    g = ms.add_parser("gap")
    g.add_argument("--family", choices=["rect2d", "fourth2d"], default="rect2d")
    g.add_argument("--eigenvalues", help="custom JSON family")
    g.add_argument("--cutoff", type=float, required=True)
    g.add_argument("--pi2", action="store_true", help="cutoff is in units of pi^2")
    g.set_defaults(func=cmd_moments)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SnapspaceError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return DataIOError.exit_code


if __name__ == "__main__":
    sys.exit(main())
