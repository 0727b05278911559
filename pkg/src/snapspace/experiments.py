"""Declarative experiment configurations and their pipelines."""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataIOError, SingularFitError, SnapspaceError
from .snapshot import (
    SpaceGrid,
    TimeGrid,
    assemble,
    averaged_output_grid,
    eigenmode_on_grid,
    trajectory_stream,
    window_average,
)
from .spectral import CoefficientFamily, EigenFamily, ModeIndex, load_custom_json, random_uniform_draws
from .subspace import (
    SensorSet,
    Subspace,
    build_subspace,
    multiplicity_rank,
    periodic_blocks,
    relative_error,
    save_subspace,
    sensor_design,
)

FAMILIES = {
    "dirichlet1d": EigenFamily.dirichlet1d,
    "periodic1d": EigenFamily.periodic1d,
    "rect2d": EigenFamily.rect2d,
    "fourth2d": EigenFamily.fourth2d,
}

DEFAULT_MODES = {
    "1": [[n] for n in range(1, 9)],
    "2": [[n] for n in range(0, 9)],
    "3": [[1, 1], [2, 1], [1, 2], [2, 2], [3, 1], [1, 3], [3, 2], [2, 3]],
    "4": [[1, 1], [2, 1], [1, 2], [2, 2], [3, 1], [3, 2], [1, 3], [2, 3]],
}


@dataclass
class ExperimentConfig:
    """One experiment run. Unset fields take per-experiment defaults."""

    experiment: str = "1"
    family: str | None = None
    coefficients: str | None = None
    custom_file: str | None = None
    space_nodes: int = 1001
    t0: float = 1e-6
    t1: float = 1.0
    time_count: int = 10001
    time_spacing: str = "uniform"
    threshold: float = 1e-12
    tol: float = 1e-15
    tau: float = 0.1
    modes: list | None = None
    sensor_count: int = 50
    tau_grid: list = field(default_factory=lambda: [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 0.5])
    realizations: int = 100
    omega_count: int = 1000
    noise: float = 1e-3
    dt_list: list = field(default_factory=lambda: [1e-3, 1e-4, 1e-5])
    window: float = 0.1
    output_spacing: float = 1e-4
    seed: int | None = 0
    full_scale: bool = False
    save_basis: bool = False

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(**doc)
        cfg.experiment = str(cfg.experiment)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise DataIOError(f"missing config {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)

    def with_full_scale(self) -> "ExperimentConfig":
        d = asdict(self)
        d.update(full_scale=True, realizations=1000, dt_list=[1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8])
        return ExperimentConfig.from_dict(d)

    def validate(self) -> None:
        if self.experiment not in ("1", "2", "3", "4", "5", "6", "custom"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.family is not None and self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if self.experiment == "custom" and self.custom_file is None and self.family is None:
            raise ConfigError("custom experiments need a family or a custom_file")
        if self.space_nodes < 3:
            raise ConfigError("space_nodes must be at least 3")
        if not (self.t1 > self.t0 > 0):
            raise ConfigError("need t1 > t0 > 0")
        if self.time_count < 2:
            raise ConfigError("time_count must be at least 2")
        if self.time_spacing not in ("uniform", "log"):
            raise ConfigError("time_spacing is uniform or log")
        if not (0 < self.threshold <= 1):
            raise ConfigError("threshold must lie in (0, 1]")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.tau <= 0 or any(t <= 0 for t in self.tau_grid):
            raise ConfigError("validation times must be positive")
        if self.sensor_count < 1 or self.realizations < 1 or self.omega_count < 1:
            raise ConfigError("sensor_count, realizations and omega_count must be positive")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")
        if any(dt <= 0 for dt in self.dt_list) or self.window <= 0 or self.output_spacing <= 0:
            raise ConfigError("dt_list, window and output_spacing must be positive")
        if self.experiment in ("5", "6") and self.seed is None:
            raise ConfigError("experiments 5 and 6 need a seed")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Report:
    experiment: str
    config: dict
    dim: int | None = None
    singular_values: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Everything except timing, so reruns give identical bytes."""
        d = asdict(self)
        d.pop("timing")
        return d

    def write(self, out: Path) -> list[Path]:
        out = Path(out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            files = [out / "report.json", out / "timing.json"]
            files[0].write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
            files[1].write_text(json.dumps(self.timing, indent=2, sort_keys=True) + "\n")
            if self.etas:
                p = out / "eta.csv"
                lines = ["mode,eta"] + [f"{r['mode']},{r['eta']!r}" for r in self.etas]
                p.write_text("\n".join(lines) + "\n")
                files.append(p)
            if self.singular_values:
                p = out / "singular_values.csv"
                p.write_text("\n".join(repr(s) for s in self.singular_values) + "\n")
                files.append(p)
            if self.curves:
                p = out / "errors.csv"
                keys = list(self.curves[0])
                lines = [",".join(keys)] + [",".join(repr(r[k]) for k in keys) for r in self.curves]
                p.write_text("\n".join(lines) + "\n")
                files.append(p)
        except OSError as exc:
            raise DataIOError(f"cannot write results to {out}: {exc}") from exc
        return files


class StageError(SnapspaceError):
    """Wraps a pipeline failure with the stage it happened in."""

    def __init__(self, stage: str, err: SnapspaceError):
        super().__init__(f"[{stage}] {err}")
        self.stage = stage
        self.exit_code = err.exit_code


class _Stages:
    def __init__(self):
        self.timing: dict[str, float] = {}

    def run(self, name, fn, *args, **kw):
        t = time.perf_counter()
        try:
            return fn(*args, **kw)
        except StageError:
            raise
        except SnapspaceError as exc:
            raise StageError(name, exc) from exc
        finally:
            self.timing[name] = self.timing.get(name, 0.0) + time.perf_counter() - t


def _time_grid(cfg: ExperimentConfig) -> TimeGrid:
    make = TimeGrid.uniform if cfg.time_spacing == "uniform" else TimeGrid.log
    return make(cfg.t0, cfg.t1, cfg.time_count)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sub_seed(seed: int, index: int) -> int:
    """Deterministic per-task seed derived from (master seed, task index)."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


# -- shared pipeline pieces -----------------------------------------------------


def _mode_field(family: EigenFamily, mode, sg: SpaceGrid, tau: float) -> np.ndarray:
    if family.kind == "periodic1d":
        # complex eigenmode e^{i n pi x} = cos + i sin on one eigenvalue
        n = int(mode[0])
        if n == 0:
            return eigenmode_on_grid(family, ModeIndex(0, branch="const"), sg, tau).astype(complex)
        c = eigenmode_on_grid(family, ModeIndex(n, branch="cos"), sg, tau)
        s = eigenmode_on_grid(family, ModeIndex(n, branch="sin"), sg, tau)
        return c + 1j * s
    idx = ModeIndex.pair(*mode) if len(mode) == 2 else ModeIndex(int(mode[0]))
    return eigenmode_on_grid(family, idx, sg, tau)


def _mode_label(mode) -> str:
    return str(mode[0]) if len(mode) == 1 else f"({mode[0]};{mode[1]})"


def _eta_rows(stages, family, sub, sg, modes, tau) -> list[dict]:
    rows = []
    for mode in modes:
        w = _mode_field(family, mode, sg, tau)
        eta = stages.run("validate", relative_error, sub, w)
        rows.append({"mode": _mode_label(mode), "eta": float(eta)})
    return rows


def _trajectories(cfg: ExperimentConfig, family: EigenFamily):
    if cfg.experiment == "2":
        return [
            CoefficientFamily.alternating_inverse_square("sin"),
            CoefficientFamily.alternating_inverse_square("cos", constant=1.0),
        ]
    if family.dimension == 2:
        return [CoefficientFamily.product_inverse_square()]
    return [CoefficientFamily.alternating_inverse_square()]


def _default_family(cfg: ExperimentConfig) -> str:
    return cfg.family or {"1": "dirichlet1d", "2": "periodic1d", "3": "rect2d", "4": "fourth2d"}.get(
        cfg.experiment, "dirichlet1d"
    )


def clean_subspace(cfg: ExperimentConfig, stages: _Stages | None = None):
    """Experiment 1 style build: (family, grid, subspace)."""
    stages = stages or _Stages()
    family = FAMILIES[_default_family(cfg)]()
    sg = SpaceGrid.for_family(family, cfg.space_nodes)
    tg = _time_grid(cfg)
    mats = [stages.run("assemble", assemble, family, c, sg, tg, cfg.tol) for c in _trajectories(cfg, family)]
    sub = stages.run("subspace", build_subspace, mats, cfg.threshold)
    return family, sg, sub


# -- experiments ---------------------------------------------------------------------


def _run_projection(cfg: ExperimentConfig, out: Path | None) -> Report:
    stages = _Stages()
    family, sg, sub = clean_subspace(cfg, stages)
    modes = cfg.modes or DEFAULT_MODES[cfg.experiment]
    rep = Report(cfg.experiment, cfg.to_dict(), sub.dim, sub.singular_values.tolist())
    rep.etas = _eta_rows(stages, family, sub, sg, modes, cfg.tau)
    rep.extra["source_ranks"] = list(sub.source_ranks)
    rep.extra["orthonormality_defect"] = sub.gram_defect()
    if cfg.experiment == "2":
        blocks = periodic_blocks(_trajectories(cfg, family), 8)
        rep.extra["multiplicity"] = multiplicity_rank(blocks[1:], indices=list(range(1, 9))).to_dict()
        rep.extra["multiplicity"]["B0_sigma_min"] = float(np.linalg.svd(blocks[0], compute_uv=False)[-1])
    if out is not None and cfg.save_basis:
        stages.run("write", save_subspace, sub, Path(out) / "basis.csv")
    rep.timing = stages.timing
    return rep


def _run_custom(cfg: ExperimentConfig, out: Path | None) -> Report:
    stages = _Stages()
    inputs = {}
    if cfg.custom_file:
        family, coeffs = stages.run("load", load_custom_json, cfg.custom_file)
        inputs[str(cfg.custom_file)] = _sha256(cfg.custom_file)
        if coeffs is None:
            coeffs = CoefficientFamily.explicit([1.0 / n**2 for n in range(1, len(family.eigenvalues) + 1)])
    else:
        family = FAMILIES[cfg.family]()
        coeffs = None
    if coeffs is None:
        rules = {
            "alternating_inverse_square": CoefficientFamily.alternating_inverse_square,
            "product_inverse_square": CoefficientFamily.product_inverse_square,
        }
        name = cfg.coefficients or ("product_inverse_square" if family.dimension == 2 else "alternating_inverse_square")
        if name == "random_uniform":
            coeffs = CoefficientFamily.random_uniform(cfg.seed if cfg.seed is not None else 0, cfg.omega_count)
        elif name in rules:
            coeffs = rules[name]()
        else:
            raise ConfigError(f"unknown coefficient rule {name!r}")
    sg = SpaceGrid.for_family(family, cfg.space_nodes)
    m = stages.run("assemble", assemble, family, coeffs, sg, _time_grid(cfg), cfg.tol)
    sub = stages.run("subspace", build_subspace, m, cfg.threshold)
    rep = Report("custom", cfg.to_dict(), sub.dim, sub.singular_values.tolist(), inputs=inputs)
    if family.kind == "custom":
        nmodes = min(8, len(family.eigenvalues))
        modes = cfg.modes or [[n] for n in range(1, nmodes + 1)]
    else:
        modes = cfg.modes or DEFAULT_MODES["3" if family.dimension == 2 else "1"]
    rep.etas = _eta_rows(stages, family, sub, sg, modes, cfg.tau)
    if out is not None and cfg.save_basis:
        stages.run("write", save_subspace, sub, Path(out) / "basis.csv")
    rep.timing = stages.timing
    return rep


def _omegas(cfg: ExperimentConfig) -> np.ndarray:
    """omega draws, one column per realization, each from its own sub-seed."""
    return np.stack(
        [random_uniform_draws(sub_seed(cfg.seed, r), cfg.omega_count) for r in range(cfg.realizations)], axis=1
    )


def sensor_errors(sub: Subspace, taus, omegas: np.ndarray, sensors: SensorSet) -> list[float]:
    """Mean relative L2 error of the sensor fits, one value per tau.

    Readings are exact point values of sum_n omega_n e^{-pi^2 n^2 tau} sin(n pi z).
    """
    sg = sub.space_grid
    x = sg.axes[0]
    n = np.arange(1, omegas.shape[0] + 1)
    phi_grid = np.sin(np.pi * np.outer(x, n))
    phi_sens = np.sin(np.pi * np.outer(sensors.locations, n))
    design = sensor_design(sub, sensors)
    if np.linalg.matrix_rank(design) < sub.dim:
        raise SingularFitError(f"sensor design has rank below {sub.dim}")
    sw = sg.sqrt_weights[:, None]
    out = []
    for tau in taus:
        amp = np.exp(-np.pi**2 * n**2 * tau)[:, None] * omegas
        truth = phi_grid @ amp
        readings = phi_sens @ amp
        coef, *_ = np.linalg.lstsq(design, readings, rcond=None)
        err = np.linalg.norm(sw * (sub.basis @ coef - truth), axis=0) / np.linalg.norm(sw * truth, axis=0)
        out.append(float(np.mean(err)))
    return out


def _run_exp5(cfg: ExperimentConfig, out: Path | None) -> Report:
    stages = _Stages()
    base = ExperimentConfig.from_dict({**cfg.to_dict(), "experiment": "1"})
    family, sg, sub = clean_subspace(base, stages)
    sensors = SensorSet.midpoints(cfg.sensor_count)
    omegas = stages.run("draws", _omegas, cfg)
    errs = stages.run("reconstruct", sensor_errors, sub, cfg.tau_grid, omegas, sensors)
    rep = Report("5", cfg.to_dict(), sub.dim, sub.singular_values.tolist())
    rep.curves = [{"tau": t, "mean_error": e} for t, e in zip(cfg.tau_grid, errs)]
    rep.timing = stages.timing
    return rep


def exp6_window(dt: float, window: float) -> int:
    """S = ceil(window / dt), guarded against ratios that are integers up to rounding."""
    r = window / dt
    return int(math.ceil(r - 1e-9 * r))


def _averaged_errors(cfg, stages, family, sg, rank, dt, noise, seed, taus, omegas, sensors):
    """Noisy (or clean) fine data -> window average -> rank-limited subspace -> sensor errors."""
    coeffs = CoefficientFamily.alternating_inverse_square()
    fine = TimeGrid.with_step(cfg.t0, cfg.t1, dt)
    S = exp6_window(dt, cfg.window)
    stride = max(1, int(round(max(dt, cfg.output_spacing) / dt)))
    outg = averaged_output_grid(fine, S, stride)
    stream = trajectory_stream(family, coeffs, sg, fine, noise, seed, cfg.tol)
    avg = stages.run("average", window_average, stream, S, outg)
    sub = stages.run("subspace", build_subspace, avg, cfg.threshold, rank=rank)
    errs = stages.run("reconstruct", sensor_errors, sub, taus, omegas, sensors)
    return errs, {"S": S, "fine_count": fine.count, "output_count": outg.count}


def _run_exp6(cfg: ExperimentConfig, out: Path | None) -> Report:
    """Noisy averaged data against two references: the same pipeline without
    noise (``noiseless_error``) and the clean Experiment 5 subspace (``exp5_error``)."""
    stages = _Stages()
    base = ExperimentConfig.from_dict({**cfg.to_dict(), "experiment": "1"})
    family, sg, clean = clean_subspace(base, stages)
    sensors = SensorSet.midpoints(cfg.sensor_count)
    omegas = stages.run("draws", _omegas, cfg)
    exp5 = stages.run("reconstruct", sensor_errors, clean, cfg.tau_grid, omegas, sensors)
    rows, windows = [], {}
    for k, dt in enumerate(cfg.dt_list):
        args = (cfg, stages, family, sg, clean.dim, dt)
        noisy, info = _averaged_errors(*args, cfg.noise, sub_seed(cfg.seed, 10_000 + k), cfg.tau_grid, omegas, sensors)
        quiet, _ = _averaged_errors(*args, 0.0, None, cfg.tau_grid, omegas, sensors)
        windows[repr(dt)] = info
        for t, e, e0, e5 in zip(cfg.tau_grid, noisy, quiet, exp5):
            rows.append({"dt": dt, "S": info["S"], "tau": t, "mean_error": e, "noiseless_error": e0, "exp5_error": e5})
    rep = Report("6", cfg.to_dict(), clean.dim, clean.singular_values.tolist())
    rep.curves = rows
    rep.extra["windows"] = windows
    rep.timing = stages.timing
    return rep


def run_experiment(cfg: ExperimentConfig, out=None) -> Report:
    """Run one configured experiment; write CSV/JSON results when ``out`` is given."""
    cfg.validate()
    t = time.perf_counter()
    if cfg.experiment in ("1", "2", "3", "4"):
        rep = _run_projection(cfg, out)
    elif cfg.experiment == "5":
        rep = _run_exp5(cfg, out)
    elif cfg.experiment == "6":
        rep = _run_exp6(cfg, out)
    else:
        rep = _run_custom(cfg, out)
    rep.timing["total"] = time.perf_counter() - t
    if out is not None:
        rep.write(Path(out))
    return rep
