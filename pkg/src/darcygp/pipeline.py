"""End-to-end workflow orchestration: sample the design, solve the ensemble,
calibrate the discretization error, fit the surrogate, evaluate confidences.

All stages are driven by a single RunConfig whose hash is embedded in every
persisted artifact; with the direct sparse solver the whole pipeline is
bit-reproducible from (config, seeds) regardless of worker count.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import confidence as conf
from . import fastgp
from .darcy import Mesh, WellConfig, solve_critical_ensemble
from .qmc import LatticeGenerator, baker, default_lattice_generator, lattice_points, random_shift
from .random_field import KlBasis, MaternCovariance, build_kl, clamped_uniform_to_gaussian

__all__ = [
    "RunConfig",
    "TrainingSet",
    "config_hash",
    "load_config",
    "save_config",
    "run_sampling",
    "run_ensemble",
    "run_calibration",
    "run_fit",
    "run_full",
    "write_training_csv",
    "read_training_csv",
    "domain_map_for",
    "default_rate_grid",
    "default_threshold_grid",
]

ENSEMBLE_FAILURE_FRACTION = 0.001
UNIT_CLAMP = 2.0**-32


@dataclass(frozen=True)
class RunConfig:
    """Every knob of the workflow; defaults give the desk-scale problem."""

    # domain and wells
    side_length: float = 200.0
    injection_rate: float = 0.031688
    injection_location: tuple[float, float] = (50.0, 100.0)
    extraction_location: tuple[float, float] = (150.0, 100.0)
    critical_location: tuple[float, float] = (100.0, 100.0)
    boundary_head: float = 0.0
    # random field
    correlation_length: float = 50.0
    field_variance: float = 1.0
    smoothness: float = 1.5
    field_transform: str = "exp"
    # discretization
    s: int = 8
    d: int = 32
    # training design
    n_train: int = 1024
    sampling_shift: bool = False  # a common random shift on the training lattice
    baker_enabled: bool = True
    lattice_vector_path: str | None = None
    # calibration
    calibration_levels: int = 3
    calibration_samples: int = 32
    noise_init: str = "squared"  # bound^2 (variance) or "raw" (the bound itself)
    # surrogate
    kernel_order: int = 4
    optimize: bool = True
    max_opt_iterations: int = 200
    opt_rel_tol: float = 1e-8
    # confidence estimation
    qmc_nodes: int = 4096
    qmc_replicates: int = 8
    rate_grid_points: int = 65
    threshold_grid_points: int = 65
    # execution
    seed: int = 42
    workers: int | None = None

    def __post_init__(self):
        if self.n_train < 1 or (self.n_train & (self.n_train - 1)) != 0:
            raise ValueError(f"n_train={self.n_train} must be a power of two")
        if self.qmc_nodes < 1 or (self.qmc_nodes & (self.qmc_nodes - 1)) != 0:
            raise ValueError(f"qmc_nodes={self.qmc_nodes} must be a power of two")
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.s + 1 > (self.d + 1) ** 2:
            raise ValueError(f"s={self.s} exceeds the number of mesh nodes at d={self.d}")
        N = self.calibration_levels
        if N < 2:
            raise ValueError("calibration needs at least two levels")
        if self.s % (1 << N) != 0 or self.s // (1 << N) < 1:
            raise ValueError(f"s={self.s} is not v_s * 2^{N} for an integer v_s >= 1")
        if self.d % (1 << N) != 0 or self.d // (1 << N) < 2:
            raise ValueError(f"d={self.d} is not v_d * 2^{N} for an integer v_d >= 2")
        if self.noise_init not in ("squared", "raw"):
            raise ValueError("noise_init must be 'squared' or 'raw'")
        if self.field_transform not in ("exp", "identity"):
            raise ValueError("field_transform must be 'exp' or 'identity'")
        if self.kernel_order not in (2, 4):
            raise ValueError("kernel_order must be 2 or 4")

    # derived pieces
    def mesh(self) -> Mesh:
        return Mesh(d=self.d, side_length=self.side_length)

    def wells(self) -> WellConfig:
        return WellConfig(
            injection_location=tuple(self.injection_location),
            extraction_location=tuple(self.extraction_location),
            critical_location=tuple(self.critical_location),
            injection_rate=self.injection_rate,
        )

    def covariance(self) -> MaternCovariance:
        return MaternCovariance(
            variance=self.field_variance,
            correlation_length=self.correlation_length,
            smoothness=self.smoothness,
        )

    def schedule(self) -> cal.LevelSchedule:
        N = self.calibration_levels
        return cal.LevelSchedule(v_s=self.s >> N, v_d=self.d >> N, num_levels=N)

    def effective_workers(self) -> int:
        if self.workers is not None:
            return max(1, self.workers)
        return max(1, min(8, os.cpu_count() or 1))


def config_hash(config: RunConfig) -> str:
    doc = json.dumps(dataclasses.asdict(config), sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dataclasses.asdict(config), indent=2, sort_keys=True))


def load_config(path: str | Path) -> RunConfig:
    raw = json.loads(Path(path).read_text())
    for key in ("injection_location", "extraction_location", "critical_location"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return RunConfig(**raw)


@dataclass(frozen=True)
class TrainingSet:
    """Unit-cube design, mapped physical inputs, observations, provenance."""

    locations: np.ndarray  # (n, 1+s) in [0,1)
    rates: np.ndarray  # (n,)
    coefficients: np.ndarray  # (n, s)
    y: np.ndarray  # (n,)
    residuals: np.ndarray  # (n,)
    config_hash: str
    seed: int
    shift: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.y)


def sampling_generator(config: RunConfig) -> LatticeGenerator:
    gen = default_lattice_generator(config.lattice_vector_path)
    if config.sampling_shift:
        gen = random_shift(gen, config.seed)
    return gen


def run_sampling(config: RunConfig) -> np.ndarray:
    """The first n lattice points in 1+s dimensions (rate coordinate first)."""
    gen = sampling_generator(config)
    return lattice_points(gen, config.n_train, 1 + config.s)


def training_inputs(config: RunConfig, locations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map unit-cube rows to physical inputs: r = w * b(u_0) and
    z_j = Phi^{-1}(b(u_j)), with b dropped when the periodization is off.
    The inverse CDF argument is clamped away from {0, 1} since the unshifted
    lattice contains the origin."""
    u = np.atleast_2d(np.asarray(locations, dtype=float))
    if u.shape[1] != 1 + config.s:
        raise ValueError(f"locations must have 1+s={1 + config.s} columns")
    v = baker(u) if config.baker_enabled else u
    rates = config.injection_rate * v[:, 0]
    coeffs = clamped_uniform_to_gaussian(v[:, 1:], eps=UNIT_CLAMP)
    return rates, coeffs


def run_ensemble(
    config: RunConfig,
    locations: np.ndarray,
    basis: KlBasis | None = None,
    workers: int | None = None,
) -> TrainingSet:
    """Solve the PDE at every design point and collect critical pressures.

    Failures are recorded per sample; the run aborts when more than 0.1% of
    the solves fail. Surviving NaN observations are refused downstream by the
    surrogate fit.
    """
    if basis is None:
        basis = build_kl(config.covariance(), config.mesh(), config.s)
    rates, coeffs = training_inputs(config, locations)
    gen = sampling_generator(config)
    y, residuals, errors = solve_critical_ensemble(
        basis,
        config.wells(),
        rates,
        coeffs,
        field_transform=config.field_transform,
        workers=config.effective_workers() if workers is None else workers,
    )
    failures = [e for e in errors if e]
    if failures:
        frac = len(failures) / len(y)
        if frac > ENSEMBLE_FAILURE_FRACTION:
            raise RuntimeError(
                f"{len(failures)} of {len(y)} ensemble solves failed ({frac:.2%}); first error: {failures[0]}"
            )
        warnings.warn(f"{len(failures)} ensemble solve(s) failed and left NaN observations", RuntimeWarning)
    return TrainingSet(
        locations=np.atleast_2d(locations),
        rates=rates,
        coefficients=coeffs,
        y=y,
        residuals=residuals,
        config_hash=config_hash(config),
        seed=config.seed,
        shift=gen.shift,
    )


def run_calibration(config: RunConfig, basis: KlBasis | None = None, report_path: str | Path | None = None) -> dict:
    """Estimate level differences, fit the decay, and bound the RMSE tail."""
    schedule = config.schedule()
    norms = cal.level_differences(
        schedule,
        config.covariance(),
        config.wells(),
        side_length=config.side_length,
        m=config.calibration_samples,
        seed=config.seed,
        field_transform=config.field_transform,
        workers=config.effective_workers(),
        basis=basis,
    )
    fit = cal.fit_decay(norms)
    return cal.write_report(report_path or os.devnull, norms, fit, config_hash=config_hash(config))


def noise_init_from_bound(config: RunConfig, bound: float) -> float:
    """The RMSE bound is a standard-deviation scale; by default it is squared
    into a variance before seeding the noise optimization."""
    return bound * bound if config.noise_init == "squared" else bound


def run_fit(config: RunConfig, training: TrainingSet, calibration_report: dict) -> fastgp.FastGpModel:
    """Fit the fast surrogate with the calibrated conservative noise seed."""
    expected = config_hash(config)
    for name, h in (("training set", training.config_hash), ("calibration report", calibration_report.get("config_hash"))):
        if h is not None and h != expected:
            warnings.warn(f"{name} was produced under config {h}, current config is {expected}", RuntimeWarning)
    bound = float(calibration_report["rmse_bound"])
    if not np.isfinite(bound):
        raise ValueError("calibration produced an infinite RMSE bound; cannot seed the noise variance")
    zeta_init = noise_init_from_bound(config, bound)
    kernel = fastgp.default_kernel(1 + config.s, float(np.var(training.y)), order=config.kernel_order)
    model = fastgp.fit(
        training.locations,
        training.y,
        zeta_init,
        optimize=config.optimize,
        kernel=kernel,
        max_iterations=config.max_opt_iterations,
        rel_tol=config.opt_rel_tol,
        shift=training.shift,
    )
    sigma = np.sqrt(fastgp.posterior_variance(model, training.locations))
    model.diagnostics["head_range"] = [
        float(np.min(training.y) - 3.0 * np.median(sigma)),
        float(np.max(training.y) + 3.0 * np.median(sigma)),
    ]
    return model


def domain_map_for(config: RunConfig, basis: KlBasis | None = None) -> conf.SurrogateDomainMap:
    return conf.SurrogateDomainMap(
        injection_rate=config.injection_rate,
        truncation=config.s,
        basis=basis,
        baker_enabled=config.baker_enabled,
    )


def default_rate_grid(config: RunConfig) -> np.ndarray:
    return np.linspace(0.0, config.injection_rate, config.rate_grid_points)


def default_threshold_grid(config: RunConfig, model: fastgp.FastGpModel) -> np.ndarray:
    lo, hi = model.diagnostics.get("head_range", (float(np.min(model.y)), float(np.max(model.y))))
    return np.linspace(lo, hi, config.threshold_grid_points)


def write_training_csv(path: str | Path, training: TrainingSet) -> None:
    """CSV with header r,z1..zs,y,residual plus provenance comment lines."""
    s = training.coefficients.shape[1]
    with open(path, "w") as fh:
        fh.write(f"# config_hash: {training.config_hash}\n")
        fh.write(f"# seed: {training.seed}\n")
        if training.shift is not None:
            fh.write("# shift: " + ",".join(repr(float(v)) for v in training.shift) + "\n")
        fh.write("r," + ",".join(f"z{j + 1}" for j in range(s)) + ",y,residual\n")
        for i in range(training.n):
            row = [repr(float(training.rates[i]))]
            row += [repr(float(v)) for v in training.coefficients[i]]
            row += [repr(float(training.y[i])), repr(float(training.residuals[i]))]
            fh.write(",".join(row) + "\n")


def read_training_csv(path: str | Path, config: RunConfig) -> TrainingSet:
    """Rebuild a TrainingSet from CSV; the unit-cube locations are regenerated
    from the config, which reproduces them byte for byte."""
    meta = {}
    rows = []
    with open(path) as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append([float(tok) for tok in line.split(",")])
    data = np.asarray(rows)
    s = data.shape[1] - 3
    if s != config.s:
        raise ValueError(f"training file has s={s}, config expects s={config.s}")
    expected = config_hash(config)
    if meta.get("config_hash") and meta["config_hash"] != expected:
        warnings.warn(
            f"training set was produced under config {meta['config_hash']}, current config is {expected}",
            RuntimeWarning,
        )
    shift = None
    if "shift" in meta:
        shift = np.array([float(tok) for tok in meta["shift"].split(",")])
    return TrainingSet(
        locations=run_sampling(config),
        rates=data[:, 0],
        coefficients=data[:, 1 : 1 + s],
        y=data[:, 1 + s],
        residuals=data[:, 2 + s],
        config_hash=meta.get("config_hash", expected),
        seed=int(meta.get("seed", config.seed)),
        shift=shift,
    )


def run_full(config: RunConfig, outdir: str | Path) -> dict:
    """Sample, solve, calibrate, fit, and evaluate the confidence curve.

    Persists config.json, training.csv, calibration.json, model.json, and
    curve.csv under ``outdir`` and returns their paths plus the in-memory
    artifacts.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.json")

    basis = build_kl(config.covariance(), config.mesh(), config.s)
    locations = run_sampling(config)
    training = run_ensemble(config, locations, basis=basis)
    write_training_csv(out / "training.csv", training)

    report = run_calibration(config, basis=basis, report_path=out / "calibration.json")
    model = run_fit(config, training, report)
    fastgp.save_model(
        model,
        out / "model.json",
        generator_info={
            "type": "lattice",
            "vector_source": config.lattice_vector_path or "packaged-default",
            "shifted": bool(config.sampling_shift),
        },
        config_hash=config_hash(config),
    )

    dmap = domain_map_for(config, basis=basis)
    r_grid = default_rate_grid(config)
    curve = conf.confidence_curve(
        model,
        dmap,
        r_grid,
        threshold=float(np.median(training.y)),
        n_nodes=config.qmc_nodes,
        replicates=config.qmc_replicates,
        seed=config.seed + 1,
    )
    conf.write_curve_csv(out / "curve.csv", curve)
    return {
        "outdir": out,
        "config": config,
        "basis": basis,
        "training": training,
        "calibration": report,
        "model": model,
        "curve": curve,
        "model_path": out / "model.json",
    }
