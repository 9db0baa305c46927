"""Multilevel estimation of discretization-error decay and the geometric
tail bound used to initialize the surrogate noise variance.

Critical pressures are solved on a ladder of (truncation, mesh) levels with a
shared sample set; the root-mean-square level differences isolate the
truncation error (same mesh, truncation doubled) and the mesh error (same
truncation, mesh doubled). Log-log linear fits of the two difference families
extrapolate the telescoped tail into a closed-form upper bound.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .darcy import Mesh, WellConfig, solve_critical_ensemble
from .random_field import KlBasis, MaternCovariance, build_kl, restrict_basis, truncate_basis

__all__ = [
    "LevelSchedule",
    "LevelNorms",
    "DecayFit",
    "RmseBound",
    "level_differences",
    "fit_decay",
    "geometric_tail",
    "rmse_upper_bound",
    "write_report",
    "load_report",
]


@dataclass(frozen=True)
class LevelSchedule:
    """Geometric level ladder s_j = v_s 2^j, d_j = v_d 2^j for j = 0..N."""

    v_s: int
    v_d: int
    num_levels: int  # N; differences are formed for j = 1..N

    def __post_init__(self):
        if self.v_s < 1:
            raise ValueError("v_s must be >= 1")
        if self.v_d < 2:
            raise ValueError("v_d must be >= 2")
        if self.num_levels < 2:
            raise ValueError("need at least two levels to fit a decay")

    def s_level(self, j: int) -> int:
        return self.v_s * 2**j

    def d_level(self, j: int) -> int:
        return self.v_d * 2**j

    @property
    def s_values(self) -> list[int]:
        return [self.s_level(j) for j in range(1, self.num_levels + 1)]

    @property
    def d_values(self) -> list[int]:
        return [self.d_level(j) for j in range(1, self.num_levels + 1)]


@dataclass(frozen=True)
class LevelNorms:
    """Root-mean-square level differences, one entry per level j = 1..N."""

    s_norms: np.ndarray
    d_norms: np.ndarray
    schedule: LevelSchedule
    sample_count: int
    seed: int


@dataclass(frozen=True)
class DecayFit:
    """Log2-domain slopes/intercepts of the two difference families.

    The fitted model is ||Delta_s|| = 2^b_s * s^a_s (and likewise for d);
    both slopes must be negative for the tail bound to be finite.
    """

    a_s: float
    b_s: float
    a_d: float
    b_d: float


@dataclass(frozen=True)
class RmseBound:
    """Closed-form geometric tail bound at discretization pair (s, d)."""

    value: float
    s: int
    d: int


def level_differences(
    schedule: LevelSchedule,
    covariance: MaternCovariance,
    wells: WellConfig,
    side_length: float = 200.0,
    m: int = 32,
    seed: int = 0,
    field_transform: str = "exp",
    workers: int | None = None,
    basis: KlBasis | None = None,
) -> LevelNorms:
    """Estimate ||Delta_s_j|| and ||Delta_d_j|| for j = 1..N.

    One common sample set is reused everywhere: extraction rates are uniform
    on [0, w] and the standard-normal coefficient vectors are shared across
    truncation levels by prefix, so each difference isolates a single
    discretization change. Delta_s_j compares the (s_j, d_{j-1}) and
    (s_{j-1}, d_{j-1}) solves; Delta_d_j compares (s_j, d_j) and
    (s_j, d_{j-1}).
    """
    if m < 8:
        raise ValueError("need at least 8 samples per level")
    N = schedule.num_levels
    s_max, d_max = schedule.s_level(N), schedule.d_level(N)

    fine_mesh = Mesh(d=d_max, side_length=side_length)
    if basis is None:
        basis = build_kl(covariance, fine_mesh, s_max)
    elif basis.mesh.d != d_max or basis.truncation < s_max:
        raise ValueError("supplied basis does not cover the finest schedule level")
    restricted = {d: restrict_basis(basis, Mesh(d=d, side_length=side_length)) for d in
                  {schedule.d_level(j) for j in range(N + 1)}}

    rng = np.random.default_rng(seed)
    rates = rng.uniform(0.0, wells.injection_rate, m)
    Z = rng.standard_normal((m, s_max))

    pairs = set()
    for j in range(1, N + 1):
        pairs |= {
            (schedule.s_level(j), schedule.d_level(j - 1)),
            (schedule.s_level(j - 1), schedule.d_level(j - 1)),
            (schedule.s_level(j), schedule.d_level(j)),
        }

    solutions: dict[tuple[int, int], np.ndarray] = {}
    for (s, d) in sorted(pairs):
        b = truncate_basis(restricted[d], s)
        values, _, errors = solve_critical_ensemble(
            b, wells, rates, Z[:, :s], field_transform=field_transform, workers=workers
        )
        bad = [e for e in errors if e]
        if bad:
            raise RuntimeError(f"PDE solve failed at level pair (s={s}, d={d}): {bad[0]}")
        solutions[(s, d)] = values

    s_norms = np.empty(N)
    d_norms = np.empty(N)
    for j in range(1, N + 1):
        sj, dj = schedule.s_level(j), schedule.d_level(j)
        sjm, djm = schedule.s_level(j - 1), schedule.d_level(j - 1)
        s_norms[j - 1] = np.sqrt(np.mean((solutions[(sj, djm)] - solutions[(sjm, djm)]) ** 2))
        d_norms[j - 1] = np.sqrt(np.mean((solutions[(sj, dj)] - solutions[(sj, djm)]) ** 2))
    return LevelNorms(s_norms=s_norms, d_norms=d_norms, schedule=schedule, sample_count=m, seed=seed)


def fit_decay(norms: LevelNorms, schedule: LevelSchedule | None = None) -> DecayFit:
    """Least-squares fit of log2||Delta|| against log2(dimension).

    Exact on exact power-law inputs. Zero norms are rejected (the log is
    undefined); a non-negative fitted slope is kept but flagged with a
    warning since it makes the tail bound infinite.
    """
    schedule = schedule or norms.schedule
    if np.any(norms.s_norms <= 0.0) or np.any(norms.d_norms <= 0.0):
        raise ValueError("level norms must be strictly positive to fit the log-log decay")
    ls = np.log2(np.asarray(schedule.s_values, dtype=float))
    ld = np.log2(np.asarray(schedule.d_values, dtype=float))
    a_s, b_s = np.polyfit(ls, np.log2(norms.s_norms), 1)
    a_d, b_d = np.polyfit(ld, np.log2(norms.d_norms), 1)
    if a_s >= 0.0 or a_d >= 0.0:
        warnings.warn(
            f"non-negative decay slope (a_s={a_s:.3f}, a_d={a_d:.3f}); the tail bound will be infinite",
            RuntimeWarning,
            stacklevel=2,
        )
    return DecayFit(a_s=float(a_s), b_s=float(b_s), a_d=float(a_d), b_d=float(b_d))


def geometric_tail(a: float, b: float, v: float, N: int) -> float:
    """Closed form of sum_{j >= N+1} 2^b (v 2^j)^a for a < 0:
    2^b v^a 2^((N+1) a) / (1 - 2^a). Infinite for a >= 0."""
    if a >= 0.0:
        return float("inf")
    return float(2.0**b * v**a * 2.0 ** ((N + 1) * a) / (1.0 - 2.0**a))


def rmse_upper_bound(fit: DecayFit, schedule: LevelSchedule, N: int | None = None) -> RmseBound:
    """Tail bound at level N: the two fitted families' geometric tails summed.
    Infinite when either fitted slope is non-negative."""
    N = schedule.num_levels if N is None else N
    s_N, d_N = schedule.s_level(N), schedule.d_level(N)
    value = geometric_tail(fit.a_s, fit.b_s, schedule.v_s, N) + geometric_tail(fit.a_d, fit.b_d, schedule.v_d, N)
    return RmseBound(value=value, s=s_N, d=d_N)


def write_report(
    path: str | Path,
    norms: LevelNorms,
    fit: DecayFit,
    config_hash: str | None = None,
) -> dict:
    """Persist per-level norms, fitted coefficients, and bounds as JSON."""
    sched = norms.schedule
    bounds = [rmse_upper_bound(fit, sched, N=j).value for j in range(1, sched.num_levels + 1)]
    report = {
        "schedule": {"v_s": sched.v_s, "v_d": sched.v_d, "num_levels": sched.num_levels},
        "s_levels": sched.s_values,
        "d_levels": sched.d_values,
        "s_norms": norms.s_norms.tolist(),
        "d_norms": norms.d_norms.tolist(),
        "sample_count": norms.sample_count,
        "seed": norms.seed,
        "fit": {"a_s": fit.a_s, "b_s": fit.b_s, "a_d": fit.a_d, "b_d": fit.b_d},
        "bound_per_level": bounds,
        "rmse_bound": bounds[-1],
    }
    if config_hash is not None:
        report["config_hash"] = config_hash
    Path(path).write_text(json.dumps(report, indent=2))
    return report


def load_report(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(
            f"calibration report {p} not found; run the calibrate step before fitting"
        )
    return json.loads(p.read_text())
