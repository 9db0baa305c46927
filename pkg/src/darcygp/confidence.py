"""Quasi-Monte Carlo estimation of the expected confidence that the critical
pressure stays below a threshold, as a function of the extraction rate.

The surrogate is trained on unit-cube coordinates, with the tent (baker)
transform folded into the training-data generation so the target function is
periodic. Querying at a physical rate r therefore means evaluating the
surrogate at first coordinate r/(2w) (the left branch preimage of r/w under
the tent map) while the remaining coordinates run over a low-discrepancy node
set. Each node contributes the Gaussian tail probability
Phi((threshold - mean) / std) of the surrogate posterior at that node.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .fastgp import FastGpModel, TailCache
from .qmc import LatticeGenerator, default_lattice_generator, lattice_points, random_shift
from .random_field import KlBasis

__all__ = [
    "SurrogateDomainMap",
    "ConfidenceResult",
    "expected_confidence",
    "confidence_curve",
    "confidence_heatmap",
    "min_rate_for_confidence",
    "write_curve_csv",
    "write_heatmap_csv",
]


@dataclass(frozen=True)
class SurrogateDomainMap:
    """Coordinate mapping between physical inputs and the unit-cube surrogate.

    ``rate_to_query`` maps an extraction rate in [0, w] to the surrogate's
    first coordinate: r/(2w) under the periodizing tent transform, r/w when
    the transform is disabled. ``truncation`` is the number of random-field
    coordinates; the optional basis reference records which field expansion
    produced the training data.
    """

    injection_rate: float
    truncation: int
    basis: KlBasis | None = None
    baker_enabled: bool = True

    def __post_init__(self):
        if self.injection_rate <= 0:
            raise ValueError("injection rate w must be positive")
        if self.truncation < 1:
            raise ValueError("truncation must be >= 1")

    def rate_to_query(self, r: float) -> float:
        if not 0.0 <= r <= self.injection_rate:
            raise ValueError(f"extraction rate r={r} outside [0, w={self.injection_rate}]")
        return r / (2.0 * self.injection_rate) if self.baker_enabled else r / self.injection_rate


@dataclass(frozen=True)
class ConfidenceResult:
    """One confidence estimate: P(critical pressure <= threshold) at rate r."""

    rate: float
    threshold: float
    estimate: float
    n_nodes: int
    std_error: float | None = None


def _node_batches(
    dim: int,
    n_nodes: int,
    replicates: int,
    seed: int,
    generator: LatticeGenerator | None,
) -> list[np.ndarray]:
    """QMC node sets for the integration: one per randomized replicate, or a
    single unshifted set when replicates == 0."""
    if n_nodes < 1 or (n_nodes & (n_nodes - 1)) != 0:
        raise ValueError(f"node count N={n_nodes} must be a power of two")
    gen = generator if generator is not None else default_lattice_generator()
    if replicates <= 0:
        return [lattice_points(gen, n_nodes, dim)]
    seeds = np.random.SeedSequence(seed).generate_state(replicates)
    return [lattice_points(random_shift(gen, int(s)), n_nodes, dim) for s in seeds]


def _phi_terms(mean: np.ndarray, var: np.ndarray, threshold: float) -> np.ndarray:
    """Per-node confidence terms; a degenerate (zero variance) posterior
    contributes the indicator of mean <= threshold."""
    std = np.sqrt(var)
    out = np.empty_like(mean)
    degenerate = std == 0.0
    out[degenerate] = (mean[degenerate] <= threshold).astype(float)
    ok = ~degenerate
    out[ok] = ndtr((threshold - mean[ok]) / std[ok])
    return out


def expected_confidence(
    model: FastGpModel,
    domain_map: SurrogateDomainMap,
    r: float,
    threshold: float,
    n_nodes: int = 4096,
    replicates: int = 8,
    seed: int = 0,
    generator: LatticeGenerator | None = None,
) -> ConfidenceResult:
    """QMC estimate of the expected conditional confidence at rate r:
    the average over low-discrepancy nodes U_i of
    Phi((threshold - mean(r_u, U_i)) / std(r_u, U_i)).

    With randomized replicates the estimate is the replicate average and a
    standard error over replicates is reported.
    """
    r_u = domain_map.rate_to_query(r)
    batches = _node_batches(domain_map.truncation, n_nodes, replicates, seed, generator)
    means = []
    for nodes in batches:
        cache = TailCache(model, nodes)
        mean, var = cache.evaluate(r_u)
        means.append(float(np.mean(_phi_terms(mean, var, threshold))))
    estimate = float(np.mean(means))
    stderr = float(np.std(means, ddof=1) / np.sqrt(len(means))) if len(means) > 1 else None
    return ConfidenceResult(rate=r, threshold=threshold, estimate=estimate, n_nodes=n_nodes, std_error=stderr)


def confidence_curve(
    model: FastGpModel,
    domain_map: SurrogateDomainMap,
    r_grid: np.ndarray,
    threshold: float,
    n_nodes: int = 4096,
    replicates: int = 8,
    seed: int = 0,
    generator: LatticeGenerator | None = None,
) -> list[ConfidenceResult]:
    """Confidence as a function of extraction rate over a grid.

    The QMC nodes and their per-node kernel tail products are shared across
    the sweep, so each additional rate costs a single posterior batch.
    """
    r_grid = np.atleast_1d(np.asarray(r_grid, dtype=float))
    if r_grid.size == 0:
        raise ValueError("rate grid is empty")
    batches = _node_batches(domain_map.truncation, n_nodes, replicates, seed, generator)
    caches = [TailCache(model, nodes) for nodes in batches]
    results = []
    for r in r_grid:
        r_u = domain_map.rate_to_query(float(r))
        means = []
        for cache in caches:
            mean, var = cache.evaluate(r_u)
            means.append(float(np.mean(_phi_terms(mean, var, threshold))))
        estimate = float(np.mean(means))
        stderr = float(np.std(means, ddof=1) / np.sqrt(len(means))) if len(means) > 1 else None
        results.append(
            ConfidenceResult(rate=float(r), threshold=threshold, estimate=estimate, n_nodes=n_nodes, std_error=stderr)
        )
    return results


def confidence_heatmap(
    model: FastGpModel,
    domain_map: SurrogateDomainMap,
    r_grid: np.ndarray,
    threshold_grid: np.ndarray,
    n_nodes: int = 4096,
    replicates: int = 8,
    seed: int = 0,
    generator: LatticeGenerator | None = None,
) -> np.ndarray:
    """Estimate matrix indexed [rate, threshold], both axes ascending.

    Each rate needs one posterior batch; the threshold sweep reuses the
    per-node means and standard deviations, so columns are exactly the
    corresponding fixed-threshold curves.
    """
    r_grid = np.atleast_1d(np.asarray(r_grid, dtype=float))
    h_grid = np.atleast_1d(np.asarray(threshold_grid, dtype=float))
    if r_grid.size == 0 or h_grid.size == 0:
        raise ValueError("rate and threshold grids must be non-empty")
    if np.any(np.diff(r_grid) < 0) or np.any(np.diff(h_grid) < 0):
        raise ValueError("grids must be sorted ascending")
    batches = _node_batches(domain_map.truncation, n_nodes, replicates, seed, generator)
    caches = [TailCache(model, nodes) for nodes in batches]
    out = np.empty((r_grid.size, h_grid.size))
    for i, r in enumerate(r_grid):
        r_u = domain_map.rate_to_query(float(r))
        acc = np.zeros(h_grid.size)
        for cache in caches:
            mean, var = cache.evaluate(r_u)
            for j, h in enumerate(h_grid):
                acc[j] += float(np.mean(_phi_terms(mean, var, float(h))))
        out[i] = acc / len(caches)
    return out


def min_rate_for_confidence(
    model: FastGpModel,
    domain_map: SurrogateDomainMap,
    threshold: float,
    target: float,
    r_grid: np.ndarray,
    n_nodes: int = 4096,
    replicates: int = 8,
    seed: int = 0,
    generator: LatticeGenerator | None = None,
) -> float | None:
    """Smallest grid rate whose confidence estimate reaches the target, or
    None when the target is unattained on the grid."""
    if not 0.0 < target < 1.0:
        raise ValueError("target confidence must lie strictly inside (0, 1)")
    curve = confidence_curve(model, domain_map, r_grid, threshold, n_nodes, replicates, seed, generator)
    for res in curve:
        if res.estimate >= target:
            return res.rate
    return None


def write_curve_csv(path: str | Path, curve: list[ConfidenceResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "h", "estimate", "stderr"])
        for res in curve:
            w.writerow([res.rate, res.threshold, res.estimate, "" if res.std_error is None else res.std_error])


def write_heatmap_csv(path: str | Path, r_grid, threshold_grid, matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "h", "estimate", "stderr"])
        for i, r in enumerate(r_grid):
            for j, h in enumerate(threshold_grid):
                w.writerow([float(r), float(h), float(matrix[i, j]), ""])
