"""Steady single-phase Darcy flow on a uniform square mesh.

The head equation -div(K grad H) = f is discretized with a two-point-flux
finite volume scheme. Heads live at the (d+1)^2 mesh nodes; each node owns the
dual control volume around it. Node-valued (log-)permeability is averaged
arithmetically onto the d^2 primal cells, the coefficient transform is
applied, and face transmissibilities combine the flanking cell coefficients
harmonically. Injection and extraction enter as point rates deposited in the
control volume that contains the well.

Sign convention: positive source density raises the head, so injection (+w)
pushes the head up and extraction (-r) relieves it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .random_field import FieldRealization, sample_field

__all__ = [
    "Mesh",
    "WellConfig",
    "BoundarySpec",
    "PressureField",
    "forcing",
    "solve_pressure",
    "critical_pressure",
    "solve_critical_ensemble",
    "interpolate_head",
    "boundary_flux_total",
]

DIRECT_SOLVER_MAX_D = 128
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class Mesh:
    """Uniform square mesh over [0, side_length]^2 with d+1 nodes per axis."""

    d: int
    side_length: float = 200.0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("discretization dimension d must be >= 2")
        if self.side_length <= 0:
            raise ValueError("side_length must be positive")

    @property
    def spacing(self) -> float:
        return self.side_length / self.d

    @property
    def n_nodes(self) -> int:
        return (self.d + 1) ** 2

    def node_coordinates(self) -> np.ndarray:
        """(n_nodes, 2) array in x-major order, x varying slowest."""
        x = np.linspace(0.0, self.side_length, self.d + 1)
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def node_quadrature_weights(self) -> np.ndarray:
        """Dual-cell areas (trapezoidal weights): h^2 interior, halved on
        edges, quartered at corners. Sums to the domain area."""
        h = self.spacing
        w1 = np.full(self.d + 1, h)
        w1[0] = w1[-1] = 0.5 * h
        return np.outer(w1, w1).ravel()

    def containing_node(self, location) -> tuple[int, int]:
        """Indices of the node whose control volume contains ``location``."""
        x, y = location
        if not (0.0 <= x <= self.side_length and 0.0 <= y <= self.side_length):
            raise ValueError(f"location {location} is outside the domain")
        h = self.spacing
        return int(round(x / h)), int(round(y / h))


@dataclass(frozen=True)
class WellConfig:
    """Injection/extraction/critical locations (meters) and injection rate w."""

    injection_location: tuple[float, float] = (50.0, 100.0)
    extraction_location: tuple[float, float] = (150.0, 100.0)
    critical_location: tuple[float, float] = (100.0, 100.0)
    injection_rate: float = 0.031688

    def __post_init__(self):
        locs = (tuple(self.injection_location), tuple(self.extraction_location), tuple(self.critical_location))
        if len(set(locs)) != 3:
            raise ValueError("injection, extraction, and critical locations must be distinct")
        if self.injection_rate < 0:
            raise ValueError("injection rate w must be >= 0")


@dataclass(frozen=True)
class BoundarySpec:
    """Per-side boundary condition: a float head value (Dirichlet) or the
    string 'neumann' (zero flux). Sides are left/right in x, bottom/top in y."""

    left: float | str = 0.0
    right: float | str = 0.0
    bottom: float | str = 0.0
    top: float | str = 0.0

    def __post_init__(self):
        for name in ("left", "right", "bottom", "top"):
            v = getattr(self, name)
            if isinstance(v, str) and v != "neumann":
                raise ValueError(f"boundary side {name}: expected a head value or 'neumann'")
        if all(getattr(self, s) == "neumann" for s in ("left", "right", "bottom", "top")):
            raise ValueError("all-Neumann boundaries make the system singular; fix at least one side")


@dataclass(frozen=True)
class PressureField:
    """Solved head field on the mesh nodes plus the problem that produced it."""

    head: np.ndarray  # (d+1, d+1), head[i, j] at node (x_i, y_j)
    mesh: Mesh
    wells: WellConfig
    extraction_rate: float
    residual: float
    cell_coefficient: np.ndarray = field(repr=False, default=None)

    def head_at(self, location) -> float:
        return interpolate_head(self.head, self.mesh, location)


def forcing(mesh: Mesh, wells: WellConfig, r: float) -> np.ndarray:
    """Source density over the node control volumes: +w/area in the volume
    containing the injection well, -r/area in the extraction volume.
    """
    if not (0.0 <= r <= wells.injection_rate):
        raise ValueError(f"extraction rate r={r} outside [0, w={wells.injection_rate}]")
    areas = mesh.node_quadrature_weights()
    f = np.zeros(mesh.n_nodes)
    npn = mesh.d + 1
    i, j = mesh.containing_node(wells.injection_location)
    f[i * npn + j] += wells.injection_rate / areas[i * npn + j]
    if r != 0.0:
        i, j = mesh.containing_node(wells.extraction_location)
        f[i * npn + j] -= r / areas[i * npn + j]
    return f


def _cell_coefficients(mesh: Mesh, node_values: np.ndarray, transform: str) -> np.ndarray:
    g = np.asarray(node_values, dtype=float).reshape(mesh.d + 1, mesh.d + 1)
    cells = 0.25 * (g[:-1, :-1] + g[1:, :-1] + g[:-1, 1:] + g[1:, 1:])
    if transform == "exp":
        k = np.exp(cells)
    elif transform == "identity":
        k = cells
    else:
        raise ValueError(f"unknown field transform {transform!r}")
    if np.any(k <= 0.0) or not np.all(np.isfinite(k)):
        raise ValueError("coefficient must be strictly positive and finite after the field transform")
    return k


def _assemble_dirichlet(d: int, tx: np.ndarray, ty: np.ndarray, q: np.ndarray, sides):
    """Vectorized assembly for the all-Dirichlet case: unknowns are the
    (d-1)^2 interior nodes in row-major (x-major) order."""
    left, right, bottom, top = sides
    m = d - 1
    diag = (tx[1:d, 1:d] + tx[0:m, 1:d] + ty[1:d, 1:d] + ty[1:d, 0:m]).ravel()
    east = -tx[1:m, 1:d].ravel()  # (i,j)-(i+1,j), i = 1..d-2
    north = -ty[1:d, 1:m].ravel()  # (i,j)-(i,j+1), j = 1..d-2

    rows = [np.arange(m * m)]
    cols = [np.arange(m * m)]
    vals = [diag]
    ii, jj = np.meshgrid(np.arange(m - 1), np.arange(m), indexing="ij")
    pe = (ii * m + jj).ravel()
    rows += [pe, pe + m]
    cols += [pe + m, pe]
    vals += [east, east]
    ii, jj = np.meshgrid(np.arange(m), np.arange(m - 1), indexing="ij")
    pn = (ii * m + jj).ravel()
    rows += [pn, pn + 1]
    cols += [pn + 1, pn]
    vals += [north, north]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m * m, m * m))

    rhs = q.reshape(d + 1, d + 1)[1:d, 1:d].copy()
    rhs[0, :] += tx[0, 1:d] * left
    rhs[m - 1, :] += tx[d - 1, 1:d] * right
    rhs[:, 0] += ty[1:d, 0] * bottom
    rhs[:, m - 1] += ty[1:d, d - 1] * top
    return A, rhs.ravel()


def _solve_linear(A: sp.csr_matrix, rhs: np.ndarray, d: int) -> np.ndarray:
    if d <= DIRECT_SOLVER_MAX_D:
        return spla.splu(A.tocsc()).solve(rhs)
    M = sp.diags(1.0 / A.diagonal())
    sol, info = spla.cg(A, rhs, rtol=1e-12, atol=0.0, maxiter=20 * A.shape[0], M=M)
    if info != 0:
        raise RuntimeError(f"conjugate-gradient solve failed to converge (info={info})")
    return sol


def _relative_residual(A: sp.csr_matrix, sol: np.ndarray, rhs: np.ndarray) -> float:
    rhs_norm = np.linalg.norm(rhs)
    resid = np.linalg.norm(A @ sol - rhs) / rhs_norm if rhs_norm > 0 else float(np.linalg.norm(A @ sol))
    if not np.isfinite(resid) or resid > RESIDUAL_TOL:
        raise RuntimeError(f"linear solve residual {resid:.3e} exceeds {RESIDUAL_TOL:.0e}")
    return float(resid)


def _edge_transmissibility(k: np.ndarray, d: int):
    """Transmissibilities of the dual faces crossed by node-to-node edges.

    For a unit-aspect mesh the face-length/edge-length ratio is one, so the
    interior value is just the harmonic mean of the two flanking primal-cell
    coefficients; edges lying on the boundary see a half face.
    """
    harm = lambda a, b: 2.0 * a * b / (a + b)
    # tx[i, j]: edge from node (i, j) to (i+1, j); flanking cells (i, j-1), (i, j)
    tx = np.zeros((d, d + 1))
    tx[:, 1:d] = harm(k[:, 0 : d - 1], k[:, 1:d])
    tx[:, 0] = 0.5 * k[:, 0]
    tx[:, d] = 0.5 * k[:, d - 1]
    # ty[i, j]: edge from node (i, j) to (i, j+1); flanking cells (i-1, j), (i, j)
    ty = np.zeros((d + 1, d))
    ty[1:d, :] = harm(k[0 : d - 1, :], k[1:d, :])
    ty[0, :] = 0.5 * k[0, :]
    ty[d, :] = 0.5 * k[d - 1, :]
    return tx, ty


def solve_pressure(
    mesh: Mesh,
    wells: WellConfig,
    perm: FieldRealization,
    r: float,
    *,
    field_transform: str = "exp",
    boundary: BoundarySpec | None = None,
    source_density: np.ndarray | None = None,
) -> PressureField:
    """Assemble and solve the finite-volume system for the head field.

    ``perm`` supplies (log-)permeability at the mesh nodes; ``source_density``
    overrides the well forcing (used by manufactured-solution tests). The
    sparse SPD system is solved directly for d <= 128 and by diagonally
    preconditioned conjugate gradients above; the relative residual must come
    out <= 1e-10 or the solve is rejected.
    """
    boundary = boundary or BoundarySpec()
    d = mesh.d
    npn = d + 1
    values = perm.values if isinstance(perm, FieldRealization) else np.asarray(perm, dtype=float)
    if values.size != mesh.n_nodes:
        raise ValueError(f"permeability has {values.size} values, mesh has {mesh.n_nodes} nodes")
    k = _cell_coefficients(mesh, values, field_transform)
    tx, ty = _edge_transmissibility(k, d)

    if source_density is None:
        source_density = forcing(mesh, wells, r)
    q = np.asarray(source_density, dtype=float) * mesh.node_quadrature_weights()

    sides = (boundary.left, boundary.right, boundary.bottom, boundary.top)
    if not any(v == "neumann" for v in sides):
        A, rhs = _assemble_dirichlet(d, tx, ty, q, sides)
        sol = _solve_linear(A, rhs, d)
        head = np.empty((npn, npn))
        head[1:d, 1:d] = sol.reshape(d - 1, d - 1)
        head[0, :], head[d, :] = boundary.left, boundary.right
        head[:, 0], head[:, d] = boundary.bottom, boundary.top
        head[0, 0], head[0, d] = boundary.left, boundary.left
        head[d, 0], head[d, d] = boundary.right, boundary.right
        resid = _relative_residual(A, sol, rhs)
        return PressureField(head=head, mesh=mesh, wells=wells, extraction_rate=r, residual=resid, cell_coefficient=k)

    side_of = {}
    for j in range(npn):
        side_of[(0, j)] = "left"
        side_of[(d, j)] = "right"
    for i in range(npn):
        side_of.setdefault((i, 0), "bottom")
        side_of.setdefault((i, d), "top")

    def bc(i, j):
        side = side_of.get((i, j))
        return None if side is None else getattr(boundary, side)

    unknown = {}
    for i in range(npn):
        for j in range(npn):
            c = bc(i, j)
            if c is None or c == "neumann":
                unknown[(i, j)] = len(unknown)

    m = len(unknown)
    rows, cols, vals = [], [], []
    rhs = np.zeros(m)

    def edge_T(i0, j0, i1, j1):
        if j0 == j1:  # x-directed edge
            return tx[min(i0, i1), j0]
        return ty[i0, min(j0, j1)]

    for (i, j), p in unknown.items():
        diag = 0.0
        for ii, jj in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if not (0 <= ii < npn and 0 <= jj < npn):
                continue  # zero-flux outside a Neumann side
            T = edge_T(i, j, ii, jj)
            diag += T
            if (ii, jj) in unknown:
                rows.append(p)
                cols.append(unknown[(ii, jj)])
                vals.append(-T)
            else:
                rhs[p] += T * bc(ii, jj)
        rows.append(p)
        cols.append(p)
        vals.append(diag)
        rhs[p] += q[i * npn + j]

    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
    sol = _solve_linear(A, rhs, d)
    resid = _relative_residual(A, sol, rhs)

    head = np.empty((npn, npn))
    for i in range(npn):
        for j in range(npn):
            c = bc(i, j)
            head[i, j] = sol[unknown[(i, j)]] if (i, j) in unknown else c
    return PressureField(head=head, mesh=mesh, wells=wells, extraction_rate=r, residual=resid, cell_coefficient=k)


def interpolate_head(head: np.ndarray, mesh: Mesh, location) -> float:
    """Bilinear interpolation of a node field; exact when the location is a node."""
    x, y = location
    if not (0.0 <= x <= mesh.side_length and 0.0 <= y <= mesh.side_length):
        raise ValueError(f"location {location} is outside the domain")
    h = mesh.spacing
    fx, fy = x / h, y / h
    i0 = min(int(fx), mesh.d - 1)
    j0 = min(int(fy), mesh.d - 1)
    tX, tY = fx - i0, fy - j0
    g = head
    return float(
        (1 - tX) * (1 - tY) * g[i0, j0]
        + tX * (1 - tY) * g[i0 + 1, j0]
        + (1 - tX) * tY * g[i0, j0 + 1]
        + tX * tY * g[i0 + 1, j0 + 1]
    )


def critical_pressure(mesh: Mesh, basis, wells: WellConfig, r: float, z: np.ndarray, **solve_kwargs) -> float:
    """Numerical critical pressure: sample the field from the basis at the
    given coefficients, solve, and interpolate the head at the critical
    location."""
    realization = sample_field(basis, z)
    pf = solve_pressure(mesh, wells, realization, r, **solve_kwargs)
    return pf.head_at(wells.critical_location)


def _ensemble_batch(payload):
    """Worker for parallel critical-pressure ensembles; module level so it
    pickles under a process pool."""
    lam, phi, d, side, wells_tuple, transform, rates, zmat = payload
    from .random_field import KlBasis, MaternCovariance

    mesh = Mesh(d=d, side_length=side)
    basis = KlBasis(
        eigenvalues=lam,
        eigenfunctions=phi,
        node_weights=mesh.node_quadrature_weights(),
        mesh=mesh,
        covariance=MaternCovariance(),
    )
    wells = WellConfig(*wells_tuple)
    out = []
    for r, z in zip(rates, zmat):
        try:
            pf = solve_pressure(mesh, wells, sample_field(basis, z), float(r), field_transform=transform)
            out.append((pf.head_at(wells.critical_location), pf.residual, ""))
        except Exception as exc:  # failure is recorded, policy applied by the caller
            out.append((float("nan"), float("nan"), str(exc)))
    return out


def solve_critical_ensemble(
    basis,
    wells: WellConfig,
    rates: np.ndarray,
    coefficients: np.ndarray,
    *,
    field_transform: str = "exp",
    workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Critical pressures for a batch of (rate, coefficient-vector) inputs.

    Solves are independent; with workers > 1 they run on a process pool in
    index chunks, and results are reassembled by index so the output does not
    depend on the worker count. Returns (values, solver residuals, per-sample
    error strings, empty when the solve succeeded).
    """
    from concurrent.futures import ProcessPoolExecutor

    rates = np.asarray(rates, dtype=float)
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    m = len(rates)
    if coefficients.shape[0] != m:
        raise ValueError("rates and coefficient rows must align")
    wells_tuple = (wells.injection_location, wells.extraction_location, wells.critical_location, wells.injection_rate)
    mesh = basis.mesh

    def payload(sl):
        return (
            basis.eigenvalues,
            basis.eigenfunctions,
            mesh.d,
            mesh.side_length,
            wells_tuple,
            field_transform,
            rates[sl],
            coefficients[sl],
        )

    if workers is None or workers <= 1 or m < 4:
        results = _ensemble_batch(payload(slice(0, m)))
    else:
        per = max(1, -(-m // (workers * 4)))
        slices = [slice(lo, min(lo + per, m)) for lo in range(0, m, per)]
        results = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_ensemble_batch, [payload(sl) for sl in slices]):
                results.extend(part)
    values = np.array([r[0] for r in results])
    residuals = np.array([r[1] for r in results])
    errors = [r[2] for r in results]
    return values, residuals, errors


def boundary_flux_total(pf: PressureField, boundary: BoundarySpec | None = None) -> float:
    """Net outflow across the boundary, recomputed from the head field.

    Sums the fluxes on the edges joining interior nodes to boundary nodes;
    by discrete conservation this equals the net interior source w - r up to
    the solver residual. Defined for the default all-Dirichlet boundary.
    """
    boundary = boundary or BoundarySpec()
    if any(getattr(boundary, s) == "neumann" for s in ("left", "right", "bottom", "top")):
        raise ValueError("boundary flux accounting is defined for all-Dirichlet boundaries")
    d = pf.mesh.d
    tx, ty = _edge_transmissibility(pf.cell_coefficient, d)
    H = pf.head
    total = np.sum(tx[0, 1:d] * (H[1, 1:d] - H[0, 1:d]))
    total += np.sum(tx[d - 1, 1:d] * (H[d - 1, 1:d] - H[d, 1:d]))
    total += np.sum(ty[1:d, 0] * (H[1:d, 1] - H[1:d, 0]))
    total += np.sum(ty[1:d, d - 1] * (H[1:d, d - 1] - H[1:d, d]))
    return float(total)
