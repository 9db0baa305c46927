import numpy as np
import pytest

from darcygp import darcy
from darcygp.darcy import BoundarySpec, Mesh, WellConfig
from darcygp.random_field import FieldRealization, MaternCovariance, build_kl, sample_field


def constant_field(mesh, value=0.0):
    return FieldRealization(values=np.full(mesh.n_nodes, value), coefficients=np.zeros(1))


@pytest.fixture(scope="module")
def wells():
    return WellConfig()


@pytest.fixture(scope="module")
def basis32():
    return build_kl(MaternCovariance(), Mesh(d=32), s=8)


class TestForcing:
    def test_injection_only(self, wells):
        mesh = Mesh(d=8)
        f = darcy.forcing(mesh, wells, r=0.0)
        areas = mesh.node_quadrature_weights()
        nz = np.nonzero(f)[0]
        assert len(nz) == 1
        assert f[nz[0]] * areas[nz[0]] == pytest.approx(wells.injection_rate, rel=1e-14)

    def test_balanced_rates_sum_to_zero(self, wells):
        mesh = Mesh(d=8)
        f = darcy.forcing(mesh, wells, r=wells.injection_rate)
        assert np.sum(f * mesh.node_quadrature_weights()) == pytest.approx(0.0, abs=1e-18)

    def test_linearity_in_rates(self):
        mesh = Mesh(d=8)
        w1 = WellConfig(injection_rate=0.01)
        w2 = WellConfig(injection_rate=0.02)
        f1 = darcy.forcing(mesh, w1, r=0.004)
        f2 = darcy.forcing(mesh, w2, r=0.008)
        assert np.allclose(f2, 2.0 * f1, rtol=1e-14, atol=0)

    def test_rate_range_enforced(self, wells):
        mesh = Mesh(d=8)
        with pytest.raises(ValueError):
            darcy.forcing(mesh, wells, r=-0.001)
        with pytest.raises(ValueError):
            darcy.forcing(mesh, wells, r=wells.injection_rate * 1.01)

    def test_location_outside_domain(self):
        mesh = Mesh(d=8)
        bad = WellConfig(injection_location=(250.0, 100.0))
        with pytest.raises(ValueError):
            darcy.forcing(mesh, bad, r=0.0)


class TestSolvePressure:
    def test_constant_solution_with_dirichlet(self, wells):
        mesh = Mesh(d=16)
        h0 = 0.7
        pf = darcy.solve_pressure(
            mesh, wells, constant_field(mesh), 0.0,
            boundary=BoundarySpec(left=h0, right=h0, bottom=h0, top=h0),
            source_density=np.zeros(mesh.n_nodes),
        )
        assert np.max(np.abs(pf.head - h0)) < 1e-12

    def test_linearity_in_rates(self, wells):
        mesh = Mesh(d=16)
        fr = constant_field(mesh, 0.3)
        base = darcy.solve_pressure(mesh, wells, fr, 0.0, source_density=np.zeros(mesh.n_nodes)).head
        picks = []
        for w_scale, r in ((1.0, 0.0), (1.0, 0.01), (0.5, 0.005)):
            wc = WellConfig(injection_rate=wells.injection_rate * w_scale)
            picks.append(darcy.solve_pressure(mesh, wc, fr, r).head - base)
        assert np.allclose(picks[0] * 0.5 + (picks[1] - picks[0]) * 0.5, picks[2], rtol=1e-10, atol=1e-16)

    def test_manufactured_solution_convergence_order(self):
        # closed-form oracle: H* = sin(pi x / L) sin(pi y / L), K = 1
        errs = []
        for d in (16, 32, 64, 128):
            mesh = Mesh(d=d, side_length=200.0)
            L = mesh.side_length
            pts = mesh.node_coordinates()
            hstar = np.sin(np.pi * pts[:, 0] / L) * np.sin(np.pi * pts[:, 1] / L)
            f = 2.0 * (np.pi / L) ** 2 * hstar  # = -lap(H*)
            pf = darcy.solve_pressure(
                mesh, WellConfig(), constant_field(mesh, 1.0), 0.0,
                field_transform="identity", source_density=f,
            )
            errs.append(np.max(np.abs(pf.head.ravel() - hstar)))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.8) and np.all(orders < 2.2)

    def test_discrete_conservation(self, wells, basis32):
        rng = np.random.default_rng(7)
        mesh = Mesh(d=32)
        for _ in range(10):
            z = rng.standard_normal(8)
            r = rng.uniform(0, wells.injection_rate)
            pf = darcy.solve_pressure(mesh, wells, sample_field(basis32, z), r)
            flux = darcy.boundary_flux_total(pf)
            net = wells.injection_rate - r
            assert abs(flux - net) / net <= 1e-8

    def test_symmetric_problem_gives_symmetric_head(self):
        mesh = Mesh(d=16)
        wc = WellConfig(injection_location=(50.0, 100.0), extraction_location=(150.0, 100.0))
        pf = darcy.solve_pressure(mesh, wc, constant_field(mesh, 0.0), wc.injection_rate)
        H = pf.head
        # mirror x -> L - x swaps the equal-and-opposite wells: H(x,y) = -H(L-x,y)
        assert np.max(np.abs(H + H[::-1, :])) < 1e-10
        # mirror y -> L - y is a pure symmetry
        assert np.max(np.abs(H - H[:, ::-1])) < 1e-10

    def test_maximum_principle_without_sources(self, wells):
        mesh = Mesh(d=16)
        rng = np.random.default_rng(3)
        fr = FieldRealization(values=rng.standard_normal(mesh.n_nodes) * 0.5, coefficients=np.zeros(1))
        bc = BoundarySpec(left=1.0, right=0.2, bottom=0.6, top=-0.3)
        pf = darcy.solve_pressure(mesh, wells, fr, 0.0, boundary=bc, source_density=np.zeros(mesh.n_nodes))
        interior = pf.head[1:-1, 1:-1]
        assert interior.max() <= 1.0 + 1e-12
        assert interior.min() >= -0.3 - 1e-12

    def test_non_positive_coefficient_rejected(self, wells):
        mesh = Mesh(d=8)
        fr = constant_field(mesh, -1.0)
        with pytest.raises(ValueError):
            darcy.solve_pressure(mesh, wells, fr, 0.0, field_transform="identity")

    def test_all_neumann_rejected(self):
        with pytest.raises(ValueError):
            BoundarySpec(left="neumann", right="neumann", bottom="neumann", top="neumann")

    def test_mixed_neumann_solves(self, wells):
        mesh = Mesh(d=8)
        pf = darcy.solve_pressure(
            mesh, wells, constant_field(mesh), 0.01,
            boundary=BoundarySpec(left=0.0, right=0.0, bottom="neumann", top="neumann"),
        )
        assert np.all(np.isfinite(pf.head))
        assert pf.residual <= darcy.RESIDUAL_TOL

    def test_residual_recorded(self, wells, basis32):
        pf = darcy.solve_pressure(Mesh(d=32), wells, sample_field(basis32, np.ones(8)), 0.005)
        assert 0 <= pf.residual <= darcy.RESIDUAL_TOL

    def test_flux_balance_at_interior_cells(self, wells):
        # re-assemble the interior balance from the head field directly
        mesh = Mesh(d=8)
        fr = constant_field(mesh, 0.2)
        r = 0.004
        pf = darcy.solve_pressure(mesh, wells, fr, r)
        k = pf.cell_coefficient
        tx, ty = darcy._edge_transmissibility(k, mesh.d)
        q = darcy.forcing(mesh, wells, r) * mesh.node_quadrature_weights()
        H = pf.head
        d = mesh.d
        for i in range(1, d):
            for j in range(1, d):
                bal = (
                    tx[i, j] * (H[i, j] - H[i + 1, j])
                    + tx[i - 1, j] * (H[i, j] - H[i - 1, j])
                    + ty[i, j] * (H[i, j] - H[i, j + 1])
                    + ty[i, j - 1] * (H[i, j] - H[i, j - 1])
                )
                assert bal == pytest.approx(q[i * (d + 1) + j], abs=1e-12)


class TestCriticalPressure:
    def test_constant_case_gives_boundary_head(self):
        mesh = Mesh(d=16)
        basis = build_kl(MaternCovariance(variance=0.0), mesh, s=2)
        idle = WellConfig(injection_rate=0.0)
        val = darcy.critical_pressure(mesh, basis, idle, 0.0, np.zeros(2))
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_refinement_invariance_for_trivial_problem(self, wells):
        for d in (8, 16, 32):
            mesh = Mesh(d=d)
            basis = build_kl(MaternCovariance(variance=0.0), mesh, s=1)
            wc = WellConfig(injection_rate=0.0)
            val = darcy.critical_pressure(mesh, basis, wc, 0.0, np.zeros(1))
            assert val == pytest.approx(0.0, abs=1e-12)

    def test_monotone_nonincreasing_in_extraction_rate(self, wells, basis32):
        # physics behind the rising confidence curve: extraction relieves pressure
        mesh = Mesh(d=32)
        z = np.random.default_rng(5).standard_normal(8)
        rates = np.linspace(0.0, wells.injection_rate, 9)
        vals = [darcy.critical_pressure(mesh, basis32, wells, r, z) for r in rates]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_interpolation_exact_on_node(self, wells, basis32):
        mesh = Mesh(d=32)
        pf = darcy.solve_pressure(mesh, wells, sample_field(basis32, np.ones(8)), 0.0)
        i, j = mesh.containing_node(wells.critical_location)
        assert pf.head_at(wells.critical_location) == pytest.approx(pf.head[i, j], abs=0)

    def test_interpolation_outside_rejected(self, wells, basis32):
        mesh = Mesh(d=32)
        pf = darcy.solve_pressure(mesh, wells, sample_field(basis32, np.ones(8)), 0.0)
        with pytest.raises(ValueError):
            pf.head_at((300.0, 100.0))


class TestEnsemble:
    def test_matches_sequential(self, wells, basis32):
        rng = np.random.default_rng(0)
        rates = rng.uniform(0, wells.injection_rate, 6)
        Z = rng.standard_normal((6, 8))
        y1, res1, err1 = darcy.solve_critical_ensemble(basis32, wells, rates, Z, workers=1)
        y2, res2, err2 = darcy.solve_critical_ensemble(basis32, wells, rates, Z, workers=2)
        assert np.array_equal(y1, y2)
        assert np.array_equal(res1, res2)
        assert err1 == err2 == [""] * 6

    def test_failures_are_recorded_not_raised(self, wells):
        mesh = Mesh(d=8)
        basis = build_kl(MaternCovariance(), mesh, s=2)
        rates = np.array([0.0, 2.0 * wells.injection_rate])  # second rate violates the precondition
        y, res, err = darcy.solve_critical_ensemble(basis, wells, rates, np.zeros((2, 2)), workers=1)
        assert np.isfinite(y[0]) and np.isnan(y[1])
        assert err[0] == "" and err[1] != ""
