import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darcygp import qmc


@pytest.fixture(scope="module")
def lat():
    return qmc.default_lattice_generator()


@pytest.fixture(scope="module")
def dig():
    return qmc.default_digital_generator()


class TestLattice:
    def test_single_point_is_origin(self, lat):
        pts = qmc.lattice_points(lat, 1, 4)
        assert np.array_equal(pts, np.zeros((1, 4)))

    def test_n4_one_dim_is_quarter_grid(self, lat):
        pts = qmc.lattice_points(lat, 4, 1).ravel()
        assert set(pts) == {0.0, 0.25, 0.5, 0.75}

    def test_natural_order_formula(self, lat):
        n, dim = 16, 3
        pts = qmc.lattice_points(lat, n, dim)
        z = np.array(lat.generating_vector[:dim])
        for i in range(n):
            expected = (i * z % n) / n
            assert np.allclose(pts[i], expected, atol=0)

    def test_pairwise_closure_n8(self, lat):
        # every pairwise sum mod 1 lands back in the point set
        pts = qmc.lattice_points(lat, 8, 2)
        rows = {tuple(np.round(r, 12)) for r in pts}
        for a in pts:
            for b in pts:
                assert tuple(np.round((a + b) % 1.0, 12)) in rows

    @settings(max_examples=8, deadline=None)
    @given(m=st.integers(min_value=1, max_value=8))
    def test_group_structure_any_power_of_two(self, lat, m):
        n = 2**m
        pts = qmc.lattice_points(lat, n, 2)
        rows = {tuple(np.round(r, 12)) for r in pts}
        rng = np.random.default_rng(m)
        take = rng.integers(0, n, size=(min(64, n * n), 2))
        for i, j in take:
            assert tuple(np.round((pts[i] + pts[j]) % 1.0, 12)) in rows

    def test_nesting(self, lat):
        for m in range(1, 8):
            small = {tuple(np.round(r, 12)) for r in qmc.lattice_points(lat, 2**m, 3)}
            big = {tuple(np.round(r, 12)) for r in qmc.lattice_points(lat, 2 ** (m + 1), 3)}
            assert small <= big

    def test_capacity_errors(self, lat):
        with pytest.raises(ValueError):
            qmc.lattice_points(lat, 2**21, 2)
        with pytest.raises(ValueError):
            qmc.lattice_points(lat, 8, lat.dim + 1)

    def test_even_entry_rejected(self):
        with pytest.raises(ValueError):
            qmc.LatticeGenerator(generating_vector=(1, 4))

    def test_shifted_points_stay_in_unit_cube(self, lat):
        gen = qmc.random_shift(lat, seed=5)
        pts = qmc.lattice_points(gen, 64, 6)
        assert np.all(pts >= 0.0) and np.all(pts < 1.0)

    def test_loader_roundtrip(self, tmp_path, lat):
        path = tmp_path / "vec.txt"
        path.write_text("# comment\n" + "\n".join(str(z) for z in lat.generating_vector[:5]))
        assert qmc.load_generating_vector(path) == lat.generating_vector[:5]


class TestDigital:
    def test_single_point_is_origin(self, dig):
        assert np.array_equal(qmc.digital_points(dig, 1, 3), np.zeros((1, 3)))

    def test_first_dim_is_radical_inverse(self, dig):
        # oracle: base-2 radical inverse of the index
        def rad_inv(i):
            out, f = 0.0, 0.5
            while i:
                out += f * (i & 1)
                i >>= 1
                f *= 0.5
            return out

        pts = qmc.digital_points(dig, 64, 1).ravel()
        expected = [rad_inv(i) for i in range(64)]
        assert np.allclose(pts, expected, atol=0)

    def test_n4_sequence_order(self, dig):
        assert qmc.digital_points(dig, 4, 1).ravel().tolist() == [0.0, 0.5, 0.25, 0.75]

    @pytest.mark.parametrize("m", range(1, 7))
    def test_dyadic_equidistribution_1d(self, dig, m):
        n = 2**m
        pts = qmc.digital_points(dig, n, 8)
        for j in range(8):
            cells = np.floor(pts[:, j] * n).astype(int)
            assert sorted(cells) == list(range(n))

    def test_matches_reference_generator_as_set(self, dig):
        scipy_qmc = pytest.importorskip("scipy.stats.qmc")
        ref = scipy_qmc.Sobol(d=5, scramble=False).random(64)
        mine = qmc.digital_points(dig, 64, 5)
        assert {tuple(np.round(r, 12)) for r in mine} == {tuple(np.round(r, 12)) for r in ref}

    def test_direction_matrix_validation(self):
        bad = np.array([[1, 2]], dtype=np.uint64)  # no leading bits at all
        with pytest.raises(ValueError):
            qmc.DigitalGenerator(direction_numbers=bad, max_log2_points=1, bits=2)

    def test_digital_shift_stays_in_cube(self, dig):
        gen = qmc.random_shift(dig, seed=11)
        pts = qmc.digital_points(gen, 128, 4)
        assert np.all(pts >= 0.0) and np.all(pts < 1.0)


class TestBaker:
    def test_fixed_values(self):
        assert qmc.baker(0.0) == 0.0
        assert qmc.baker(0.5) == 1.0
        assert qmc.baker(0.75) == 0.5
        assert qmc.baker(1.0) == 0.0

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            qmc.baker(-0.1)
        with pytest.raises(ValueError):
            qmc.baker(1.0001)

    def test_uniform_mean_and_range(self):
        u = (np.arange(10**6) + 0.5) / 10**6
        b = qmc.baker(u)
        assert abs(np.mean(b) - 0.5) < 1e-3
        assert np.min(b) >= 0.0 and np.max(b) <= 1.0
        assert np.max(b) > 1.0 - 2e-6 and np.min(b) < 2e-6

    @settings(max_examples=50, deadline=None)
    @given(u=st.floats(min_value=0.0, max_value=1.0))
    def test_tent_identity(self, u):
        assert qmc.baker(u) == pytest.approx(1.0 - 2.0 * abs(u - 0.5), abs=1e-15)


class TestRandomShift:
    def test_same_seed_same_shift(self, lat):
        a = qmc.random_shift(lat, seed=7)
        b = qmc.random_shift(lat, seed=7)
        assert np.array_equal(a.shift, b.shift)

    def test_distinct_seeds_differ(self, lat):
        a = qmc.random_shift(lat, seed=7)
        b = qmc.random_shift(lat, seed=8)
        assert np.any(a.shift != b.shift)

    def test_unsupported_type(self):
        with pytest.raises(TypeError):
            qmc.random_shift(object(), seed=0)
