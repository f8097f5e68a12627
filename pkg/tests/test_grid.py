import numpy as np
import pytest

from pde4dvar import (
    ConfigError,
    DiffusionField,
    EllipticityError,
    assemble_operator,
    build_grid,
    inner_product,
    l2_norm,
    lp_integral,
)

from oracles import brute_inner, brute_lp, dense_operator_1d, dense_operator_2d


class TestGrid:
    def test_spacing_and_weights(self):
        g = build_grid(1, 24)
        assert g.h == 1.0 / 25.0
        assert g.node_count == 24
        assert g.quad_weight == g.h
        g2 = build_grid(2, 5)
        assert g2.node_count == 25
        assert g2.quad_weight == pytest.approx((1.0 / 6.0) ** 2, rel=1e-15)

    def test_index_round_trip(self):
        g = build_grid(2, 7)
        for flat in range(g.node_count):
            assert g.flat_index(g.multi_index(flat)) == flat

    def test_node_coordinates_interior(self):
        g = build_grid(2, 4)
        coords = g.all_coordinates()
        assert coords.shape == (16, 2)
        assert coords.min() > 0.0 and coords.max() < 1.0
        # first node in C order is (1,1) -> (h, h)
        assert np.allclose(coords[0], [g.h, g.h])
        # second is (1,2): y varies fastest
        assert np.allclose(coords[1], [g.h, 2 * g.h])

    def test_nearest_node_snapping(self):
        g = build_grid(1, 9)  # h = 0.1, nodes at 0.1..0.9
        idx, dist = g.nearest_interior_node(np.array([0.33]))
        assert idx == 2  # node at 0.3
        assert dist == pytest.approx(0.03, abs=1e-14)
        idx, dist = g.nearest_interior_node(np.array([0.05]))
        assert idx == 0  # clipped to the first interior node
        assert dist == pytest.approx(0.05, abs=1e-14)

    def test_point_outside_open_box_rejected(self):
        g = build_grid(2, 4)
        with pytest.raises(ConfigError):
            g.nearest_interior_node(np.array([0.5, 1.0]))
        with pytest.raises(ConfigError):
            g.nearest_interior_node(np.array([-0.1, 0.5]))

    def test_invalid_construction(self):
        with pytest.raises(ConfigError):
            build_grid(3, 4)
        with pytest.raises(ConfigError):
            build_grid(1, 1)


class TestDiffusionField:
    def test_constant_positive_required(self):
        with pytest.raises(EllipticityError):
            DiffusionField.constant_field(0.0)
        with pytest.raises(EllipticityError):
            DiffusionField.constant_field(-2.0)

    def test_cells_positive_required(self):
        with pytest.raises(EllipticityError):
            DiffusionField.from_cells(np.array([1.0, -1.0, 2.0]))
        with pytest.raises(EllipticityError):
            DiffusionField.from_cells(np.array([1.0, np.nan, 2.0]))

    def test_k_min(self):
        f = DiffusionField.from_cells(np.array([2.0, 0.5, 3.0]))
        assert f.k_min == 0.5
        assert DiffusionField.constant_field(1.5).k_min == 1.5

    def test_harmonic_mean_face_value(self):
        # cells 2 and 6 share a face: 2*2*6/(2+6) = 3
        g = build_grid(2, 2)
        cells = np.ones((3, 3))
        cells[0, 0] = 2.0
        cells[1, 0] = 6.0
        f = DiffusionField.from_cells(cells)
        kx, ky = f.face_arrays(g)
        assert ky[0, 0] == pytest.approx(3.0, rel=1e-15)
        assert kx[0, 0] == pytest.approx(2.0 * 2.0 * 1.0 / 3.0, rel=1e-15)

    def test_cell_shape_checked(self):
        g = build_grid(1, 4)
        with pytest.raises(ConfigError):
            DiffusionField.from_cells(np.ones(4)).face_arrays(g)
        g2 = build_grid(2, 4)
        with pytest.raises(ConfigError):
            DiffusionField.from_cells(np.ones((4, 5))).face_arrays(g2)


class TestOperator:
    def test_1d_constant_tridiagonal(self):
        # n=3, h=1/4: diag 2/h^2 = 32, off -16
        g = build_grid(1, 3)
        a = assemble_operator(g, DiffusionField.constant_field(1.0)).matrix.toarray()
        expected = np.array(
            [[32.0, -16.0, 0.0], [-16.0, 32.0, -16.0], [0.0, -16.0, 32.0]]
        )
        assert np.allclose(a, expected, rtol=0, atol=1e-12)

    def test_1d_variable_matches_oracle(self):
        rng = np.random.default_rng(7)
        n = 9
        cells = 0.5 + rng.random(n + 1)
        g = build_grid(1, n)
        a = assemble_operator(g, DiffusionField.from_cells(cells)).matrix.toarray()
        assert np.allclose(a, dense_operator_1d(n, cells), rtol=0, atol=1e-11)

    def test_2d_variable_matches_oracle(self):
        rng = np.random.default_rng(11)
        n = 6
        cells = 0.5 + rng.random((n + 1, n + 1))
        g = build_grid(2, n)
        a = assemble_operator(g, DiffusionField.from_cells(cells)).matrix.toarray()
        assert np.allclose(a, dense_operator_2d(n, cells), rtol=0, atol=1e-11)

    def test_2d_constant_five_point(self):
        g = build_grid(2, 3)
        a = assemble_operator(g, DiffusionField.constant_field(2.0)).matrix.toarray()
        # center node (1,1): diag 4k/h^2 = 128, neighbors -32
        assert a[4, 4] == pytest.approx(128.0, rel=1e-14)
        assert a[4, 1] == pytest.approx(-32.0, rel=1e-14)
        assert a[4, 3] == pytest.approx(-32.0, rel=1e-14)
        assert a[4, 0] == 0.0

    def test_symmetric_positive_definite(self):
        rng = np.random.default_rng(3)
        for dim, n in ((1, 12), (2, 5)):
            g = build_grid(dim, n)
            shape = n + 1 if dim == 1 else (n + 1, n + 1)
            cells = 0.2 + rng.random(shape)
            a = assemble_operator(g, DiffusionField.from_cells(cells)).matrix.toarray()
            assert np.max(np.abs(a - a.T)) == 0.0
            assert np.linalg.eigvalsh(a).min() > 0.0

    def test_apply_matches_matrix(self):
        rng = np.random.default_rng(5)
        g = build_grid(2, 4)
        op = assemble_operator(g, DiffusionField.constant_field(1.0))
        v = rng.standard_normal(g.node_count)
        assert np.allclose(op.apply(v), op.matrix @ v, rtol=1e-14, atol=0)


class TestNormsAndIntegrals:
    def test_inner_product_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for dim, n in ((1, 10), (2, 4)):
            g = build_grid(dim, n)
            v = rng.standard_normal(g.node_count)
            w = rng.standard_normal(g.node_count)
            assert inner_product(g, v, w) == pytest.approx(
                brute_inner(g, v, w), rel=1e-13
            )

    def test_l2_norm_consistency(self):
        g = build_grid(1, 15)
        v = np.arange(15, dtype=float)
        assert l2_norm(g, v) == pytest.approx(np.sqrt(inner_product(g, v, v)), rel=1e-14)

    def test_lp_integral_matches_brute_force(self):
        rng = np.random.default_rng(9)
        g = build_grid(2, 4)
        v = rng.standard_normal(g.node_count)
        assert lp_integral(g, v, 6.5) == pytest.approx(brute_lp(g, v, 6.5), rel=1e-12)

    def test_lp_integral_rejects_small_exponent(self):
        g = build_grid(1, 4)
        with pytest.raises(ConfigError):
            lp_integral(g, np.ones(4), 1.5)

    def test_shape_mismatch_rejected(self):
        g = build_grid(1, 4)
        with pytest.raises(ConfigError):
            inner_product(g, np.ones(4), np.ones(5))
