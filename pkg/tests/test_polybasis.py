import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyvem.polybasis import (EdgeMonomialBasis, GeometryError,
                               ScaledMonomialBasis, build_element_basis,
                               derivative_operators, edge_quadrature,
                               eval_basis, monomial_exponents,
                               polygon_quadrature, triangulate_polygon)
from oracles import polygon_monomial_integral, scaled_monomial_integral

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
CONCAVE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.7, 0.3]])


def random_polygon(rng, n=None):
    n = n or rng.integers(4, 9)
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    while np.min(np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))) < 0.25:
        ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    rad = rng.uniform(0.4, 1.0, n)
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


class TestScaledMonomialBasis:
    def test_count_is_polynomial_dimension(self):
        for k in range(5):
            basis = build_element_basis(SQUARE, k)
            assert basis.count == (k + 1) * (k + 2) // 2
            assert len(monomial_exponents(k)) == basis.count

    def test_constant_member_is_one_everywhere(self):
        basis = build_element_basis(SQUARE, 0)
        pts = np.array([[0.3, 0.9], [2.0, -1.0]])
        assert np.allclose(eval_basis(basis, pts, 0)[:, 0], 1.0)

    def test_centered_monomial_vanishes_at_centroid(self):
        basis = build_element_basis(SQUARE, 2)
        vals = eval_basis(basis, [basis.centroid], 0)[0]
        # all members with |beta| >= 1 vanish at the centroid
        assert np.allclose(vals[1:], 0.0)
        assert basis.centroid == pytest.approx([0.5, 0.5])

    def test_square_quadratic_member_value(self):
        # member (2,0) at (0.5 + sqrt(2), 0.5) is ((sqrt 2)/h)^2 = 1 for h = sqrt 2
        basis = build_element_basis(SQUARE, 2)
        assert basis.diameter == pytest.approx(np.sqrt(2.0))
        idx = list(monomial_exponents(2)).index((2, 0))
        val = eval_basis(basis, [[0.5 + np.sqrt(2.0), 0.5]], 0)[0, idx]
        assert val == pytest.approx(1.0, abs=1e-14)

    def test_degenerate_polygon_rejected(self):
        with pytest.raises(GeometryError):
            build_element_basis(np.array([[0, 0], [1, 0], [2, 0]]), 1)

    def test_edge_basis_counts(self):
        assert EdgeMonomialBasis(order=-1, midpoint=0.0, length=1.0).count == 0
        assert EdgeMonomialBasis(order=2, midpoint=0.0, length=1.0).count == 3


class TestEvalBasis:
    def test_constant_gradient_zero(self):
        basis = build_element_basis(SQUARE, 2)
        grads = eval_basis(basis, np.random.rand(5, 2), 1)
        assert np.allclose(grads[:, 0, :], 0.0)

    def test_mixed_member_hessian(self):
        # member (1,1) on the unit square: off-diagonal 1/h^2 = 1/2, diagonal 0
        basis = build_element_basis(SQUARE, 2)
        idx = list(monomial_exponents(2)).index((1, 1))
        hess = eval_basis(basis, np.random.rand(4, 2), 2)[:, idx, :]
        assert np.allclose(hess[:, 0], 0.0)
        assert np.allclose(hess[:, 1], 0.5)
        assert np.allclose(hess[:, 2], 0.0)

    def test_quadratic_member_laplacian(self):
        basis = build_element_basis(SQUARE, 2)
        idx = list(monomial_exponents(2)).index((2, 0))
        hess = eval_basis(basis, np.random.rand(4, 2), 2)[:, idx, :]
        assert np.allclose(hess[:, 0] + hess[:, 2], 2.0 / basis.diameter ** 2)

    def test_evaluation_linear_in_coefficients(self):
        rng = np.random.default_rng(5)
        basis = build_element_basis(random_polygon(rng), 3)
        pts = rng.uniform(-1, 1, (7, 2))
        c = rng.standard_normal(basis.count)
        for order, combine in ((0, lambda v: v @ c), (1, lambda v: np.tensordot(v, c, axes=([1], [0]))),
                               (2, lambda v: np.tensordot(v, c, axes=([1], [0])))):
            table = eval_basis(basis, pts, order)
            combined = combine(table)
            direct = sum(ci * eval_basis(basis, pts, order)[:, i] for i, ci in enumerate(c))
            assert np.allclose(combined, direct, atol=1e-14)

    def test_derivative_operators_match_pointwise(self):
        rng = np.random.default_rng(8)
        basis = build_element_basis(random_polygon(rng), 3)
        dx, dy = derivative_operators(basis)
        pts = rng.uniform(-0.5, 0.5, (6, 2))
        vals = eval_basis(basis, pts, 0)
        grads = eval_basis(basis, pts, 1)
        assert np.allclose(vals @ dx, grads[:, :, 0], atol=1e-12)
        assert np.allclose(vals @ dy, grads[:, :, 1], atol=1e-12)


class TestPolygonQuadrature:
    def test_unit_square_area(self):
        rule = polygon_quadrature(SQUARE, 4)
        assert rule.weights.sum() == pytest.approx(1.0, rel=1e-13)

    def test_reference_triangle_x2y2(self):
        rule = polygon_quadrature(TRIANGLE, 4)
        val = rule.weights @ (rule.points[:, 0] ** 2 * rule.points[:, 1] ** 2)
        assert val == pytest.approx(1.0 / 180.0, rel=1e-12)

    def test_regular_pentagon_area(self):
        ang = 2 * np.pi * np.arange(5) / 5
        pentagon = np.column_stack([np.cos(ang), np.sin(ang)])
        rule = polygon_quadrature(pentagon, 0)
        assert rule.weights.sum() == pytest.approx(2.5 * np.sin(2 * np.pi / 5), rel=1e-13)

    def test_self_intersecting_rejected(self):
        bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1.0]])
        with pytest.raises(GeometryError):
            polygon_quadrature(bowtie, 2)

    def test_nonconvex_cell_uses_valid_triangulation(self):
        tris = triangulate_polygon(CONCAVE)
        area = sum(0.5 * abs(np.cross(t[1] - t[0], t[2] - t[0])) for t in tris)
        assert area == pytest.approx(polygon_monomial_integral(CONCAVE, 0, 0), rel=1e-13)

    def test_exactness_on_random_polygons(self):
        rng = np.random.default_rng(42)
        degree = 6
        for trial in range(10):
            poly = CONCAVE if trial == 0 else random_polygon(rng)
            rule = polygon_quadrature(poly, degree)
            for a in range(degree + 1):
                for b in range(degree + 1 - a):
                    got = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b)
                    want = polygon_monomial_integral(poly, a, b)
                    assert got == pytest.approx(want, rel=1e-12, abs=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=8), st.integers(min_value=0, max_value=8),
           st.integers(min_value=0, max_value=2 ** 31 - 1))
    def test_exactness_property(self, a, b, seed):
        poly = random_polygon(np.random.default_rng(seed))
        rule = polygon_quadrature(poly, a + b)
        got = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b)
        want = polygon_monomial_integral(poly, a, b)
        assert got == pytest.approx(want, rel=1e-11, abs=1e-14)

    def test_gram_diagonal_scales_with_area(self):
        # the scaled basis keeps Gram diagonals proportional to the area
        ratios = []
        for scale in (1.0, 0.5, 0.25, 0.125):
            verts = SQUARE * scale
            basis = build_element_basis(verts, 2)
            rule = polygon_quadrature(verts, 6)
            vals = eval_basis(basis, rule.points, 0)
            gram_diag = ((vals * rule.weights[:, None]).T @ vals).diagonal()
            ratios.append(gram_diag / scale ** 2)
        ratios = np.array(ratios)
        assert np.allclose(ratios, ratios[0], rtol=1e-12)
        assert ratios.min() > 1e-3 and ratios.max() < 10.0


class TestEdgeQuadrature:
    def test_unit_segment_length(self):
        rule = edge_quadrature(np.array([[0.0, 0.0], [1.0, 0.0]]), 0)
        assert rule.weights.sum() == pytest.approx(1.0, rel=1e-14)

    def test_linear_moment_on_long_segment(self):
        rule = edge_quadrature(np.array([[0.0, 0.0], [2.0, 0.0]]), 3)
        assert rule.weights @ rule.points[:, 0] == pytest.approx(2.0, rel=1e-14)

    def test_cubic_moment(self):
        rule = edge_quadrature(np.array([[0.0, 0.0], [1.0, 0.0]]), 3)
        assert rule.weights @ rule.points[:, 0] ** 3 == pytest.approx(0.25, rel=1e-14)

    def test_weights_positive(self):
        rule = edge_quadrature(np.array([[0.0, 1.0], [3.0, -1.0]]), 7)
        assert np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(np.sqrt(13.0), rel=1e-14)


def test_scaled_monomial_oracle_consistency():
    # quadrature of scaled monomials agrees with the closed-form oracle
    rng = np.random.default_rng(3)
    poly = random_polygon(rng)
    basis = build_element_basis(poly, 3)
    rule = polygon_quadrature(poly, 6)
    vals = eval_basis(basis, rule.points, 0)
    for i, (a, b) in enumerate(monomial_exponents(3)):
        got = rule.weights @ vals[:, i]
        want = scaled_monomial_integral(poly, basis.centroid, basis.diameter, a, b)
        assert got == pytest.approx(want, rel=1e-11, abs=1e-13)
