import numpy as np
import pytest
from scipy import integrate

from fiberfem.errors import ConfigurationError
from fiberfem.reference_elements import (
    HEX_CORNERS,
    TET_CORNERS,
    ReferenceElement,
    hex_bubbles,
    hex_q1,
    quadrature,
    reference_element,
    tet_bubble,
    tet_p1,
)


def monomial_integral_tet(a, b, c):
    # int over unit tet of x^a y^b z^c = a! b! c! / (a+b+c+3)!
    from math import factorial

    return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)


class TestShapeFunctions:
    def test_partition_of_unity(self, rng):
        pts_tet = rng.dirichlet(np.ones(4), size=30)[:, :3]
        N, _ = tet_p1(pts_tet)
        assert np.allclose(N.sum(axis=1), 1.0, atol=1e-14)
        pts_hex = rng.uniform(-1, 1, size=(30, 3))
        N, _ = hex_q1(pts_hex)
        assert np.allclose(N.sum(axis=1), 1.0, atol=1e-14)

    def test_nodal_interpolation(self):
        N, _ = tet_p1(TET_CORNERS)
        assert np.allclose(N, np.eye(4), atol=1e-14)
        N, _ = hex_q1(HEX_CORNERS)
        assert np.allclose(N, np.eye(8), atol=1e-14)

    def test_tet_bubble_centroid_and_faces(self, rng):
        val, _ = tet_bubble(np.array([[0.25, 0.25, 0.25]]))
        assert val[0] == pytest.approx(1.0, abs=1e-14)
        # vanishes on all four faces
        w = rng.dirichlet(np.ones(3), size=20)
        zero_faces = [
            np.column_stack([np.zeros(20), w[:, 0], w[:, 1]]),
            np.column_stack([w[:, 0], np.zeros(20), w[:, 1]]),
            np.column_stack([w[:, 0], w[:, 1], np.zeros(20)]),
            np.column_stack([w[:, 0], w[:, 1], 1.0 - w[:, 0] - w[:, 1]]),
        ]
        for pts in zero_faces:
            val, _ = tet_bubble(pts)
            assert np.abs(val).max() < 1e-13

    def test_hex_bubbles_vanish_on_boundary(self, rng):
        # all six faces of [-1,1]^3
        side = rng.uniform(-1, 1, size=(25, 2))
        for axis in range(3):
            for sign in (-1.0, 1.0):
                pts = np.insert(side, axis, sign * np.ones(25), axis=1)
                val, _ = hex_bubbles(pts)
                assert np.abs(val).max() < 1e-14

    def test_hex_bubbles_interior_nonzero(self):
        val, _ = hex_bubbles(np.zeros((1, 3)))
        assert np.all(val[0] > 0.0)

    def test_gradients_match_fd(self, rng):
        pts = rng.uniform(0.05, 0.25, size=(5, 3))
        h = 1e-7
        val, grad = tet_bubble(pts)
        for d in range(3):
            e = np.zeros(3)
            e[d] = h
            fd = (tet_bubble(pts + e)[0] - tet_bubble(pts - e)[0]) / (2 * h)
            assert np.allclose(grad[:, d], fd, rtol=1e-6, atol=1e-8)
        pts = rng.uniform(-0.8, 0.8, size=(5, 3))
        val, grad = hex_bubbles(pts)
        for d in range(3):
            e = np.zeros(3)
            e[d] = h
            fd = (hex_bubbles(pts + e)[0] - hex_bubbles(pts - e)[0]) / (2 * h)
            assert np.allclose(grad[:, :, d], fd, rtol=1e-6, atol=1e-8)


class TestQuadrature:
    def test_tet_degree1_is_centroid(self):
        rule = quadrature("tet", 1)
        assert rule.points.shape == (1, 3)
        assert np.allclose(rule.points[0], 0.25)
        assert rule.weights[0] == pytest.approx(1.0 / 6.0)

    @pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
    def test_tet_monomial_exactness(self, degree):
        rule = quadrature("tet", degree)
        assert np.all(rule.weights > 0)
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                for c in range(degree + 1 - a - b):
                    val = np.sum(
                        rule.weights
                        * rule.points[:, 0] ** a
                        * rule.points[:, 1] ** b
                        * rule.points[:, 2] ** c
                    )
                    assert val == pytest.approx(monomial_integral_tet(a, b, c), rel=1e-12)

    def test_hex_2x2x2_exact_for_quadratics(self):
        rule = quadrature("hex", 3)
        assert len(rule.weights) == 8
        # int over [-1,1]^3 of x^2 y^2 z^2 = (2/3)^3
        val = np.sum(rule.weights * np.prod(rule.points**2, axis=1))
        assert val == pytest.approx((2.0 / 3.0) ** 3, rel=1e-13)

    @pytest.mark.parametrize("degree,n1d", [(3, 2), (5, 3)])
    def test_hex_rule_sizes(self, degree, n1d):
        rule = quadrature("hex", degree)
        assert len(rule.weights) == n1d**3

    def test_tet_bubble_integral_vs_adaptive_reference(self):
        # degree-4 rule integrates the quartic bubble to the adaptive oracle
        rule = quadrature("tet", 4)
        val, _ = tet_bubble(rule.points)
        by_rule = np.sum(rule.weights * val)
        oracle, err = integrate.tplquad(
            lambda z, y, x: 256.0 * x * y * z * (1 - x - y - z),
            0.0, 1.0,
            lambda x: 0.0, lambda x: 1.0 - x,
            lambda x, y: 0.0, lambda x, y: 1.0 - x - y,
            epsabs=1e-13,
        )
        assert err < 1e-10
        assert by_rule == pytest.approx(oracle, abs=1e-10)

    def test_unsupported_rules_error(self):
        with pytest.raises(ConfigurationError):
            quadrature("tet", 0)
        with pytest.raises(ConfigurationError):
            quadrature("pyramid", 2)
        with pytest.raises(ConfigurationError):
            quadrature("hex", 99)

    def test_facet_rules(self):
        tri = quadrature("tri", 2)
        assert tri.weights.sum() == pytest.approx(0.5)
        # degree-2 exactness: int x^2 over unit triangle = 1/12
        assert np.sum(tri.weights * tri.points[:, 0] ** 2) == pytest.approx(1.0 / 12.0)
        quad = quadrature("quad", 2)
        assert quad.weights.sum() == pytest.approx(4.0)


class TestReferenceElement:
    @pytest.mark.parametrize("kind,mini,nen", [
        ("tet", False, 4), ("tet", True, 5), ("hex", False, 8), ("hex", True, 10),
    ])
    def test_basis_sizes(self, kind, mini, nen):
        ref = ReferenceElement(kind, mini=mini)
        assert ref.nen_u == nen
        assert ref.N_u.shape[1] == nen

    def test_mini_quadrature_degrees(self):
        assert reference_element("tet", True).quad.degree == 4
        assert reference_element("hex", True).quad.points.shape[0] == 27
        assert reference_element("hex", False).quad.points.shape[0] == 8

    def test_facet_tables_trace_zero_for_bubbles(self):
        for kind in ("tet", "hex"):
            ref = ReferenceElement(kind, mini=True)
            for tab in ref.facets:
                assert np.abs(tab.N_u[:, ref.nen_geom:]).max() == 0.0
                assert np.abs(tab.dN_u[:, ref.nen_geom:]).max() > 0.0
