"""Reference tetrahedra/hexahedra: shape functions, interior bubbles, quadrature.

Tet reference element: {xi >= 0, xi0+xi1+xi2 <= 1} with corners at the origin
and unit points. Hex reference element: [-1,1]^3 in VTK node ordering. All
arrays are batched over evaluation points.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .errors import ConfigurationError

TET_CORNERS = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)
HEX_CORNERS = np.array(
    [
        [-1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0],
        [1.0, 1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0],
    ]
)

# Local facets with corner ordering chosen so the right-hand rule gives the
# outward normal of the reference element.
TET_FACETS = ((0, 2, 1), (0, 1, 3), (1, 2, 3), (0, 3, 2))
HEX_FACETS = ((0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7))

# Diagonally opposite corners carrying the two hex bubbles.
HEX_BUBBLE_NODES = (0, 6)


def tet_p1(points):
    """P1 shape functions and reference gradients on the tet, (n,4) and (n,4,3)."""
    pts = np.atleast_2d(points)
    n = pts.shape[0]
    N = np.empty((n, 4))
    N[:, 0] = 1.0 - pts.sum(axis=1)
    N[:, 1:] = pts
    dN = np.zeros((n, 4, 3))
    dN[:, 0, :] = -1.0
    dN[:, 1, 0] = dN[:, 2, 1] = dN[:, 3, 2] = 1.0
    return N, dN


def tet_bubble(points):
    """Quartic interior bubble 256*xi0*xi1*xi2*(1-xi0-xi1-xi2), value 1 at the centroid."""
    pts = np.atleast_2d(points)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    lam = 1.0 - x - y - z
    val = 256.0 * x * y * z * lam
    grad = np.empty((pts.shape[0], 3))
    grad[:, 0] = 256.0 * y * z * (lam - x)
    grad[:, 1] = 256.0 * x * z * (lam - y)
    grad[:, 2] = 256.0 * x * y * (lam - z)
    return val, grad


def hex_q1(points):
    """Trilinear shape functions and reference gradients on [-1,1]^3."""
    pts = np.atleast_2d(points)
    n = pts.shape[0]
    N = np.empty((n, 8))
    dN = np.empty((n, 8, 3))
    for a, c in enumerate(HEX_CORNERS):
        f = [(1.0 + c[d] * pts[:, d]) for d in range(3)]
        N[:, a] = 0.125 * f[0] * f[1] * f[2]
        dN[:, a, 0] = 0.125 * c[0] * f[1] * f[2]
        dN[:, a, 1] = 0.125 * f[0] * c[1] * f[2]
        dN[:, a, 2] = 0.125 * f[0] * f[1] * c[2]
    return N, dN


def hex_bubbles(points):
    """Two interior bubbles: (1-xi0^2)(1-xi1^2)(1-xi2^2) times the trilinear
    functions of the diagonally opposite corners (-1,-1,-1) and (1,1,1).

    Vanish on the whole boundary of [-1,1]^3; the gradients do not.
    """
    pts = np.atleast_2d(points)
    n = pts.shape[0]
    q = 1.0 - pts**2  # (n,3)
    bub = q[:, 0] * q[:, 1] * q[:, 2]
    dbub = np.empty((n, 3))
    dbub[:, 0] = -2.0 * pts[:, 0] * q[:, 1] * q[:, 2]
    dbub[:, 1] = -2.0 * pts[:, 1] * q[:, 0] * q[:, 2]
    dbub[:, 2] = -2.0 * pts[:, 2] * q[:, 0] * q[:, 1]
    Nq1, dNq1 = hex_q1(pts)
    val = np.empty((n, 2))
    grad = np.empty((n, 2, 3))
    for k, a in enumerate(HEX_BUBBLE_NODES):
        val[:, k] = bub * Nq1[:, a]
        grad[:, k, :] = dbub * Nq1[:, a, None] + bub[:, None] * dNq1[:, a, :]
    return val, grad


def tri_p1(points):
    """Linear shape functions on the reference triangle, with 2D gradients."""
    pts = np.atleast_2d(points)
    n = pts.shape[0]
    N = np.empty((n, 3))
    N[:, 0] = 1.0 - pts.sum(axis=1)
    N[:, 1:] = pts
    dN = np.zeros((n, 3, 2))
    dN[:, 0, :] = -1.0
    dN[:, 1, 0] = dN[:, 2, 1] = 1.0
    return N, dN


def quad_q1(points):
    """Bilinear shape functions on [-1,1]^2, with 2D gradients."""
    pts = np.atleast_2d(points)
    corners = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    n = pts.shape[0]
    N = np.empty((n, 4))
    dN = np.empty((n, 4, 2))
    for a, c in enumerate(corners):
        N[:, a] = 0.25 * (1.0 + c[0] * pts[:, 0]) * (1.0 + c[1] * pts[:, 1])
        dN[:, a, 0] = 0.25 * c[0] * (1.0 + c[1] * pts[:, 1])
        dN[:, a, 1] = 0.25 * (1.0 + c[0] * pts[:, 0]) * c[1]
    return N, dN


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self):
        if np.any(self.weights <= 0.0):
            raise ConfigurationError("quadrature weights must be positive")


def _gauss01(n):
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _jacobi01(n, alpha):
    # weight (1-x)^alpha on [0,1]
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


_TET4PT_A = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
_TET4PT_B = (5.0 - np.sqrt(5.0)) / 20.0


@lru_cache(maxsize=None)
def tet_rule(degree):
    """Quadrature on the reference tet, exact for polynomials up to `degree`.

    Degrees 1 and 2 use the classic centroid and symmetric 4-point rules;
    higher degrees use the conical-product construction (all weights positive).
    """
    if degree < 1 or degree > 21:
        raise ConfigurationError(f"unsupported tet quadrature degree {degree}")
    if degree == 1:
        return QuadratureRule(np.full((1, 3), 0.25), np.array([1.0 / 6.0]), 1)
    if degree == 2:
        a, b = _TET4PT_A, _TET4PT_B
        pts = np.full((4, 3), b)
        pts[1, 0] = pts[2, 1] = pts[3, 2] = a
        return QuadratureRule(pts, np.full(4, 1.0 / 24.0), 2)
    n = (degree + 2) // 2
    x1, w1 = _jacobi01(n, 2.0)
    x2, w2 = _jacobi01(n, 1.0)
    x3, w3 = _gauss01(n)
    pts, wts = [], []
    for a, wa in zip(x1, w1):
        for b, wb in zip(x2, w2):
            for c, wc in zip(x3, w3):
                xi0 = a
                xi1 = b * (1.0 - a)
                xi2 = c * (1.0 - a) * (1.0 - b)
                pts.append((xi0, xi1, xi2))
                wts.append(wa * wb * wc)
    return QuadratureRule(np.array(pts), np.array(wts), degree)


@lru_cache(maxsize=None)
def hex_rule(degree):
    """Tensor Gauss-Legendre quadrature on [-1,1]^3, exact to `degree` per axis."""
    if degree < 1 or degree > 25:
        raise ConfigurationError(f"unsupported hex quadrature degree {degree}")
    n = (degree + 2) // 2
    x, w = leggauss(n)
    pts = np.array([(a, b, c) for a in x for b in x for c in x])
    wts = np.array([wa * wb * wc for wa in w for wb in w for wc in w])
    return QuadratureRule(pts, wts, degree)


@lru_cache(maxsize=None)
def tri_rule(degree):
    """Quadrature on the reference triangle."""
    if degree < 1 or degree > 20:
        raise ConfigurationError(f"unsupported triangle quadrature degree {degree}")
    if degree == 1:
        return QuadratureRule(np.full((1, 2), 1.0 / 3.0), np.array([0.5]), 1)
    if degree == 2:
        pts = np.array([[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]])
        return QuadratureRule(pts, np.full(3, 1.0 / 6.0), 2)
    n = (degree + 2) // 2
    x1, w1 = _jacobi01(n, 1.0)
    x2, w2 = _gauss01(n)
    pts, wts = [], []
    for a, wa in zip(x1, w1):
        for b, wb in zip(x2, w2):
            pts.append((a, b * (1.0 - a)))
            wts.append(wa * wb)
    return QuadratureRule(np.array(pts), np.array(wts), degree)


@lru_cache(maxsize=None)
def quad_face_rule(degree):
    """Tensor Gauss-Legendre quadrature on [-1,1]^2."""
    if degree < 1 or degree > 25:
        raise ConfigurationError(f"unsupported quad quadrature degree {degree}")
    n = (degree + 2) // 2
    x, w = leggauss(n)
    pts = np.array([(a, b) for a in x for b in x])
    wts = np.array([wa * wb for wa in w for wb in w])
    return QuadratureRule(pts, wts, degree)


def quadrature(kind, order):
    """Quadrature rule for `kind` in {tet, hex, tri, quad}, exact to `order`."""
    try:
        factory = {"tet": tet_rule, "hex": hex_rule, "tri": tri_rule, "quad": quad_face_rule}[kind]
    except KeyError:
        raise ConfigurationError(f"unknown quadrature domain {kind!r}") from None
    return factory(order)


# Volume quadrature degrees: base spaces need degree 2; the tet bubble is
# quartic, the hex bubbles cubic per coordinate.
VOLUME_DEGREE = {("tet", False): 2, ("tet", True): 4, ("hex", False): 3, ("hex", True): 5}
FACET_DEGREE = 2


@dataclass(frozen=True)
class FacetTable:
    """Per-local-facet data evaluated at the facet quadrature points."""

    corners: tuple            # local corner ids on the parent element
    elem_points: np.ndarray   # facet qps mapped into element reference coords (nq,3)
    N_surf: np.ndarray        # facet shape functions, for surface geometry (nq,nc)
    dN_surf: np.ndarray       # their 2D facet-coordinate gradients (nq,nc,2)
    N_u: np.ndarray           # parent displacement basis traces (nq,nen_u)
    dN_u: np.ndarray          # parent displacement basis reference gradients (nq,nen_u,3)
    N_geom: np.ndarray        # parent geometry basis traces (nq,nen_geom)
    dN_geom: np.ndarray       # parent geometry basis reference gradients (nq,nen_geom,3)
    weights: np.ndarray


class ReferenceElement:
    """Shape functions, bubbles, and quadrature for one element family.

    `mini=True` appends the interior bubble block to the displacement basis:
    one bubble on tets, two on hexes.
    """

    def __init__(self, kind, mini=False, volume_degree=None):
        if kind not in ("tet", "hex"):
            raise ConfigurationError(f"unknown element kind {kind!r}")
        self.kind = kind
        self.mini = bool(mini)
        self.corners = TET_CORNERS if kind == "tet" else HEX_CORNERS
        self.nen_geom = self.corners.shape[0]
        self.n_bubbles = (1 if kind == "tet" else 2) if mini else 0
        self.nen_u = self.nen_geom + self.n_bubbles
        deg = VOLUME_DEGREE[(kind, self.mini)] if volume_degree is None else volume_degree
        self.quad = quadrature(kind, deg)
        self.N_geom, self.dN_geom = self.eval_geom(self.quad.points)
        self.N_u, self.dN_u = self.eval_u(self.quad.points)
        self.facet_corner_ids = TET_FACETS if kind == "tet" else HEX_FACETS
        self.facet_kind = "tri" if kind == "tet" else "quad"
        self.facet_quad = quadrature(self.facet_kind, FACET_DEGREE)
        self.facets = tuple(self._facet_table(c) for c in self.facet_corner_ids)

    def eval_geom(self, points):
        """Geometry (base) shape functions and reference gradients."""
        return tet_p1(points) if self.kind == "tet" else hex_q1(points)

    def eval_u(self, points):
        """Displacement basis: base functions plus bubbles when mini."""
        N, dN = self.eval_geom(points)
        if not self.mini:
            return N, dN
        if self.kind == "tet":
            b, db = tet_bubble(points)
            return np.concatenate([N, b[:, None]], axis=1), np.concatenate(
                [dN, db[:, None, :]], axis=1
            )
        b, db = hex_bubbles(points)
        return np.concatenate([N, b], axis=1), np.concatenate([dN, db], axis=1)

    # Pressure basis coincides with the geometry basis for nodal-pressure pairs.
    eval_p = eval_geom

    def _facet_table(self, corner_ids):
        rule = self.facet_quad
        shape2d = tri_p1 if self.facet_kind == "tri" else quad_q1
        N_surf, dN_surf = shape2d(rule.points)
        ref_corners = self.corners[list(corner_ids)]
        elem_points = N_surf @ ref_corners
        N_u, dN_u = self.eval_u(elem_points)
        # bubble traces vanish identically on facets; clamp the roundoff left
        # by the facet-point reconstruction so the interior rows are exact zeros
        N_u[:, self.nen_geom :] = 0.0
        N_geom, dN_geom = self.eval_geom(elem_points)
        return FacetTable(
            corners=tuple(corner_ids),
            elem_points=elem_points,
            N_surf=N_surf,
            dN_surf=dN_surf,
            N_u=N_u,
            dN_u=dN_u,
            N_geom=N_geom,
            dN_geom=dN_geom,
            weights=rule.weights,
        )


@lru_cache(maxsize=None)
def reference_element(kind, mini=False):
    return ReferenceElement(kind, mini=mini)
