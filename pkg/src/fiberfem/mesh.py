"""Mesh container, isoparametric mappings, and geometric queries.

A mesh is homogeneous (all tets or all hexes). Boundary facets are addressed
as (element id, local facet id) pairs grouped into named sets; facet corner
ordering follows the reference-element convention, so stored normals point
out of the solid. Meshes are frozen after construction and safe to share
across assembly workers.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvertedElementError, MeshError, TopologyError
from .reference_elements import reference_element

_ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray                 # (nn,3), mm
    elements: np.ndarray              # (ne,4) tet or (ne,8) hex
    kind: str                         # 'tet' | 'hex'
    facet_sets: dict = field(default_factory=dict)   # name -> (nf,2) [elem, local facet]
    fiber_frames: np.ndarray = None   # (ne,3,3), rows f0, s0, n0

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        nen = {"tet": 4, "hex": 8}.get(self.kind)
        if nen is None:
            raise MeshError(f"unknown element kind {self.kind!r}")
        if elements.ndim != 2 or elements.shape[1] != nen:
            raise MeshError(f"{self.kind} connectivity must be (ne,{nen})")
        if elements.size and (elements.min() < 0 or elements.max() >= len(nodes)):
            raise MeshError("connectivity references nonexistent nodes")
        sets = {k: np.ascontiguousarray(v, dtype=np.int64) for k, v in self.facet_sets.items()}
        object.__setattr__(self, "facet_sets", sets)
        if self.fiber_frames is not None:
            ff = np.ascontiguousarray(self.fiber_frames, dtype=float)
            if ff.shape != (len(elements), 3, 3):
                raise MeshError("fiber_frames must be (ne,3,3)")
            object.__setattr__(self, "fiber_frames", ff)
        for arr in (nodes, elements, *sets.values()):
            arr.setflags(write=False)
        if self.fiber_frames is not None:
            self.fiber_frames.setflags(write=False)

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_elements(self):
        return self.elements.shape[0]

    @property
    def reference(self):
        return reference_element(self.kind)

    def facet_corner_nodes(self, facets):
        """Global corner node ids, (nf, 3|4), for (elem, local facet) pairs."""
        ref = self.reference
        ids = np.asarray([ref.facet_corner_ids[lf] for lf in facets[:, 1]])
        return self.elements[facets[:, 0][:, None], ids]

    def facet_set_nodes(self, name):
        """Unique node ids touched by a named facet set."""
        return np.unique(self.facet_corner_nodes(self.facet_sets[name]))

    def boundary_facets(self):
        """All (elem, local facet) pairs whose facet is shared by no other element."""
        ref = self.reference
        nloc = len(ref.facet_corner_ids)
        ne = self.num_elements
        elems = np.repeat(np.arange(ne), nloc)
        locs = np.tile(np.arange(nloc), ne)
        corners = self.facet_corner_nodes(np.column_stack([elems, locs]))
        keys = np.sort(corners, axis=1)
        _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        on_boundary = counts[inv] == 1
        return np.column_stack([elems[on_boundary], locs[on_boundary]])

    def element_coords(self, elem_ids=None):
        conn = self.elements if elem_ids is None else self.elements[elem_ids]
        return self.nodes[conn]

    def map_to_physical(self, elem, ref_point):
        """Isoparametric map at one reference point of one element.

        Returns (x, grad_op, det): the physical point, the matrix taking
        reference gradients to physical ones (dN_phys = dN_ref @ grad_op),
        and det(DF_K) > 0.
        """
        ref = self.reference
        pt = np.atleast_2d(np.asarray(ref_point, dtype=float))
        N, dN = ref.eval_geom(pt)
        Xe = self.nodes[self.elements[elem]]
        x = N[0] @ Xe
        J = Xe.T @ dN[0]                       # dX_i/dxi_j
        det = float(np.linalg.det(J))
        if det <= 0.0:
            raise InvertedElementError(elem, f"det(DF_K)={det:.3g}")
        return x, np.linalg.inv(J), det

    def element_volumes(self):
        """Exact volumes of the isoparametric elements via quadrature."""
        ref = self.reference
        Xe = self.element_coords()
        J = np.einsum("eai,qaj->eqij", Xe, ref.dN_geom)
        det = np.linalg.det(J)
        if np.any(det <= 0.0):
            bad = int(np.argwhere(det <= 0.0)[0, 0])
            raise InvertedElementError(bad, "negative isoparametric Jacobian")
        return det @ ref.quad.weights

    def facet_areas_and_normals(self, facets):
        """Facet qp area vectors (outward; includes qp weights) and midpoints.

        Returns (nf, nqf, 3) weighted area vectors and (nf, nqf, 3) points.
        """
        ref = self.reference
        out_n = np.empty((len(facets), ref.facet_quad.weights.size, 3))
        pts = np.empty_like(out_n)
        corners = self.facet_corner_nodes(facets)
        for lf in np.unique(facets[:, 1]):
            tab = ref.facets[lf]
            rows = facets[:, 1] == lf
            Xc = self.nodes[corners[rows]]
            t = np.einsum("fci,qcd->fqid", Xc, tab.dN_surf)
            nvec = np.cross(t[..., 0], t[..., 1])
            out_n[rows] = nvec * tab.weights[None, :, None]
            pts[rows] = np.einsum("qc,fci->fqi", tab.N_surf, Xc)
        return out_n, pts

    def validate(self):
        """Check invertibility, facet-set sanity, and fiber normalization."""
        self.element_volumes()
        boundary = {tuple(f) for f in self.boundary_facets()}
        for name, facets in self.facet_sets.items():
            for f in facets:
                if tuple(f) not in boundary:
                    raise TopologyError(f"facet set {name!r}: {tuple(f)} is not on the boundary")
        if self.fiber_frames is not None:
            norms = np.linalg.norm(self.fiber_frames, axis=2)
            if np.any(np.abs(norms - 1.0) > _ORTHO_TOL):
                raise MeshError("fiber vectors are not unit length")
        return self

    def locate(self, point, tol=1e-9):
        """Find (element id, reference coords) containing a physical point.

        Ties on shared faces/nodes resolve to the lowest element id.
        """
        point = np.asarray(point, dtype=float)
        Xe = self.element_coords()
        lo = Xe.min(axis=1) - tol
        hi = Xe.max(axis=1) + tol
        cand = np.flatnonzero(np.all((point >= lo) & (point <= hi), axis=1))
        for e in cand:
            xi = self._inverse_map(int(e), point, tol)
            if xi is not None:
                return int(e), xi
        raise MeshError(f"point {point.tolist()} lies outside the mesh")

    def _inverse_map(self, e, point, tol):
        Xe = self.nodes[self.elements[e]]
        if self.kind == "tet":
            A = (Xe[1:] - Xe[0]).T
            xi = np.linalg.solve(A, point - Xe[0])
            ok = np.all(xi >= -tol) and xi.sum() <= 1.0 + tol
            return xi if ok else None
        # Newton iteration for the trilinear map; reference domain [-1,1]^3.
        ref = self.reference
        xi = np.zeros(3)
        for _ in range(30):
            N, dN = ref.eval_geom(xi[None, :])
            r = N[0] @ Xe - point
            if np.linalg.norm(r) < 1e-12 * (1.0 + np.linalg.norm(point)):
                break
            J = Xe.T @ dN[0]
            xi = xi - np.linalg.solve(J, r)
        geo_tol = tol * max(1.0, np.abs(Xe).max())
        N, _ = ref.eval_geom(xi[None, :])
        if np.linalg.norm(N[0] @ Xe - point) > max(geo_tol, 1e-8):
            return None
        return xi if np.all(np.abs(xi) <= 1.0 + 1e-7) else None


def interpolate_nodal(mesh, values, elem, xi):
    """Evaluate a nodal field (nn,...) at reference coords xi of one element."""
    N, _ = mesh.reference.eval_geom(np.atleast_2d(xi))
    return np.einsum("a,a...->...", N[0], values[mesh.elements[elem]])
