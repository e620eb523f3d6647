import numpy as np
import pytest

from fiberfem.errors import InvertedElementError, MeshError, TopologyError
from fiberfem.mesh import Mesh, interpolate_nodal
from fiberfem.mesh_generators import make_box_mesh, make_tube_mesh
from fiberfem.reference_elements import TET_CORNERS


def unit_tet():
    return Mesh(nodes=TET_CORNERS.copy(), elements=[[0, 1, 2, 3]], kind="tet")


class TestMapToPhysical:
    def test_identity_tet(self):
        mesh = unit_tet()
        x, gop, det = mesh.map_to_physical(0, [0.2, 0.3, 0.1])
        assert det == pytest.approx(1.0)
        assert np.allclose(x, [0.2, 0.3, 0.1])
        assert np.allclose(gop, np.eye(3))

    def test_scaled_hex_det(self):
        h = 0.37
        mesh = make_box_mesh((1, 1, 1), lengths=(2 * h, 2 * h, 2 * h), kind="hex")
        _, _, det = mesh.map_to_physical(0, [0.1, -0.2, 0.5])
        assert det == pytest.approx(h**3, rel=1e-12)

    def test_random_affine_tet_volume(self, rng):
        verts = TET_CORNERS + 0.3 * rng.normal(size=(4, 3))
        signed = np.linalg.det(verts[1:] - verts[0]) / 6.0
        if signed < 0:
            verts[[1, 2]] = verts[[2, 1]]
            signed = -signed
        mesh = Mesh(nodes=verts, elements=[[0, 1, 2, 3]], kind="tet")
        _, _, det = mesh.map_to_physical(0, [0.25, 0.25, 0.25])
        assert det / 6.0 == pytest.approx(signed, rel=1e-12)
        assert mesh.element_volumes()[0] == pytest.approx(signed, rel=1e-12)

    def test_inverted_element_raises_with_id(self):
        verts = TET_CORNERS.copy()
        verts[3, 2] = -1.0  # flips orientation
        mesh = Mesh(nodes=verts, elements=[[0, 1, 2, 3]], kind="tet")
        with pytest.raises(InvertedElementError) as err:
            mesh.map_to_physical(0, [0.25, 0.25, 0.25])
        assert err.value.element_id == 0


class TestGeometry:
    @pytest.mark.parametrize("kind", ["tet", "hex"])
    def test_gradient_of_linear_function_exact(self, kind, rng):
        mesh = make_box_mesh((2, 2, 2), lengths=(1.1, 0.9, 1.3), kind=kind)
        a = rng.normal(size=3)
        ref = mesh.reference
        vals = mesh.nodes @ a
        Xe = mesh.element_coords()
        Jm = np.einsum("eai,qaj->eqij", Xe, ref.dN_geom)
        G = np.einsum("qaj,eqji->eqai", ref.dN_geom, np.linalg.inv(Jm))
        grad = np.einsum("ea,eqai->eqi", vals[mesh.elements], G)
        assert np.abs(grad - a).max() < 1e-12

    def test_boundary_facets_closed_partition(self):
        mesh = make_box_mesh((2, 3, 2), kind="tet")
        bf = mesh.boundary_facets()
        classified = sum(len(v) for v in mesh.facet_sets.values())
        assert classified == len(bf)

    def test_facet_normals_outward(self):
        # flux of X over the closed box boundary equals 3 * volume
        mesh = make_box_mesh((2, 2, 2), lengths=(1.0, 1.0, 1.0), kind="hex")
        bf = mesh.boundary_facets()
        nrm, pts = mesh.facet_areas_and_normals(bf)
        flux = np.einsum("fqi,fqi->", nrm, pts)
        assert flux == pytest.approx(3.0, rel=1e-12)

    def test_inner_normals_point_into_cavity(self):
        mesh = make_tube_mesh(1, "hex")
        nrm, pts = mesh.facet_areas_and_normals(mesh.facet_sets["inner"])
        radial = pts[..., :2] / np.linalg.norm(pts[..., :2], axis=-1, keepdims=True)
        assert np.all(np.einsum("fqi,fqi->fq", nrm[..., :2], radial) < 0.0)

    def test_locate_and_interpolate(self, rng):
        mesh = make_box_mesh((3, 3, 3), kind="tet")
        point = np.array([0.421, 0.77, 0.33])
        elem, xi = mesh.locate(point)
        x, _, _ = mesh.map_to_physical(elem, xi)
        assert np.allclose(x, point, atol=1e-10)
        lin = mesh.nodes @ np.array([1.0, 2.0, -0.5])
        assert interpolate_nodal(mesh, lin, elem, xi) == pytest.approx(
            point @ np.array([1.0, 2.0, -0.5]), abs=1e-12
        )
        with pytest.raises(MeshError):
            mesh.locate([10.0, 10.0, 10.0])

    def test_validate_rejects_interior_facet(self):
        mesh = make_box_mesh((2, 2, 2), kind="tet")
        boundary = {tuple(f) for f in mesh.boundary_facets()}
        interior = next(
            (e, lf)
            for e in range(mesh.num_elements)
            for lf in range(4)
            if (e, lf) not in boundary
        )
        bad = Mesh(
            nodes=mesh.nodes,
            elements=mesh.elements,
            kind="tet",
            facet_sets={"oops": np.array([interior])},
        )
        with pytest.raises(TopologyError):
            bad.validate()

    def test_mesh_immutable(self):
        mesh = make_box_mesh((1, 1, 1), kind="hex")
        with pytest.raises(ValueError):
            mesh.nodes[0, 0] = 9.0
