import numpy as np
import pytest

from conftest import clamp_dofs
from fiberfem.assembly import (
    Assembler,
    CavityConstraint,
    LinearCompliance,
    State,
    cavity_volume,
    cavity_volume_linearization,
    compliance_row,
    surface_is_closed,
)
from fiberfem.errors import TopologyError
from fiberfem.formulations import Formulation
from fiberfem.loadcases import DirichletProgram, LoadCase, LoadStage, clamp_program
from fiberfem.materials import GenericFung, VolumetricLaw
from fiberfem.mesh_generators import make_box_mesh, make_tube_mesh
from fiberfem.solver import NewtonConfig, newton_load_stepping


def ball_mesh(radius=2.0, n=6):
    """Hex ball: cube nodes mapped radially so the boundary is a sphere."""
    cube = make_box_mesh((n, n, n), lengths=(2.0, 2.0, 2.0), origin=(-1, -1, -1),
                         kind="hex")
    X = cube.nodes
    norm2 = np.linalg.norm(X, axis=1)
    norminf = np.abs(X).max(axis=1)
    scale = np.ones(len(X))
    mask = norm2 > 0
    scale[mask] = norminf[mask] / norm2[mask]
    nodes = radius * X * scale[:, None]
    from fiberfem.mesh import Mesh

    mesh = Mesh(nodes=nodes, elements=cube.elements, kind="hex")
    return Mesh(nodes=nodes, elements=cube.elements, kind="hex",
                facet_sets={"surface": mesh.boundary_facets()})


def cube_with_boundary():
    mesh = make_box_mesh((2, 2, 2), kind="hex")
    from fiberfem.mesh import Mesh

    return Mesh(nodes=mesh.nodes, elements=mesh.elements, kind="hex",
                facet_sets=dict(mesh.facet_sets, surface=mesh.boundary_facets()))


class TestCavityVolume:
    def test_unit_cube(self):
        mesh = cube_with_boundary()
        assert cavity_volume(mesh, mesh.facet_sets["surface"]) == pytest.approx(1.0, rel=1e-12)

    def test_sphere_volume(self):
        mesh = ball_mesh(radius=2.0, n=6)
        mesh.validate()
        V = cavity_volume(mesh, mesh.facet_sets["surface"])
        exact = 4.0 / 3.0 * np.pi * 8.0
        assert abs(V - exact) / exact < 0.01

    def test_uniform_dilation_exact(self):
        mesh = cube_with_boundary()
        u = 0.1 * mesh.nodes
        V = cavity_volume(mesh, mesh.facet_sets["surface"], u)
        assert V == pytest.approx(1.1**3, rel=1e-10)

    def test_closed_surface_detection(self):
        mesh = cube_with_boundary()
        assert surface_is_closed(mesh, mesh.facet_sets["surface"])
        assert not surface_is_closed(mesh, mesh.facet_sets["zmax"])
        tube = make_tube_mesh(1, "tet")
        assert not surface_is_closed(tube, tube.facet_sets["inner"])

    def test_open_cavity_requires_flag(self):
        tube = make_tube_mesh(1, "hex")
        with pytest.raises(TopologyError):
            CavityConstraint("inner", LinearCompliance(1.0, 0.0)).attach(tube)
        cav = CavityConstraint("inner", LinearCompliance(1.0, 0.0), allow_open=True)
        cav.attach(tube)
        assert cav.orientation == -1.0  # stored normals point into the lumen


class TestLinearization:
    def test_constant_direction_closed_surface(self, rng):
        # d_k for a constant field is (1/3) oint c . N ds = 0 on a closed surface
        mesh = cube_with_boundary()
        u = 0.05 * rng.normal(size=mesh.nodes.shape)
        du = np.tile(rng.normal(size=3), (mesh.num_nodes, 1))
        d = cavity_volume_linearization(mesh, mesh.facet_sets["surface"], u, du)
        assert abs(d) < 1e-12

    def test_dilation_direction(self):
        # u = 0, du = eps X gives d_k = 3 V exactly in the limit
        mesh = cube_with_boundary()
        du = mesh.nodes.copy()
        d = cavity_volume_linearization(
            mesh, mesh.facet_sets["surface"], np.zeros_like(du), du
        )
        assert d == pytest.approx(3.0, rel=1e-12)

    @pytest.mark.parametrize("surface,maker", [
        ("inner", lambda: make_tube_mesh(1, "tet")),
        ("surface", cube_with_boundary),
    ])
    def test_matches_fd_of_volume(self, surface, maker, rng):
        mesh = maker()
        facets = mesh.facet_sets[surface]
        u = 0.04 * rng.normal(size=mesh.nodes.shape)
        du = rng.normal(size=mesh.nodes.shape)
        du /= np.abs(du).max()
        d = cavity_volume_linearization(mesh, facets, u, du)
        h = 1e-6
        fd = (
            cavity_volume(mesh, facets, u + h * du)
            - cavity_volume(mesh, facets, u - h * du)
        ) / (2 * h)
        assert abs(d - fd) / abs(fd) < 1e-6


class TestComplianceRow:
    def test_linear_compliance(self):
        comp = LinearCompliance(V0=5.0, C=2.0)
        e_k, G, R = compliance_row(comp, p_cav=3.0, V_cav=12.0)
        assert e_k == 2.0
        assert G == -2.0
        assert R == pytest.approx(12.0 - (5.0 + 6.0))

    def test_consistency_zero_residual(self):
        comp = LinearCompliance(V0=1.0, C=4.0)
        _, _, R = compliance_row(comp, p_cav=0.5, V_cav=3.0)
        assert R == 0.0


class TestCoupledSolve:
    def test_constant_volume_constraint(self):
        # squeeze a clamped cube axially; the cavity row must hold the
        # enclosed volume at V0 by adjusting the cavity pressure
        mesh = cube_with_boundary()
        form = Formulation("p0as", "hex")
        mat = GenericFung(split="AS", mu=10.0, k1=0.0,
                          volumetric=VolumetricLaw("J-1", 200.0))
        top = mesh.facet_set_nodes("zmax")

        def squeeze(X, lam):
            u = np.zeros_like(X)
            u[:, 2] = -0.08 * lam
            return u

        case = LoadCase(stages=[LoadStage(
            "squeeze", mesh, steps=4,
            dirichlet=[clamp_program(mesh, "zmin"), DirichletProgram(top, squeeze)],
        )])
        V0 = cavity_volume(mesh, mesh.facet_sets["surface"])
        cav = CavityConstraint("surface", LinearCompliance(V0=V0, C=0.0))
        asm = Assembler(mesh, form, mat, constrained_dofs=case.constrained_dofs(),
                        cavities=[cav])
        rep = newton_load_stepping(asm, case, NewtonConfig(load_steps=4))
        assert rep.converged
        V_final = asm.cavity_volumes(rep.state)[0]
        assert V_final == pytest.approx(V0, rel=1e-8)
        # the held volume requires a nonzero cavity pressure
        assert abs(rep.state.p_cav[0]) > 1e-3
