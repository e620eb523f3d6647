import numpy as np
import pytest

from conftest import clamp_dofs, fd_jacobian_error, randomized_state
from fiberfem.assembly import (
    Assembler,
    CavityConstraint,
    LinearCompliance,
    State,
)
from fiberfem.errors import ConfigurationError
from fiberfem.formulations import Formulation, element_tangent_residual
from fiberfem.materials import GenericFung, VolumetricLaw
from fiberfem.mesh_generators import make_box_mesh


def soft_material(split="AS"):
    return GenericFung(split=split, mu=10.0, k1=5.0,
                       volumetric=VolumetricLaw("J-1", 100.0))


class TestResidualBasics:
    def test_zero_state_zero_loads(self):
        mesh = make_box_mesh((2, 2, 2), kind="tet")
        asm = Assembler(mesh, Formulation("projection", "tet"), soft_material())
        sys0 = asm.assemble(State.zeros(mesh, asm.formulation))
        assert np.abs(sys0.R).max() == 0.0

    def test_uniform_stretch_matches_per_element_sum(self, rng):
        # assembled residual equals the scatter-sum of independently computed
        # element residuals (1% uniform Dirichlet stretch, P0AS cube)
        mesh = make_box_mesh((2, 2, 2), kind="hex")
        form = Formulation("p0as", "hex")
        mat = soft_material()
        asm = Assembler(mesh, form, mat)
        state = State.zeros(mesh, form)
        state.u[:, 2] = 0.01 * mesh.nodes[:, 2]
        sys0 = asm.assemble(state)
        expect = np.zeros(3 * mesh.num_nodes)
        for e in range(mesh.num_elements):
            blocks = element_tangent_residual(
                form, mat, mesh.nodes[mesh.elements[e]], state.u[mesh.elements[e]],
            )
            dofs = (3 * mesh.elements[e][:, None] + np.arange(3)).ravel()
            np.add.at(expect, dofs, blocks.R_vol_E)
        assert np.allclose(sys0.R, expect, rtol=1e-12, atol=1e-14)

    def test_dirichlet_rows_removed(self):
        mesh = make_box_mesh((2, 2, 2), kind="tet")
        fixed = clamp_dofs(mesh, "zmin")
        asm = Assembler(
            mesh, Formulation("projection", "tet"), soft_material(),
            constrained_dofs=fixed,
        )
        sys0 = asm.assemble(State.zeros(mesh, asm.formulation))
        expected = 3 * mesh.num_nodes - len(fixed) + mesh.num_nodes
        assert sys0.R.size == expected
        assert sys0.A.shape == (expected, expected)

    def test_mesh_formulation_mismatch(self):
        mesh = make_box_mesh((1, 1, 1), kind="tet")
        with pytest.raises(ConfigurationError):
            Assembler(mesh, Formulation("projection", "hex"), soft_material())


class TestJacobianConsistency:
    @pytest.mark.parametrize("kind,elem", [
        ("p0as", "hex"), ("p0was", "tet"), ("projection", "tet"),
        ("projection", "hex"), ("mini", "tet"), ("mini", "hex"),
    ])
    def test_global_fd(self, kind, elem, rng):
        mesh = make_box_mesh((2, 2, 2), kind=elem)
        form = Formulation(kind, elem)
        mat = soft_material("WAS" if kind == "p0was" else "AS")
        cavities = [CavityConstraint("xmax", LinearCompliance(0.9, 2.0), allow_open=True)]
        asm = Assembler(
            mesh, form, mat, constrained_dofs=clamp_dofs(mesh, "zmin"),
            cavities=cavities, keep_interior=(kind == "mini"),
        )
        state = randomized_state(rng, mesh, form, n_cav=1)
        err = fd_jacobian_error(asm, state, followers=[("ymax", 1.5)],
                                active_scalar=0.3, n_dirs=2)
        assert err < 1e-5

    def test_follower_asymmetry_and_symmetric_limit(self):
        mesh = make_box_mesh((2, 2, 2), kind="tet")
        asm = Assembler(mesh, Formulation("projection", "tet"), soft_material())
        state = State.zeros(mesh, asm.formulation)
        A0 = asm.assemble(state).A
        assert abs(A0 - A0.T).max() <= 1e-12 * abs(A0).max()
        A1 = asm.assemble(state, [("xmax", 2.0)]).A
        assert abs(A1 - A1.T).max() > 1e-8

    def test_bitwise_deterministic(self, rng):
        mesh = make_box_mesh((2, 2, 2), kind="tet")
        form = Formulation("projection", "tet")
        asm = Assembler(mesh, form, soft_material())
        state = randomized_state(rng, mesh, form)
        a = asm.assemble(state, [("xmax", 2.0)])
        b = asm.assemble(state, [("xmax", 2.0)])
        assert np.array_equal(a.A.data, b.A.data)
        assert np.array_equal(a.A.indices, b.A.indices)
        assert np.array_equal(a.R, b.R)


class TestMiniCondensedPath:
    def test_condensed_step_equals_full_step(self, rng):
        # one Newton update computed via the condensed system + back
        # substitution must match the keep_interior (full) solve
        import scipy.sparse.linalg as spla

        mesh = make_box_mesh((2, 2, 2), kind="tet")
        form = Formulation("mini", "tet")
        mat = soft_material()
        fixed = clamp_dofs(mesh, "zmin")
        state0 = randomized_state(rng, mesh, form, u_scale=0.02)
        followers = [("xmax", 1.2)]

        asm_c = Assembler(mesh, form, mat, constrained_dofs=fixed)
        sys_c = asm_c.assemble(state0, followers)
        d_c = spla.spsolve(sys_c.A.tocsc(), sys_c.rhs)
        st_c = state0.copy()
        asm_c.apply_update(st_c, sys_c, d_c)

        asm_f = Assembler(mesh, form, mat, constrained_dofs=fixed, keep_interior=True)
        sys_f = asm_f.assemble(state0, followers)
        d_f = spla.spsolve(sys_f.A.tocsc(), sys_f.rhs)
        st_f = state0.copy()
        asm_f.apply_update(st_f, sys_f, d_f)

        scale = np.abs(st_f.u).max()
        assert np.abs(st_c.u - st_f.u).max() / scale < 1e-10
        assert np.abs(st_c.u_bub - st_f.u_bub).max() / scale < 1e-10
        assert np.abs(st_c.p - st_f.p).max() / max(np.abs(st_f.p).max(), 1e-12) < 1e-10

    def test_bubble_locality(self, rng):
        # interior dofs never appear in the production global matrix
        mesh = make_box_mesh((2, 2, 2), kind="hex")
        form = Formulation("mini", "hex")
        asm = Assembler(mesh, form, soft_material())
        state = randomized_state(rng, mesh, form)
        sys0 = asm.assemble(state, [("xmax", 1.0)])
        n_expected = 3 * mesh.num_nodes + mesh.num_nodes
        assert sys0.A.shape == (n_expected, n_expected)
        assert asm.dof.n_u_total == 3 * mesh.num_nodes

    def test_blocks_accessible(self, rng):
        mesh = make_box_mesh((2, 2, 2), kind="tet")
        form = Formulation("projection", "tet")
        asm = Assembler(mesh, form, soft_material())
        sys0 = asm.assemble(State.zeros(mesh, form))
        K = sys0.block("u", "u")
        D = sys0.block("p", "p")
        assert K.shape == (3 * mesh.num_nodes, 3 * mesh.num_nodes)
        assert D.shape == (mesh.num_nodes, mesh.num_nodes)

    def test_matrix_market_export(self, tmp_path, rng):
        mesh = make_box_mesh((1, 1, 2), kind="tet")
        form = Formulation("projection", "tet")
        asm = Assembler(mesh, form, soft_material())
        sys0 = asm.assemble(randomized_state(rng, mesh, form))
        path = tmp_path / "A.mtx"
        sys0.save_matrix_market(path)
        from scipy.io import mmread

        assert abs(mmread(str(path)).tocsr() - sys0.A).max() < 1e-15
