import numpy as np
import pytest

from conftest import random_frames
from fiberfem.condensation import condense_batch, static_condense
from fiberfem.errors import CondensationError
from fiberfem.formulations import ElementBlocks, Formulation, element_tangent_residual
from fiberfem.materials import GenericFung, VolumetricLaw
from fiberfem.reference_elements import HEX_CORNERS, TET_CORNERS


def random_blocks(rng, nE=12, nI=3, npdof=4, gamma_scale=0.4, cavity=True):
    K = rng.normal(size=(nE + nI, nE + nI)) + np.eye(nE + nI) * 6.0
    Kg = rng.normal(size=(nE, nE + nI)) * gamma_scale
    B = rng.normal(size=(nE + nI, npdof))
    D = rng.normal(size=(npdof, npdof)) - 3.0 * np.eye(npdof)
    blocks = ElementBlocks(
        K_EE=K[:nE, :nE], K_EI=K[:nE, nE:], K_IE=K[nE:, :nE], K_II=K[nE:, nE:],
        K_gam_EE=Kg[:, :nE], K_gam_EI=Kg[:, nE:],
        B_E=B[:nE], B_I=B[nE:], C_E=B[:nE].T.copy(), C_I=B[nE:].T.copy(),
        D_E=D, R_vol_E=rng.normal(size=nE), R_vol_I=rng.normal(size=nI),
        R_gam_E=rng.normal(size=nE), R_inc_E=rng.normal(size=npdof),
    )
    if cavity:
        blocks.F_cav_E = rng.normal(size=nE)
        blocks.F_cav_I = rng.normal(size=nI)
        blocks.E_cav_E = rng.normal(size=nE)
        blocks.R_cav = float(rng.normal())
    return blocks


def dense_solutions(blocks, G_cav=-1.3):
    """(full solve, condensed solve + back-substitution) for one element."""
    nE = blocks.K_EE.shape[0]
    nI = blocks.K_II.shape[0]
    npdof = blocks.B_E.shape[1]
    with_cav = blocks.F_cav_E is not None
    n = nE + nI + npdof + (1 if with_cav else 0)
    A = np.zeros((n, n))
    A[:nE, :nE] = blocks.K_EE + blocks.K_gam_EE
    A[:nE, nE:nE + nI] = blocks.K_EI + blocks.K_gam_EI
    A[nE:nE + nI, :nE] = blocks.K_IE
    A[nE:nE + nI, nE:nE + nI] = blocks.K_II
    A[:nE, nE + nI:nE + nI + npdof] = blocks.B_E
    A[nE:nE + nI, nE + nI:nE + nI + npdof] = blocks.B_I
    A[nE + nI:nE + nI + npdof, :nE] = blocks.C_E
    A[nE + nI:nE + nI + npdof, nE:nE + nI] = blocks.C_I
    A[nE + nI:nE + nI + npdof, nE + nI:nE + nI + npdof] = blocks.D_E
    rhs = [-(blocks.R_vol_E + blocks.R_gam_E), -blocks.R_vol_I, -blocks.R_inc_E]
    if with_cav:
        A[:nE, -1] = blocks.E_cav_E
        A[-1, :nE] = blocks.F_cav_E
        A[-1, nE:nE + nI] = blocks.F_cav_I
        A[-1, -1] = G_cav
        rhs.append([-blocks.R_cav])
    full = np.linalg.solve(A, np.concatenate(rhs))

    cond = static_condense(blocks)
    m = nE + npdof + (1 if with_cav else 0)
    Ac = np.zeros((m, m))
    Ac[:nE, :nE] = cond.K + cond.K_gam
    Ac[:nE, nE:nE + npdof] = cond.B + cond.B_gam
    Ac[nE:nE + npdof, :nE] = cond.C
    Ac[nE:nE + npdof, nE:nE + npdof] = cond.D
    rc = [-(cond.R_vol + cond.R_gam), -cond.R_inc]
    if with_cav:
        Ac[:nE, -1] = blocks.E_cav_E
        Ac[-1, :nE] = cond.F_cav
        Ac[-1, nE:nE + npdof] = cond.H_cav
        Ac[-1, -1] = G_cav
        rc.append([-cond.R_cav])
    red = np.linalg.solve(Ac, np.concatenate(rc))
    du_E = red[:nE]
    dp = red[nE:nE + npdof]
    du_I = cond.back_substitute(du_E, dp)
    recon = [du_E, du_I, dp]
    if with_cav:
        recon.append(red[-1:])
    return full, np.concatenate(recon)


class TestRandomBlockOracle:
    def test_decoupled_bubble_reduces_to_exterior(self, rng):
        b = random_blocks(rng, cavity=False)
        b.K_EI[:] = 0.0
        b.K_IE[:] = 0.0
        b.B_I[:] = 0.0
        b.C_I[:] = 0.0
        b.K_gam_EI[:] = 0.0
        cond = static_condense(b)
        assert np.allclose(cond.K, b.K_EE, rtol=1e-14)
        assert np.allclose(cond.B, b.B_E, rtol=1e-14)
        assert np.allclose(cond.D, b.D_E, rtol=1e-14)
        assert np.allclose(cond.R_vol, b.R_vol_E, rtol=1e-14)
        assert np.abs(cond.B_gam).max() == 0.0

    def test_condensed_equals_full_solve(self, rng):
        worst = 0.0
        for _ in range(100):
            full, recon = dense_solutions(random_blocks(rng))
            worst = max(worst, np.abs(full - recon).max() / np.abs(full).max())
        assert worst < 1e-10

    def test_gamma_path_uses_interior_volume_residual(self, rng):
        # with zero interior residual the Gamma row correction vanishes
        b = random_blocks(rng)
        b.R_vol_I[:] = 0.0
        cond = static_condense(b)
        assert np.allclose(cond.R_gam, b.R_gam_E, rtol=1e-14)
        # and with a nonzero one it equals R_gam_E - K_gam_EI Kii^-1 R_vol_I
        b2 = random_blocks(rng)
        expect = b2.R_gam_E - b2.K_gam_EI @ np.linalg.solve(b2.K_II, b2.R_vol_I)
        assert np.allclose(static_condense(b2).R_gam, expect, rtol=1e-12)

    def test_singular_interior_block_raises(self, rng):
        b = random_blocks(rng, cavity=False)
        b.K_II[:] = 0.0
        with pytest.raises(CondensationError):
            static_condense(b)


class TestRealElements:
    @pytest.mark.parametrize("elem,corners,nbasis,npdof", [
        ("tet", TET_CORNERS, 5, 4),
        ("hex", HEX_CORNERS, 10, 8),
    ])
    def test_real_mini_element_with_follower(self, elem, corners, nbasis, npdof, rng):
        form = Formulation("mini", elem)
        mat = GenericFung(split="AS", k1=20.0,
                          volumetric=VolumetricLaw("J-1", 50.0))
        Xe = corners + 0.05 * rng.normal(size=corners.shape)
        u0 = 0.02 * rng.normal(size=(nbasis, 3))
        p0 = 0.3 * rng.normal(size=npdof)
        b = element_tangent_residual(
            form, mat, Xe, u0, p0, random_frames(rng, 1)[0],
            follower=[(1, 2.0)], cavity=[2],
        )
        assert np.abs(b.K_gam_EI).max() > 0.0   # bubbles couple through Gamma
        assert np.abs(b.F_cav_I).max() > 0.0
        # a lone element carries rigid modes; shift the displacement diagonal
        # (identically in both paths) so the comparison system is regular
        shift = 10.0 * np.abs(b.K_EE).max()
        b.K_EE = b.K_EE + shift * np.eye(b.K_EE.shape[0])
        b.K_II = b.K_II + shift * np.eye(b.K_II.shape[0])
        full, recon = dense_solutions(b)
        assert np.abs(full - recon).max() / np.abs(full).max() < 1e-10


class TestBatchedPath:
    def test_condense_batch_matches_single(self, rng):
        blocks = [random_blocks(rng, cavity=False) for _ in range(7)]
        K = np.stack([np.block([[b.K_EE, b.K_EI], [b.K_IE, b.K_II]]) for b in blocks])
        B = np.stack([np.vstack([b.B_E, b.B_I]) for b in blocks])
        Rv = np.stack([np.concatenate([b.R_vol_E, b.R_vol_I]) for b in blocks])
        Ri = np.stack([b.R_inc_E for b in blocks])
        D = np.stack([b.D_E for b in blocks])
        out = condense_batch(K, B, Rv, Ri, D, 12)
        for k, b in enumerate(blocks):
            single = static_condense(b)
            assert np.allclose(out.K[k], single.K, rtol=1e-13)
            assert np.allclose(out.D[k], single.D, rtol=1e-13)
            assert np.allclose(out.R_inc[k], single.R_inc, rtol=1e-13)
