import numpy as np
import pytest

from fiberfem.assembly import State


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd_C(rng, n, jlo=0.8, jhi=1.2, spread=0.25):
    """Random right Cauchy-Green tensors with J uniformly in [jlo, jhi]."""
    F = np.eye(3) + spread * rng.normal(size=(n, 3, 3))
    J = np.linalg.det(F)
    bad = J <= 0.05
    F[bad] = np.eye(3)
    J = np.linalg.det(F)
    target = rng.uniform(jlo, jhi, n)
    F *= (target / J)[:, None, None] ** (1.0 / 3.0)
    return np.einsum("nki,nkj->nij", F, F)


def kinematics_from_C(C):
    from fiberfem.materials import Kinematics

    L = np.linalg.cholesky(C)
    return Kinematics.from_F(np.swapaxes(L, -1, -2))


def random_frames(rng, n):
    f = rng.normal(size=(n, 3))
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    t = rng.normal(size=(n, 3))
    s = t - (t * f).sum(axis=1, keepdims=True) * f
    s /= np.linalg.norm(s, axis=1, keepdims=True)
    return np.stack([f, s, np.cross(f, s)], axis=1)


def perturb_state(state, assembler, vec):
    """Scatter a solved-dof direction into a copied state (no back-sub)."""
    full = np.zeros(assembler.n_total)
    full[assembler.dof.solved_idx] = vec
    s = state.copy()
    s.u = s.u + full[: assembler.n_u].reshape(-1, 3)
    if assembler.formulation.bubble_count and assembler.keep_interior:
        nb = s.u_bub.size
        s.u_bub = s.u_bub + full[assembler.n_u : assembler.n_u + nb].reshape(s.u_bub.shape)
    if assembler.formulation.nodal_pressure:
        s.p = s.p + full[assembler.p_offset : assembler.p_offset + assembler.n_p]
    if assembler.n_cav:
        s.p_cav = s.p_cav + full[assembler.cav_offset :]
    return s


def fd_jacobian_error(assembler, state, followers=(), active_scalar=0.0,
                      n_dirs=2, h=1e-6, seed=0):
    """Max relative mismatch of A . d against a central FD of the residual."""
    local = np.random.default_rng(seed)
    sys0 = assembler.assemble(state, followers, active_scalar=active_scalar)
    worst = 0.0
    for _ in range(n_dirs):
        d = local.normal(size=sys0.R.size)
        d /= np.abs(d).max()
        rp = assembler.assemble(
            perturb_state(state, assembler, h * d), followers, active_scalar=active_scalar
        ).R
        rm = assembler.assemble(
            perturb_state(state, assembler, -h * d), followers, active_scalar=active_scalar
        ).R
        fd = (rp - rm) / (2.0 * h)
        worst = max(worst, float(np.abs(sys0.A @ d - fd).max() / np.abs(fd).max()))
    return worst


def randomized_state(rng, mesh, formulation, n_cav=0, u_scale=0.03, p_scale=0.5):
    state = State.zeros(mesh, formulation, n_cav=n_cav)
    state.u += u_scale * rng.normal(size=state.u.shape)
    if state.u_bub is not None:
        state.u_bub += 0.5 * u_scale * rng.normal(size=state.u_bub.shape)
    if state.p is not None:
        state.p += p_scale * rng.normal(size=state.p.shape)
    if n_cav:
        state.p_cav += p_scale * np.abs(rng.normal(size=n_cav))
    return state


def clamp_dofs(mesh, facet_set):
    nodes = mesh.facet_set_nodes(facet_set)
    return (3 * nodes[:, None] + np.arange(3)).ravel()
