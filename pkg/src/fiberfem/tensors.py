"""Batched second/fourth-order tensor algebra on trailing (3,3[,3,3]) axes."""

import numpy as np

EYE3 = np.eye(3)
# Symmetric fourth-order identity, I_ijkl = (d_ik d_jl + d_il d_jk)/2.
IDENTITY4 = 0.5 * (
    np.einsum("ik,jl->ijkl", EYE3, EYE3) + np.einsum("il,jk->ijkl", EYE3, EYE3)
)


def sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def ddot42(A4, B2):
    """Double contraction A_ijkl B_kl -> (...,3,3)."""
    return np.einsum("...ijkl,...kl->...ij", A4, B2)


def ddot22(A2, B2):
    """Double contraction A_ij B_ij -> (...)."""
    return np.einsum("...ij,...ij->...", A2, B2)


def outer(A2, B2):
    """Dyadic product A_ij B_kl -> (...,3,3,3,3)."""
    return np.einsum("...ij,...kl->...ijkl", A2, B2)


def sym_outer(A2, B2):
    """(A (x) B + B (x) A)/2."""
    return 0.5 * (outer(A2, B2) + outer(B2, A2))


def odot(A2, B2):
    """(A (.) B)_ijkl = (A_ik B_jl + A_il B_jk)/2."""
    return 0.5 * (
        np.einsum("...ik,...jl->...ijkl", A2, B2)
        + np.einsum("...il,...jk->...ijkl", A2, B2)
    )


def dev_ref(A2, C, Cinv):
    """Referential deviator Dev(A) = A - (A:C)/3 * C^{-1}."""
    return A2 - (ddot22(A2, C) / 3.0)[..., None, None] * Cinv


def dyad(v, w=None):
    """v_i w_j over trailing axis; symmetric dyad when w is given."""
    if w is None:
        return np.einsum("...i,...j->...ij", v, v)
    return sym(np.einsum("...i,...j->...ij", v, w))
