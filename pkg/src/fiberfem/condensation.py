"""Element-level static condensation of interior (bubble) degrees of freedom.

Follower-load blocks have nonzero interior columns but zero interior rows,
so the condensed surface pieces differ from the standard Schur update; the
cavity row is condensed the same way. Back-substitution recovers interior
increments after the global solve.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CondensationError

_COND_LIMIT = 1e14


@dataclass
class CondensedBlocks:
    """Condensed element system: interior displacement dofs eliminated."""

    K: np.ndarray        # K_EE - K_EI Kii^-1 K_IE
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    K_gam: np.ndarray    # follower tangent, exterior rows
    B_gam: np.ndarray    # follower-to-pressure coupling through the bubbles
    R_vol: np.ndarray
    R_gam: np.ndarray
    R_inc: np.ndarray
    F_cav: np.ndarray = None
    H_cav: np.ndarray = None
    R_cav: float = 0.0
    # back-substitution cache
    Kii_inv: np.ndarray = None
    K_IE: np.ndarray = None
    B_I: np.ndarray = None
    R_vol_I: np.ndarray = None

    def back_substitute(self, du_E, dp_E=None):
        """Interior increment du_I = -Kii^-1 (R_vol_I + K_IE du_E + B_I dp_E)."""
        rhs = self.R_vol_I + self.K_IE @ du_E
        if dp_E is not None and self.B_I is not None and self.B_I.size:
            rhs = rhs + self.B_I @ dp_E
        return -(self.Kii_inv @ rhs)


def _invert_interior(K_II, elem_ids=None):
    cond = np.linalg.cond(K_II)
    bad = ~np.isfinite(cond) | (cond > _COND_LIMIT)
    if np.any(bad):
        e = int(np.argwhere(bad)[0, 0])
        eid = e if elem_ids is None else int(elem_ids[e])
        raise CondensationError(eid, f"condition estimate {cond[np.argmax(bad)]:.3g}")
    return np.linalg.inv(K_II)


def condense_batch(
    K,
    B,
    R_vol,
    R_inc,
    D,
    n_exterior,
    K_gam=None,
    R_gam=None,
    F_cav=None,
    R_cav=None,
    elem_ids=None,
):
    """Batched condensation over (ne, ...) element arrays.

    `n_exterior` is the number of exterior displacement dofs; the remaining
    trailing dofs are interior. Gamma (follower) and cavity inputs are
    optional; their interior rows must already be zero/absent by construction.
    """
    nE = n_exterior
    K_EE, K_EI = K[:, :nE, :nE], K[:, :nE, nE:]
    K_IE, K_II = K[:, nE:, :nE], K[:, nE:, nE:]
    B_E, B_I = B[:, :nE, :], B[:, nE:, :]
    R_E, R_I = R_vol[:, :nE], R_vol[:, nE:]

    Kii_inv = _invert_interior(K_II, elem_ids)
    Y = Kii_inv @ K_IE                       # Kii^-1 K_IE
    Z = Kii_inv @ B_I                        # Kii^-1 B_I
    r = np.einsum("eij,ej->ei", Kii_inv, R_I)

    out = CondensedBlocks(
        K=K_EE - K_EI @ Y,
        B=B_E - K_EI @ Z,
        C=np.swapaxes(B_E, 1, 2) - np.swapaxes(B_I, 1, 2) @ Y,
        D=D - np.swapaxes(B_I, 1, 2) @ Z,
        K_gam=None,
        B_gam=None,
        R_vol=R_E - np.einsum("eij,ej->ei", K_EI, r),
        R_gam=None,
        R_inc=R_inc - np.einsum("eji,ej->ei", B_I, r),
        Kii_inv=Kii_inv,
        K_IE=K_IE,
        B_I=B_I,
        R_vol_I=R_I,
    )
    if K_gam is not None:
        Kg_EE, Kg_EI = K_gam[:, :nE, :nE], K_gam[:, :nE, nE:]
        out.K_gam = Kg_EE - Kg_EI @ Y
        out.B_gam = -Kg_EI @ Z
        out.R_gam = R_gam[:, :nE] - np.einsum("eij,ej->ei", Kg_EI, r)
    if F_cav is not None:
        Fc_E, Fc_I = F_cav[:, :nE], F_cav[:, nE:]
        out.F_cav = Fc_E - np.einsum("ej,eji->ei", Fc_I, Y)
        out.H_cav = -np.einsum("ej,eji->ei", Fc_I, Z)
        out.R_cav = R_cav - np.einsum("ej,ej->e", Fc_I, r)
    return out


def static_condense(blocks):
    """Condense one element's `ElementBlocks` (see `formulations`).

    Returns a `CondensedBlocks` with the Schur-complement system, the
    separated follower pieces, and the back-substitution cache.
    """
    nE = blocks.K_EE.shape[0]
    nI = blocks.K_II.shape[0]
    np_ = blocks.B_E.shape[1]
    K = np.block([[blocks.K_EE, blocks.K_EI], [blocks.K_IE, blocks.K_II]])[None]
    B = np.vstack([blocks.B_E, blocks.B_I])[None]
    R_vol = np.concatenate([blocks.R_vol_E, blocks.R_vol_I])[None]
    K_gam = np.zeros((1, nE + nI, nE + nI))
    K_gam[0, :nE, :nE] = blocks.K_gam_EE
    K_gam[0, :nE, nE:] = blocks.K_gam_EI
    R_gam = np.zeros((1, nE + nI))
    R_gam[0, :nE] = blocks.R_gam_E
    kwargs = {}
    if blocks.F_cav_E is not None:
        kwargs = dict(
            F_cav=np.concatenate([blocks.F_cav_E, blocks.F_cav_I])[None],
            R_cav=np.atleast_1d(blocks.R_cav),
        )
    cond = condense_batch(
        K,
        B,
        R_vol,
        np.atleast_2d(blocks.R_inc_E),
        blocks.D_E[None] if np_ else np.zeros((1, 0, 0)),
        nE,
        K_gam=K_gam,
        R_gam=R_gam,
        **kwargs,
    )
    for name in (
        "K", "B", "C", "D", "K_gam", "B_gam", "R_vol", "R_gam", "R_inc",
        "F_cav", "H_cav", "R_cav", "Kii_inv", "K_IE", "B_I", "R_vol_I",
    ):
        val = getattr(cond, name)
        if isinstance(val, np.ndarray) and val.ndim and val.shape[0] == 1:
            setattr(cond, name, val[0])
    return cond
