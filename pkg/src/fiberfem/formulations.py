"""Discrete formulations and element-level kernels.

Four formulations are supported:

* ``p0as`` / ``p0was``: linear displacements with element-constant pressure,
  eliminated analytically through the penalty relation p = kappa Theta(J)
  (mean over the element). The consistent tangent carries the rank-one
  dp/du coupling.
* ``projection``: equal-order nodal pressure stabilized by the element-mean
  projection form s_h(p,q) = 1/mu* int_K (p - Pi p)(q - Pi q), mu* = |K|^(1/3)
  on the reference configuration.
* ``mini``: bubble-enriched displacements with nodal pressure; interior dofs
  are statically condensed (see `condensation`), with the follower-load
  surface blocks kept separate because their interior test rows vanish.

Element kernels are batched over elements; `element_tangent_residual` wraps
them for a single element and partitions into exterior/interior blocks.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvertedElementError
from .materials import Kinematics
from .reference_elements import reference_element
from .tensors import EYE3

FORMULATION_KINDS = ("p0as", "p0was", "projection", "mini")


@dataclass(frozen=True)
class Formulation:
    """Discrete space selection: element family, pressure space, bubbles."""

    kind: str
    elem_kind: str

    def __post_init__(self):
        if self.kind not in FORMULATION_KINDS:
            raise ConfigurationError(f"unknown formulation {self.kind!r}")
        if self.elem_kind not in ("tet", "hex"):
            raise ConfigurationError(f"unknown element kind {self.elem_kind!r}")

    @property
    def mini(self):
        return self.kind == "mini"

    @property
    def penalty(self):
        return self.kind in ("p0as", "p0was")

    @property
    def nodal_pressure(self):
        return not self.penalty

    @property
    def stabilized(self):
        return self.kind == "projection"

    @property
    def bubble_count(self):
        return (1 if self.elem_kind == "tet" else 2) if self.mini else 0

    @property
    def reference(self):
        return reference_element(self.elem_kind, mini=self.mini)

    def check_material(self, material):
        split = "WAS" if self.kind == "p0was" else "AS"
        if material.split != split:
            raise ConfigurationError(
                f"formulation {self.kind!r} needs a material with split {split!r}, "
                f"got {material.split!r}"
            )
        if self.penalty and material.volumetric.inverse_kappa_zero:
            raise ConfigurationError(
                "penalty formulations require a finite bulk modulus (1/kappa > 0)"
            )


def _deformation(Xe, ue, dN_geom, dN_u, elem_ids=None):
    """Batched isoparametric geometry and deformation measures at qps.

    Returns (wgeom-less) detJ of the map, physical basis gradients G, and
    F = I + Grad u. Raises on non-invertible maps or inverted deformation.
    """
    Jm = np.einsum("eai,qaj->eqij", Xe, dN_geom)
    detJm = np.linalg.det(Jm)
    if np.any(detJm <= 0.0):
        e = int(np.argwhere(detJm <= 0.0)[0, 0])
        eid = e if elem_ids is None else int(elem_ids[e])
        raise InvertedElementError(eid, "isoparametric map not invertible")
    Jinv = np.linalg.inv(Jm)
    G = np.einsum("qaj,eqji->eqai", dN_u, Jinv)
    H = np.einsum("eai,eqaj->eqij", ue, G)
    F = H + EYE3
    detF = np.linalg.det(F)
    if np.any(detF <= 0.0):
        e = int(np.argwhere(detF <= 0.0)[0, 0])
        eid = e if elem_ids is None else int(elem_ids[e])
        raise InvertedElementError(eid, f"det F = {detF.min():.3g}")
    return detJm, G, F


def _sigma_operator(F, G):
    """Linearized-strain operators Sigma(u, phi_a e_i) = sym(F^T Grad phi),
    flattened to (e, q, nen*3, 9)."""
    T0 = np.einsum("eqik,eqal->eqaikl", F, G)
    Sig = 0.5 * (T0 + np.swapaxes(T0, -1, -2))
    e, q, a = Sig.shape[:3]
    return Sig.reshape(e, q, a * 3, 9)


class VolumeKernel:
    """Batched element tangent/residual for the volume terms."""

    def __init__(self, formulation, material, body_force=None):
        formulation.check_material(material)
        self.formulation = formulation
        self.material = material
        self.ref = formulation.reference
        self.N_p = self.ref.eval_p(self.ref.quad.points)[0]
        self.body_force = None if body_force is None or not np.any(body_force) else (
            np.asarray(body_force, dtype=float)
        )

    def __call__(self, Xe, ue, pe=None, active_scalar=0.0, frames=None, elem_ids=None):
        """Element blocks at the current state.

        Returns a dict with K (ne,n3,n3), and for nodal-pressure formulations
        B (ne,n3,np), D (ne,np,np), R_inc (ne,np); R_vol (ne,n3) always;
        `p_elem` holds the penalty pressures for p0 formulations; `detF` and
        `wdet` per quadrature point support incompressibility reporting.
        """
        ref = self.ref
        vol = self.material.volumetric
        nc, nu = Xe.shape[0], ref.nen_u
        detJm, G, F = _deformation(Xe, ue, ref.dN_geom, ref.dN_u, elem_ids)
        wdet = detJm * ref.quad.weights
        kin = Kinematics.from_F(F)
        fr = np.broadcast_to(frames[:, None], (nc, wdet.shape[1], 3, 3))
        state = self.material.evaluate(kin, fr, active_scalar=active_scalar)

        theta = vol.theta(kin.J)
        piJ = vol.pi(kin.J)
        volume = wdet.sum(axis=1)

        out = {"detF": kin.J, "wdet": wdet, "volume": volume}
        if self.formulation.penalty:
            p_elem = vol.kappa * np.einsum("eq,eq->e", wdet, theta) / volume
            p_qp = p_elem[:, None]
            out["p_elem"] = p_elem
        else:
            p_qp = np.einsum("qc,ec->eq", self.N_p, pe)

        S_tot = state.S_isc + p_qp[..., None, None] * state.S_vol_dir
        C_tot = state.C_isc + p_qp[..., None, None, None, None] * state.C_vol
        if state.active:
            S_tot = S_tot + state.S_a
            C_tot = C_tot + state.C_act

        nq = wdet.shape[1]
        Sig = _sigma_operator(F, G)
        SigT = np.ascontiguousarray(Sig.swapaxes(1, 2)).reshape(nc, nu * 3, nq * 9)
        Sw = (S_tot * wdet[:, :, None, None]).reshape(nc, nq * 9)
        R_vol = np.matmul(SigT, Sw[:, :, None])[:, :, 0]
        if self.body_force is not None:
            load = np.einsum("eq,qa->ea", wdet, self.ref.N_u)
            R_vol = R_vol - (load[:, :, None] * self.body_force).reshape(nc, nu * 3)
        out["R_vol"] = R_vol

        C2 = C_tot.reshape(nc, nq, 9, 9)
        TW = np.matmul(Sig, C2) * wdet[:, :, None, None]
        TWT = np.ascontiguousarray(TW.swapaxes(1, 2)).reshape(nc, nu * 3, nq * 9)
        K_mat = np.matmul(TWT, SigT.swapaxes(1, 2))
        GS = np.matmul(G, S_tot * wdet[:, :, None, None])       # (nc,nq,nu,3)
        GST = np.ascontiguousarray(GS.swapaxes(1, 2)).reshape(nc, nu, nq * 3)
        GT = np.ascontiguousarray(G.swapaxes(1, 2)).reshape(nc, nu, nq * 3)
        K_geo = np.matmul(GST, GT.swapaxes(1, 2))
        K = K_mat.reshape(nc, nu, 3, nu, 3).copy()
        K += K_geo[:, :, None, :, None] * EYE3[None, None, :, None, :]
        K = K.reshape(nc, nu * 3, nu * 3)

        # b_k(p, v) = int p pi(J) F^{-T} : Grad v
        FtG = np.einsum("eqli,eqal->eqai", np.linalg.inv(F), G)
        bvec = np.einsum("eqai,eq->eai", FtG, wdet * piJ).reshape(nc, nu * 3)

        if self.formulation.penalty:
            K += (vol.kappa / volume)[:, None, None] * np.einsum("ea,eb->eab", bvec, bvec)
            out["K"] = K
            return out

        out["K"] = K
        out["B"] = np.einsum("eqai,qc,eq->eaic", FtG, self.N_p, wdet * piJ, optimize=True).reshape(
            nc, nu * 3, -1
        )
        M_pp = np.einsum("qc,qd,eq->ecd", self.N_p, self.N_p, wdet, optimize=True)
        D = -vol.inv_kappa * M_pp
        R_inc = np.einsum("eq,qc->ec", wdet * theta, self.N_p) - vol.inv_kappa * np.einsum(
            "ecd,ed->ec", M_pp, pe
        )
        if self.formulation.stabilized:
            s_h = stabilization_matrix(M_pp, np.einsum("qc,eq->ec", self.N_p, wdet), volume)
            D = D - s_h
            R_inc = R_inc - np.einsum("ecd,ed->ec", s_h, pe)
        out["D"] = D
        out["R_inc"] = R_inc
        return out


def stabilization_matrix(M_pp, m_c, volume):
    """Projection-gap form 1/mu* int_K (p - mean p)(q - mean q), mu* = |K|^(1/3)."""
    mu_star = volume ** (1.0 / 3.0)
    return (M_pp - np.einsum("ec,ed->ecd", m_c, m_c) / volume[:, None, None]) / mu_star[
        :, None, None
    ]


def projection_stabilization(Xe, kind):
    """Stabilization matrices for elements with nodes `Xe` (ne, nen, 3)."""
    ref = reference_element(kind)
    Jm = np.einsum("eai,qaj->eqij", Xe, ref.dN_geom)
    detJm = np.linalg.det(Jm)
    if np.any(detJm <= 0.0):
        raise InvertedElementError(int(np.argwhere(detJm <= 0.0)[0, 0]))
    wdet = detJm * ref.quad.weights
    N_p = ref.eval_p(ref.quad.points)[0]
    M_pp = np.einsum("qc,qd,eq->ecd", N_p, N_p, wdet)
    m_c = np.einsum("qc,eq->ec", N_p, wdet)
    return stabilization_matrix(M_pp, m_c, wdet.sum(axis=1))


class FacetKernel:
    """Follower-pressure and cavity-surface integrals on boundary facets.

    All blocks are built per facet over the full parent-element basis; rows
    attached to basis functions with vanishing trace (bubbles, off-facet
    nodes) are exactly zero by construction.
    """

    def __init__(self, formulation):
        self.formulation = formulation
        self.ref = formulation.reference

    def _geometry(self, lf, Xe, ue):
        tab = self.ref.facets[lf]
        Xc = Xe[:, list(tab.corners)]
        t = np.einsum("fci,qcd->fqid", Xc, tab.dN_surf)
        NdA = np.cross(t[..., 0], t[..., 1])  # outward, per unit qp weight
        Jm = np.einsum("fai,qaj->fqij", Xe, tab.dN_geom)
        Jinv = np.linalg.inv(Jm)
        G = np.einsum("qaj,fqji->fqai", tab.dN_u, Jinv)
        H = np.einsum("fai,fqaj->fqij", ue, G)
        F = H + EYE3
        detF = np.linalg.det(F)
        if np.any(detF <= 0.0):
            raise InvertedElementError(-1, "inverted element on loaded facet")
        Finv = np.linalg.inv(F)
        FmTN = np.einsum("fqli,fql->fqi", Finv, NdA)          # F^{-T} N dA
        FtG = np.einsum("fqli,fqal->fqai", Finv, G)           # (F^{-T} Grad phi_a)_i
        w = tab.weights
        return tab, w, detF, FmTN, FtG, Xc

    def follower_blocks(self, lf, Xe, ue):
        """Unit-pressure residual vector and tangent block for one local facet.

        The returned `R_unit` is the residual contribution per unit external
        pressure (the same kernel provides the cavity-pressure column); the
        actual residual is p * R_unit and the tangent block p * K_unit.
        """
        tab, w, detF, FmTN, FtG, _ = self._geometry(lf, Xe, ue)
        nf, nu = Xe.shape[0], self.ref.nen_u
        wJ = w * detF
        R_unit = np.einsum("fq,qb,fqi->fbi", wJ, tab.N_u, FmTN).reshape(nf, nu * 3)
        T1 = np.einsum("fq,qb,fqi,fqaj->fbiaj", wJ, tab.N_u, FmTN, FtG, optimize=True)
        T2 = np.einsum("fq,qb,fqai,fqj->fbiaj", wJ, tab.N_u, FtG, FmTN, optimize=True)
        K_unit = (T1 - T2).reshape(nf, nu * 3, nu * 3)
        return R_unit, K_unit

    def cavity_flux(self, lf, Xe, ue):
        """Per-facet flux (1/3) int J (X+u) . F^{-T} N dA (signed by stored normals)."""
        tab, w, detF, FmTN, _, _ = self._geometry(lf, Xe, ue)
        xq = np.einsum("qa,fai->fqi", tab.N_geom, Xe) + np.einsum("qa,fai->fqi", tab.N_u, ue)
        return np.einsum("fq,fqi,fqi->f", w * detF, xq, FmTN) / 3.0

    def cavity_flux_rows(self, lf, Xe, ue):
        """Per-facet flux plus its linearization row over the parent basis."""
        tab, w, detF, FmTN, FtG, _ = self._geometry(lf, Xe, ue)
        nf, nu = Xe.shape[0], self.ref.nen_u
        xq = np.einsum("qa,fai->fqi", tab.N_geom, Xe) + np.einsum("qa,fai->fqi", tab.N_u, ue)
        wJ = w * detF
        xdotN = np.einsum("fqi,fqi->fq", xq, FmTN)
        flux = np.einsum("fq,fq->f", wJ, xdotN) / 3.0
        term1 = np.einsum("fq,fqai->fai", wJ * xdotN, FtG)
        term2 = np.einsum("fq,fqa,fqi->fai", wJ, np.einsum("fqm,fqam->fqa", xq, FtG), FmTN,
                          optimize=True)
        term3 = np.einsum("fq,qa,fqi->fai", wJ, tab.N_u, FmTN)
        rows = ((term1 - term2 + term3) / 3.0).reshape(nf, nu * 3)
        return flux, rows


@dataclass
class ElementBlocks:
    """Exterior/interior partitioned blocks of one element, Newton-linearized.

    Displacement dofs are ordered node-major (3 per basis function); exterior
    dofs are the corner-node block, interior dofs the bubble block. Follower
    (Gamma) blocks carry rows only on exterior dofs.
    """

    K_EE: np.ndarray
    K_EI: np.ndarray
    K_IE: np.ndarray
    K_II: np.ndarray
    K_gam_EE: np.ndarray
    K_gam_EI: np.ndarray
    B_E: np.ndarray
    B_I: np.ndarray
    C_E: np.ndarray
    C_I: np.ndarray
    D_E: np.ndarray
    R_vol_E: np.ndarray
    R_vol_I: np.ndarray
    R_gam_E: np.ndarray
    R_inc_E: np.ndarray
    F_cav_E: np.ndarray = None
    F_cav_I: np.ndarray = None
    E_cav_E: np.ndarray = None
    R_cav: float = 0.0


def element_tangent_residual(
    formulation,
    material,
    Xe,
    ue,
    pe=None,
    frames=None,
    active_scalar=0.0,
    follower=(),
    cavity=(),
):
    """Full Newton blocks for a single element (spec-level convenience).

    `follower` lists (local facet id, pressure); `cavity` lists local facet
    ids contributing flux rows (with the unit-pressure column).
    """
    Xe = np.asarray(Xe, dtype=float)[None]
    ne3 = formulation.reference.nen_geom * 3
    nu3 = formulation.reference.nen_u * 3
    ue_full = np.zeros((1, formulation.reference.nen_u, 3))
    ue_full[0, : np.asarray(ue).shape[0]] = ue
    if frames is None:
        frames = np.eye(3)
    frames = np.asarray(frames, dtype=float)[None]
    kernel = VolumeKernel(formulation, material)
    pe_arr = None if pe is None else np.atleast_2d(np.asarray(pe, dtype=float))
    out = kernel(Xe, ue_full, pe_arr, active_scalar=active_scalar, frames=frames)

    K = out["K"][0]
    np_ = 0 if formulation.penalty else pe_arr.shape[1]
    B = out.get("B", np.zeros((1, nu3, np_)))[0]
    D = out.get("D", np.zeros((1, np_, np_)))[0]
    R_vol = out["R_vol"][0]
    R_inc = out.get("R_inc", np.zeros((1, np_)))[0]

    fk = FacetKernel(formulation)
    K_gam = np.zeros((nu3, nu3))
    R_gam = np.zeros(nu3)
    for lf, p in follower:
        R_unit, K_unit = fk.follower_blocks(lf, Xe, ue_full)
        R_gam += p * R_unit[0]
        K_gam += p * K_unit[0]
    F_cav = np.zeros(nu3)
    E_cav = np.zeros(nu3)
    R_cav = 0.0
    for lf in cavity:
        flux, rows = fk.cavity_flux_rows(lf, Xe, ue_full)
        R_cav += flux[0]
        F_cav += rows[0]
        E_cav += fk.follower_blocks(lf, Xe, ue_full)[0][0]

    E, I = slice(0, ne3), slice(ne3, nu3)
    return ElementBlocks(
        K_EE=K[E, E],
        K_EI=K[E, I],
        K_IE=K[I, E],
        K_II=K[I, I],
        K_gam_EE=K_gam[E, E],
        K_gam_EI=K_gam[E, I],
        B_E=B[E],
        B_I=B[I],
        C_E=B[E].T.copy(),
        C_I=B[I].T.copy(),
        D_E=D,
        R_vol_E=R_vol[E],
        R_vol_I=R_vol[I],
        R_gam_E=R_gam[E],
        R_inc_E=R_inc,
        F_cav_E=F_cav[E],
        F_cav_I=F_cav[I],
        E_cav_E=E_cav[E],
        R_cav=R_cav,
    )
