"""Global residual/Jacobian assembly: displacement-pressure blocks, follower
surface terms, Dirichlet elimination, and cavity rows/columns.

The assembled operator acts on the solved vector [u_free, p, p_cav]. States
carry Dirichlet values directly (value lifting), so Newton increments vanish
on constrained dofs and their rows/columns are simply dropped. The sparsity
pattern of the volume blocks is preallocated once per run; element blocks are
evaluated in bounded-memory chunks and written into it in a fixed order, so
repeated assemblies of one state are bitwise identical.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .condensation import condense_batch
from .errors import ConfigurationError, TopologyError
from .formulations import FacetKernel, Formulation, VolumeKernel

_CHUNK_BYTES = 4.0e7


@dataclass
class State:
    """Primal fields: nodal displacement, bubble coefficients, pressures."""

    u: np.ndarray                  # (nn,3)
    u_bub: np.ndarray = None       # (ne,nbub,3) for MINI
    p: np.ndarray = None           # (nn,) nodal pressure
    p_cav: np.ndarray = None       # (ncav,)

    @classmethod
    def zeros(cls, mesh, formulation, n_cav=0):
        nbub = formulation.bubble_count
        return cls(
            u=np.zeros((mesh.num_nodes, 3)),
            u_bub=np.zeros((mesh.num_elements, nbub, 3)) if nbub else None,
            p=np.zeros(mesh.num_nodes) if formulation.nodal_pressure else None,
            p_cav=np.zeros(n_cav),
        )

    def copy(self):
        return State(
            u=self.u.copy(),
            u_bub=None if self.u_bub is None else self.u_bub.copy(),
            p=None if self.p is None else self.p.copy(),
            p_cav=None if self.p_cav is None else self.p_cav.copy(),
        )


@dataclass(frozen=True)
class LinearCompliance:
    """0D pressure-volume relation V_CS(p) = V0 + C p (C in mm^3/kPa).

    C = 0 turns the coupling into a constant-volume constraint.
    """

    V0: float
    C: float = 0.0

    def volume(self, p):
        return self.V0 + self.C * p

    def derivative(self, p):
        return self.C


def compliance_row(compliance, p_cav, V_cav):
    """Cavity row pieces: e_k = dV_CS/dp, G = -e_k, R_cav = V_cav - V_CS."""
    e_k = float(compliance.derivative(p_cav))
    if not np.isfinite(e_k):
        raise ConfigurationError("compliance derivative is not finite")
    return e_k, -e_k, float(V_cav - compliance.volume(p_cav))


def surface_edges(mesh, facets):
    corners = mesh.facet_corner_nodes(facets)
    nc = corners.shape[1]
    edges = np.concatenate(
        [np.stack([corners[:, i], corners[:, (i + 1) % nc]], axis=1) for i in range(nc)]
    )
    return np.sort(edges, axis=1)


def surface_is_closed(mesh, facets):
    """True when every edge of the facet patch is shared by exactly two facets."""
    edges = surface_edges(mesh, facets)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def cavity_volume(mesh, facets, u=None):
    """Signed flux volume (1/3) oint J (X+u).F^{-T} N dA with stored normals.

    Positive when the facet normals point out of the enclosed region (e.g. a
    solid's own boundary); negative over a hollow-cavity surface whose
    normals point out of the solid.
    """
    fk = FacetKernel(Formulation("projection", mesh.kind))
    if u is None:
        u = np.zeros((mesh.num_nodes, 3))
    total = 0.0
    for lf in np.unique(facets[:, 1]):
        rows = facets[facets[:, 1] == lf]
        conn = mesh.elements[rows[:, 0]]
        total += fk.cavity_flux(lf, mesh.nodes[conn], u[conn]).sum()
    return float(total)


def cavity_volume_linearization(mesh, facets, u, du):
    """Directional derivative of `cavity_volume` in direction `du` (nodal)."""
    fk = FacetKernel(Formulation("projection", mesh.kind))
    total = 0.0
    for lf in np.unique(facets[:, 1]):
        rows = facets[facets[:, 1] == lf]
        conn = mesh.elements[rows[:, 0]]
        _, drows = fk.cavity_flux_rows(lf, mesh.nodes[conn], u[conn])
        total += np.einsum("fk,fk->", drows, du[conn].reshape(len(rows), -1))
    return float(total)


class CavityConstraint:
    """Closed (or explicitly open) cavity surface coupled to a 0D compliance.

    The orientation sign is fixed once from the reference flux so the cavity
    volume comes out positive regardless of whether the stored facet normals
    point into or out of the enclosed region.
    """

    def __init__(self, facet_set, compliance, allow_open=False):
        self.facet_set = facet_set
        self.compliance = compliance
        self.allow_open = allow_open
        self.orientation = 1.0

    def attach(self, mesh):
        facets = mesh.facet_sets[self.facet_set]
        if not surface_is_closed(mesh, facets) and not self.allow_open:
            raise TopologyError(
                f"cavity surface {self.facet_set!r} is not closed; pass "
                "allow_open=True to use the raw flux functional"
            )
        flux0 = cavity_volume(mesh, facets)
        self.orientation = -1.0 if flux0 < 0.0 else 1.0
        return self


@dataclass(frozen=True)
class DofMap:
    """Global numbering over [u (all nodes), bubbles?, p, p_cav]."""

    n_u: int
    n_u_total: int          # includes bubble dofs only in keep_interior mode
    n_p: int
    n_cav: int
    constrained: np.ndarray
    free_u: np.ndarray
    solved_idx: np.ndarray

    @property
    def n_solved(self):
        return self.solved_idx.size

    @property
    def n_u_solved(self):
        return self.n_u_total - self.constrained.size

    @property
    def slice_u(self):
        return slice(0, self.n_u_solved)

    @property
    def slice_p(self):
        return slice(self.n_u_solved, self.n_u_solved + self.n_p)

    @property
    def slice_cav(self):
        return slice(self.n_u_solved + self.n_p, self.n_solved)


@dataclass
class AssembledSystem:
    """Block sparse operator and residual over the solved dof set."""

    A: sp.csr_matrix
    R: np.ndarray
    dof: DofMap
    condensation: dict = None
    p_elem: np.ndarray = None     # penalty pressures (P0 formulations)
    cavity_volumes: np.ndarray = None

    @property
    def rhs(self):
        return -self.R

    def block(self, row, col):
        sl = {"u": self.dof.slice_u, "p": self.dof.slice_p, "cav": self.dof.slice_cav}
        return self.A[sl[row], :][:, sl[col]]

    def save_matrix_market(self, path):
        from scipy.io import mmwrite

        mmwrite(str(path), self.A)


class Assembler:
    """Reusable assembler for one (mesh, formulation, material) triple."""

    def __init__(
        self,
        mesh,
        formulation,
        material,
        constrained_dofs=None,
        cavities=(),
        keep_interior=False,
        body_force=None,
    ):
        formulation.check_material(material)
        if mesh.kind != formulation.elem_kind:
            raise ConfigurationError(
                f"mesh kind {mesh.kind!r} does not match formulation "
                f"element kind {formulation.elem_kind!r}"
            )
        self.mesh = mesh
        self.formulation = formulation
        self.material = material
        self.ref = formulation.reference
        self.volume_kernel = VolumeKernel(formulation, material, body_force=body_force)
        self.facet_kernel = FacetKernel(formulation)
        self.keep_interior = keep_interior
        self.cavities = [c.attach(mesh) for c in cavities]

        nn, ne = mesh.num_nodes, mesh.num_elements
        nbub = formulation.bubble_count
        self.n_u = 3 * nn
        n_u_total = self.n_u + (3 * nbub * ne if (keep_interior and nbub) else 0)
        self.frames = (
            mesh.fiber_frames
            if mesh.fiber_frames is not None
            else np.tile(np.eye(3), (ne, 1, 1))
        )

        base_dofs = (3 * mesh.elements[:, :, None] + np.arange(3)).reshape(ne, -1)
        if keep_interior and nbub:
            bub = (
                self.n_u
                + 3 * nbub * np.arange(ne)[:, None, None]
                + (3 * np.arange(nbub)[None, :, None] + np.arange(3))
            ).reshape(ne, -1)
            self.edofs_u = np.concatenate([base_dofs, bub], axis=1)
        else:
            self.edofs_u = base_dofs
        self.edofs_u = self.edofs_u.astype(np.int64)

        self.n_p = nn if formulation.nodal_pressure else 0
        self.p_offset = n_u_total
        self.edofs_p = (
            (mesh.elements + self.p_offset).astype(np.int64)
            if formulation.nodal_pressure
            else None
        )
        self.n_cav = len(self.cavities)
        self.cav_offset = n_u_total + self.n_p
        self.n_total = n_u_total + self.n_p + self.n_cav

        if constrained_dofs is None:
            constrained_dofs = []
        constrained = np.unique(np.asarray(constrained_dofs, dtype=np.int64))
        if constrained.size and (constrained.min() < 0 or constrained.max() >= self.n_u):
            raise ConfigurationError("constrained dof index out of range")
        mask = np.ones(n_u_total, dtype=bool)
        mask[constrained] = False
        free_u = np.flatnonzero(mask)
        solved = np.concatenate(
            [
                free_u,
                self.p_offset + np.arange(self.n_p),
                self.cav_offset + np.arange(self.n_cav),
            ]
        )
        self.dof = DofMap(
            n_u=self.n_u,
            n_u_total=n_u_total,
            n_p=self.n_p,
            n_cav=self.n_cav,
            constrained=constrained,
            free_u=free_u,
            solved_idx=solved,
        )

        self.condense = formulation.mini and not keep_interior
        self.nE3 = 3 * self.ref.nen_geom
        self.nu3 = 3 * self.ref.nen_u
        self.du = self.nE3 if self.condense else self.nu3

        nq = self.ref.quad.weights.size
        per_elem = nq * (81 + self.nu3 * 9 * 2) * 8
        self.chunk = int(np.clip(_CHUNK_BYTES // per_elem, 128, 16384))

        self._build_pattern()

    def _build_pattern(self):
        """Static COO pattern for the volume blocks, in fixed block order."""
        ne = self.mesh.num_elements
        du = self.du
        ud = self.edofs_u[:, :du]
        segs = [(ud, ud)]
        if self.formulation.nodal_pressure:
            segs += [(ud, self.edofs_p), (self.edofs_p, ud), (self.edofs_p, self.edofs_p)]
        rows, cols, sizes = [], [], []
        for r, c in segs:
            nr, nc = r.shape[1], c.shape[1]
            rows.append(np.broadcast_to(r[:, :, None], (ne, nr, nc)).ravel())
            cols.append(np.broadcast_to(c[:, None, :], (ne, nr, nc)).ravel())
            sizes.append(ne * nr * nc)
        self._pat_rows = np.concatenate(rows).astype(np.int32)
        self._pat_cols = np.concatenate(cols).astype(np.int32)
        self._pat_sizes = sizes

    def _facet_groups(self, facets):
        return [
            (int(lf), facets[facets[:, 1] == lf][:, 0])
            for lf in np.unique(facets[:, 1])
        ]

    def gather_u(self, state):
        ue = state.u[self.mesh.elements]
        if self.formulation.bubble_count:
            ue = np.concatenate([ue, state.u_bub], axis=1)
        return ue

    def cavity_volumes(self, state):
        """Oriented cavity volumes at the current state."""
        ue = self.gather_u(state)
        vols = np.zeros(self.n_cav)
        for ic, cav in enumerate(self.cavities):
            facets = self.mesh.facet_sets[cav.facet_set]
            total = 0.0
            for lf, elems in self._facet_groups(facets):
                Xe = self.mesh.nodes[self.mesh.elements[elems]]
                total += self.facet_kernel.cavity_flux(lf, Xe, ue[elems]).sum()
            vols[ic] = cav.orientation * total
        return vols

    def assemble(self, state, followers=(), active_scalar=0.0):
        """Assemble tangent and residual at `state`.

        `followers` is a sequence of (facet_set_name, pressure) external
        follower loads; cavity surfaces attached at construction contribute
        their load, row, and column terms at the current cavity pressures.
        """
        mesh = self.mesh
        ne = mesh.num_elements
        nE3, nu3, du = self.nE3, self.nu3, self.du
        nodal_p = self.formulation.nodal_pressure
        ue = self.gather_u(state)
        pe = state.p[mesh.elements] if nodal_p else None

        vals = np.zeros(sum(self._pat_sizes))
        offs = np.cumsum([0] + self._pat_sizes)
        vK = vals[offs[0] : offs[1]].reshape(ne, du, du)
        if nodal_p:
            npe = self.ref.nen_geom
            vB = vals[offs[1] : offs[2]].reshape(ne, du, npe)
            vC = vals[offs[2] : offs[3]].reshape(ne, npe, du)
            vD = vals[offs[3] : offs[4]].reshape(ne, npe, npe)

        R_full = np.zeros(self.n_total)
        p_elem = np.empty(ne) if self.formulation.penalty else None
        cond_cache = (
            {
                "Kii_inv": np.empty((ne, nu3 - nE3, nu3 - nE3)),
                "K_IE": np.empty((ne, nu3 - nE3, nE3)),
                "B_I": np.empty((ne, nu3 - nE3, self.ref.nen_geom)),
                "R_I": np.empty((ne, nu3 - nE3)),
            }
            if self.condense
            else None
        )

        for lo in range(0, ne, self.chunk):
            hi = min(lo + self.chunk, ne)
            ids = np.arange(lo, hi)
            out = self.volume_kernel(
                mesh.nodes[mesh.elements[lo:hi]],
                ue[lo:hi],
                None if pe is None else pe[lo:hi],
                active_scalar=active_scalar,
                frames=self.frames[lo:hi],
                elem_ids=ids,
            )
            if self.condense:
                cond = condense_batch(
                    out["K"], out["B"], out["R_vol"], out["R_inc"], out["D"],
                    nE3, elem_ids=ids,
                )
                vK[lo:hi] = cond.K
                vB[lo:hi] = cond.B
                vC[lo:hi] = cond.C
                vD[lo:hi] = cond.D
                np.add.at(R_full, self.edofs_u[lo:hi].ravel(), cond.R_vol.ravel())
                np.add.at(R_full, self.edofs_p[lo:hi].ravel(), cond.R_inc.ravel())
                for key, src in (
                    ("Kii_inv", cond.Kii_inv),
                    ("K_IE", cond.K_IE),
                    ("B_I", cond.B_I),
                    ("R_I", cond.R_vol_I),
                ):
                    cond_cache[key][lo:hi] = src
            else:
                vK[lo:hi] = out["K"]
                np.add.at(R_full, self.edofs_u[lo:hi].ravel(), out["R_vol"].ravel())
                if nodal_p:
                    vB[lo:hi] = out["B"]
                    vC[lo:hi] = np.swapaxes(out["B"], 1, 2)
                    vD[lo:hi] = out["D"]
                    np.add.at(R_full, self.edofs_p[lo:hi].ravel(), out["R_inc"].ravel())
            if self.formulation.penalty:
                p_elem[lo:hi] = out["p_elem"]

        # --- follower loads and cavity surface terms -----------------------
        load_groups = []
        for name, pressure in followers:
            if pressure == 0.0:
                continue
            for lf, elems in self._facet_groups(mesh.facet_sets[name]):
                load_groups.append((lf, elems, float(pressure), None))
        for ic, cav in enumerate(self.cavities):
            for lf, elems in self._facet_groups(mesh.facet_sets[cav.facet_set]):
                load_groups.append((lf, elems, float(state.p_cav[ic]), ic))

        surf_elems = (
            np.unique(np.concatenate([g[1] for g in load_groups]))
            if load_groups
            else np.empty(0, dtype=np.int64)
        )
        ns = surf_elems.size
        slot_of = np.full(ne, -1, dtype=np.int64)
        slot_of[surf_elems] = np.arange(ns)
        K_gam = np.zeros((ns, nu3, nu3))
        R_gam = np.zeros((ns, nu3))
        E_cols = np.zeros((self.n_cav, ns, nu3))
        F_rows = np.zeros((self.n_cav, ns, nu3))
        cav_flux = np.zeros(self.n_cav)

        for lf, elems, pressure, ic in load_groups:
            Xe = mesh.nodes[mesh.elements[elems]]
            R_unit, K_unit = self.facet_kernel.follower_blocks(lf, Xe, ue[elems])
            slots = slot_of[elems]
            if pressure != 0.0:
                np.add.at(R_gam, slots, pressure * R_unit)
                np.add.at(K_gam, slots, pressure * K_unit)
            if ic is not None:
                np.add.at(E_cols[ic], slots, R_unit)
                flux, rows = self.facet_kernel.cavity_flux_rows(lf, Xe, ue[elems])
                sgn = self.cavities[ic].orientation
                cav_flux[ic] += sgn * flux.sum()
                np.add.at(F_rows[ic], slots, sgn * rows)

        G_cav = np.zeros(self.n_cav)
        R_cav = np.zeros(self.n_cav)
        for ic, cav in enumerate(self.cavities):
            _, G_cav[ic], R_cav[ic] = compliance_row(
                cav.compliance, float(state.p_cav[ic]), cav_flux[ic]
            )

        dyn_rows, dyn_cols, dyn_vals = [], [], []

        def add_dyn(rdofs, cdofs, blocks):
            shape = blocks.shape
            dyn_rows.append(np.broadcast_to(rdofs[:, :, None], shape).ravel())
            dyn_cols.append(np.broadcast_to(cdofs[:, None, :], shape).ravel())
            dyn_vals.append(blocks.ravel())

        if ns:
            sd_u = self.edofs_u[surf_elems]
            if self.condense:
                sd_p = self.edofs_p[surf_elems]
                Kii_s = cond_cache["Kii_inv"][surf_elems]
                Y_s = Kii_s @ cond_cache["K_IE"][surf_elems]
                Z_s = Kii_s @ cond_cache["B_I"][surf_elems]
                r_s = np.einsum("eij,ej->ei", Kii_s, cond_cache["R_I"][surf_elems])
                Kg_EE, Kg_EI = K_gam[:, :nE3, :nE3], K_gam[:, :nE3, nE3:]
                add_dyn(sd_u, sd_u, Kg_EE - Kg_EI @ Y_s)
                add_dyn(sd_u, sd_p, -(Kg_EI @ Z_s))
                Rg_t = R_gam[:, :nE3] - np.einsum("eik,ek->ei", Kg_EI, r_s)
                np.add.at(R_full, sd_u.ravel(), Rg_t.ravel())
                for ic in range(self.n_cav):
                    Fc_E, Fc_I = F_rows[ic][:, :nE3], F_rows[ic][:, nE3:]
                    Ft = Fc_E - np.einsum("ej,ejk->ek", Fc_I, Y_s)
                    Ht = -np.einsum("ej,ejc->ec", Fc_I, Z_s)
                    R_cav[ic] -= np.einsum("ej,ej->", Fc_I, r_s)
                    cdofs = np.full((ns, 1), self.cav_offset + ic, dtype=np.int64)
                    add_dyn(cdofs, sd_u, Ft[:, None, :])
                    add_dyn(cdofs, sd_p, Ht[:, None, :])
                    add_dyn(sd_u, cdofs, E_cols[ic][:, :nE3, None])
            else:
                add_dyn(sd_u, sd_u, K_gam)
                np.add.at(R_full, sd_u.ravel(), R_gam.ravel())
                for ic in range(self.n_cav):
                    cdofs = np.full((ns, 1), self.cav_offset + ic, dtype=np.int64)
                    add_dyn(sd_u, cdofs, E_cols[ic][:, :, None])
                    add_dyn(cdofs, sd_u, F_rows[ic][:, None, :])

        for ic in range(self.n_cav):
            cd = self.cav_offset + ic
            dyn_rows.append(np.array([cd]))
            dyn_cols.append(np.array([cd]))
            dyn_vals.append(np.array([G_cav[ic]]))
            R_full[cd] = R_cav[ic]

        rows = np.concatenate([self._pat_rows] + [r.astype(np.int32) for r in dyn_rows])
        cols = np.concatenate([self._pat_cols] + [c.astype(np.int32) for c in dyn_cols])
        allvals = np.concatenate([vals] + dyn_vals)
        A = sp.coo_matrix((allvals, (rows, cols)), shape=(self.n_total, self.n_total))
        A = A.tocsr()
        idx = self.dof.solved_idx
        A_solved = A[idx, :][:, idx]
        return AssembledSystem(
            A=A_solved,
            R=R_full[idx],
            dof=self.dof,
            condensation=cond_cache,
            p_elem=p_elem,
            cavity_volumes=cav_flux.copy(),
        )

    def apply_update(self, state, system, delta):
        """Scatter a solved-dof increment into the state, back-substituting
        bubble increments for condensed MINI systems."""
        full = np.zeros(self.n_total)
        full[self.dof.solved_idx] = delta
        du = full[: self.n_u].reshape(-1, 3)
        state.u += du
        dp = None
        if self.formulation.nodal_pressure:
            dp = full[self.p_offset : self.p_offset + self.n_p]
            state.p += dp
        if self.n_cav:
            state.p_cav += full[self.cav_offset : self.cav_offset + self.n_cav]
        if self.formulation.bubble_count:
            if self.keep_interior:
                dbub = full[self.n_u : self.n_u + state.u_bub.size]
                state.u_bub += dbub.reshape(state.u_bub.shape)
            else:
                cond = system.condensation
                du_E = du[self.mesh.elements].reshape(self.mesh.num_elements, -1)
                rhs = cond["R_I"] + np.einsum("eij,ej->ei", cond["K_IE"], du_E)
                if dp is not None:
                    rhs = rhs + np.einsum("eic,ec->ei", cond["B_I"], dp[self.mesh.elements])
                du_I = -np.einsum("eij,ej->ei", cond["Kii_inv"], rhs)
                state.u_bub += du_I.reshape(state.u_bub.shape)
        return state
