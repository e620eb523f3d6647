"""Benchmark drivers: artery tube and ventricle ellipsoid, plus field
recovery (Cauchy stress, Jacobian statistics), probes, and the
checkerboard diagnostic.

Stress fields are element-wise at quadrature points and reported unsmoothed
(volume-weighted element means); probe stresses are the value of the element
containing the probe, ties broken toward the lowest element id.
"""

from dataclasses import dataclass, field

import numpy as np

from .assembly import Assembler, State
from .errors import ConfigurationError
from .formulations import Formulation
from .loadcases import ellipsoid_load_case, tube_load_case
from .materials import (
    GenericFung,
    Guccione,
    HolzapfelOgden,
    Kinematics,
    VolumetricLaw,
)
from .mesh_generators import (
    ELLIPSOID_BASE_Z,
    ELLIPSOID_ENDO,
    ELLIPSOID_EPI,
    TUBE_HEIGHT,
    TUBE_INNER_RADIUS,
    TUBE_OUTER_RADIUS,
    make_ellipsoid_mesh,
    make_tube_mesh,
    _ellipsoid_axes,
    _ellipsoid_point,
)
from .solver import NewtonConfig, newton_load_stepping

# Probe locations of the tube benchmark: mid-height points on the inner (A)
# and outer (B) walls; the reference publication shows them only graphically.
PROBE_A = np.array([TUBE_INNER_RADIUS, 0.0, TUBE_HEIGHT / 2.0])
PROBE_B = np.array([TUBE_OUTER_RADIUS, 0.0, TUBE_HEIGHT / 2.0])

# Driver default: uniform prescribed active tension ramped to this value.
ACTIVE_TENSION_KPA = 60.0


@dataclass
class FieldSnapshot:
    """Element fields at a converged state."""

    detF: np.ndarray               # element volume-weighted mean det F
    sigma: np.ndarray              # element Cauchy stress (ne,3,3), kPa
    pressure_elem: np.ndarray      # element pressure (penalty p or mean nodal p)
    volumes: np.ndarray            # element reference volumes

    @property
    def mean_detF(self):
        return float(np.average(self.detF, weights=self.volumes))

    def principal_stress(self):
        return np.linalg.eigvalsh(self.sigma)[:, ::-1]


def state_fields(assembler, state, followers=(), active_scalar=0.0):
    """Recover unsmoothed element fields from a (converged) state."""
    mesh = assembler.mesh
    ref = assembler.ref
    ne = mesh.num_elements
    ue = assembler.gather_u(state)
    pe = state.p[mesh.elements] if assembler.formulation.nodal_pressure else None
    detF = np.empty(ne)
    sigma = np.empty((ne, 3, 3))
    p_out = np.empty(ne)
    volumes = np.empty(ne)
    vk = assembler.volume_kernel
    for lo in range(0, ne, assembler.chunk):
        hi = min(lo + assembler.chunk, ne)
        Xe = mesh.nodes[mesh.elements[lo:hi]]
        out = vk(
            Xe,
            ue[lo:hi],
            None if pe is None else pe[lo:hi],
            active_scalar=active_scalar,
            frames=assembler.frames[lo:hi],
            elem_ids=np.arange(lo, hi),
        )
        w = out["wdet"]
        volumes[lo:hi] = out["volume"]
        detF[lo:hi] = (out["detF"] * w).sum(axis=1) / out["volume"]
        # rebuild qp stresses to form Cauchy stress
        from .formulations import _deformation

        _, G, F = _deformation(Xe, ue[lo:hi], ref.dN_geom, ref.dN_u)
        kin = Kinematics.from_F(F)
        fr = np.broadcast_to(
            assembler.frames[lo:hi, None], (hi - lo, w.shape[1], 3, 3)
        )
        st = assembler.material.evaluate(kin, fr, active_scalar=active_scalar)
        if assembler.formulation.penalty:
            p_qp = out["p_elem"][:, None]
            p_out[lo:hi] = out["p_elem"]
        else:
            p_qp = np.einsum("qc,ec->eq", vk.N_p, pe[lo:hi])
            p_out[lo:hi] = (p_qp * w).sum(axis=1) / out["volume"]
        S = st.S_isc + p_qp[..., None, None] * st.S_vol_dir
        if st.active:
            S = S + st.S_a
        cauchy = np.einsum(
            "eqik,eqkl,eqjl->eqij", F, S, F, optimize=True
        ) / kin.J[..., None, None]
        sigma[lo:hi] = np.einsum("eqij,eq->eij", cauchy, w) / out["volume"][:, None, None]
    return FieldSnapshot(detF=detF, sigma=sigma, pressure_elem=p_out, volumes=volumes)


def cylindrical_components(sigma, centroids):
    """sigma_rr, sigma_tt, sigma_zz from Cartesian tensors at given points."""
    theta = np.arctan2(centroids[:, 1], centroids[:, 0])
    e_r = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=1)
    e_t = np.stack([-np.sin(theta), np.cos(theta), np.zeros_like(theta)], axis=1)
    e_z = np.zeros_like(e_r)
    e_z[:, 2] = 1.0
    srr = np.einsum("ei,eij,ej->e", e_r, sigma, e_r)
    stt = np.einsum("ei,eij,ej->e", e_t, sigma, e_t)
    szz = np.einsum("ei,eij,ej->e", e_z, sigma, e_z)
    return srr, stt, szz


def element_centroids(mesh):
    return mesh.element_coords().mean(axis=1)


def element_adjacency(mesh):
    """Facet-sharing element neighbors as an index list per element."""
    ref = mesh.reference
    nloc = len(ref.facet_corner_ids)
    ne = mesh.num_elements
    elems = np.repeat(np.arange(ne), nloc)
    locs = np.tile(np.arange(nloc), ne)
    corners = mesh.facet_corner_nodes(np.column_stack([elems, locs]))
    keys = np.sort(corners, axis=1)
    order = np.lexsort(keys.T[::-1])
    keys_sorted = keys[order]
    elems_sorted = elems[order]
    same = np.all(keys_sorted[1:] == keys_sorted[:-1], axis=1)
    pairs = np.column_stack([elems_sorted[:-1][same], elems_sorted[1:][same]])
    neighbors = [[] for _ in range(ne)]
    for a, b in pairs:
        neighbors[a].append(b)
        neighbors[b].append(a)
    return neighbors


def node_adjacency(mesh):
    """Edge-connected node neighbors (from element connectivity)."""
    conn = mesh.elements
    nen = conn.shape[1]
    pairs = set()
    for i in range(nen):
        for j in range(i + 1, nen):
            pairs.update(map(tuple, np.sort(conn[:, [i, j]], axis=1)))
    neighbors = [[] for _ in range(mesh.num_nodes)]
    for a, b in pairs:
        neighbors[a].append(b)
        neighbors[b].append(a)
    return neighbors


def checkerboard_metric(values, mesh, kind="element"):
    """High-frequency energy ratio ||f - ring_avg(f)|| / ||f||.

    `kind` selects facet-sharing element adjacency or edge node adjacency.
    A constant field scores 0; an alternating pattern scores near 2.
    """
    values = np.asarray(values, dtype=float)
    if kind == "element":
        neighbors = element_adjacency(mesh)
    elif kind == "nodal":
        neighbors = node_adjacency(mesh)
    else:
        raise ConfigurationError(f"unknown checkerboard field kind {kind!r}")
    avg = np.array([values[n].mean() if n else values[i] for i, n in enumerate(neighbors)])
    denom = np.linalg.norm(values)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(values - avg) / denom)


def artery_material(formulation_kind, kappa=5000.0, mu=10.0, k1=500.0, k2=2.0):
    split = "WAS" if formulation_kind == "p0was" else "AS"
    vol = VolumetricLaw(
        "J-1", kappa=kappa,
        inverse_kappa_zero=formulation_kind in ("projection", "mini"),
    )
    return GenericFung(mu=mu, k1=k1, k2=k2, split=split, volumetric=vol)


def ellipsoid_material(formulation_kind, law="guccione", kappa=1000.0):
    incomp = formulation_kind in ("projection", "mini")
    vol = VolumetricLaw("lnJ", kappa=kappa, inverse_kappa_zero=incomp)
    if law == "guccione":
        if formulation_kind == "p0was":
            raise ConfigurationError("the Guccione law has no unsplit-anisotropy form")
        return Guccione(volumetric=vol)
    if law == "holzapfelogden":
        split = "WAS" if formulation_kind == "p0was" else "AS"
        return HolzapfelOgden(split=split, volumetric=vol)
    raise ConfigurationError(f"unknown ellipsoid law {law!r}")


@dataclass
class BenchmarkReport:
    name: str
    level: int
    formulation: str
    elem_kind: str
    solve: object
    fields: FieldSnapshot
    probes: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    mesh: object = None
    state: object = None
    assembler: object = None


def _probe_displacement(mesh, state, point):
    elem, xi = mesh.locate(point)
    N, _ = mesh.reference.eval_geom(np.atleast_2d(xi))
    return N[0] @ state.u[mesh.elements[elem]]


def _probe_element(mesh, point):
    elem, _ = mesh.locate(point)
    return elem


def run_artery(level, formulation_kind, elem_kind, newton=None, steps=None,
               mesh=None, material=None, pressure_kpa=None):
    """Extension-inflation-torsion of the thick-walled tube.

    Emits displacement and cylindrical stress components at the wall probes
    A (inner) and B (outer), the det F distribution, and the pressure field.
    """
    mesh = mesh if mesh is not None else make_tube_mesh(level, elem_kind)
    formulation = Formulation(formulation_kind, elem_kind)
    material = material if material is not None else artery_material(formulation_kind)
    case = tube_load_case(mesh, steps=steps, pressure_kpa=pressure_kpa)
    assembler = Assembler(
        mesh, formulation, material, constrained_dofs=case.constrained_dofs()
    )
    report = newton_load_stepping(assembler, case, newton or NewtonConfig())
    stage = case.stages[0]
    followers = stage.follower_values(1.0)
    fields = state_fields(assembler, report.state, followers)

    cen = element_centroids(mesh)
    srr, stt, szz = cylindrical_components(fields.sigma, cen)
    probes = {}
    for name, point in (("A", PROBE_A), ("B", PROBE_B)):
        e = _probe_element(mesh, point)
        probes[name] = {
            "displacement": _probe_displacement(mesh, report.state, point).tolist(),
            "sigma_rr": float(srr[e]),
            "sigma_tt": float(stt[e]),
            "sigma_zz": float(szz[e]),
            "element": int(e),
        }
    tables = {
        "stress_components": {"sigma_rr": srr, "sigma_tt": stt, "sigma_zz": szz},
        "mean_detF": fields.mean_detF,
        "checkerboard_pressure": checkerboard_metric(
            fields.pressure_elem, mesh, kind="element"
        ),
    }
    return BenchmarkReport(
        name="artery",
        level=level,
        formulation=formulation_kind,
        elem_kind=elem_kind,
        solve=report,
        fields=fields,
        probes=probes,
        tables=tables,
        mesh=mesh,
        state=report.state,
        assembler=assembler,
    )


def _ellipsoid_frame(u, v, t):
    """Orthonormal (circumferential, longitudinal, transmural) directions."""
    rs, rl = _ellipsoid_axes(t)
    e_u = np.array([rs * np.cos(u) * np.cos(v), rs * np.cos(u) * np.sin(v), -rl * np.sin(u)])
    e_v = np.array([-rs * np.sin(u) * np.sin(v), rs * np.sin(u) * np.cos(v), 0.0])
    e_u /= np.linalg.norm(e_u)
    e_v /= np.linalg.norm(e_v)
    e_t = np.cross(e_v, e_u)
    e_t /= np.linalg.norm(e_t)
    return e_v, e_u, e_t


def ellipsoid_strain_probes(mesh, state, n_points=9, walls=(0.05, 0.5, 0.95), v=0.0):
    """CIRC/LONG/TRANS Green-Lagrange strains along apex-to-base lines.

    Probe lines run at fixed transmural depth (endo/mid/epi by default),
    sampled between the apex and the base; the strain tensor E = (C - I)/2
    is evaluated from the displacement gradient of the containing element.
    """
    ref = mesh.reference
    out = {}
    for t in walls:
        rs, rl = _ellipsoid_axes(t)
        u_base = -np.arccos(ELLIPSOID_BASE_Z / rl)
        us = np.linspace(-np.pi, u_base, n_points + 2)[1:-1]
        rows = []
        for u_par in us:
            X = _ellipsoid_point(u_par, v, t)
            elem, xi = mesh.locate(X)
            _, dN = ref.eval_geom(np.atleast_2d(xi))
            Xe = mesh.nodes[mesh.elements[elem]]
            Jm = Xe.T @ dN[0]
            G = dN[0] @ np.linalg.inv(Jm)
            H = state.u[mesh.elements[elem]].T @ G
            F = np.eye(3) + H
            E = 0.5 * (F.T @ F - np.eye(3))
            circ, lon, trans = _ellipsoid_frame(u_par, v, t)
            rows.append(
                (
                    float(u_par),
                    float(circ @ E @ circ),
                    float(lon @ E @ lon),
                    float(trans @ E @ trans),
                )
            )
        out[t] = np.array(rows)  # columns: u, CIRC, LONG, TRANS
    return out


def apex_nodes(mesh):
    """(endocardial, epicardial) apex node ids."""
    tol = 1e-9
    on_axis = np.flatnonzero(
        (np.abs(mesh.nodes[:, 0]) < tol) & (np.abs(mesh.nodes[:, 1]) < tol)
    )
    order = np.argsort(mesh.nodes[on_axis, 2])
    return int(on_axis[order[-1]]), int(on_axis[order[0]])


def run_ellipsoid(level, formulation_kind, phase="passive", law="guccione",
                  newton=None, passive_steps=10, active_steps=12, mesh=None,
                  material=None, pressure_kpa=None, active_kpa=ACTIVE_TENSION_KPA):
    """Passive inflation (and optional active contraction) of the ventricle.

    Reports apex displacement, apex-to-base strain profiles, and the cavity
    volume history of the endocardial surface.
    """
    mesh = mesh if mesh is not None else make_ellipsoid_mesh(level)
    formulation = Formulation(formulation_kind, "tet")
    material = (
        material if material is not None else ellipsoid_material(formulation_kind, law)
    )
    case = ellipsoid_load_case(
        mesh,
        passive_steps=passive_steps,
        active_steps=active_steps,
        pressure_kpa=pressure_kpa,
        active_kpa=active_kpa,
        phase=phase,
    )
    assembler = Assembler(
        mesh, formulation, material, constrained_dofs=case.constrained_dofs()
    )

    from .assembly import cavity_volume

    endo = mesh.facet_sets["endo"]
    # flux over the open endo surface; sign fixed to report positive volumes
    sign = -1.0 if cavity_volume(mesh, endo) < 0.0 else 1.0
    vol_hist = []

    def track_volume(state, stage_name, lam):
        vol_hist.append((stage_name, lam, sign * cavity_volume(mesh, endo, state.u)))

    report = newton_load_stepping(
        assembler, case, newton or NewtonConfig(), callback=track_volume
    )

    final_active = case.stages[-1].active_value(1.0)
    followers = case.stages[-1].follower_values(1.0)
    fields = state_fields(assembler, report.state, followers, active_scalar=final_active)

    apex_endo, apex_epi = apex_nodes(mesh)
    strains = ellipsoid_strain_probes(mesh, report.state)
    cav_final = sign * cavity_volume(mesh, endo, report.state.u)
    cav_ref = sign * cavity_volume(mesh, endo)
    probes = {
        "apex_endo_displacement": report.state.u[apex_endo].tolist(),
        "apex_epi_displacement": report.state.u[apex_epi].tolist(),
        "cavity_volume_final": float(cav_final),
        "cavity_volume_reference": float(cav_ref),
    }
    tables = {
        "strain_profiles": strains,
        "mean_detF": fields.mean_detF,
        "volume_history": vol_hist,
    }
    return BenchmarkReport(
        name="ellipsoid",
        level=level,
        formulation=formulation_kind,
        elem_kind="tet",
        solve=report,
        fields=fields,
        probes=probes,
        tables=tables,
        mesh=mesh,
        state=report.state,
        assembler=assembler,
    )
