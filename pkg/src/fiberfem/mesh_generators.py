"""Benchmark mesh generators: thick-walled tube and truncated-ellipsoid shell.

Both build structured hexahedral lattices; tetrahedral variants split every
cell into six tets along the global index diagonal (Kuhn subdivision), which
is face-consistent across cells including the circumferential wrap. Cells
collapsed at the ellipsoid apex degenerate cleanly into three-tet wedges.
"""

import numpy as np

from .errors import ConfigurationError
from .mesh import Mesh

TUBE_HEIGHT = 10.0
TUBE_INNER_RADIUS = 8.0
TUBE_OUTER_RADIUS = 10.0
TUBE_FIBER_ANGLE_DEG = 40.0

# (short, long) semi-axes in mm, inner and outer surfaces; base plane z = const.
ELLIPSOID_ENDO = (7.0, 17.0)
ELLIPSOID_EPI = (10.0, 20.0)
ELLIPSOID_BASE_Z = 5.0

_KUHN_PERMS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


def _kuhn_corner_paths():
    """Corner-index quadruples (as binary offsets) of the six diagonal tets."""
    paths = []
    for perm in _KUHN_PERMS:
        offs = [np.zeros(3, dtype=np.int64)]
        cur = np.zeros(3, dtype=np.int64)
        for axis in perm:
            cur = cur.copy()
            cur[axis] = 1
            offs.append(cur)
        paths.append(np.array(offs))
    return paths


def _orient_positive(nodes, tets):
    """Swap the last two vertices of negatively oriented tets, in place."""
    p = nodes[tets]
    vol6 = np.linalg.det(p[:, 1:] - p[:, :1])
    flip = vol6 < 0.0
    tets[flip, 2], tets[flip, 3] = tets[flip, 3], tets[flip, 2].copy()
    return tets


def _hex_cells_to_tets(cell_corner_ids):
    """Split structured hex cells (ne,2,2,2 index order) into Kuhn tets."""
    tets = []
    for path in _kuhn_corner_paths():
        ids = cell_corner_ids[:, path[:, 0], path[:, 1], path[:, 2]]
        tets.append(ids)
    tets = np.stack(tets, axis=1).reshape(-1, 4)
    # Drop tets that degenerated by node merging (apex collapse).
    keep = np.array([len(set(t)) == 4 for t in tets])
    return tets[keep]


def _classify_boundary(mesh, classifier):
    """Group boundary facets by a vectorized centroid/corner classifier."""
    facets = mesh.boundary_facets()
    corners = mesh.facet_corner_nodes(facets)
    labels = classifier(mesh.nodes, corners)
    sets = {}
    for name in np.unique(labels):
        if name != "":
            sets[str(name)] = facets[labels == name]
    return sets


def make_tube_mesh(level, kind="hex"):
    """Thick-walled cylinder (H=10, R1=8, R2=10 mm) at refinement `level` 1..7.

    Structured n_r x n_theta x n_z = 4L x 24L x 10L lattice reproducing the
    published element/node counts. Facet sets: `bottom`, `top` (Dirichlet) and
    `inner` (follower pressure). Per-element fiber pairs f0/s0 lie at +-40 deg
    to the circumferential direction; n0 is the outward radial unit vector.
    """
    if not 1 <= int(level) <= 7 or level != int(level):
        raise ConfigurationError(f"unsupported tube refinement level {level!r}")
    if kind not in ("tet", "hex"):
        raise ConfigurationError(f"unsupported element kind {kind!r}")
    level = int(level)
    n_r, n_t, n_z = 4 * level, 24 * level, 10 * level
    radii = np.linspace(TUBE_INNER_RADIUS, TUBE_OUTER_RADIUS, n_r + 1)
    thetas = np.linspace(0.0, 2.0 * np.pi, n_t, endpoint=False)
    zs = np.linspace(0.0, TUBE_HEIGHT, n_z + 1)

    def nid(ir, it, iz):
        return (ir * (n_z + 1) + iz) * n_t + np.mod(it, n_t)

    R, T, Z = np.meshgrid(radii, thetas, zs, indexing="ij")
    nodes = np.empty(((n_r + 1) * n_t * (n_z + 1), 3))
    ids = nid(*np.meshgrid(np.arange(n_r + 1), np.arange(n_t), np.arange(n_z + 1), indexing="ij"))
    nodes[ids.ravel(), 0] = (R * np.cos(T)).ravel()
    nodes[ids.ravel(), 1] = (R * np.sin(T)).ravel()
    nodes[ids.ravel(), 2] = Z.ravel()

    ir, it, iz = np.meshgrid(np.arange(n_r), np.arange(n_t), np.arange(n_z), indexing="ij")
    ir, it, iz = ir.ravel(), it.ravel(), iz.ravel()
    # VTK hex ordering with local axes (r, theta, z); right-handed, det > 0.
    hexes = np.column_stack(
        [
            nid(ir, it, iz),
            nid(ir + 1, it, iz),
            nid(ir + 1, it + 1, iz),
            nid(ir, it + 1, iz),
            nid(ir, it, iz + 1),
            nid(ir + 1, it, iz + 1),
            nid(ir + 1, it + 1, iz + 1),
            nid(ir, it + 1, iz + 1),
        ]
    )

    theta_c = thetas[it] + np.pi / n_t  # cell-centroid angle
    if kind == "hex":
        elements, elem_theta = hexes, theta_c
    else:
        cell_ids = np.empty((len(hexes), 2, 2, 2), dtype=np.int64)
        for (dr, dt, dz) in np.ndindex(2, 2, 2):
            cell_ids[:, dr, dt, dz] = nid(ir + dr, it + dt, iz + dz)
        elements = _orient_positive(nodes, _hex_cells_to_tets(cell_ids))
        elem_theta = np.repeat(theta_c, 6)

    alpha = np.radians(TUBE_FIBER_ANGLE_DEG)
    e_t = np.column_stack([-np.sin(elem_theta), np.cos(elem_theta), np.zeros_like(elem_theta)])
    e_z = np.array([0.0, 0.0, 1.0])
    e_r = np.column_stack([np.cos(elem_theta), np.sin(elem_theta), np.zeros_like(elem_theta)])
    frames = np.empty((len(elements), 3, 3))
    frames[:, 0] = np.cos(alpha) * e_t + np.sin(alpha) * e_z
    frames[:, 1] = np.cos(alpha) * e_t - np.sin(alpha) * e_z
    frames[:, 2] = e_r

    mesh = Mesh(nodes=nodes, elements=elements, kind=kind, fiber_frames=frames)

    tol = 1e-9 * TUBE_OUTER_RADIUS

    def classifier(nodes_, corners):
        X = nodes_[corners]
        r = np.hypot(X[..., 0], X[..., 1])
        z = X[..., 2]
        labels = np.full(len(corners), "", dtype=object)
        labels[np.all(np.abs(z) < tol, axis=1)] = "bottom"
        labels[np.all(np.abs(z - TUBE_HEIGHT) < tol, axis=1)] = "top"
        labels[np.all(np.abs(r - TUBE_INNER_RADIUS) < tol, axis=1)] = "inner"
        labels[np.all(np.abs(r - TUBE_OUTER_RADIUS) < tol, axis=1)] = "outer"
        return labels

    sets = _classify_boundary(mesh, classifier)
    return Mesh(nodes=nodes, elements=elements, kind=kind, facet_sets=sets, fiber_frames=frames)


# Lattice sizes (n_u apex-to-base, n_v circumferential, n_t transmural) chosen
# to land within 10% of the published ventricle mesh cardinalities.
_ELLIPSOID_LATTICE = {1: (36, 24, 4), 2: (88, 48, 8), 3: (190, 96, 16)}


def _ellipsoid_axes(t):
    rs = ELLIPSOID_ENDO[0] + t * (ELLIPSOID_EPI[0] - ELLIPSOID_ENDO[0])
    rl = ELLIPSOID_ENDO[1] + t * (ELLIPSOID_EPI[1] - ELLIPSOID_ENDO[1])
    return rs, rl


def _ellipsoid_point(u, v, t):
    rs, rl = _ellipsoid_axes(t)
    return np.stack(
        [rs * np.sin(u) * np.cos(v), rs * np.sin(u) * np.sin(v), rl * np.cos(u)], axis=-1
    )


def make_ellipsoid_mesh(level):
    """Truncated-ellipsoid ventricle shell, tetrahedral, levels 1..3.

    Endocardial surface semi-axes 7/17 mm, epicardial 10/20 mm, truncated at
    z = 5 mm. Facet sets: `base` (Dirichlet plane), `endo` (follower
    pressure), `epi`. Fiber angle rotates linearly from +90 deg at the
    endocardium to -90 deg at the epicardium relative to the circumferential
    direction; sheet vectors point transmurally outward.
    """
    if level not in _ELLIPSOID_LATTICE:
        raise ConfigurationError(f"unsupported ellipsoid refinement level {level!r}")
    n_u, n_v, n_t = _ELLIPSOID_LATTICE[level]

    # One apex node per transmural layer; regular (u,v) grid elsewhere.
    n_regular = n_u * n_v
    node_id = np.empty((n_u + 1, n_v, n_t + 1), dtype=np.int64)
    nodes = np.empty(((n_t + 1) * (1 + n_regular), 3))
    uvt = np.empty_like(nodes)
    for k in range(n_t + 1):
        t = k / n_t
        rs, rl = _ellipsoid_axes(t)
        u_base = -np.arccos(ELLIPSOID_BASE_Z / rl)
        apex = k * (1 + n_regular)
        node_id[0, :, k] = apex
        nodes[apex] = (0.0, 0.0, -rl)
        uvt[apex] = (-np.pi, 0.0, t)
        us = np.linspace(-np.pi, u_base, n_u + 1)[1:]
        vs = np.linspace(0.0, 2.0 * np.pi, n_v, endpoint=False)
        U, V = np.meshgrid(us, vs, indexing="ij")
        ids = apex + 1 + np.arange(n_regular).reshape(n_u, n_v)
        node_id[1:, :, k] = ids
        nodes[ids.ravel()] = _ellipsoid_point(U.ravel(), V.ravel(), t)
        uvt[ids.ravel()] = np.column_stack([U.ravel(), V.ravel(), np.full(n_regular, t)])

    iu, iv, ik = np.meshgrid(np.arange(n_u), np.arange(n_v), np.arange(n_t), indexing="ij")
    iu, iv, ik = iu.ravel(), iv.ravel(), ik.ravel()
    cell_ids = np.empty((len(iu), 2, 2, 2), dtype=np.int64)
    for (du, dv, dk) in np.ndindex(2, 2, 2):
        cell_ids[:, du, dv, dk] = node_id[iu + du, np.mod(iv + dv, n_v), ik + dk]
    elements = _orient_positive(nodes, _hex_cells_to_tets(cell_ids))

    # Fibers from the element-centroid surface frame.
    cen_uvt = uvt[elements].mean(axis=1)
    u_c, v_c, t_c = cen_uvt[:, 0], cen_uvt[:, 1], cen_uvt[:, 2]
    rs, rl = _ellipsoid_axes(t_c)
    e_u = np.stack(
        [rs * np.cos(u_c) * np.cos(v_c), rs * np.cos(u_c) * np.sin(v_c), -rl * np.sin(u_c)],
        axis=-1,
    )
    e_v = np.stack(
        [-rs * np.sin(u_c) * np.sin(v_c), rs * np.sin(u_c) * np.cos(v_c), np.zeros_like(u_c)],
        axis=-1,
    )
    e_u /= np.linalg.norm(e_u, axis=1, keepdims=True)
    e_v /= np.linalg.norm(e_v, axis=1, keepdims=True)
    alpha = np.radians(90.0 - 180.0 * t_c)[:, None]
    f0 = np.cos(alpha) * e_v + np.sin(alpha) * e_u
    s0 = np.cross(e_u, e_v)
    s0 /= np.linalg.norm(s0, axis=1, keepdims=True)
    # Orient sheets endo -> epi (outward transmural).
    d_t = _ellipsoid_point(u_c, v_c, np.minimum(t_c + 0.5 / n_t, 1.0)) - _ellipsoid_point(
        u_c, v_c, t_c
    )
    flip = np.einsum("ei,ei->e", s0, d_t) < 0.0
    s0[flip] *= -1.0
    n0 = np.cross(f0, s0)
    frames = np.stack([f0, s0, n0], axis=1)

    mesh = Mesh(nodes=nodes, elements=elements, kind="tet", fiber_frames=frames)

    layer_of = np.full(len(nodes), -1, dtype=np.int64)
    urow_of = np.full(len(nodes), -1, dtype=np.int64)
    for k in range(n_t + 1):
        layer_of[node_id[:, :, k].ravel()] = k
        for i in range(n_u + 1):
            urow_of[node_id[i, :, k]] = i

    def classifier(nodes_, corners):
        labels = np.full(len(corners), "", dtype=object)
        lay = layer_of[corners]
        row = urow_of[corners]
        labels[np.all(lay == 0, axis=1)] = "endo"
        labels[np.all(lay == n_t, axis=1)] = "epi"
        labels[np.all(row == n_u, axis=1)] = "base"
        return labels

    sets = _classify_boundary(mesh, classifier)
    return Mesh(
        nodes=nodes, elements=elements, kind="tet", facet_sets=sets, fiber_frames=frames
    )


def make_box_mesh(shape, lengths=(1.0, 1.0, 1.0), kind="hex", origin=(0.0, 0.0, 0.0)):
    """Structured box mesh, mainly for tests: facet sets xmin/.../zmax."""
    nx, ny, nz = shape
    xs = [np.linspace(origin[d], origin[d] + lengths[d], n + 1) for d, n in enumerate(shape)]

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    I, J, K = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing="ij")
    nodes = np.empty(((nx + 1) * (ny + 1) * (nz + 1), 3))
    nodes[nid(I, J, K).ravel(), 0] = xs[0][I].ravel()
    nodes[nid(I, J, K).ravel(), 1] = xs[1][J].ravel()
    nodes[nid(I, J, K).ravel(), 2] = xs[2][K].ravel()

    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    if kind == "hex":
        elements = np.column_stack(
            [
                nid(i, j, k),
                nid(i + 1, j, k),
                nid(i + 1, j + 1, k),
                nid(i, j + 1, k),
                nid(i, j, k + 1),
                nid(i + 1, j, k + 1),
                nid(i + 1, j + 1, k + 1),
                nid(i, j + 1, k + 1),
            ]
        )
    else:
        cell_ids = np.empty((len(i), 2, 2, 2), dtype=np.int64)
        for (di, dj, dk) in np.ndindex(2, 2, 2):
            cell_ids[:, di, dj, dk] = nid(i + di, j + dj, k + dk)
        elements = _orient_positive(nodes, _hex_cells_to_tets(cell_ids))

    frames = np.tile(np.eye(3), (len(elements), 1, 1))
    mesh = Mesh(nodes=nodes, elements=elements, kind=kind, fiber_frames=frames)

    spans = [(xs[d][0], xs[d][-1]) for d in range(3)]
    tol = 1e-12 * max(abs(v) + 1.0 for lo_hi in spans for v in lo_hi)

    def classifier(nodes_, corners):
        X = nodes_[corners]
        labels = np.full(len(corners), "", dtype=object)
        names = [("xmin", "xmax"), ("ymin", "ymax"), ("zmin", "zmax")]
        for d in range(3):
            lo, hi = spans[d]
            labels[np.all(np.abs(X[..., d] - lo) < tol, axis=1)] = names[d][0]
            labels[np.all(np.abs(X[..., d] - hi) < tol, axis=1)] = names[d][1]
        return labels

    sets = _classify_boundary(mesh, classifier)
    return Mesh(nodes=nodes, elements=elements, kind=kind, facet_sets=sets, fiber_frames=frames)
