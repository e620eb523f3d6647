"""VTK legacy ASCII unstructured-grid export/import.

Meshes are written with their volume cells followed by boundary-facet cells;
facet sets appear as an integer cell-data tag (0 on volume cells) and fiber
frames as cell-data vectors. Field exports carry point-data displacement and
nodal pressure plus cell-data stress components and det F on volume cells
only. Floats are printed with repr-stable %.17g, so identical states produce
byte-identical files.
"""

import numpy as np

from .errors import MeshError
from .mesh import Mesh

_CELL_TYPE = {"tet": 10, "hex": 12}
_FACET_TYPE = {"tet": 5, "hex": 9}   # triangle / quad
_KIND_OF_TYPE = {10: "tet", 12: "hex"}


def _fmt(values):
    return " ".join(f"{v:.17g}" for v in values)


def write_mesh(mesh, path, title="fiberfem mesh"):
    """Write the mesh with facet-set tags and fiber vectors."""
    set_names = sorted(mesh.facet_sets)
    facet_cells = []
    facet_tags = []
    for tag, name in enumerate(set_names, start=1):
        corners = mesh.facet_corner_nodes(mesh.facet_sets[name])
        facet_cells.extend(corners.tolist())
        facet_tags.extend([tag] * len(corners))
    ne = mesh.num_elements
    nf = len(facet_cells)
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title} | facet_tags: " + " ".join(
            f"{i+1}={n}" for i, n in enumerate(set_names)) + "\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.num_nodes} double\n")
        for xyz in mesh.nodes:
            f.write(_fmt(xyz) + "\n")
        total = ne * (mesh.elements.shape[1] + 1) + sum(len(c) + 1 for c in facet_cells)
        f.write(f"CELLS {ne + nf} {total}\n")
        for conn in mesh.elements:
            f.write(f"{len(conn)} " + " ".join(map(str, conn)) + "\n")
        for conn in facet_cells:
            f.write(f"{len(conn)} " + " ".join(map(str, conn)) + "\n")
        f.write(f"CELL_TYPES {ne + nf}\n")
        vt = _CELL_TYPE[mesh.kind]
        ft = _FACET_TYPE[mesh.kind]
        for _ in range(ne):
            f.write(f"{vt}\n")
        for _ in range(nf):
            f.write(f"{ft}\n")
        f.write(f"CELL_DATA {ne + nf}\n")
        f.write("SCALARS facet_tag int 1\nLOOKUP_TABLE default\n")
        for _ in range(ne):
            f.write("0\n")
        for tag in facet_tags:
            f.write(f"{tag}\n")
        if mesh.fiber_frames is not None:
            zeros = np.zeros(3)
            for label, row in (("fiber_f0", 0), ("sheet_s0", 1), ("normal_n0", 2)):
                f.write(f"VECTORS {label} double\n")
                for vec in mesh.fiber_frames[:, row]:
                    f.write(_fmt(vec) + "\n")
                for _ in range(nf):
                    f.write(_fmt(zeros) + "\n")


def _tokens(path):
    with open(path) as f:
        for line in f:
            yield line.rstrip("\n")


def read_mesh(path):
    """Read a mesh written by `write_mesh` (facet sets and fibers restored)."""
    lines = list(_tokens(path))
    header = lines[1]
    set_names = {}
    if "facet_tags:" in header:
        for part in header.split("facet_tags:")[1].split():
            tag, name = part.split("=")
            set_names[int(tag)] = name
    i = 0
    npoints = 0
    nodes = None
    while i < len(lines):
        if lines[i].startswith("POINTS"):
            npoints = int(lines[i].split()[1])
            vals = " ".join(lines[i + 1 : i + 1 + npoints]).split()
            nodes = np.array(vals, dtype=float).reshape(npoints, 3)
            i += npoints + 1
            continue
        if lines[i].startswith("CELLS"):
            ncells = int(lines[i].split()[1])
            raw = [list(map(int, lines[i + 1 + k].split())) for k in range(ncells)]
            cells = [r[1:] for r in raw]
            i += ncells + 1
            continue
        if lines[i].startswith("CELL_TYPES"):
            ncells = int(lines[i].split()[1])
            types = np.array(lines[i + 1 : i + 1 + ncells], dtype=int)
            i += ncells + 1
            continue
        if lines[i].startswith("SCALARS facet_tag"):
            tags = np.array(lines[i + 2 : i + 2 + len(types)], dtype=int)
            i += len(types) + 2
            continue
        if lines[i].startswith("VECTORS fiber_f0"):
            vals = " ".join(lines[i + 1 : i + 1 + len(types)]).split()
            f0_all = np.array(vals, dtype=float).reshape(len(types), 3)
            i += len(types) + 1
            continue
        if lines[i].startswith("VECTORS sheet_s0"):
            vals = " ".join(lines[i + 1 : i + 1 + len(types)]).split()
            s0_all = np.array(vals, dtype=float).reshape(len(types), 3)
            i += len(types) + 1
            continue
        if lines[i].startswith("VECTORS normal_n0"):
            vals = " ".join(lines[i + 1 : i + 1 + len(types)]).split()
            n0_all = np.array(vals, dtype=float).reshape(len(types), 3)
            i += len(types) + 1
            continue
        i += 1

    volume_mask = (types == 10) | (types == 12)
    vol_ids = np.flatnonzero(volume_mask)
    kinds = {_KIND_OF_TYPE[t] for t in types[vol_ids]}
    if len(kinds) != 1:
        raise MeshError("mixed or missing volume cell types in VTK file")
    kind = kinds.pop()
    elements = np.array([cells[k] for k in vol_ids], dtype=np.int64)

    frames = None
    if "f0_all" in locals():
        frames = np.stack(
            [f0_all[vol_ids], s0_all[vol_ids], n0_all[vol_ids]], axis=1
        )
    mesh = Mesh(nodes=nodes, elements=elements, kind=kind, fiber_frames=frames)

    # Rebuild (element, local facet) pairs by matching tagged facet cells.
    facet_sets = {}
    if "tags" in locals() and set_names:
        boundary = mesh.boundary_facets()
        keys = [tuple(sorted(c)) for c in mesh.facet_corner_nodes(boundary)]
        lookup = {k: tuple(bf) for k, bf in zip(keys, boundary)}
        for k in np.flatnonzero(~volume_mask):
            tag = tags[k]
            if tag == 0:
                continue
            key = tuple(sorted(cells[k]))
            if key not in lookup:
                raise MeshError("tagged facet does not match any boundary facet")
            facet_sets.setdefault(set_names[tag], []).append(lookup[key])
        facet_sets = {k: np.array(v, dtype=np.int64) for k, v in facet_sets.items()}
    return Mesh(
        nodes=nodes, elements=elements, kind=kind, facet_sets=facet_sets,
        fiber_frames=frames,
    )


def export_fields(mesh, state, fields, path, srr=None, stt=None, szz=None,
                  title="fiberfem fields"):
    """Write a field snapshot: point displacement/pressure, cell stresses.

    `fields` is a `FieldSnapshot`; cylindrical stress components may be
    passed precomputed, otherwise they are derived from element centroids.
    """
    from .benchmarks import cylindrical_components, element_centroids

    if srr is None:
        srr, stt, szz = cylindrical_components(fields.sigma, element_centroids(mesh))
    ne = mesh.num_elements
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.num_nodes} double\n")
        for xyz in mesh.nodes:
            f.write(_fmt(xyz) + "\n")
        nen = mesh.elements.shape[1]
        f.write(f"CELLS {ne} {ne * (nen + 1)}\n")
        for conn in mesh.elements:
            f.write(f"{nen} " + " ".join(map(str, conn)) + "\n")
        f.write(f"CELL_TYPES {ne}\n")
        vt = _CELL_TYPE[mesh.kind]
        for _ in range(ne):
            f.write(f"{vt}\n")
        f.write(f"POINT_DATA {mesh.num_nodes}\n")
        f.write("VECTORS displacement double\n")
        for vec in state.u:
            f.write(_fmt(vec) + "\n")
        if state.p is not None:
            f.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
            for v in state.p:
                f.write(f"{v:.17g}\n")
        f.write(f"CELL_DATA {ne}\n")
        for name, arr in (
            ("pressure_elem", fields.pressure_elem),
            ("sigma_rr", srr),
            ("sigma_tt", stt),
            ("sigma_zz", szz),
            ("detF", fields.detF),
        ):
            f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            for v in arr:
                f.write(f"{v:.17g}\n")
