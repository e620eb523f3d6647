import numpy as np
import pytest

from fiberfem.errors import ConfigurationError
from fiberfem.mesh_generators import (
    ELLIPSOID_BASE_Z,
    ELLIPSOID_ENDO,
    ELLIPSOID_EPI,
    TUBE_HEIGHT,
    TUBE_INNER_RADIUS,
    TUBE_OUTER_RADIUS,
    make_box_mesh,
    make_ellipsoid_mesh,
    make_tube_mesh,
)

# Published mesh cardinalities of the artery benchmark.
TUBE_TABLE = {
    1: (960, 5760, 1320),
    2: (7680, 46080, 9072),
    3: (25920, 155520, 29016),
    4: (61440, 368640, 66912),
}

ELLIPSOID_TABLE = {1: (20709, 4732), 2: (201495, 38896)}


def tube_analytic_volume():
    return np.pi * (TUBE_OUTER_RADIUS**2 - TUBE_INNER_RADIUS**2) * TUBE_HEIGHT


def ellipsoid_analytic_volume():
    def cap(rs, rl, z):
        return np.pi * rs**2 * ((z - z**3 / (3 * rl**2)) - (-rl + rl / 3.0))

    return cap(*ELLIPSOID_EPI, ELLIPSOID_BASE_Z) - cap(*ELLIPSOID_ENDO, ELLIPSOID_BASE_Z)


class TestTube:
    @pytest.mark.parametrize("level", [1, 2, 3])
    def test_published_counts(self, level):
        nhex, ntet, nnodes = TUBE_TABLE[level]
        hexm = make_tube_mesh(level, "hex")
        assert (hexm.num_elements, hexm.num_nodes) == (nhex, nnodes)
        tetm = make_tube_mesh(level, "tet")
        assert (tetm.num_elements, tetm.num_nodes) == (ntet, nnodes)

    def test_bad_level(self):
        with pytest.raises(ConfigurationError):
            make_tube_mesh(0, "hex")
        with pytest.raises(ConfigurationError):
            make_tube_mesh(8, "tet")
        with pytest.raises(ConfigurationError):
            make_tube_mesh(1, "wedge")

    @pytest.mark.parametrize("kind", ["tet", "hex"])
    def test_fiber_axial_component(self, kind):
        mesh = make_tube_mesh(2, kind)
        f0 = mesh.fiber_frames[:, 0]
        s0 = mesh.fiber_frames[:, 1]
        target = np.sin(np.radians(40.0))
        assert np.abs(f0[:, 2] - target).max() <= 1e-12
        assert np.abs(s0[:, 2] + target).max() <= 1e-12
        assert np.abs(np.linalg.norm(f0, axis=1) - 1.0).max() <= 1e-12
        # both families are orthogonal to the radial vector
        n0 = mesh.fiber_frames[:, 2]
        assert np.abs(np.einsum("ei,ei->e", f0, n0)).max() <= 1e-12

    def test_volume_convergence(self):
        # Straight-edged elements on 24L circumferential divisions floor the
        # level-1 volume deficit at ~1.14%; it shrinks by ~4x per level.
        exact = tube_analytic_volume()
        errs = []
        for level in (1, 2):
            v = make_tube_mesh(level, "hex").element_volumes().sum()
            errs.append(abs(v - exact) / exact)
        assert errs[0] < 0.012
        assert errs[1] < 0.005
        assert errs[1] < 0.3 * errs[0]

    def test_tet_and_hex_volumes_agree(self):
        vh = make_tube_mesh(1, "hex").element_volumes().sum()
        vt = make_tube_mesh(1, "tet").element_volumes().sum()
        assert vt == pytest.approx(vh, rel=1e-12)

    def test_facet_sets_cover_boundary(self):
        mesh = make_tube_mesh(1, "tet")
        assert set(mesh.facet_sets) == {"bottom", "top", "inner", "outer"}
        mesh.validate()
        total = sum(len(v) for v in mesh.facet_sets.values())
        assert total == len(mesh.boundary_facets())


class TestEllipsoid:
    @pytest.mark.parametrize("level", [1, 2])
    def test_counts_within_ten_percent(self, level):
        nelem, nnode = ELLIPSOID_TABLE[level]
        mesh = make_ellipsoid_mesh(level)
        assert abs(mesh.num_elements - nelem) <= 0.10 * nelem
        assert abs(mesh.num_nodes - nnode) <= 0.10 * nnode

    def test_bad_level(self):
        with pytest.raises(ConfigurationError):
            make_ellipsoid_mesh(4)

    def test_boundary_partition(self):
        mesh = make_ellipsoid_mesh(1)
        mesh.validate()
        parts = [set(map(tuple, mesh.facet_sets[k])) for k in ("endo", "epi", "base")]
        union = set().union(*parts)
        assert len(union) == sum(len(p) for p in parts)  # disjoint
        assert len(union) == len(mesh.boundary_facets())  # exhaustive

    def test_fiber_triads_orthonormal(self):
        mesh = make_ellipsoid_mesh(1)
        gram = np.einsum("eij,ekj->eik", mesh.fiber_frames, mesh.fiber_frames)
        assert np.abs(gram - np.eye(3)).max() <= 1e-12

    def test_fiber_angle_ranges(self):
        # transmural rotation: near-longitudinal fibers at endo/epi walls,
        # near-circumferential at midwall
        mesh = make_ellipsoid_mesh(1)
        f0 = mesh.fiber_frames[:, 0]
        cen = mesh.element_coords().mean(axis=1)
        # midwall elements near the equator plane z ~ -5 should be mostly
        # circumferential (small z-component)
        r = np.hypot(cen[:, 0], cen[:, 1])
        rs_mid = 0.5 * (ELLIPSOID_ENDO[0] + ELLIPSOID_EPI[0])
        near = (np.abs(cen[:, 2] + 2.0) < 2.0) & (np.abs(r - rs_mid) < 0.4)
        assert near.sum() > 0
        assert np.abs(f0[near, 2]).mean() < 0.3

    def test_positive_volumes_and_total(self):
        mesh = make_ellipsoid_mesh(1)
        vols = mesh.element_volumes()
        assert vols.min() > 0.0
        exact = ellipsoid_analytic_volume()
        assert abs(vols.sum() - exact) / exact < 0.03

    def test_endo_flux_negative(self):
        from fiberfem.assembly import cavity_volume

        mesh = make_ellipsoid_mesh(1)
        assert cavity_volume(mesh, mesh.facet_sets["endo"]) < 0.0


class TestBox:
    def test_box_volumes(self):
        for kind in ("tet", "hex"):
            mesh = make_box_mesh((2, 3, 4), lengths=(1.0, 2.0, 0.5), kind=kind)
            assert mesh.element_volumes().sum() == pytest.approx(1.0, rel=1e-12)
