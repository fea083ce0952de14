import numpy as np
import pytest

from meshforge.errors import ObjParseError, ParameterError, TopologyError
from meshforge.mesh import (
    ControlMesh,
    load_obj,
    make_primitive,
    one_ring,
    save_assets,
    unique_edges,
    validate_manifold,
)

TET_VERTS = np.array(
    [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
)
TET_FACES = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]], dtype=np.int32)


def tetrahedron():
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    return ControlMesh(TET_VERTS, TET_FACES, uvs, TET_FACES)


class TestPrimitives:
    def test_sphere_level0_is_icosahedron(self):
        m = make_primitive("sphere", 0)
        assert m.n_vertices == 12
        assert m.n_faces == 20

    def test_sphere_level1_counts(self):
        # each subdivision step maps F -> 4F and V -> V + E
        m0 = make_primitive("sphere", 0)
        e0 = len(unique_edges(m0.faces))
        m1 = make_primitive("sphere", 1)
        assert m1.n_vertices == m0.n_vertices + e0 == 42
        assert m1.n_faces == 4 * m0.n_faces == 80

    def test_sphere_radius_one(self):
        m = make_primitive("sphere", 2)
        r = np.linalg.norm(m.vertices, axis=1)
        assert np.allclose(r, 1.0, atol=1e-12)

    def test_cuboid_vertical_extents(self):
        m = make_primitive("cuboid_vertical", 0)
        assert m.vertices[:, 1].max() == pytest.approx(0.8)
        assert m.vertices[:, 0].max() == pytest.approx(0.4)
        assert m.vertices[:, 2].max() == pytest.approx(0.4)

    def test_cuboid_horizontal_extents(self):
        m = make_primitive("cuboid_horizontal", 0)
        assert m.vertices[:, 0].max() == pytest.approx(0.8)
        assert m.vertices[:, 1].max() == pytest.approx(0.4)

    @pytest.mark.parametrize("kind", ["sphere", "cuboid_horizontal", "cuboid_vertical"])
    @pytest.mark.parametrize("level", [0, 1, 2])
    def test_euler_characteristic(self, kind, level):
        m = make_primitive(kind, level)
        e = len(unique_edges(m.faces))
        assert m.n_vertices - e + m.n_faces == 2

    @pytest.mark.parametrize("kind", ["sphere", "cuboid_horizontal", "cuboid_vertical"])
    def test_primitives_are_closed_manifolds(self, kind):
        rep = validate_manifold(make_primitive(kind, 1))
        assert rep.is_closed_manifold
        assert rep.min_valence >= 3

    def test_uvs_in_unit_square(self):
        for kind in ("sphere", "cuboid_horizontal"):
            m = make_primitive(kind, 2)
            assert m.uvs.min() >= 0.0 and m.uvs.max() <= 1.0

    @pytest.mark.parametrize("level", [-1, 6, 2.5])
    def test_invalid_level_rejected(self, level):
        with pytest.raises(ParameterError):
            make_primitive("sphere", level)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ParameterError):
            make_primitive("torus", 1)


class TestOneRing:
    def test_icosahedron_valence_five(self):
        m = make_primitive("sphere", 0)
        for v in range(m.n_vertices):
            assert len(one_ring(m, v)) == 5

    def test_ring_members_are_edge_neighbors(self):
        m = make_primitive("sphere", 1)
        edges = {tuple(e) for e in unique_edges(m.faces)}
        for v in [0, 5, 17, 41]:
            for u in one_ring(m, v):
                assert (min(u, v), max(u, v)) in edges

    def test_consecutive_ring_entries_share_a_face(self):
        m = make_primitive("sphere", 1)
        face_sets = [frozenset(f) for f in m.faces.tolist()]
        for v in range(0, m.n_vertices, 7):
            ring = one_ring(m, v)
            for a, b in zip(ring, ring[1:] + ring[:1]):
                assert frozenset((v, a, b)) in face_sets

    def test_tetrahedron_ring(self):
        m = tetrahedron()
        for v in range(4):
            assert sorted(one_ring(m, v)) == sorted(set(range(4)) - {v})

    def test_box_corner_valence_matches_enumeration(self):
        # derived by enumerating constructed faces: corner valence is 4 or 5
        # depending on which diagonals meet at the corner
        m = make_primitive("cuboid_vertical", 0)
        valences = sorted(len(one_ring(m, v)) for v in range(8))
        counted = []
        for v in range(8):
            nbrs = set()
            for f in m.faces:
                if v in f:
                    nbrs.update(int(x) for x in f if x != v)
            counted.append(len(nbrs))
        assert valences == sorted(counted)
        # deterministic min-index diagonal rule: corners collect 1 or 3 diagonals
        assert set(valences) <= {4, 6}
        assert min(valences) >= 3

    def test_orientation_reversal_reverses_cycle(self):
        m = make_primitive("sphere", 1)
        flipped = ControlMesh(
            m.vertices, m.faces[:, [0, 2, 1]], m.uvs, m.uv_indices[:, [0, 2, 1]]
        )
        for v in [0, 13, 29]:
            fwd = one_ring(m, v)
            rev = one_ring(flipped, v)
            k = rev.index(fwd[0])
            rotated = rev[k:] + rev[:k]
            assert rotated == [fwd[0]] + fwd[:0:-1]

    def test_bad_vertex_index(self):
        with pytest.raises(ParameterError):
            one_ring(tetrahedron(), 99)

    def test_open_fan_raises(self):
        m = make_primitive("sphere", 0)
        open_mesh = ControlMesh(m.vertices, m.faces[1:], m.uvs, m.uv_indices[1:])
        bad_vertex = int(m.faces[0][0])
        with pytest.raises(TopologyError):
            one_ring(open_mesh, bad_vertex)


class TestValidateManifold:
    def test_icosahedron_closed(self):
        rep = validate_manifold(make_primitive("sphere", 0))
        assert rep.is_closed_manifold
        assert rep.offending_edges == []
        assert rep.min_valence == rep.max_valence == 5

    def test_missing_face_creates_three_bad_edges(self):
        m = make_primitive("sphere", 0)
        holed = ControlMesh(m.vertices, m.faces[1:], m.uvs, m.uv_indices[1:])
        rep = validate_manifold(holed)
        assert not rep.is_closed_manifold
        assert len(rep.offending_edges) == 3

    def test_two_tetrahedra_with_coincident_vertex(self):
        # topologically disjoint tets, one translated so a vertex coincides:
        # edge census still passes, all valences 3
        a = tetrahedron()
        offset = a.vertices[0] - a.vertices[1]
        verts = np.vstack([a.vertices, a.vertices + offset])
        faces = np.vstack([a.faces, a.faces + 4])
        uvi = np.vstack([a.uv_indices, a.uv_indices])
        m = ControlMesh(verts, faces, a.uvs, uvi)
        assert np.allclose(m.vertices[0], m.vertices[5])
        rep = validate_manifold(m)
        assert rep.is_closed_manifold
        assert rep.max_valence == 3


class TestAssetIO:
    def _maps(self, size=2):
        white = np.ones((size, size, 3))
        flat = np.zeros((size, size, 3))
        flat[..., 2] = 1.0
        return white, flat

    def test_round_trip_positions_and_faces(self, tmp_path):
        m = make_primitive("sphere", 1)
        tex, nrm = self._maps()
        save_assets(m, m.vertices, tex, nrm, str(tmp_path))
        back = load_obj(str(tmp_path / "model.obj"), strict=True)
        assert np.array_equal(back.faces, m.faces)
        assert np.abs(back.vertices - m.vertices).max() <= 1e-5
        assert np.abs(back.uvs - m.uvs).max() <= 1e-5

    def test_flat_normal_pixel_encoding(self, tmp_path):
        from PIL import Image as PILImage

        m = tetrahedron()
        tex, nrm = self._maps()
        save_assets(m, m.vertices, tex, nrm, str(tmp_path))
        px = np.asarray(PILImage.open(tmp_path / "normal.png"))
        assert abs(int(px[0, 0, 0]) - 128) <= 1
        assert abs(int(px[0, 0, 1]) - 128) <= 1
        assert int(px[0, 0, 2]) == 255

    def test_icosahedron_record_counts(self, tmp_path):
        m = make_primitive("sphere", 0)
        tex, nrm = self._maps()
        save_assets(m, m.vertices, tex, nrm, str(tmp_path))
        lines = (tmp_path / "model.obj").read_text().splitlines()
        assert sum(1 for l in lines if l.startswith("v ")) == 12
        assert sum(1 for l in lines if l.startswith("f ")) == 20

    def test_vertex_count_mismatch_rejected(self, tmp_path):
        m = make_primitive("sphere", 0)
        tex, nrm = self._maps()
        with pytest.raises(ParameterError):
            save_assets(m, m.vertices[:5], tex, nrm, str(tmp_path))

    def test_quad_faces_fan_triangulated(self, tmp_path):
        p = tmp_path / "quad.obj"
        p.write_text(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
            "v 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n"
            "f 1 2 3 4\n"
        )
        m = load_obj(str(p))
        assert m.n_faces == 2
        assert m.faces.tolist() == [[0, 1, 2], [0, 2, 3]]

    def test_dangling_face_index_names_line(self, tmp_path):
        p = tmp_path / "bad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        with pytest.raises(ObjParseError) as err:
            load_obj(str(p))
        assert err.value.line_number == 4

    def test_malformed_record_names_line(self, tmp_path):
        p = tmp_path / "bad.obj"
        p.write_text("v 0 0 zero\n")
        with pytest.raises(ObjParseError) as err:
            load_obj(str(p))
        assert err.value.line_number == 1

    def test_strict_rejects_open_mesh(self, tmp_path):
        p = tmp_path / "open.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        load_obj(str(p))  # non-strict is fine
        with pytest.raises(TopologyError):
            load_obj(str(p), strict=True)
