import math

import numpy as np
import pytest

from boxdeform import shapes
from boxdeform.mesh import (
    Mesh,
    MeshError,
    ObjParseError,
    gaussian_curvature_change,
    load_obj,
    normal_consistency,
    save_obj,
    self_intersection_ratio,
    triangles_intersect,
    vertex_normals,
)


# --- OBJ I/O ------------------------------------------------------------------


def test_load_single_triangle(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    m = load_obj(p)
    assert m.n_vertices == 3
    assert m.n_faces == 1
    assert np.array_equal(m.faces, [[0, 1, 2]])


def test_load_quad_fan_triangulates(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    m = load_obj(p)
    assert np.array_equal(m.faces, [[0, 1, 2], [0, 2, 3]])


def test_load_cube_obj_fan_oracle(tmp_path):
    quads = [
        (1, 2, 4, 3),
        (5, 7, 8, 6),
        (1, 5, 6, 2),
        (3, 4, 8, 7),
        (1, 3, 7, 5),
        (2, 6, 8, 4),
    ]
    lines = []
    for i in range(8):
        x, y, z = i >> 2 & 1, i >> 1 & 1, i & 1
        lines.append(f"v {x} {y} {z}")
    lines += ["f " + " ".join(str(i) for i in q) for q in quads]
    p = tmp_path / "cube.obj"
    p.write_text("\n".join(lines) + "\n")
    m = load_obj(p)
    assert m.n_vertices == 8
    assert m.n_faces == 12
    # independent fan-triangulation oracle
    expected = []
    for q in quads:
        idx = [i - 1 for i in q]
        for k in range(1, len(idx) - 1):
            expected.append((idx[0], idx[k], idx[k + 1]))
    assert np.array_equal(m.faces, np.array(expected))


def test_load_slash_forms_ignored(tmp_path):
    p = tmp_path / "t.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2/1/1 3/1/1\n")
    m = load_obj(p)
    assert m.n_faces == 1


def test_load_reports_line_number(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 oops 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.raises(ObjParseError, match=":2:"):
        load_obj(p)


def test_load_index_out_of_range(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(ObjParseError, match=":4:"):
        load_obj(p)


def test_load_empty_mesh_errors(tmp_path):
    p = tmp_path / "empty.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n")
    with pytest.raises(ObjParseError, match="empty"):
        load_obj(p)


@pytest.mark.parametrize("make", [shapes.cube, shapes.icosphere, shapes.lifted_square])
def test_save_load_round_trip(tmp_path, make):
    m = make()
    p = tmp_path / "m.obj"
    save_obj(m, p)
    m2 = load_obj(p)
    assert np.array_equal(m.faces, m2.faces)
    assert np.abs(m.vertices - m2.vertices).max() <= 1e-6
    # shortest-repr formatting actually round-trips exactly
    assert np.array_equal(m.vertices, m2.vertices)


def test_zero_face_mesh_invalid():
    with pytest.raises(MeshError):
        Mesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=np.int64))


def test_degenerate_face_invalid():
    with pytest.raises(MeshError, match="degenerate"):
        Mesh(np.eye(3), np.array([[0, 1, 1]]))


def test_face_index_out_of_range_invalid():
    with pytest.raises(MeshError):
        Mesh(np.eye(3), np.array([[0, 1, 3]]))


# --- vertex normals -----------------------------------------------------------


def test_flat_square_normals():
    n = vertex_normals(shapes.flat_square()).normals
    assert np.allclose(n, [0.0, 0.0, 1.0], atol=1e-12)


def test_cube_corner_normals_hand_enumerated():
    # box_mesh fan triangulation: corner 0 sits in two triangles of each of
    # its three faces; corner 1 in one -x, one -y, and two +z triangles
    m = shapes.cube()
    n = vertex_normals(m).normals
    expect0 = -np.ones(3) / math.sqrt(3.0)
    expect1 = np.array([-1.0, -1.0, 2.0]) / math.sqrt(6.0)
    expect7 = np.ones(3) / math.sqrt(3.0)
    assert np.allclose(n[0], expect0, atol=1e-12)
    assert np.allclose(n[1], expect1, atol=1e-12)
    assert np.allclose(n[7], expect7, atol=1e-12)


def test_icosphere_normals_near_radial():
    m = shapes.icosphere(2)
    n = vertex_normals(m).normals
    radial = m.vertices / np.linalg.norm(m.vertices, axis=1)[:, None]
    cos = np.einsum("ij,ij->i", n, radial)
    assert np.degrees(np.arccos(np.clip(cos, -1, 1))).max() < 5.0


def test_normals_rotation_equivariant():
    rng = np.random.default_rng(4)
    m = shapes.icosphere(1)
    base = vertex_normals(m).normals
    for _ in range(3):
        q = rng.normal(size=(3, 3))
        r, _ = np.linalg.qr(q)
        if np.linalg.det(r) < 0:
            r[:, 0] = -r[:, 0]
        rotated = m.with_vertices(m.vertices @ r.T)
        assert np.abs(vertex_normals(rotated).normals - base @ r.T).max() < 1e-6


def test_isolated_vertex_gets_zero_normal():
    m = Mesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], dtype=float),
             np.array([[0, 1, 2]]))
    vn = vertex_normals(m)
    assert np.all(vn.normals[3] == 0.0)
    assert not vn.valid[3]
    assert vn.valid[0]


def test_degenerate_area_face_excluded():
    # second face is collinear (zero area): must not pollute normals
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], dtype=float)
    m = Mesh(verts, np.array([[0, 1, 2], [0, 1, 3]]))
    n = vertex_normals(m).normals
    assert np.allclose(n[0], [0, 0, 1], atol=1e-12)


# --- Gaussian curvature change ------------------------------------------------


def test_gc_identity_is_exactly_zero():
    m = shapes.icosphere(1)
    assert gaussian_curvature_change(m, m) == 0.0


def test_gc_uniform_scale_power_of_two_exact():
    m = shapes.lifted_square()
    m2 = m.with_vertices(m.vertices * 2.0)
    assert gaussian_curvature_change(m, m2) == 0.0


def test_gc_uniform_scale_general_within_tolerance():
    m = shapes.icosphere(1)
    m2 = m.with_vertices(m.vertices * 1.7)
    assert gaussian_curvature_change(m, m2) <= 1e-9


def _oracle_angle_deficits(mesh):
    deficits = [2.0 * math.pi] * mesh.n_vertices
    for f in mesh.faces:
        pts = [mesh.vertices[i] for i in f]
        for corner in range(3):
            a = pts[corner]
            b = pts[(corner + 1) % 3]
            c = pts[(corner + 2) % 3]
            u = b - a
            w = c - a
            cosang = float(u @ w) / (np.linalg.norm(u) * np.linalg.norm(w))
            deficits[f[corner]] -= math.acos(max(-1.0, min(1.0, cosang)))
    return np.array(deficits)


def test_gc_lifted_square_matches_bruteforce_oracle():
    flat = shapes.lifted_square(0.0)
    # geometric degenerate guard: flat fan still has positive-area faces
    lifted = shapes.lifted_square(0.5)
    got = gaussian_curvature_change(flat, lifted)
    expected = float(np.mean(np.abs(
        _oracle_angle_deficits(lifted) - _oracle_angle_deficits(flat)
    )))
    assert got == pytest.approx(expected, abs=1e-12)
    assert got > 0.1  # the lift genuinely bends the fan


def test_gc_topology_mismatch_errors():
    with pytest.raises(MeshError, match="topology"):
        gaussian_curvature_change(shapes.cube(), shapes.flat_square())


# --- self-intersection ---------------------------------------------------------


def test_si_convex_cube_zero():
    assert self_intersection_ratio(shapes.cube()) == 0.0


def test_si_crossing_pair_half():
    assert self_intersection_ratio(shapes.crossing_pair()) == 0.5


def test_si_shared_vertex_excluded():
    assert self_intersection_ratio(shapes.shared_vertex_crossing()) == 0.0


def test_si_face_permutation_invariant():
    m = shapes.crossing_pair()
    rng = np.random.default_rng(0)
    perm = rng.permutation(m.n_faces)
    m2 = Mesh(m.vertices.copy(), m.faces[perm])
    assert self_intersection_ratio(m2) == self_intersection_ratio(m)


def test_crossing_pair_verified_by_segment_plane_oracle():
    # The vertical triangle's two rising edges puncture z=0 inside the flat
    # triangle: verify by clipping each edge against the plane by hand.
    m = shapes.crossing_pair()
    flat = m.vertices[m.faces[0]]
    vert = m.vertices[m.faces[1]]
    hits = []
    for i in range(3):
        a, b = vert[i], vert[(i + 1) % 3]
        if (a[2] < 0) != (b[2] < 0):
            t = a[2] / (a[2] - b[2])
            hits.append(a + t * (b - a))
    assert len(hits) == 2
    for h in hits:
        # inside test against the flat triangle x>=0, y>=0, x+y<=2
        assert h[0] >= 0 and h[1] >= 0 and h[0] + h[1] <= 2.0
    assert triangles_intersect(flat, vert)


def test_tri_tri_coplanar_overlap_counts():
    t1 = np.array([[0.0, 0, 0], [2, 0, 0], [0, 2, 0]])
    t2 = np.array([[0.5, 0.5, 0], [3, 0.5, 0], [0.5, 3, 0]])
    assert triangles_intersect(t1, t2)


def test_tri_tri_separated():
    t1 = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    t2 = np.array([[0.0, 0, 1], [1, 0, 1], [0, 1, 1]])
    assert not triangles_intersect(t1, t2)


def test_tri_tri_touching_counts():
    t1 = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    t2 = np.array([[0.0, 0, 0], [-1, 0, 1], [0, -1, 1]])
    assert triangles_intersect(t1, t2)


# --- normal consistency ---------------------------------------------------------


def test_consistency_identity_exactly_one():
    m = shapes.icosphere(1)
    vn = vertex_normals(m)
    assert normal_consistency(vn, m) == 1.0


def test_consistency_uniform_scale():
    m = shapes.icosphere(1)
    vn = vertex_normals(m)
    assert normal_consistency(vn, m.with_vertices(m.vertices * 2.0)) == 1.0
    assert normal_consistency(vn, m.with_vertices(m.vertices * 1.3)) == pytest.approx(
        1.0, abs=1e-9
    )


def test_consistency_flat_region_anisotropic_stretch():
    m = shapes.flat_square()
    vn = vertex_normals(m)
    stretched = m.with_vertices(m.vertices * np.array([2.0, 3.0, 1.0]))
    assert normal_consistency(vn, stretched) == 1.0


def test_consistency_count_mismatch():
    m = shapes.cube()
    with pytest.raises(MeshError, match="count"):
        normal_consistency(vertex_normals(m), shapes.flat_square())


def test_consistency_inverted_mesh_is_negative_one():
    # moving the square's corners so the loop is traversed backwards flips
    # every face normal
    m = shapes.flat_square(z=0.5)
    vn = vertex_normals(m)
    reversed_loop = m.with_vertices(m.vertices[[0, 3, 2, 1]])
    assert normal_consistency(vn, reversed_loop) == pytest.approx(-1.0, abs=1e-12)
