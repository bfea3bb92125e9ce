"""Indexed triangle meshes: OBJ I/O, normals, and deformation-quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_DEGENERATE_AREA = 1e-12


class MeshError(ValueError):
    """Invalid mesh data (bad indices, degenerate faces, empty mesh)."""


class ObjParseError(MeshError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


@dataclass
class Mesh:
    """Triangle mesh with (n,3) float64 vertices and (m,3) int64 face indices.

    ``attributes`` holds optional per-vertex arrays that ride along unchanged
    through deformation.
    """

    vertices: np.ndarray
    faces: np.ndarray
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (n,3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError(f"faces must be (m,3), got {self.faces.shape}")
        if len(self.vertices) < 3:
            raise MeshError(f"mesh needs >= 3 vertices, got {len(self.vertices)}")
        if len(self.faces) < 1:
            raise MeshError("mesh needs >= 1 face")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise MeshError("face index out of range")
        f = self.faces
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise MeshError("degenerate face (repeated vertex index)")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def aabb_diagonal(self) -> float:
        lo, hi = self.aabb()
        return float(np.linalg.norm(hi - lo))

    def edges(self) -> np.ndarray:
        """Unique undirected vertex-index pairs appearing in faces, sorted."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        return Mesh(vertices, self.faces.copy(), dict(self.attributes))

    def copy(self) -> "Mesh":
        return Mesh(self.vertices.copy(), self.faces.copy(), dict(self.attributes))


@dataclass
class VertexNormals:
    """Per-vertex unit normals; rows of zeros mark vertices with no valid
    (non-degenerate) incident face."""

    normals: np.ndarray

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=np.float64)

    @property
    def valid(self) -> np.ndarray:
        return np.linalg.norm(self.normals, axis=1) > 0.5

    def __len__(self) -> int:
        return len(self.normals)


def load_obj(path) -> Mesh:
    """Parse a wavefront OBJ file into a triangle mesh.

    Polygons with more than three vertices are fan-triangulated around their
    first vertex. ``f i/t/n`` forms are accepted; texture and normal indices
    are ignored. Raises ObjParseError with the offending line number.
    """
    vertices: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line_no, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            kind = tokens[0]
            if kind == "v":
                if len(tokens) < 4:
                    raise ObjParseError(path, line_no, "vertex needs 3 coordinates")
                try:
                    vertices.append([float(t) for t in tokens[1:4]])
                except ValueError as exc:
                    raise ObjParseError(path, line_no, f"bad vertex coordinate: {exc}")
            elif kind == "f":
                if len(tokens) < 4:
                    raise ObjParseError(path, line_no, "face needs >= 3 vertices")
                idx = []
                for tok in tokens[1:]:
                    head = tok.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise ObjParseError(path, line_no, f"bad face index {tok!r}")
                    if i < 0:
                        i = len(vertices) + 1 + i
                    if i < 1 or i > len(vertices):
                        raise ObjParseError(path, line_no, f"face index {i} out of range")
                    idx.append(i - 1)
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
            # other record types (vn, vt, o, g, s, mtllib, usemtl, l) are ignored
    if not vertices or not faces:
        raise ObjParseError(path, 0, "empty mesh (no vertices or no faces)")
    try:
        return Mesh(np.array(vertices), np.array(faces, dtype=np.int64))
    except MeshError as exc:
        raise ObjParseError(path, 0, str(exc))


def save_obj(mesh: Mesh, path) -> None:
    """Write a mesh as ASCII OBJ. Coordinates use shortest exact float repr,
    so a load/save round trip reproduces positions bit-for-bit."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def _face_geometry(mesh: Mesh):
    """Returns (raw face normals, face areas)."""
    v = mesh.vertices
    f = mesh.faces
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    n = np.cross(e1, e2)
    areas = 0.5 * np.linalg.norm(n, axis=1)
    return n, areas


def vertex_normals(mesh: Mesh) -> VertexNormals:
    """Average unit normals of the faces incident to each vertex, normalized.

    Faces with area below 1e-12 are excluded; vertices left with nothing to
    average get a zero normal.
    """
    n, areas = _face_geometry(mesh)
    ok = areas >= _DEGENERATE_AREA
    unit = np.zeros_like(n)
    unit[ok] = n[ok] / (2.0 * areas[ok])[:, None]
    acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(acc, mesh.faces[ok, k], unit[ok])
    norms = np.linalg.norm(acc, axis=1)
    out = np.zeros_like(acc)
    nz = norms > 1e-12
    out[nz] = acc[nz] / norms[nz, None]
    return VertexNormals(out)


def _angle_deficits(mesh: Mesh) -> np.ndarray:
    """Discrete Gaussian curvature per vertex: 2*pi minus the sum of incident
    face corner angles. Degenerate faces are skipped."""
    v = mesh.vertices
    f = mesh.faces
    _, areas = _face_geometry(mesh)
    ok = areas >= _DEGENERATE_AREA
    deficits = np.full(len(v), 2.0 * math.pi)
    fo = f[ok]
    for corner in range(3):
        a = v[fo[:, corner]]
        b = v[fo[:, (corner + 1) % 3]]
        c = v[fo[:, (corner + 2) % 3]]
        u = b - a
        w = c - a
        cosang = np.einsum("ij,ij->i", u, w) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1)
        )
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(deficits, fo[:, corner], -ang)
    return deficits


def gaussian_curvature_change(original: Mesh, deformed: Mesh) -> float:
    """Mean absolute change of per-vertex angle deficit between two meshes of
    identical topology."""
    if original.n_vertices != deformed.n_vertices or not np.array_equal(
        original.faces, deformed.faces
    ):
        raise MeshError("topology mismatch: vertex/face structure must be identical")
    k0 = _angle_deficits(original)
    k1 = _angle_deficits(deformed)
    return float(np.mean(np.abs(k1 - k0)))


def normal_consistency(original_normals: VertexNormals, deformed: Mesh) -> float:
    """Mean cosine between original vertex normals and normals recomputed on
    the deformed mesh. Vertices with a zero normal on either side are excluded.

    The cosine is evaluated as 1 - ||n1 - n2||^2 / 2, which is exact for unit
    vectors and returns exactly 1.0 when the normals are bit-identical.
    """
    if len(original_normals) != deformed.n_vertices:
        raise MeshError(
            f"normal count {len(original_normals)} != vertex count {deformed.n_vertices}"
        )
    n0 = original_normals.normals
    n1 = vertex_normals(deformed).normals
    valid = (np.linalg.norm(n0, axis=1) > 0.5) & (np.linalg.norm(n1, axis=1) > 0.5)
    if not np.any(valid):
        return 1.0
    d = n0[valid] - n1[valid]
    cos = 1.0 - 0.5 * np.einsum("ij,ij->i", d, d)
    return float(np.mean(np.clip(cos, -1.0, 1.0)))


# --- triangle-triangle intersection -----------------------------------------


def _project_axis(n: np.ndarray) -> int:
    return int(np.argmax(np.abs(n)))


def _seg_seg_2d(p1, p2, q1, q2) -> bool:
    """Closed 2D segment intersection test."""
    d1 = p2 - p1
    d2 = q2 - q1
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    r = q1 - p1
    if denom == 0.0:
        # parallel: intersect only if collinear and overlapping
        if r[0] * d1[1] - r[1] * d1[0] != 0.0:
            return False
        axis = 0 if abs(d1[0]) >= abs(d1[1]) else 1
        lo1, hi1 = sorted((p1[axis], p2[axis]))
        lo2, hi2 = sorted((q1[axis], q2[axis]))
        return max(lo1, lo2) <= min(hi1, hi2)
    t = (r[0] * d2[1] - r[1] * d2[0]) / denom
    u = (r[0] * d1[1] - r[1] * d1[0]) / denom
    return 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0


def _point_in_tri_2d(p, a, b, c) -> bool:
    s1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    s2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
    s3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
    has_neg = (s1 < 0) or (s2 < 0) or (s3 < 0)
    has_pos = (s1 > 0) or (s2 > 0) or (s3 > 0)
    return not (has_neg and has_pos)


def _coplanar_tri_tri(t1, t2, n) -> bool:
    axis = _project_axis(n)
    keep = [k for k in range(3) if k != axis]
    a = t1[:, keep]
    b = t2[:, keep]
    for i in range(3):
        for j in range(3):
            if _seg_seg_2d(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3]):
                return True
    if _point_in_tri_2d(a[0], b[0], b[1], b[2]):
        return True
    if _point_in_tri_2d(b[0], a[0], a[1], a[2]):
        return True
    return False


def _interval_on_line(proj, dist):
    """Intersection interval of a triangle with the plane-crossing line.

    ``proj`` are the three vertex projections on the line direction, ``dist``
    the signed plane distances. Assumes not all distances share one sign.
    """
    d0, d1, d2 = dist
    if d0 * d1 > 0.0:
        lone = 2
    elif d0 * d2 > 0.0:
        lone = 1
    elif d1 * d2 > 0.0:
        lone = 0
    elif d0 != 0.0:
        lone = 0
    elif d1 != 0.0:
        lone = 1
    else:
        lone = 2
    others = [k for k in range(3) if k != lone]
    ts = []
    for k in others:
        denom = dist[lone] - dist[k]
        if denom == 0.0:
            ts.append(proj[k])
        else:
            ts.append(proj[lone] + (proj[k] - proj[lone]) * dist[lone] / denom)
    return min(ts), max(ts)


def triangles_intersect(t1: np.ndarray, t2: np.ndarray) -> bool:
    """Exact intersection test between two triangles given as (3,3) arrays.

    Touching counts as intersecting; coplanar overlap counts as intersecting.
    """
    t1 = np.asarray(t1, dtype=np.float64)
    t2 = np.asarray(t2, dtype=np.float64)
    n2 = np.cross(t2[1] - t2[0], t2[2] - t2[0])
    dv = (t1 - t2[0]) @ n2
    if np.all(dv > 0.0) or np.all(dv < 0.0):
        return False
    n1 = np.cross(t1[1] - t1[0], t1[2] - t1[0])
    du = (t2 - t1[0]) @ n1
    if np.all(du > 0.0) or np.all(du < 0.0):
        return False
    if np.all(dv == 0.0):
        if not np.any(n2):
            n2 = n1
        if not np.any(n2):
            return False  # both triangles geometrically degenerate
        return _coplanar_tri_tri(t1, t2, n2)
    line = np.cross(n1, n2)
    axis = _project_axis(line)
    i1 = _interval_on_line(t1[:, axis], dv)
    i2 = _interval_on_line(t2[:, axis], du)
    return max(i1[0], i2[0]) <= min(i1[1], i2[1])


def self_intersection_ratio(mesh: Mesh) -> float:
    """Fraction of triangles intersecting at least one triangle they share no
    vertex with. Candidate pairs are pruned with a uniform spatial hash; the
    pairwise test itself is exact."""
    v = mesh.vertices
    f = mesh.faces
    m = len(f)
    tris = v[f]  # (m, 3, 3)
    lo = tris.min(axis=1)
    hi = tris.max(axis=1)
    diag = mesh.aabb_diagonal()
    if diag <= 0.0:
        return 0.0
    cell = diag / 50.0
    origin = v.min(axis=0)
    buckets: dict[tuple[int, int, int], list[int]] = {}
    ilo = np.floor((lo - origin) / cell).astype(np.int64)
    ihi = np.floor((hi - origin) / cell).astype(np.int64)
    for t in range(m):
        for x in range(ilo[t, 0], ihi[t, 0] + 1):
            for y in range(ilo[t, 1], ihi[t, 1] + 1):
                for z in range(ilo[t, 2], ihi[t, 2] + 1):
                    buckets.setdefault((x, y, z), []).append(t)
    pairs = set()
    for members in buckets.values():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                pairs.add((members[a], members[b]))
    face_sets = [set(row) for row in f]
    hit = np.zeros(m, dtype=bool)
    for a, b in pairs:
        if hit[a] and hit[b]:
            continue
        if np.any(hi[a] < lo[b]) or np.any(hi[b] < lo[a]):
            continue
        if face_sets[a] & face_sets[b]:
            continue
        if triangles_intersect(tris[a], tris[b]):
            hit[a] = True
            hit[b] = True
    return float(np.count_nonzero(hit)) / m
