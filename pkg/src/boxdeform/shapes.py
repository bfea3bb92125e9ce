"""Procedural meshes used by the test suite, demos, and documentation.

All shapes are axis-aligned where possible so occupancy and intersection
behavior can be reasoned about exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .mesh import Mesh

_BOX_QUADS = (
    (0, 1, 3, 2),  # -x
    (4, 6, 7, 5),  # +x
    (0, 4, 5, 1),  # -y
    (2, 3, 7, 6),  # +y
    (0, 2, 6, 4),  # -z
    (1, 5, 7, 3),  # +z
)


def _quads_to_tris(quads, offset=0):
    tris = []
    for a, b, c, d in quads:
        tris.append((a + offset, b + offset, c + offset))
        tris.append((a + offset, c + offset, d + offset))
    return tris


def box_mesh(lo, hi) -> Mesh:
    """Closed axis-aligned box with outward-facing triangles."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    verts = np.array(
        [
            [(lo, hi)[i >> 2][0], (lo, hi)[(i >> 1) & 1][1], (lo, hi)[i & 1][2]]
            for i in range(8)
        ]
    )
    return Mesh(verts, np.array(_quads_to_tris(_BOX_QUADS), dtype=np.int64))


def merge_meshes(meshes) -> Mesh:
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.n_vertices
    return Mesh(np.concatenate(verts), np.concatenate(faces))


def cube(size: float = 1.0, origin=(0.0, 0.0, 0.0)) -> Mesh:
    o = np.asarray(origin, dtype=np.float64)
    return box_mesh(o, o + size)


class _PanelBuilder:
    """Welded union of gridded axis-aligned rectangles. Coordinates that are
    exact binary fractions weld reliably via float equality."""

    def __init__(self):
        self.verts: list[tuple[float, float, float]] = []
        self.index: dict[tuple[float, float, float], int] = {}
        self.faces: list[tuple[int, int, int]] = []

    def _vid(self, p) -> int:
        key = (float(p[0]), float(p[1]), float(p[2]))
        if key not in self.index:
            self.index[key] = len(self.verts)
            self.verts.append(key)
        return self.index[key]

    def panel(self, axis, level, ulo, uhi, vlo, vhi, step, flip=False):
        """Rectangle at ``level`` on ``axis`` spanning [ulo,uhi] x [vlo,vhi]
        on the two other axes, split into ~step-sized quads. Unflipped normal
        points along +axis."""
        u_ax, v_ax = (axis + 1) % 3, (axis + 2) % 3
        nu = max(1, round((uhi - ulo) / step))
        nv = max(1, round((vhi - vlo) / step))
        for i in range(nu):
            for j in range(nv):
                ids = []
                for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    p = [0.0, 0.0, 0.0]
                    p[axis] = level
                    p[u_ax] = ulo + (i + du) * (uhi - ulo) / nu
                    p[v_ax] = vlo + (j + dv) * (vhi - vlo) / nv
                    ids.append(self._vid(p))
                a, b, c, d = ids
                if flip:
                    a, b, c, d = a, d, c, b
                self.faces += [(a, b, c), (a, c, d)]

    def mesh(self) -> Mesh:
        return Mesh(np.array(self.verts), np.array(self.faces, dtype=np.int64))


def two_cube_stack(step: float = 0.5) -> Mesh:
    """Two stacked cubes forming one welded surface: a 2x2x1 base with a
    1x1x1 cube centered on top. Faces are gridded so vertices cover the whole
    surface, and the cross-section jump at the junction makes the box splitter
    separate the two cubes."""
    b = _PanelBuilder()
    b.panel(2, 0.0, 0.0, 2.0, 0.0, 2.0, step, flip=True)  # bottom cap
    for axis in (0, 1):
        b.panel(axis, 0.0, *((0.0, 2.0, 0.0, 1.0) if axis == 0 else (0.0, 1.0, 0.0, 2.0)), step, flip=True)
        b.panel(axis, 2.0, *((0.0, 2.0, 0.0, 1.0) if axis == 0 else (0.0, 1.0, 0.0, 2.0)), step)
    # ledge around the top cube at z = 1
    b.panel(2, 1.0, 0.0, 0.5, 0.0, 2.0, step)
    b.panel(2, 1.0, 1.5, 2.0, 0.0, 2.0, step)
    b.panel(2, 1.0, 0.5, 1.5, 0.0, 0.5, step)
    b.panel(2, 1.0, 0.5, 1.5, 1.5, 2.0, step)
    for axis in (0, 1):
        b.panel(axis, 0.5, *((0.5, 1.5, 1.0, 2.0) if axis == 0 else (1.0, 2.0, 0.5, 1.5)), step, flip=True)
        b.panel(axis, 1.5, *((0.5, 1.5, 1.0, 2.0) if axis == 0 else (1.0, 2.0, 0.5, 1.5)), step)
    b.panel(2, 2.0, 0.5, 1.5, 0.5, 1.5, step)  # top cap
    return b.mesh()


def dumbbell() -> Mesh:
    """Two 4x4x4 blocks joined by a thin 4-unit bar along x. At a voxel
    resolution of 12 (cell size 1) the bar's cross-section occupies exactly
    one transverse cell."""
    a = box_mesh((0.0, 0.0, 0.0), (4.0, 4.0, 4.0))
    bar = box_mesh((4.0, 1.25, 1.25), (8.0, 1.75, 1.75))
    b = box_mesh((8.0, 0.0, 0.0), (12.0, 4.0, 4.0))
    return merge_meshes([a, bar, b])


def airplane_cross() -> Mesh:
    """Long segmented body along x with two perpendicular wing boxes along y.

    Wing inner faces reuse the body's ring vertices at x = +/-1, so face edges
    bridge body and wings (but the wings never touch each other).
    """
    xs = (-6.0, -1.0, 1.0, 6.0)
    yz = ((-0.5, -0.4), (0.5, -0.4), (0.5, 0.4), (-0.5, 0.4))
    verts = [(x, y, z) for x in xs for (y, z) in yz]
    faces = []
    for r in range(3):
        base = 4 * r
        for k in range(4):
            a, b = base + k, base + (k + 1) % 4
            faces += _quads_to_tris([(a, b, b + 4, a + 4)])
    faces += _quads_to_tris([(0, 3, 2, 1)])  # -x cap
    faces += _quads_to_tris([(12, 13, 14, 15)])  # +x cap

    def wing(inner, outer_y):
        base = len(verts)
        i_bl, i_tl, i_br, i_tr = inner  # (x=-1,z-), (x=-1,z+), (x=+1,z-), (x=+1,z+)
        verts.extend(
            [(-1.0, outer_y, -0.4), (-1.0, outer_y, 0.4), (1.0, outer_y, -0.4), (1.0, outer_y, 0.4)]
        )
        o_bl, o_tl, o_br, o_tr = base, base + 1, base + 2, base + 3
        if outer_y > 0:
            quads = [
                (o_bl, o_tl, o_tr, o_br),  # +y cap
                (i_bl, i_tl, o_tl, o_bl),  # -x side
                (i_br, o_br, o_tr, i_tr),  # +x side
                (i_bl, o_bl, o_br, i_br),  # -z side
                (i_tl, i_tr, o_tr, o_tl),  # +z side
            ]
        else:
            quads = [
                (o_bl, o_br, o_tr, o_tl),  # -y cap
                (i_bl, o_bl, o_tl, i_tl),  # -x side
                (i_br, i_tr, o_tr, o_br),  # +x side
                (i_bl, i_br, o_br, o_bl),  # -z side
                (i_tl, o_tl, o_tr, i_tr),  # +z side
            ]
        return _quads_to_tris(quads)

    # ring vertex index for (x index r, corner k) is 4r + k; corners:
    # k=0 (y-,z-), k=1 (y+,z-), k=2 (y+,z+), k=3 (y-,z+)
    faces += wing((4 + 1, 4 + 2, 8 + 1, 8 + 2), 4.0)  # +y wing on y=+0.5 corners
    faces += wing((4 + 0, 4 + 3, 8 + 0, 8 + 3), -4.0)  # -y wing on y=-0.5 corners
    return Mesh(np.array(verts), np.array(faces, dtype=np.int64))


def table() -> Mesh:
    top = box_mesh((0.0, 0.0, 3.0), (4.0, 4.0, 3.2))
    legs = []
    for x in (0.2, 3.5):
        for y in (0.2, 3.5):
            legs.append(box_mesh((x, y, 0.0), (x + 0.3, y + 0.3, 3.0)))
    return merge_meshes([top] + legs)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> Mesh:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return Mesh(radius * np.array(verts), np.array(faces, dtype=np.int64))


def flat_square(z: float = 0.5) -> Mesh:
    verts = np.array([(0.0, 0.0, z), (1.0, 0.0, z), (1.0, 1.0, z), (0.0, 1.0, z)])
    faces = np.array([(0, 1, 2), (0, 2, 3)], dtype=np.int64)
    return Mesh(verts, faces)


def lifted_square(height: float = 0.5) -> Mesh:
    """Unit square fanned around a center vertex lifted by ``height``."""
    verts = np.array(
        [
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (1.0, 1.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.5, 0.5, height),
        ]
    )
    faces = np.array([(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)], dtype=np.int64)
    return Mesh(verts, faces)


def crossing_pair() -> Mesh:
    """Four triangles: one interpenetrating pair sharing no vertices, plus two
    far-away triangles. Self-intersection ratio is exactly 2/4."""
    verts = np.array(
        [
            (0.0, 0.0, 0.0), (2.0, 0.0, 0.0), (0.0, 2.0, 0.0),
            (0.5, 0.4, -0.5), (0.5, 0.6, -0.5), (0.5, 0.5, 0.5),
            (10.0, 0.0, 0.0), (11.0, 0.0, 0.0), (10.0, 1.0, 0.0),
            (20.0, 0.0, 0.0), (21.0, 0.0, 0.0), (20.0, 1.0, 0.0),
        ]
    )
    faces = np.array([(0, 1, 2), (3, 4, 5), (6, 7, 8), (9, 10, 11)], dtype=np.int64)
    return Mesh(verts, faces)


def shared_vertex_crossing() -> Mesh:
    """Two triangles that share one vertex and would otherwise cross; the
    shared-vertex exclusion makes the self-intersection ratio 0."""
    verts = np.array(
        [
            (0.0, 0.0, 0.0), (2.0, 0.0, 0.0), (0.0, 2.0, 0.0),
            (0.5, 0.5, -1.0), (0.6, 0.6, 1.0),
        ]
    )
    faces = np.array([(0, 1, 2), (0, 3, 4)], dtype=np.int64)
    return Mesh(verts, faces)
