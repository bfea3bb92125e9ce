"""Surface voxelization of a mesh and per-slab 2D projection grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

AXES = ("x", "y", "z")


class DegenerateMeshError(ValueError):
    """Mesh AABB has zero extent along every axis; cannot size voxel cells."""


@dataclass
class OccupancyGrid:
    """Binary surface-occupancy grid with cubic cells.

    A cell is set iff some mesh triangle overlaps the cell's closed box.
    The grid covers the mesh AABB plus one padding cell on every side.
    """

    dims: tuple[int, int, int]
    origin: np.ndarray
    cell_size: float
    bits: np.ndarray  # bool, shape dims

    def cell_range(self, box_min, box_max) -> tuple[np.ndarray, np.ndarray]:
        """Half-open [lo, hi) index range of cells strictly inside a world box
        (touch-only cells excluded; the epsilon absorbs float noise)."""
        box_min = np.asarray(box_min, dtype=np.float64)
        box_max = np.asarray(box_max, dtype=np.float64)
        lo = np.floor((box_min - self.origin) / self.cell_size + 1e-9).astype(np.int64)
        hi = np.ceil((box_max - self.origin) / self.cell_size - 1e-9).astype(np.int64)
        lo = np.clip(lo, 0, np.array(self.dims) - 1)
        hi = np.clip(hi, lo + 1, np.array(self.dims))
        return lo, hi

    def boundary_position(self, axis: int, c: int) -> float:
        """World coordinate of cell boundary index ``c`` along ``axis``."""
        return float(self.origin[axis] + c * self.cell_size)

    def to_rle_text(self) -> str:
        """Debug dump: dims/origin/cell size plus run-length-encoded bits in
        C-order, for fixture diffing."""
        flat = self.bits.ravel()
        runs = []
        if len(flat):
            current = bool(flat[0])
            count = 0
            for b in flat:
                if bool(b) == current:
                    count += 1
                else:
                    runs.append(f"{int(current)}x{count}")
                    current = bool(b)
                    count = 1
            runs.append(f"{int(current)}x{count}")
        lines = [
            f"dims {self.dims[0]} {self.dims[1]} {self.dims[2]}",
            f"origin {self.origin[0]!r} {self.origin[1]!r} {self.origin[2]!r}",
            f"cell_size {self.cell_size!r}",
            "rle " + " ".join(runs),
        ]
        return "\n".join(lines) + "\n"


@dataclass
class ProjectionGrid:
    """2D occupancy projection of one slab of cells along an axis, restricted
    to a box's transverse cell window."""

    axis: int
    slab_range: tuple[int, int]
    bitmap: np.ndarray  # bool, 2D
    area: int

    def __post_init__(self):
        assert self.area == int(np.count_nonzero(self.bitmap))


def _tri_box_overlap(tri: np.ndarray, centers: np.ndarray, half: float) -> np.ndarray:
    """Vectorized separating-axis triangle/box overlap (closed boxes).

    ``tri`` is (3,3); ``centers`` is (k,3) cell centers with half-extent
    ``half``. Returns a boolean mask of overlapping cells.
    """
    v = tri[None, :, :] - centers[:, None, :]  # (k, 3, 3)
    alive = np.ones(len(centers), dtype=bool)

    # box face normals
    for ax in range(3):
        lo = v[:, :, ax].min(axis=1)
        hi = v[:, :, ax].max(axis=1)
        alive &= (lo <= half) & (hi >= -half)
    if not alive.any():
        return alive

    # triangle plane
    e0 = tri[1] - tri[0]
    e1 = tri[2] - tri[1]
    e2 = tri[0] - tri[2]
    n = np.cross(e0, e1)
    d = v[:, 0, :] @ n
    r = half * np.abs(n).sum()
    alive &= np.abs(d) <= r
    if not alive.any():
        return alive

    # 9 edge cross-product axes
    for edge in (e0, e1, e2):
        for ax in range(3):
            axis_vec = np.zeros(3)
            axis_vec[ax] = 1.0
            a = np.cross(edge, axis_vec)
            if not np.any(a):
                continue
            p = v @ a  # (k, 3)
            r = half * np.abs(a).sum()
            alive &= (p.min(axis=1) <= r) & (p.max(axis=1) >= -r)
            if not alive.any():
                return alive
    return alive


def voxelize(mesh: Mesh, resolution: int) -> OccupancyGrid:
    """Rasterize a mesh's surface into a binary grid.

    Cells are cubic, sized so the mesh's longest AABB axis spans
    ``resolution`` cells, with one layer of padding cells all around.
    """
    if not 8 <= resolution <= 512:
        raise ValueError(f"resolution must be in [8, 512], got {resolution}")
    lo, hi = mesh.aabb()
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0.0:
        raise DegenerateMeshError("mesh AABB has zero extent")
    cell = longest / resolution
    dims = tuple(int(np.ceil(extent[k] / cell - 1e-9)) + 2 for k in range(3))
    origin = lo - cell
    bits = np.zeros(dims, dtype=bool)
    half = cell / 2.0

    dims_arr = np.array(dims)
    for tri in mesh.vertices[mesh.faces]:
        tlo = np.floor((tri.min(axis=0) - origin) / cell - 1e-9).astype(np.int64)
        thi = np.floor((tri.max(axis=0) - origin) / cell + 1e-9).astype(np.int64)
        tlo = np.clip(tlo, 0, dims_arr - 1)
        thi = np.clip(thi, 0, dims_arr - 1)
        xs = np.arange(tlo[0], thi[0] + 1)
        ys = np.arange(tlo[1], thi[1] + 1)
        zs = np.arange(tlo[2], thi[2] + 1)
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        idx = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
        centers = origin + (idx + 0.5) * cell
        mask = _tri_box_overlap(tri, centers, half)
        sel = idx[mask]
        bits[sel[:, 0], sel[:, 1], sel[:, 2]] = True
    return OccupancyGrid(dims, origin, cell, bits)


def projection_grid(
    grid: OccupancyGrid, box_min, box_max, axis: int, slab_start: int, slab_width: int = 1
) -> ProjectionGrid:
    """Project the occupied voxels of slab [slab_start, slab_start+slab_width)
    along ``axis`` onto the transverse plane, restricted to the cells of the
    given world box."""
    lo, hi = grid.cell_range(box_min, box_max)
    if slab_width < 1:
        raise ValueError("slab_width must be >= 1")
    if slab_start < lo[axis] or slab_start + slab_width > hi[axis]:
        raise ValueError(
            f"slab [{slab_start},{slab_start + slab_width}) outside box cell range "
            f"[{lo[axis]},{hi[axis]}) on axis {AXES[axis]}"
        )
    sl = [slice(lo[0], hi[0]), slice(lo[1], hi[1]), slice(lo[2], hi[2])]
    sl[axis] = slice(slab_start, slab_start + slab_width)
    sub = grid.bits[tuple(sl)]
    bitmap = sub.any(axis=axis)
    return ProjectionGrid(axis, (slab_start, slab_start + slab_width), bitmap, int(np.count_nonzero(bitmap)))
