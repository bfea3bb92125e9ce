"""Part-level AABB generation by recursive priority-driven box splitting.

A cut is scored by how sharply the occupied cross-section silhouette changes
across it, scaled by the inverse box length on that axis; low scores mark good
splits. Boxes are split greedily, highest priority (lowest score) first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh
from .occupancy import OccupancyGrid, projection_grid

MIN_VERTICES_PER_BOX = 8
SLAB_WIDTH = 1


@dataclass
class AABB:
    """Axis-aligned box owning a subset of mesh vertices."""

    min: np.ndarray
    max: np.ndarray
    owned: np.ndarray  # sorted vertex indices

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float64)
        self.max = np.asarray(self.max, dtype=np.float64)
        self.owned = np.asarray(self.owned, dtype=np.int64)

    @property
    def lengths(self) -> np.ndarray:
        return self.max - self.min

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @classmethod
    def of_vertices(cls, vertices: np.ndarray, owned: np.ndarray) -> "AABB":
        pts = vertices[owned]
        return cls(pts.min(axis=0), pts.max(axis=0), np.sort(owned))


@dataclass
class CutCandidate:
    axis: int
    cut_position: float
    score: float
    # carried for tie-breaking: world length of the box along axis
    axis_length: float = field(default=0.0, compare=False)

    def sort_key(self) -> tuple:
        return (self.score, -self.axis_length, self.cut_position, self.axis)


def split_scores(grid: OccupancyGrid, box: AABB, axis: int) -> list[CutCandidate]:
    """Score every interior cell boundary of ``box`` along ``axis``.

    score = min(area_before, area_after) / max(...) / box_length; a boundary
    with exactly one empty slab scores 0 (a gap cut); boundaries where both
    slabs are empty are omitted. Boxes spanning fewer than 3 cells yield no
    candidates.
    """
    lo, hi = grid.cell_range(box.min, box.max)
    span = int(hi[axis] - lo[axis])
    if span < 3:
        return []
    length = float(box.lengths[axis])
    out = []
    areas = {}

    def slab_area(start: int) -> int:
        if start not in areas:
            areas[start] = projection_grid(grid, box.min, box.max, axis, start, SLAB_WIDTH).area
        return areas[start]

    for c in range(int(lo[axis]) + SLAB_WIDTH, int(hi[axis]) - SLAB_WIDTH + 1):
        a_prev = slab_area(c - SLAB_WIDTH)
        a_next = slab_area(c)
        if a_prev == 0 and a_next == 0:
            continue
        if a_prev == 0 or a_next == 0:
            score = 0.0
        else:
            score = (min(a_prev, a_next) / max(a_prev, a_next)) / length
        out.append(CutCandidate(axis, grid.boundary_position(axis, c), score, length))
    return out


def _side_counts(positions: np.ndarray, cut: float) -> tuple[int, int]:
    low = int(np.count_nonzero(positions <= cut))
    return low, len(positions) - low


def best_cut(
    grid: OccupancyGrid,
    box: AABB,
    vertices: np.ndarray,
    min_vertices: int = MIN_VERTICES_PER_BOX,
) -> CutCandidate | None:
    """Lowest-score feasible cut over all three axes, or None.

    A cut is feasible when both sides would own at least ``min_vertices``
    vertices. Ties break toward the longer axis, then the lower cut position,
    then axis order x < y < z.
    """
    best: CutCandidate | None = None
    for axis in range(3):
        positions = vertices[box.owned, axis]
        for cand in split_scores(grid, box, axis):
            n_low, n_high = _side_counts(positions, cand.cut_position)
            if n_low < min_vertices or n_high < min_vertices:
                continue
            if best is None or cand.sort_key() < best.sort_key():
                best = cand
    return best


def split_box(box: AABB, vertices: np.ndarray, cut: CutCandidate) -> tuple[AABB, AABB]:
    """Partition owned vertices at the cut plane (ties go to the low side) and
    tighten each child to its owned vertices."""
    positions = vertices[box.owned, cut.axis]
    low_mask = positions <= cut.cut_position
    low = box.owned[low_mask]
    high = box.owned[~low_mask]
    return AABB.of_vertices(vertices, low), AABB.of_vertices(vertices, high)


def generate_boxes(
    mesh: Mesh,
    grid: OccupancyGrid,
    target_count: int,
    min_vertices: int = MIN_VERTICES_PER_BOX,
) -> list[AABB]:
    """Greedy recursive splitting from the global AABB down to ``target_count``
    boxes (or until nothing is splittable).

    The box whose best cut has the lowest score is split first; a split
    replaces the parent in place with its two children, so results for target
    k and k+1 differ by exactly one box expansion.
    """
    if target_count < 1:
        raise ValueError(f"target_count must be >= 1, got {target_count}")
    if target_count > 16:
        raise ValueError(f"target_count must be <= 16, got {target_count}")
    v = mesh.vertices
    boxes = [AABB.of_vertices(v, np.arange(len(v)))]
    cuts: list[CutCandidate | None] = [best_cut(grid, boxes[0], v, min_vertices)]
    while len(boxes) < target_count:
        splittable = [i for i, c in enumerate(cuts) if c is not None]
        if not splittable:
            break
        i = min(splittable, key=lambda k: (cuts[k].sort_key(), k))
        low, high = split_box(boxes[i], v, cuts[i])
        boxes[i : i + 1] = [low, high]
        cuts[i : i + 1] = [
            best_cut(grid, low, v, min_vertices),
            best_cut(grid, high, v, min_vertices),
        ]
    return boxes


def boxes_to_json(boxes: list[AABB]) -> str:
    """Debug export for visualization fixtures."""
    return json.dumps(
        [
            {
                "min": [float(x) for x in b.min],
                "max": [float(x) for x in b.max],
                "vertex_count": int(len(b.owned)),
            }
            for b in boxes
        ],
        indent=2,
    )
