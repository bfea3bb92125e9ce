import numpy as np
import pytest

from boxdeform import shapes
from boxdeform.boxsplit import (
    AABB,
    best_cut,
    boxes_to_json,
    generate_boxes,
    split_box,
    split_scores,
)
from boxdeform.occupancy import OccupancyGrid, voxelize
from oracles import oracle_best_cut, oracle_split_scores


def _solid_grid(nx, ny, nz, region, cell=1.0, origin=(0.0, 0.0, 0.0)):
    """Synthetic grid with a filled cuboid region of cells."""
    bits = np.zeros((nx, ny, nz), dtype=bool)
    (x0, x1), (y0, y1), (z0, z1) = region
    bits[x0:x1, y0:y1, z0:z1] = True
    return OccupancyGrid((nx, ny, nz), np.array(origin, dtype=float), cell, bits)


def _full_box(grid, region):
    (x0, x1), (y0, y1), (z0, z1) = region
    lo = grid.origin + np.array([x0, y0, z0]) * grid.cell_size
    hi = grid.origin + np.array([x1, y1, z1]) * grid.cell_size
    return AABB(lo, hi, np.array([], dtype=np.int64))


def test_homogeneous_block_scores_inverse_length():
    grid = _solid_grid(10, 6, 6, ((1, 9), (1, 5), (1, 5)))
    box = _full_box(grid, ((1, 9), (1, 5), (1, 5)))
    cands = split_scores(grid, box, 0)
    assert len(cands) == 7  # interior boundaries 2..8
    for c in cands:
        assert c.score == pytest.approx(1.0 / 8.0)  # ratio 1 over length 8


def test_one_empty_slab_scores_zero_and_both_empty_omitted():
    grid = _solid_grid(12, 4, 4, ((1, 4), (1, 3), (1, 3)))
    grid.bits[7:11, 1:3, 1:3] = True  # second blob; cells 4..6 empty
    box = _full_box(grid, ((1, 11), (1, 3), (1, 3)))
    cands = {round(c.cut_position): c.score for c in split_scores(grid, box, 0)}
    assert cands[4] == 0.0  # occupied then empty
    assert cands[7] == 0.0  # empty then occupied
    assert 5 not in cands and 6 not in cands  # both slabs empty: omitted


def test_thin_box_yields_no_candidates():
    grid = _solid_grid(8, 8, 8, ((1, 7), (1, 7), (1, 3)))
    box = _full_box(grid, ((1, 7), (1, 7), (1, 3)))
    assert split_scores(grid, box, 2) == []


def test_split_scores_match_bruteforce_on_dumbbell():
    m = shapes.dumbbell()
    grid = voxelize(m, 12)
    box = AABB.of_vertices(m.vertices, np.arange(m.n_vertices))
    for axis in range(3):
        got = [(c.cut_position, c.score) for c in split_scores(grid, box, axis)]
        want = oracle_split_scores(grid, box.min, box.max, axis)
        assert len(got) == len(want)
        for (gp, gs), (wp, ws) in zip(got, want):
            assert gp == pytest.approx(wp, abs=1e-12)
            assert gs == pytest.approx(ws, abs=1e-12)


def test_best_cut_matches_bruteforce_on_dumbbell():
    m = shapes.dumbbell()
    grid = voxelize(m, 12)
    box = AABB.of_vertices(m.vertices, np.arange(m.n_vertices))
    got = best_cut(grid, box, m.vertices)
    positions = [m.vertices[:, a] for a in range(3)]
    want = oracle_best_cut(grid, box.min, box.max, positions, 8)
    assert want is not None
    assert got.axis == want[1]
    assert got.cut_position == pytest.approx(want[2], abs=1e-12)
    assert got.score == pytest.approx(want[3], abs=1e-12)
    # the winning cut crosses the bar
    assert 4.0 < got.cut_position < 8.0


def test_best_cut_tiebreak_on_uniform_cube():
    grid = _solid_grid(8, 8, 8, ((1, 7), (1, 7), (1, 7)))
    rng = np.random.default_rng(5)
    verts = rng.uniform(1.0, 7.0, size=(40, 3))
    box = AABB(np.ones(3), np.full(3, 7.0), np.arange(40))
    cut = best_cut(grid, box, verts, min_vertices=1)
    # every candidate scores 1/6 and lengths tie, so the lowest cut position
    # wins, then axis order x < y < z
    assert cut.axis == 0
    assert cut.cut_position == pytest.approx(2.0)
    assert cut.score == pytest.approx(1.0 / 6.0)


def test_best_cut_vertex_guard():
    grid = _solid_grid(10, 6, 6, ((1, 9), (1, 5), (1, 5)))
    verts = np.array([[2.0, 2, 2], [3.0, 3, 3], [6.0, 2, 2], [7.0, 3, 3]])
    box = AABB(np.array([1.0, 1, 1]), np.array([9.0, 5, 5]), np.arange(4))
    assert best_cut(grid, box, verts, min_vertices=3) is None
    assert best_cut(grid, box, verts, min_vertices=2) is not None


def test_generate_boxes_target_one():
    m = shapes.dumbbell()
    grid = voxelize(m, 12)
    boxes = generate_boxes(m, grid, 1)
    assert len(boxes) == 1
    lo, hi = m.aabb()
    assert np.allclose(boxes[0].min, lo)
    assert np.allclose(boxes[0].max, hi)
    assert len(boxes[0].owned) == m.n_vertices


def test_generate_boxes_dumbbell_two_blobs():
    m = shapes.dumbbell()
    grid = voxelize(m, 12)
    boxes = generate_boxes(m, grid, 2)
    assert len(boxes) == 2
    mins = sorted(b.min[0] for b in boxes)
    assert mins == [0.0, 8.0]
    assert {len(b.owned) for b in boxes} == {12}


def test_generate_boxes_invalid_target():
    m = shapes.dumbbell()
    grid = voxelize(m, 12)
    with pytest.raises(ValueError):
        generate_boxes(m, grid, 0)
    with pytest.raises(ValueError):
        generate_boxes(m, grid, 17)


def _oracle_greedy(mesh, grid, target, min_vertices):
    """Independent greedy splitter driven by the brute-force score oracle."""
    verts = mesh.vertices

    def tight(owned):
        pts = verts[owned]
        return pts.min(axis=0), pts.max(axis=0), np.sort(owned)

    boxes = [tight(np.arange(len(verts)))]

    def cut_of(box):
        lo, hi, owned = box
        positions = [verts[owned, a] for a in range(3)]
        return oracle_best_cut(grid, lo, hi, positions, min_vertices)

    cuts = [cut_of(boxes[0])]
    while len(boxes) < target:
        candidates = [i for i, c in enumerate(cuts) if c is not None]
        if not candidates:
            break
        i = min(candidates, key=lambda k: (cuts[k][0], k))
        _, axis, pos, _ = cuts[i]
        lo, hi, owned = boxes[i]
        mask = verts[owned, axis] <= pos
        low, high = tight(owned[mask]), tight(owned[~mask])
        boxes[i : i + 1] = [low, high]
        cuts[i : i + 1] = [cut_of(low), cut_of(high)]
    return boxes


def test_generate_boxes_cross_matches_oracle_greedy():
    m = shapes.airplane_cross()
    grid = voxelize(m, 24)
    got = generate_boxes(m, grid, 3, min_vertices=4)
    want = _oracle_greedy(m, grid, 3, min_vertices=4)
    assert len(got) == len(want) == 3
    for g, (lo, hi, owned) in zip(got, want):
        assert np.allclose(g.min, lo)
        assert np.allclose(g.max, hi)
        assert np.array_equal(g.owned, owned)
    # the wing region was split from the body arms at the silhouette jumps:
    # the middle box tightens to exactly the wing span x in [-1, 1]
    boxes = sorted(got, key=lambda b: b.min[0])
    assert boxes[1].min[0] == pytest.approx(-1.0)
    assert boxes[1].max[0] == pytest.approx(1.0)
    assert len(boxes[1].owned) == 16
    assert len(boxes[0].owned) == len(boxes[2].owned) == 4


def test_generate_boxes_partition_and_tightness():
    m = shapes.table()
    grid = voxelize(m, 32)
    boxes = generate_boxes(m, grid, 5)
    owned_all = np.concatenate([b.owned for b in boxes])
    assert len(owned_all) == m.n_vertices
    assert len(np.unique(owned_all)) == m.n_vertices
    for b in boxes:
        pts = m.vertices[b.owned]
        assert np.abs(pts.min(axis=0) - b.min).max() <= 1e-9
        assert np.abs(pts.max(axis=0) - b.max).max() <= 1e-9
        assert np.all(pts >= b.min - 1e-9) and np.all(pts <= b.max + 1e-9)


def test_generate_boxes_deterministic():
    m = shapes.table()
    grid = voxelize(m, 32)
    a = generate_boxes(m, grid, 4)
    b = generate_boxes(m, grid, 4)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert np.array_equal(x.min, y.min)
        assert np.array_equal(x.owned, y.owned)


def test_generate_boxes_greedy_k_plus_one_property():
    m = shapes.table()
    grid = voxelize(m, 32)
    k3 = generate_boxes(m, grid, 3)
    k4 = generate_boxes(m, grid, 4)
    # exactly one box of k3 is replaced in place by its two children
    i = 0
    while i < len(k3) and np.array_equal(k3[i].owned, k4[i].owned):
        i += 1
    assert i < len(k3)
    child_union = np.sort(np.concatenate([k4[i].owned, k4[i + 1].owned]))
    assert np.array_equal(child_union, k3[i].owned)
    for j in range(i + 1, len(k3)):
        assert np.array_equal(k3[j].owned, k4[j + 1].owned)


def test_best_cut_minimal_over_candidates():
    m = shapes.dumbbell()
    grid = voxelize(m, 12)
    box = AABB.of_vertices(m.vertices, np.arange(m.n_vertices))
    cut = best_cut(grid, box, m.vertices)
    for axis in range(3):
        for cand in split_scores(grid, box, axis):
            assert cut.score <= cand.score + 1e-15


def test_split_box_ties_go_low():
    verts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]])
    box = AABB.of_vertices(verts, np.arange(4))
    from boxdeform.boxsplit import CutCandidate

    low, high = split_box(box, verts, CutCandidate(0, 1.0, 0.1, 3.0))
    assert np.array_equal(low.owned, [0, 1])  # vertex exactly at the cut goes low
    assert np.array_equal(high.owned, [2, 3])


def test_boxes_json_export():
    m = shapes.dumbbell()
    grid = voxelize(m, 12)
    boxes = generate_boxes(m, grid, 2)
    import json

    data = json.loads(boxes_to_json(boxes))
    assert len(data) == 2
    assert set(data[0]) == {"min", "max", "vertex_count"}
    assert data[0]["vertex_count"] == 12
