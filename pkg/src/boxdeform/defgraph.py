"""Box deformation graph: adjacency, spanning tree, frozen constraints, and
deformation execution.

Boxes scale independently about their centers; tree-edge operations translate
child subtrees to restore a frozen closest-pair vector between parent and
child boxes; graph-edge operations apply weighted per-vertex corrections that
smooth displacement mismatches across adjacent boxes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .boxsplit import AABB
from .mesh import Mesh

FACE_SAMPLES_PER_AXIS = 8
EPSILON_DIAG_FRACTION = 0.05
DEFAULT_SCALE_MIN = 1.0 / 3.0
DEFAULT_SCALE_MAX = 3.0


class GraphError(ValueError):
    pass


@dataclass
class TreeNode:
    """One node of the spanning tree: a set of box indices (singleton unless
    parents were merged), its parent/children links, and whether the edge to
    its parent carries a constraint (virtual component links do not)."""

    boxes: tuple[int, ...]
    parent: int | None
    children: tuple[int, ...]
    constrained: bool = True


@dataclass
class BoxDefTree:
    nodes: list[TreeNode]  # index 0 is the root; parents precede children

    @property
    def root(self) -> int:
        return 0

    def node_of_box(self, n_boxes: int) -> np.ndarray:
        out = np.full(n_boxes, -1, dtype=np.int64)
        for idx, node in enumerate(self.nodes):
            for b in node.boxes:
                out[b] = idx
        return out


@dataclass
class TreeEdgeConstraint:
    """Frozen closest pair between a parent node's box-surface samples and a
    child node's box-face centers."""

    child_node: int
    parent_box: int
    child_box: int
    p_parent: np.ndarray
    p_child: np.ndarray
    r_ori: np.ndarray


@dataclass
class EdgeFieldConstraint:
    """Directed graph-edge correspondence: vertices of ``dst_box`` matched to
    their nearest original-mesh vertices in ``src_box``."""

    src_box: int
    dst_box: int
    dst_verts: np.ndarray
    src_match: np.ndarray
    f_ori: np.ndarray  # src position - dst position, frozen
    weights: np.ndarray  # in (0, 0.5]


@dataclass
class ConstraintSet:
    tree_edges: dict[int, TreeEdgeConstraint]  # keyed by child tree-node index
    graph_edges: list[EdgeFieldConstraint]
    epsilon: float


@dataclass
class BoxDefGraph:
    boxes: list[AABB]
    owner: np.ndarray  # vertex index -> box index
    edges: list[tuple[int, int]]
    tree: BoxDefTree | None = None
    constraints: ConstraintSet | None = None

    @property
    def n_boxes(self) -> int:
        return len(self.boxes)

    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.boxes])

    def to_json(self) -> str:
        tree = []
        if self.tree is not None:
            tree = [
                {"boxes": list(n.boxes), "parent": n.parent, "constrained": n.constrained}
                for n in self.tree.nodes
            ]
        return json.dumps(
            {
                "nodes": [
                    {
                        "min": [float(x) for x in b.min],
                        "max": [float(x) for x in b.max],
                        "volume": b.volume,
                    }
                    for b in self.boxes
                ],
                "edges": [list(e) for e in self.edges],
                "tree": tree,
            },
            indent=2,
        )


@dataclass
class DeformParams:
    """Per-box componentwise scale multipliers, bounded to [s_min, s_max]."""

    scales: np.ndarray
    s_min: float = DEFAULT_SCALE_MIN
    s_max: float = DEFAULT_SCALE_MAX

    def __post_init__(self):
        self.scales = np.asarray(self.scales, dtype=np.float64)
        if self.scales.ndim != 2 or self.scales.shape[1] != 3:
            raise GraphError(f"scales must be (n_boxes, 3), got {self.scales.shape}")
        if np.any(self.scales < self.s_min - 1e-12) or np.any(self.scales > self.s_max + 1e-12):
            raise GraphError("scale component outside [s_min, s_max]")

    @classmethod
    def identity(cls, n_boxes: int) -> "DeformParams":
        return cls(np.ones((n_boxes, 3)))


def build_graph(mesh: Mesh, boxes: list[AABB]) -> BoxDefGraph:
    """Adjacency from mesh edges: boxes i and j are connected iff some face
    edge has one endpoint owned by each. Ownership must partition vertices."""
    owner = np.full(mesh.n_vertices, -1, dtype=np.int64)
    for idx, box in enumerate(boxes):
        if np.any(owner[box.owned] != -1):
            raise GraphError("vertex owned by more than one box")
        owner[box.owned] = idx
    if np.any(owner < 0):
        raise GraphError("vertex owned by no box")
    e = mesh.edges()
    oa, ob = owner[e[:, 0]], owner[e[:, 1]]
    crossing = oa != ob
    pairs = np.stack([np.minimum(oa, ob), np.maximum(oa, ob)], axis=1)[crossing]
    edges = sorted({(int(a), int(b)) for a, b in pairs})
    return BoxDefGraph(boxes, owner, edges)


class _BuildNode:
    __slots__ = ("boxes", "parent", "children", "constrained")

    def __init__(self, boxes, parent, constrained):
        self.boxes = list(boxes)
        self.parent = parent
        self.children = []
        self.constrained = constrained


def _bfs_component(adj, root_box, parent_node, constrained, discovered, box_node):
    """BFS one connected component, merging same-depth multi-parents.

    Returns the component's root build node.
    """
    root = _BuildNode([root_box], parent_node, constrained)
    if parent_node is not None:
        parent_node.children.append(root)
    discovered.add(root_box)
    box_node[root_box] = root
    level = [root]
    while level:
        candidates = sorted(
            {u for node in level for b in node.boxes for u in adj[b]} - discovered
        )
        next_level = []
        for u in candidates:
            parents = []
            for b in sorted(adj[u]):
                if b in discovered:
                    node = box_node[b]
                    if any(node is n for n in level) and not any(node is p for p in parents):
                        parents.append(node)
            # merge same-depth parents into the node holding the lowest box index
            target = min(parents, key=lambda n: min(n.boxes))
            for other in parents:
                if other is target:
                    continue
                target.boxes.extend(other.boxes)
                for ch in other.children:
                    ch.parent = target
                target.children.extend(other.children)
                if other.parent is not None:
                    other.parent.children = [
                        c for c in other.parent.children if c is not other
                    ]
                for b in other.boxes:
                    box_node[b] = target
                level = [n for n in level if n is not other]
            child = _BuildNode([u], target, True)
            target.children.append(child)
            discovered.add(u)
            box_node[u] = child
            next_level.append(child)
        level = next_level
    return root


def build_tree(graph: BoxDefGraph) -> BoxDefTree:
    """BFS spanning tree rooted at the largest-volume box.

    Neighbors are visited in ascending box-index order. When an undiscovered
    box is adjacent to two or more tree nodes at the current BFS depth, those
    nodes are merged into one compound node before the child is attached.
    Disconnected components become subtrees attached to the global root by
    unconstrained virtual edges.
    """
    n = graph.n_boxes
    adj: list[set[int]] = [set() for _ in range(n)]
    for a, b in graph.edges:
        adj[a].add(b)
        adj[b].add(a)
    volumes = [b.volume for b in graph.boxes]

    def largest(candidates):
        return min(candidates, key=lambda i: (-volumes[i], i))

    discovered: set[int] = set()
    box_node: dict[int, _BuildNode] = {}
    root = _bfs_component(adj, largest(range(n)), None, True, discovered, box_node)
    while len(discovered) < n:
        remaining = [i for i in range(n) if i not in discovered]
        # isolate the component containing the lowest remaining index
        comp = {remaining[0]}
        stack = [remaining[0]]
        while stack:
            b = stack.pop()
            for u in adj[b]:
                if u not in comp and u not in discovered:
                    comp.add(u)
                    stack.append(u)
        _bfs_component(adj, largest(comp), root, False, discovered, box_node)

    # freeze build nodes into BFS-indexed dataclass nodes
    order: list[_BuildNode] = []
    queue = [root]
    while queue:
        node = queue.pop(0)
        order.append(node)
        queue.extend(node.children)
    index = {id(node): i for i, node in enumerate(order)}
    nodes = [
        TreeNode(
            boxes=tuple(sorted(node.boxes)),
            parent=None if node.parent is None else index[id(node.parent)],
            children=tuple(index[id(c)] for c in node.children),
            constrained=node.constrained,
        )
        for node in order
    ]
    tree = BoxDefTree(nodes)
    graph.tree = tree
    return tree


def _box_face_samples(box: AABB, per_axis: int = FACE_SAMPLES_PER_AXIS) -> np.ndarray:
    """Equally spaced samples on all six faces: per_axis^2 points per face."""
    pts = []
    for axis in range(3):
        u, w = [k for k in range(3) if k != axis]
        us = np.linspace(box.min[u], box.max[u], per_axis)
        ws = np.linspace(box.min[w], box.max[w], per_axis)
        gu, gw = np.meshgrid(us, ws, indexing="ij")
        for bound in (box.min[axis], box.max[axis]):
            face = np.empty((per_axis * per_axis, 3))
            face[:, axis] = bound
            face[:, u] = gu.ravel()
            face[:, w] = gw.ravel()
            pts.append(face)
    return np.concatenate(pts)


def _box_face_centers(box: AABB) -> np.ndarray:
    c = box.center
    out = []
    for axis in range(3):
        for bound in (box.min[axis], box.max[axis]):
            p = c.copy()
            p[axis] = bound
            out.append(p)
    return np.array(out)


def _quantized_key(offset: np.ndarray, quantum: float) -> tuple:
    return tuple(int(round(float(x) / quantum)) for x in offset)


def _stable_closest_pair(samples, centers, scale):
    """Index pair minimizing distance, with ties (symmetric configurations)
    broken by the quantized relative vector and then by index. The relative
    vector is translation-invariant, so rebuilt constraints on a translated
    mesh freeze the same pair."""
    d2 = ((samples[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    d2min = float(d2.min())
    tol = (1e-6 * scale) ** 2 + 1e-9 * d2min
    quantum = max(1e-6 * scale, 1e-300)
    best_key = None
    best = (0, 0)
    for si, ci in np.argwhere(d2 <= d2min + tol):
        key = (*_quantized_key(samples[si] - centers[ci], quantum), int(si), int(ci))
        if best_key is None or key < best_key:
            best_key = key
            best = (int(si), int(ci))
    return best


def _stable_nearest(src_pos, src_global, dst_pos, scale):
    """Per-destination nearest source vertex with translation-invariant tie
    handling (quantized offset vector, then global source index)."""
    k = min(8, len(src_pos))
    kd = cKDTree(src_pos)
    d, nn = kd.query(dst_pos, k=k)
    if k == 1:
        return src_global[np.atleast_1d(nn)]
    tol = 1e-6 * scale
    quantum = max(1e-6 * scale, 1e-300)
    out = np.empty(len(dst_pos), dtype=np.int64)
    for i in range(len(dst_pos)):
        near = nn[i][d[i] <= d[i, 0] + tol]
        if len(near) == 1:
            out[i] = src_global[near[0]]
            continue
        best_key = None
        best = near[0]
        for j in near:
            key = (
                *_quantized_key(src_pos[j] - dst_pos[i], quantum),
                int(src_global[j]),
            )
            if best_key is None or key < best_key:
                best_key = key
                best = j
        out[i] = src_global[best]
    return out


def precompute_constraints(mesh: Mesh, graph: BoxDefGraph) -> ConstraintSet:
    """Freeze all constraint data on the original configuration.

    Tree edges: closest pair between the parent node's box-surface sample set
    and the child node's box-face centers. Graph edges: per-direction nearest
    vertex correspondences with their original offset field and decay weights
    0.5 * min(1, eps / |F|), eps = 0.05 * mesh AABB diagonal.
    """
    if graph.tree is None:
        raise GraphError("build_tree must run before precompute_constraints")
    diag = mesh.aabb_diagonal()
    eps = EPSILON_DIAG_FRACTION * diag
    tree_cons: dict[int, TreeEdgeConstraint] = {}
    for child_idx, node in enumerate(graph.tree.nodes):
        if node.parent is None or not node.constrained:
            continue
        parent = graph.tree.nodes[node.parent]
        samples, sample_box = [], []
        for b in parent.boxes:
            s = _box_face_samples(graph.boxes[b])
            samples.append(s)
            sample_box.append(np.full(len(s), b))
        samples = np.concatenate(samples)
        sample_box = np.concatenate(sample_box)
        centers, center_box = [], []
        for b in node.boxes:
            c = _box_face_centers(graph.boxes[b])
            centers.append(c)
            center_box.append(np.full(len(c), b))
        centers = np.concatenate(centers)
        center_box = np.concatenate(center_box)
        si, ci = _stable_closest_pair(samples, centers, diag)
        tree_cons[child_idx] = TreeEdgeConstraint(
            child_node=child_idx,
            parent_box=int(sample_box[si]),
            child_box=int(center_box[ci]),
            p_parent=samples[si].copy(),
            p_child=centers[ci].copy(),
            r_ori=samples[si] - centers[ci],
        )

    field_cons: list[EdgeFieldConstraint] = []
    v = mesh.vertices
    for i, j in graph.edges:
        for src, dst in ((i, j), (j, i)):
            src_idx = graph.boxes[src].owned
            dst_idx = graph.boxes[dst].owned
            match = _stable_nearest(v[src_idx], src_idx, v[dst_idx], diag)
            f_ori = v[match] - v[dst_idx]
            norms = np.linalg.norm(f_ori, axis=1)
            with np.errstate(divide="ignore"):
                w = 0.5 * np.where(norms > 0.0, np.minimum(1.0, eps / norms), 1.0)
            field_cons.append(
                EdgeFieldConstraint(src, dst, dst_idx, match, f_ori, w)
            )
    constraints = ConstraintSet(tree_cons, field_cons, eps)
    graph.constraints = constraints
    return constraints


def build_deformer(mesh: Mesh, boxes: list[AABB]) -> BoxDefGraph:
    """Convenience: adjacency graph, spanning tree, and frozen constraints."""
    graph = build_graph(mesh, boxes)
    build_tree(graph)
    precompute_constraints(mesh, graph)
    return graph


def _scaled(point: np.ndarray, scale: np.ndarray, center: np.ndarray) -> np.ndarray:
    # written as x + (s-1)(x-c) so identity scales are bit-exact
    return point + (scale - 1.0) * (point - center)


def node_translations(graph: BoxDefGraph, params: DeformParams) -> np.ndarray:
    """Root-to-leaf accumulated tree-edge translations, one per tree node."""
    tree = graph.tree
    centers = graph.centers()
    scales = params.scales
    T = np.zeros((len(tree.nodes), 3))
    for idx, node in enumerate(tree.nodes):
        if node.parent is None:
            continue
        if not node.constrained:
            T[idx] = T[node.parent]
            continue
        con = graph.constraints.tree_edges[idx]
        p_def = _scaled(con.p_parent, scales[con.parent_box], centers[con.parent_box])
        c_def = _scaled(con.p_child, scales[con.child_box], centers[con.child_box])
        T[idx] = T[node.parent] + (p_def - c_def) - con.r_ori
    return T


def _phase1(mesh: Mesh, graph: BoxDefGraph, params: DeformParams):
    """Scale every box about its center and translate whole subtrees so each
    frozen tree-edge pair keeps its original relative vector."""
    T = node_translations(graph, params)
    node_of_box = graph.tree.node_of_box(graph.n_boxes)
    centers = graph.centers()
    owner = graph.owner
    v = mesh.vertices
    s = params.scales[owner]
    c = centers[owner]
    v1 = v + (s - 1.0) * (v - c) + T[node_of_box[owner]]
    return v1, T


def iter_graph_corrections(v1: np.ndarray, constraints: ConstraintSet):
    """Yield (dst_verts, delta, f_delta) per directed graph edge, computed
    from the shared phase-1 snapshot ``v1``."""
    for con in constraints.graph_edges:
        f_def = v1[con.src_match] - v1[con.dst_verts]
        f_delta = f_def - con.f_ori
        yield con.dst_verts, con.weights[:, None] * f_delta, f_delta


def deform(
    mesh: Mesh,
    graph: BoxDefGraph,
    params: DeformParams,
    apply_graph_edges: bool = True,
) -> Mesh:
    """Execute a deformation; topology and attributes are preserved.

    Phase 1 scales boxes and applies tree-edge translations root to leaf;
    phase 2 computes all graph-edge corrections from the phase-1 snapshot and
    applies them simultaneously.
    """
    if graph.tree is None or graph.constraints is None:
        raise GraphError("graph must have tree and constraints (see build_deformer)")
    if len(params.scales) != graph.n_boxes:
        raise GraphError(
            f"params for {len(params.scales)} boxes, graph has {graph.n_boxes}"
        )
    v1, _ = _phase1(mesh, graph, params)
    if apply_graph_edges:
        corrections = np.zeros_like(v1)
        for dst, delta, _ in iter_graph_corrections(v1, graph.constraints):
            corrections[dst] += delta
        v1 = v1 + corrections
    return mesh.with_vertices(v1)


def tree_edge_residuals(mesh: Mesh, graph: BoxDefGraph, params: DeformParams) -> np.ndarray:
    """Per constrained tree edge, the distance by which the deformed frozen
    pair misses its original relative vector (should be ~0 by construction)."""
    T = node_translations(graph, params)
    centers = graph.centers()
    scales = params.scales
    out = []
    for child_idx, con in sorted(graph.constraints.tree_edges.items()):
        parent_idx = graph.tree.nodes[child_idx].parent
        p_fin = _scaled(con.p_parent, scales[con.parent_box], centers[con.parent_box]) + T[parent_idx]
        c_fin = _scaled(con.p_child, scales[con.child_box], centers[con.child_box]) + T[child_idx]
        out.append(np.linalg.norm((p_fin - c_fin) - con.r_ori))
    return np.array(out)
