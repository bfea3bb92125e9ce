"""Objective-driven mesh deformation with part-level box deformers.

The pipeline builds an axis-aligned box decomposition of a mesh, links the
boxes into a constraint graph and spanning tree, and optimizes per-box scale
parameters with CMA-ES against a pluggable image or geometry scorer.
"""

from .boxsplit import AABB, best_cut, generate_boxes, split_scores
from .cmaes import BoundedEncoding, CmaState
from .defgraph import (
    BoxDefGraph,
    BoxDefTree,
    ConstraintSet,
    DeformParams,
    build_deformer,
    build_graph,
    build_tree,
    deform,
    precompute_constraints,
)
from .mesh import (
    Mesh,
    MeshError,
    VertexNormals,
    gaussian_curvature_change,
    load_obj,
    normal_consistency,
    save_obj,
    self_intersection_ratio,
    vertex_normals,
)
from .objective import (
    LossBreakdown,
    ObjectiveConfig,
    Scorer,
    ScoreRequest,
    ScoreResponse,
    clip_loss,
    evaluate,
    normal_loss,
    proxy_aspect_scorer,
    proxy_silhouette_scorer,
)
from .occupancy import OccupancyGrid, ProjectionGrid, projection_grid, voxelize
from .pipeline import RunConfig, RunReport, interpolate, report_metrics, run
from .render import Camera, Image, render, silhouette, view_set

__version__ = "0.1.0"

__all__ = [
    "AABB",
    "BoundedEncoding",
    "BoxDefGraph",
    "BoxDefTree",
    "Camera",
    "CmaState",
    "ConstraintSet",
    "DeformParams",
    "Image",
    "LossBreakdown",
    "Mesh",
    "MeshError",
    "ObjectiveConfig",
    "OccupancyGrid",
    "ProjectionGrid",
    "RunConfig",
    "RunReport",
    "ScoreRequest",
    "ScoreResponse",
    "Scorer",
    "VertexNormals",
    "best_cut",
    "build_deformer",
    "build_graph",
    "build_tree",
    "clip_loss",
    "deform",
    "evaluate",
    "gaussian_curvature_change",
    "generate_boxes",
    "interpolate",
    "load_obj",
    "normal_consistency",
    "normal_loss",
    "precompute_constraints",
    "projection_grid",
    "proxy_aspect_scorer",
    "proxy_silhouette_scorer",
    "render",
    "report_metrics",
    "run",
    "save_obj",
    "self_intersection_ratio",
    "silhouette",
    "split_scores",
    "vertex_normals",
    "view_set",
    "voxelize",
]
