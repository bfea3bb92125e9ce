"""Scalar deformation objective: image-text term plus normal-consistency term.

Scorers are pluggable. The built-in proxies are deterministic and need no
network or neural model; remote scorers speak a small JSON protocol over HTTP
or a child process's standard streams.
"""

from __future__ import annotations

import base64
import json
import subprocess
import threading
from dataclasses import dataclass, field

import numpy as np
import requests

from .defgraph import BoxDefGraph, DeformParams, deform
from .mesh import Mesh, VertexNormals, normal_consistency, vertex_normals
from .render import Camera, DEFAULT_BACKGROUNDS, Image, render, silhouette, view_set

SCORE_RETRIES = 2  # retries after the first failed attempt


class ScorerError(RuntimeError):
    """A scorer failed after retries; aborts the optimization run."""


@dataclass
class ScoreRequest:
    prompt: str
    images: list[bytes]  # PNG blobs
    # local-only extras for proxy scorers (never sent over the wire):
    # deformed AABB, per-image view index and background color
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be nonempty")
        if not self.images:
            raise ValueError("need at least one image")

    def to_wire(self) -> bytes:
        payload = {
            "prompt": self.prompt,
            "images": [base64.b64encode(img).decode("ascii") for img in self.images],
        }
        return json.dumps(payload, separators=(",", ":"), sort_keys=True).encode("utf-8")


@dataclass
class ScoreResponse:
    similarities: list[float]

    @classmethod
    def from_wire(cls, data: bytes) -> "ScoreResponse":
        payload = json.loads(data)
        sims = payload["similarities"]
        if not isinstance(sims, list):
            raise ScorerError("malformed response: similarities must be a list")
        return cls([float(s) for s in sims])


@dataclass
class LossBreakdown:
    total: float
    clip_term: float
    normal_term: float
    per_view: list[float]


class Scorer:
    """score(ScoreRequest) -> ScoreResponse. ``concurrent_safe`` says whether
    score may be called from several threads at once; if not, the runner
    serializes calls."""

    concurrent_safe = True

    def score(self, request: ScoreRequest) -> ScoreResponse:  # pragma: no cover
        raise NotImplementedError


def clip_loss(similarities) -> float:
    """Negative mean similarity over views."""
    sims = list(similarities)
    if not sims:
        raise ValueError("need at least one similarity")
    return -float(np.mean(sims))


def normal_loss(original_normals: VertexNormals, deformed: Mesh, weight: float) -> float:
    """weight * (1 - mean normal cosine); zero iff normals are fully preserved."""
    if weight < 0:
        raise ValueError("weight must be >= 0")
    return weight * (1.0 - normal_consistency(original_normals, deformed))


@dataclass
class ObjectiveConfig:
    """Frozen evaluation context: cameras anchored to the source mesh, the
    background sweep, and the source normals the consistency term compares to."""

    cameras: list[Camera]
    backgrounds: tuple = DEFAULT_BACKGROUNDS
    normal_weight: float = 1.0
    original_normals: VertexNormals | None = None

    @classmethod
    def for_mesh(
        cls,
        mesh: Mesh,
        n_views: int = 4,
        elevation: float = 20.0,
        size: int = 224,
        backgrounds=DEFAULT_BACKGROUNDS,
        normal_weight: float = 1.0,
    ) -> "ObjectiveConfig":
        cams = [c.anchored(mesh) for c in view_set(n_views, elevation, size=size)]
        return cls(cams, tuple(backgrounds), normal_weight, vertex_normals(mesh))


def render_views(mesh: Mesh, cfg: ObjectiveConfig) -> tuple[list[Image], list[int], list[tuple]]:
    """All camera/background combinations, with per-image view index and
    background bookkeeping for the proxies."""
    images, views, bgs = [], [], []
    for vi, cam in enumerate(cfg.cameras):
        for bg in cfg.backgrounds:
            images.append(render(mesh, cam, bg))
            views.append(vi)
            bgs.append(tuple(bg))
    return images, views, bgs


def score_with_retry(scorer: Scorer, request: ScoreRequest) -> ScoreResponse:
    last: Exception | None = None
    for _ in range(1 + SCORE_RETRIES):
        try:
            response = scorer.score(request)
            if len(response.similarities) != len(request.images):
                raise ScorerError(
                    f"scorer returned {len(response.similarities)} similarities "
                    f"for {len(request.images)} images"
                )
            return response
        except Exception as exc:  # noqa: BLE001 - retry any scorer failure
            last = exc
    raise ScorerError(f"scorer failed after {1 + SCORE_RETRIES} attempts: {last}")


def evaluate(
    mesh: Mesh,
    graph: BoxDefGraph,
    params: DeformParams,
    scorer: Scorer,
    prompt: str,
    cfg: ObjectiveConfig,
) -> LossBreakdown:
    """Deform, render all views, score, and assemble the total loss."""
    deformed = deform(mesh, graph, params)
    images, views, bgs = render_views(deformed, cfg)
    lo, hi = deformed.aabb()
    request = ScoreRequest(
        prompt=prompt,
        images=[img.to_png() for img in images],
        metadata={
            "aabb_min": [float(x) for x in lo],
            "aabb_max": [float(x) for x in hi],
            "views": views,
            "backgrounds": bgs,
        },
    )
    response = score_with_retry(scorer, request)
    c = clip_loss(response.similarities)
    normals = cfg.original_normals if cfg.original_normals is not None else vertex_normals(mesh)
    n = normal_loss(normals, deformed, cfg.normal_weight)
    return LossBreakdown(c + n, c, n, list(response.similarities))


# --- proxy scorers -----------------------------------------------------------


class AspectProxyScorer(Scorer):
    """Similarity from how closely the deformed AABB's scale-free extent
    ratios match a target: exp(-||log r - log r_target||^2), in (0, 1].
    Ratios are extents divided by their geometric mean, so uniform scaling is
    invisible. Ignores the prompt and image contents (uses request metadata)."""

    def __init__(self, target_ratios):
        t = np.asarray(target_ratios, dtype=np.float64)
        if t.shape != (3,) or np.any(t <= 0):
            raise ValueError("target_ratios must be 3 positive reals")
        self.target_log_ratio = np.log(t) - np.mean(np.log(t))

    @staticmethod
    def log_ratio(lo, hi) -> np.ndarray:
        extents = np.asarray(hi, dtype=np.float64) - np.asarray(lo, dtype=np.float64)
        logs = np.log(np.maximum(extents, 1e-300))
        return logs - logs.mean()

    def score(self, request: ScoreRequest) -> ScoreResponse:
        lo = request.metadata["aabb_min"]
        hi = request.metadata["aabb_max"]
        d = self.log_ratio(lo, hi) - self.target_log_ratio
        sim = float(np.exp(-float(d @ d)))
        return ScoreResponse([sim] * len(request.images))


class SilhouetteProxyScorer(Scorer):
    """Similarity = IoU between each image's silhouette and a target mask for
    that image's view (looked up through request metadata)."""

    def __init__(self, target_masks):
        self.target_masks = [np.asarray(m, dtype=bool) for m in target_masks]
        if not self.target_masks:
            raise ValueError("need at least one target mask")

    def score(self, request: ScoreRequest) -> ScoreResponse:
        views = request.metadata["views"]
        bgs = request.metadata["backgrounds"]
        sims = []
        for img_bytes, vi, bg in zip(request.images, views, bgs):
            if vi >= len(self.target_masks):
                raise ScorerError(
                    f"view index {vi} has no target mask ({len(self.target_masks)} masks)"
                )
            target = self.target_masks[vi]
            img = Image.from_png(img_bytes)
            mask = silhouette(img, tuple(bg))
            if mask.shape != target.shape:
                raise ScorerError(
                    f"mask size {mask.shape} does not match target {target.shape}"
                )
            union = np.count_nonzero(mask | target)
            inter = np.count_nonzero(mask & target)
            sims.append(1.0 if union == 0 else inter / union)
        return ScoreResponse(sims)


def proxy_aspect_scorer(target_ratios) -> AspectProxyScorer:
    return AspectProxyScorer(target_ratios)


def proxy_silhouette_scorer(target_masks) -> SilhouetteProxyScorer:
    return SilhouetteProxyScorer(target_masks)


def silhouette_targets(mesh: Mesh, cfg: ObjectiveConfig) -> list[np.ndarray]:
    """Target masks for each view of ``cfg``: silhouettes of ``mesh`` rendered
    with the first background color."""
    bg = tuple(cfg.backgrounds[0])
    return [silhouette(render(mesh, cam, bg), bg) for cam in cfg.cameras]


# --- remote scorers ----------------------------------------------------------


class HttpScorer(Scorer):
    """POST /score with {"prompt", "images": [base64 PNG]} JSON; expects
    {"similarities": [...]} back."""

    concurrent_safe = False

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def score(self, request: ScoreRequest) -> ScoreResponse:
        resp = requests.post(
            self.endpoint + "/score",
            data=request.to_wire(),
            headers={"Content-Type": "application/json"},
            timeout=self.timeout,
        )
        if resp.status_code != 200:
            raise ScorerError(f"scorer HTTP {resp.status_code}: {resp.text[:200]}")
        return ScoreResponse.from_wire(resp.content)


class SubprocessScorer(Scorer):
    """Line-delimited JSON over a child process's stdin/stdout, one request
    and one response per line, with the same payloads as the HTTP protocol."""

    concurrent_safe = False

    def __init__(self, command: list[str]):
        self.command = list(command)
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
            )
        return self._proc

    def score(self, request: ScoreRequest) -> ScoreResponse:
        with self._lock:
            proc = self._ensure()
            proc.stdin.write(request.to_wire().decode("utf-8") + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
            if not line:
                raise ScorerError("scorer process closed its stdout")
            return ScoreResponse.from_wire(line.encode("utf-8"))

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
