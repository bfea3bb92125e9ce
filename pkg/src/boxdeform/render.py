"""Deterministic software rasterizer for multi-view scoring images.

Fixed-function float pipeline: perspective projection, z-buffer, flat grey
Lambertian shading with a headlight along the camera axis. No sampling and no
anti-aliasing, so identical inputs produce bit-identical images.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image as PILImage

from .mesh import Mesh

DEFAULT_IMAGE_SIZE = 224
DEFAULT_DISTANCE = 2.2  # multiples of the mesh AABB diagonal
DEFAULT_FOV = 40.0
DEFAULT_ELEVATION = 20.0
AZIMUTH_OFFSET = 45.0

ALBEDO = 0.7
AMBIENT = 0.25

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
ORANGE = (255, 165, 0)
DEFAULT_BACKGROUNDS = (WHITE, BLACK, ORANGE)


@dataclass(frozen=True)
class Camera:
    """Orbit camera: azimuth/elevation in degrees, distance in multiples of
    the target mesh's AABB diagonal. When ``center``/``diagonal`` are unset
    the camera frames whatever mesh it renders; anchoring freezes the framing
    (used so a deformed mesh is viewed exactly like its source)."""

    azimuth: float
    elevation: float
    distance: float = DEFAULT_DISTANCE
    fov: float = DEFAULT_FOV
    size: int = DEFAULT_IMAGE_SIZE
    center: tuple[float, float, float] | None = None
    diagonal: float | None = None

    def __post_init__(self):
        if self.size < 32:
            raise ValueError(f"image size must be >= 32, got {self.size}")
        if self.distance <= 0:
            raise ValueError("camera distance must be positive")

    def anchored(self, mesh: Mesh) -> "Camera":
        lo, hi = mesh.aabb()
        c = 0.5 * (lo + hi)
        return replace(
            self, center=(float(c[0]), float(c[1]), float(c[2])), diagonal=mesh.aabb_diagonal()
        )

    def resolve(self, mesh: Mesh) -> tuple[np.ndarray, float]:
        if self.center is not None and self.diagonal is not None:
            return np.array(self.center), float(self.diagonal)
        lo, hi = mesh.aabb()
        return 0.5 * (lo + hi), mesh.aabb_diagonal()


@dataclass
class Image:
    width: int
    height: int
    pixels: np.ndarray  # uint8 (height, width, 3)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel buffer {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )

    def to_png(self) -> bytes:
        buf = io.BytesIO()
        PILImage.fromarray(self.pixels, mode="RGB").save(buf, format="PNG", compress_level=1)
        return buf.getvalue()

    @classmethod
    def from_png(cls, data: bytes) -> "Image":
        img = PILImage.open(io.BytesIO(data)).convert("RGB")
        arr = np.asarray(img, dtype=np.uint8)
        return cls(arr.shape[1], arr.shape[0], arr)


def view_set(
    n_azimuths: int,
    elevation: float = DEFAULT_ELEVATION,
    distance: float = DEFAULT_DISTANCE,
    fov: float = DEFAULT_FOV,
    size: int = DEFAULT_IMAGE_SIZE,
) -> list[Camera]:
    """Equally spaced azimuths starting at 45 degrees (one view gives exactly
    the front-right evaluation view)."""
    if n_azimuths < 1:
        raise ValueError("need at least one view")
    return [
        Camera(AZIMUTH_OFFSET + k * 360.0 / n_azimuths, elevation, distance, fov, size)
        for k in range(n_azimuths)
    ]


def _camera_frame(camera: Camera, mesh: Mesh):
    center, diag = camera.resolve(mesh)
    az = math.radians(camera.azimuth)
    el = math.radians(camera.elevation)
    direction = np.array(
        [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
    )
    dist = camera.distance * diag
    eye = center + dist * direction
    forward = -direction  # unit by construction
    up_world = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up_world)
    nr = np.linalg.norm(right)
    if nr < 1e-9:  # looking straight up/down
        right = np.array([0.0, 1.0, 0.0])
    else:
        right = right / nr
    up = np.cross(right, forward)
    return eye, right, up, forward, dist, diag


def _clip_near(tri_cam: np.ndarray, near: float) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one camera-space triangle against the near
    plane (camera looks along -z; keep z <= -near). Returns 0..2 triangles."""
    depth = -tri_cam[:, 2]
    if np.all(depth >= near):
        return [tri_cam]
    if np.all(depth < near):
        return []
    poly = []
    for k in range(3):
        a, b = tri_cam[k], tri_cam[(k + 1) % 3]
        da, db = -a[2] - near, -b[2] - near
        if da >= 0:
            poly.append(a)
        if (da >= 0) != (db >= 0):
            t = da / (da - db)
            poly.append(a + t * (b - a))
    return [np.array([poly[0], poly[i], poly[i + 1]]) for i in range(1, len(poly) - 1)]


def render(mesh: Mesh, camera: Camera, background: tuple[int, int, int] = WHITE) -> Image:
    """Z-buffered flat-shaded render of the mesh on a solid background."""
    size = camera.size
    eye, right, up, forward, dist, _ = _camera_frame(camera, mesh)
    near = 0.01 * dist

    v = mesh.vertices
    rel = v - eye
    # camera space: x right, y up, camera looks along -z (so z = -depth)
    cam = np.stack([rel @ right, rel @ up, -(rel @ forward)], axis=1)

    tanh = math.tan(math.radians(camera.fov) / 2.0)
    half = 0.5 * size

    color_buf = np.empty((size, size, 3), dtype=np.uint8)
    color_buf[:, :] = np.array(background, dtype=np.uint8)
    invz_buf = np.zeros((size, size))  # 1/depth, larger wins

    fv = mesh.faces
    world = v[fv]
    normals = np.cross(world[:, 1] - world[:, 0], world[:, 2] - world[:, 0])
    lens = np.linalg.norm(normals, axis=1)
    # headlight along the camera axis, two-sided so winding never blacks out
    diffuse = np.abs(normals @ (-forward))
    with np.errstate(invalid="ignore", divide="ignore"):
        shade = ALBEDO * (AMBIENT + diffuse / lens)
    greys = np.rint(255.0 * np.clip(shade, 0.0, 1.0)).astype(np.uint8)

    tri_cam_all = cam[fv]  # (m, 3, 3)
    depth_all = -tri_cam_all[:, :, 2]
    needs_clip = np.any(depth_all < near, axis=1)
    ok = lens >= 1e-18

    # common case, whole mesh in front of the near plane: project in batch
    sx_all = (tri_cam_all[:, :, 0] / depth_all / tanh + 1.0) * half
    sy_all = (1.0 - tri_cam_all[:, :, 1] / depth_all / tanh) * half
    invz_all = 1.0 / depth_all

    for f in np.nonzero(ok)[0]:
        if needs_clip[f]:
            for piece in _clip_near(tri_cam_all[f], near):
                depth = -piece[:, 2]
                sx = (piece[:, 0] / depth / tanh + 1.0) * half
                sy = (1.0 - piece[:, 1] / depth / tanh) * half
                _raster_triangle(color_buf, invz_buf, sx, sy, 1.0 / depth, greys[f], size)
        else:
            _raster_triangle(
                color_buf, invz_buf, sx_all[f], sy_all[f], invz_all[f], greys[f], size
            )
    return Image(size, size, color_buf)


def _raster_triangle(color_buf, invz_buf, sx, sy, invz, grey, size):
    x0f, x1f = min(sx[0], sx[1], sx[2]), max(sx[0], sx[1], sx[2])
    y0f, y1f = min(sy[0], sy[1], sy[2]), max(sy[0], sy[1], sy[2])
    if x1f < 0.0 or y1f < 0.0 or x0f > size or y0f > size:
        return
    area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sy[1] - sy[0]) * (sx[2] - sx[0])
    if area == 0.0:
        return
    x0 = max(int(x0f), 0)
    x1 = min(int(math.ceil(x1f)), size - 1)
    y0 = max(int(y0f), 0)
    y1 = min(int(math.ceil(y1f)), size - 1)
    if x0 > x1 or y0 > y1:
        return
    px = (np.arange(x0, x1 + 1) + 0.5)[None, :]
    py = (np.arange(y0, y1 + 1) + 0.5)[:, None]
    inv_area = 1.0 / area
    w0 = ((sx[2] - sx[1]) * (py - sy[1]) - (sy[2] - sy[1]) * (px - sx[1])) * inv_area
    w1 = ((sx[0] - sx[2]) * (py - sy[2]) - (sy[0] - sy[2]) * (px - sx[2])) * inv_area
    w2 = 1.0 - w0 - w1
    inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
    if not inside.any():
        return
    invz_pix = w0 * invz[0] + w1 * invz[1] + w2 * invz[2]
    region_z = invz_buf[y0 : y1 + 1, x0 : x1 + 1]
    win = inside & (invz_pix > region_z)
    if not win.any():
        return
    region_z[win] = invz_pix[win]
    color_buf[y0 : y1 + 1, x0 : x1 + 1][win] = grey


def silhouette(image: Image, background: tuple[int, int, int]) -> np.ndarray:
    """Boolean foreground mask: pixels differing from the exact background."""
    bg = np.array(background, dtype=np.uint8)
    return np.any(image.pixels != bg, axis=2)
