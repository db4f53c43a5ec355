"""Tactile image generation: Sobel surface normals + Phong illumination.

Conventions (fixed across the pipeline):
  - point-cloud normals are oriented toward the camera (negative z);
  - baked fields store the light *arrival* direction (light -> surface);
    the shader negates them to Phong's "toward the light" convention;
  - the view vector is the constant (0, 0, 1);
  - the specular term is gated on a positive diffuse dot (standard Phong
    practice): a light exactly tangent to the surface contributes nothing,
    which is what keeps undeformed regions black.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .depth import CameraIntrinsics, DeformationConfig, DepthMap, PointCloud, \
    elastic_deformation, inverse_project, unnormalize_depth
from .errors import FormatError

_SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                     [-2.0, 0.0, 2.0],
                     [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class MaterialParams:
    """Phong reflectance constants of the elastomer coating."""

    k_a: float = 1.0
    k_d: float = 0.6
    k_s: float = 0.2
    alpha: float = 16.0

    def __post_init__(self):
        for name in ("k_a", "k_d", "k_s"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {val}")
        if self.alpha < 1.0:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")


@dataclass(frozen=True)
class LightSourceSpec:
    """One LED: camera-frame position plus diffuse/specular RGB intensities."""

    position: np.ndarray
    diffuse: np.ndarray
    specular: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        for name in ("diffuse", "specular"):
            c = np.asarray(getattr(self, name), dtype=np.float64).reshape(3)
            if np.any(c < 0.0) or np.any(c > 1.0):
                raise ValueError(f"{name} colour channels must be in [0, 1]")
            object.__setattr__(self, name, c)


@dataclass
class NormalMap:
    """Unit normals per pixel, camera-facing; invalid pixels are zero rows."""

    normals: np.ndarray  # (H, W, 3)
    valid: np.ndarray    # (H, W) bool


def surface_normals(cloud: PointCloud) -> NormalMap:
    """Per-pixel normals from 3x3 Sobel derivatives of the point grid.

    N = normalise(dp/dx x dp/dy), flipped toward the camera. Pixels with a
    degenerate cross product are marked invalid (zero normal).
    """
    pts = cloud.points
    dx = np.stack([ndimage.correlate(pts[..., k], _SOBEL_X, mode="nearest")
                   for k in range(3)], axis=-1)
    dy = np.stack([ndimage.correlate(pts[..., k], _SOBEL_Y, mode="nearest")
                   for k in range(3)], axis=-1)
    n = np.cross(dx, dy)
    norms = np.linalg.norm(n, axis=-1)
    valid = cloud.valid & (norms > 1e-300)
    out = np.zeros_like(n)
    out[valid] = n[valid] / norms[valid][:, None]
    flip = out[..., 2] > 0.0  # orient toward the camera: dot with (0,0,-1) >= 0
    out[flip] *= -1.0
    return NormalMap(out, valid)


def phong_shade(cloud: PointCloud, normals: NormalMap, fields, lights,
                mat: MaterialParams, ambient=None) -> np.ndarray:
    """Phong illumination with baked per-pixel light directions.

    I = k_a*i_a + sum_m [ k_d*(L.N)*i_d + k_s*(R.V)^alpha*i_s ] with
    R = 2(L.N)N - L and V = (0,0,1); dot products clamp at zero and the
    specular term is gated on L.N > 0. `ambient` is None, an RGB triple in
    [0,1], or a background image (uint8, HxWx3). Returns uint8 RGB.
    """
    h, w = cloud.points.shape[:2]
    if normals.normals.shape[:2] != (h, w):
        raise ValueError("normal map dimensions do not match the point cloud")
    if fields.data.shape[1:3] != (h, w):
        raise ValueError(f"light field is {fields.data.shape[2]}x{fields.data.shape[1]}, "
                         f"cloud is {w}x{h}")
    if fields.num_lights != len(lights):
        raise ValueError(f"field stores {fields.num_lights} lights, got {len(lights)} specs")

    acc = np.zeros((h, w, 3))
    if ambient is not None:
        if isinstance(ambient, np.ndarray) and ambient.ndim == 3:
            if ambient.shape[:2] != (h, w):
                raise ValueError("background image dimensions do not match")
            i_a = ambient.astype(np.float64) / 255.0
        else:
            i_a = np.asarray(ambient, dtype=np.float64).reshape(3)[None, None, :]
        acc = acc + mat.k_a * i_a

    n = normals.normals
    for m, light in enumerate(lights):
        arrival = fields.data[m].astype(np.float64)
        l_hat = -arrival  # stored arrival -> Phong's "toward the light"
        ln = np.einsum("hwk,hwk->hw", l_hat, n)
        ln = np.maximum(ln, 0.0)
        lit = ln > 0.0
        if mat.k_d > 0.0:
            acc += (mat.k_d * ln)[..., None] * light.diffuse[None, None, :]
        if mat.k_s > 0.0 and lit.any():
            r = 2.0 * ln[..., None] * n - l_hat
            rv = np.maximum(r[..., 2], 0.0)  # R . (0,0,1)
            spec = np.where(lit, rv, 0.0) ** mat.alpha
            acc += (mat.k_s * spec)[..., None] * light.specular[None, None, :]

    out = np.clip(acc * 255.0, 0.0, 255.0)
    return np.rint(out).astype(np.uint8)  # round-half-to-even, pinned for goldens


def render_frame(depth: DepthMap, sensor, fields, ambient=None,
                 d_ref: DepthMap | None = None) -> np.ndarray:
    """Full online pipeline: un-normalise (if needed) -> elastic deformation
    -> inverse projection -> Sobel normals -> Phong shading.

    `sensor` is a SensorDescription; `d_ref` defaults to ray-casting the
    sensor's aligned membrane (the no-contact reference capture).
    """
    cam: CameraIntrinsics = sensor.camera
    if (depth.height, depth.width) != (cam.height, cam.width):
        raise ValueError(f"depth map is {depth.width}x{depth.height}, "
                         f"camera is {cam.width}x{cam.height}")
    if depth.normalised:
        depth = unnormalize_depth(depth, cam)
    if d_ref is None:
        d_ref = sensor.reference_depth()
    elif d_ref.normalised:
        d_ref = unnormalize_depth(d_ref, cam)
    deformed = elastic_deformation(depth, d_ref, sensor.smoothing)
    cloud = inverse_project(deformed, cam)
    normals = surface_normals(cloud)
    return phong_shade(cloud, normals, fields, sensor.lights, sensor.material,
                       ambient=ambient)


# -- PNG I/O -----------------------------------------------------------------


def write_png(path, image: np.ndarray):
    """8-bit RGB PNG with pinned encoder settings (reproducible bytes)."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise FormatError("expected an (H, W, 3) uint8 image")
    Image.fromarray(arr, mode="RGB").save(path, format="PNG", optimize=False,
                                          compress_level=6)


def read_png(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: not a readable PNG ({exc})") from exc
