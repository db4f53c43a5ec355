"""Depth-map ingestion, elastic smoothing, and camera (un)projection.

Depth values are metres along the camera z axis (camera at the origin
looking down +z). Pixel coordinates are grid indices; the principal point
defaults to the grid centre.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import FormatError
from .mesh import TriangleMesh


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera looking down +z; fov in radians."""

    width: int
    height: int
    fov: float
    z_near: float
    z_far: float
    c_x: float = None  # type: ignore[assignment]
    c_y: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if not (0.0 < self.fov < math.pi):
            raise ValueError(f"fov must be in (0, pi), got {self.fov}")
        if not (0.0 < self.z_near < self.z_far):
            raise ValueError(f"need 0 < z_near < z_far, got {self.z_near}, {self.z_far}")
        if self.c_x is None:
            object.__setattr__(self, "c_x", (self.width - 1) / 2.0)
        if self.c_y is None:
            object.__setattr__(self, "c_y", (self.height - 1) / 2.0)

    @property
    def f_u(self) -> float:
        return self.width / (2.0 * math.tan(self.fov / 2.0))

    @property
    def f_v(self) -> float:
        return self.height / (2.0 * math.tan(self.fov / 2.0))

    def pixel_rays(self) -> np.ndarray:
        """(H, W, 3) ray directions through pixel centres, z component 1, so
        the ray parameter equals the hit's z coordinate."""
        u = (np.arange(self.width) - self.c_x) / self.f_u
        v = (np.arange(self.height) - self.c_y) / self.f_v
        d = np.empty((self.height, self.width, 3))
        d[..., 0] = u[None, :]
        d[..., 1] = v[:, None]
        d[..., 2] = 1.0
        return d


@dataclass
class DepthMap:
    """Per-pixel depth raster; values in [0,1] when normalised, metres otherwise."""

    values: np.ndarray
    normalised: bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("depth map must be 2-D")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass
class PointCloud:
    """Camera-frame point grid; z of valid points equals the source depth."""

    points: np.ndarray  # (H, W, 3) float64
    valid: np.ndarray   # (H, W) bool


@dataclass(frozen=True)
class DeformationConfig:
    """Gaussian smoothing parameters for the elastic approximation (pixels)."""

    kernel_size: int = 21
    sigma: float = 7.0

    def __post_init__(self):
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and >= 3")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def kernel_1d(self) -> np.ndarray:
        half = self.kernel_size // 2
        x = np.arange(-half, half + 1, dtype=np.float64)
        g = np.exp(-(x * x) / (2.0 * self.sigma * self.sigma))
        return g / g.sum()


def unnormalize_depth(d: DepthMap, cam: CameraIntrinsics) -> DepthMap:
    """Map normalised depths to metric via the perspective linearisation
    D = z_near*z_far / (z_far - D01*(z_far - z_near)).

    The endpoints are assigned exactly (0 -> z_near, 1 -> z_far) rather
    than through the formula, so the clipping planes round-trip bit-exactly.
    """
    if not d.normalised:
        raise ValueError("depth map is already metric")
    vals = d.values.astype(np.float64)
    if np.nanmin(vals) < 0.0 or np.nanmax(vals) > 1.0:
        raise ValueError("normalised depth values outside [0, 1]")
    zn, zf = cam.z_near, cam.z_far
    out = (zn * zf) / (zf - vals * (zf - zn))
    out[vals == 0.0] = zn
    out[vals == 1.0] = zf
    return DepthMap(out.astype(np.float32), normalised=False)


def elastic_deformation(d: DepthMap, d_ref: DepthMap,
                        cfg: DeformationConfig) -> DepthMap:
    """Approximate the elastomer's elastic response to a contact.

    The contact difference (reference minus raw depth) is spread with a
    normalised Gaussian (edge replication at borders) and an element-wise
    minimum keeps the in-contact protrusion itself undeformed:

        D_deform = min(D, D_ref - (D_ref - D) * G)

    With no contact (D == D_ref) the output equals D_ref bit-exactly.
    """
    if d.values.shape != d_ref.values.shape:
        raise ValueError(f"dimension mismatch: {d.values.shape} vs {d_ref.values.shape}")
    if d.normalised or d_ref.normalised:
        raise ValueError("elastic deformation expects metric depth maps")
    raw = d.values.astype(np.float64)
    ref = d_ref.values.astype(np.float64)
    g = cfg.kernel_1d()
    spread = ndimage.correlate1d(ref - raw, g, axis=0, mode="nearest")
    spread = ndimage.correlate1d(spread, g, axis=1, mode="nearest")
    out = np.minimum(raw, ref - spread)
    return DepthMap(out.astype(np.float32), normalised=False)


def inverse_project(d: DepthMap, cam: CameraIntrinsics) -> PointCloud:
    """Back-project a metric depth map to a camera-frame point grid:
    x = (u - c_x) z / f_u, y = (v - c_y) z / f_v, z = D(u, v)."""
    if d.normalised:
        raise ValueError("inverse projection expects a metric depth map")
    z = d.values.astype(np.float64)
    u = np.arange(d.width, dtype=np.float64)[None, :]
    v = np.arange(d.height, dtype=np.float64)[:, None]
    pts = np.empty((d.height, d.width, 3))
    pts[..., 0] = (u - cam.c_x) * z / cam.f_u
    pts[..., 1] = (v - cam.c_y) * z / cam.f_v
    pts[..., 2] = z
    valid = np.isfinite(z) & (z > 0.0)
    return PointCloud(pts, valid)


def forward_project(points: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of (..., 3) camera-frame points to (..., 2) pixels."""
    p = np.asarray(points, dtype=np.float64)
    uv = np.empty(p.shape[:-1] + (2,))
    uv[..., 0] = p[..., 0] * cam.f_u / p[..., 2] + cam.c_x
    uv[..., 1] = p[..., 1] * cam.f_v / p[..., 2] + cam.c_y
    return uv


# -- analytic primitives & ray casting ---------------------------------------


@dataclass(frozen=True)
class SpherePrimitive:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))


@dataclass(frozen=True)
class BoxPrimitive:
    """Axis-aligned box of full extents `dims` in its local frame, rigidly posed."""

    rotation: np.ndarray
    translation: np.ndarray
    dims: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        d = np.asarray(self.dims, dtype=np.float64).reshape(3)
        if np.any(d <= 0):
            raise ValueError("box dims must be positive")
        object.__setattr__(self, "dims", d)


def synth_depth(cam: CameraIntrinsics, membrane: TriangleMesh | None = None,
                primitive: SpherePrimitive | BoxPrimitive | None = None) -> DepthMap:
    """Ray-cast a metric depth map of the membrane and/or an analytic primitive.

    Depth is the z coordinate of the nearest hit along each pixel ray,
    clamped to [z_near, z_far]; misses record z_far. With no primitive the
    result is the no-contact reference capture.
    """
    z = np.full((cam.height, cam.width), np.inf)
    if membrane is not None:
        _raster_mesh(cam, membrane, z)
    rays = cam.pixel_rays()
    if isinstance(primitive, SpherePrimitive):
        np.minimum(z, _ray_sphere(rays, primitive), out=z)
    elif isinstance(primitive, BoxPrimitive):
        np.minimum(z, _ray_box(rays, primitive), out=z)
    elif primitive is not None:
        raise TypeError(f"unsupported primitive {type(primitive).__name__}")
    z[~np.isfinite(z)] = cam.z_far
    np.clip(z, cam.z_near, cam.z_far, out=z)
    return DepthMap(z.astype(np.float32), normalised=False)


def _raster_mesh(cam: CameraIntrinsics, mesh: TriangleMesh, zbuf: np.ndarray):
    v = mesh.vertices
    f = mesh.faces
    z0 = v[:, 2]
    uv = np.empty((len(v), 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        uv[:, 0] = v[:, 0] * cam.f_u / z0 + cam.c_x
        uv[:, 1] = v[:, 1] * cam.f_v / z0 + cam.c_y
    h, w = zbuf.shape
    for tri in f:
        zz = z0[tri]
        if np.any(zz <= 1e-12):  # behind or at the pinhole: skip
            continue
        p = uv[tri]
        lo_u = max(int(math.ceil(p[:, 0].min())), 0)
        hi_u = min(int(math.floor(p[:, 0].max())), w - 1)
        lo_v = max(int(math.ceil(p[:, 1].min())), 0)
        hi_v = min(int(math.floor(p[:, 1].max())), h - 1)
        if lo_u > hi_u or lo_v > hi_v:
            continue
        gu = np.arange(lo_u, hi_u + 1, dtype=np.float64)
        gv = np.arange(lo_v, hi_v + 1, dtype=np.float64)
        px = gu[None, :]
        py = gv[:, None]
        # 2D edge functions of the projected triangle (sidedness through the
        # pinhole matches 3D sidedness for z > 0 geometry)
        e = []
        for k in range(3):
            x1, y1 = p[k]
            x2, y2 = p[(k + 1) % 3]
            e.append((x2 - x1) * (py - y1) - (y2 - y1) * (px - x1))
        area2 = ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                 - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0]))
        if area2 == 0.0:
            continue
        tol = -1e-10 * abs(area2)
        if area2 > 0:
            inside = (e[0] >= tol) & (e[1] >= tol) & (e[2] >= tol)
        else:
            inside = (e[0] <= -tol) & (e[1] <= -tol) & (e[2] <= -tol)
        if not inside.any():
            continue
        a, b, c = v[tri[0]], v[tri[1]], v[tri[2]]
        n = np.cross(b - a, c - a)
        dirs = np.empty(inside.shape + (3,))
        dirs[..., 0] = (px - cam.c_x) / cam.f_u
        dirs[..., 1] = (py - cam.c_y) / cam.f_v
        dirs[..., 2] = 1.0
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (a @ n) / denom
        hit = inside & np.isfinite(s) & (s > 0)
        sub = zbuf[lo_v:hi_v + 1, lo_u:hi_u + 1]
        np.minimum(sub, np.where(hit, s, np.inf), out=sub)


def _ray_sphere(rays: np.ndarray, sph: SpherePrimitive) -> np.ndarray:
    c = sph.center
    aa = np.einsum("hwk,hwk->hw", rays, rays)
    bb = -2.0 * (rays @ c)
    cc = float(c @ c) - sph.radius ** 2
    disc = bb * bb - 4.0 * aa * cc
    out = np.full(rays.shape[:2], np.inf)
    ok = disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    s1 = (-bb - sq) / (2.0 * aa)
    s2 = (-bb + sq) / (2.0 * aa)
    s = np.where(s1 > 0.0, s1, np.where(s2 > 0.0, s2, np.inf))
    out[ok] = s[ok]
    return out


def _ray_box(rays: np.ndarray, box: BoxPrimitive) -> np.ndarray:
    r = box.rotation
    o = -(r.T @ box.translation)
    d = rays @ r  # rotate directions into the box frame
    half = box.dims / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
    t1 = (-half - o) * inv
    t2 = (half - o) * inv
    tmin = np.minimum(t1, t2).max(axis=-1)
    tmax = np.maximum(t1, t2).min(axis=-1)
    out = np.full(rays.shape[:2], np.inf)
    hit = (tmax >= np.maximum(tmin, 0.0)) & np.isfinite(tmax)
    s = np.where(tmin > 0.0, tmin, tmax)
    out[hit] = s[hit]
    return out


# -- PFM + sidecar -----------------------------------------------------------


def write_pfm(path, values: np.ndarray):
    """Write a grayscale little-endian PFM (scale -1.0, bottom-up rows)."""
    vals = np.asarray(values, dtype="<f4")
    if vals.ndim != 2:
        raise FormatError("PFM writer expects a 2-D array")
    h, w = vals.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(vals).tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM; returns float32 (H, W), top-down rows."""
    data = Path(path).read_bytes()
    m = re.match(rb"(P[fF])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", data)
    if not m:
        raise FormatError(f"{path}: not a PFM file")
    if m.group(1) != b"Pf":
        raise FormatError(f"{path}: colour PFM not supported (expected grayscale 'Pf')")
    w, h = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    payload = data[m.end():]
    need = w * h * 4
    if len(payload) < need:
        raise FormatError(f"{path}: truncated PFM payload ({len(payload)} < {need})")
    dtype = "<f4" if scale < 0 else ">f4"
    vals = np.frombuffer(payload[:need], dtype=dtype).reshape(h, w)
    return np.flipud(vals).astype(np.float32)


def write_depth(path, depth: DepthMap, z_near: float, z_far: float):
    """PFM plus a JSON sidecar declaring normalisation and clip planes."""
    write_pfm(path, depth.values)
    sidecar = {"normalised": bool(depth.normalised),
               "z_near": float(z_near), "z_far": float(z_far)}
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, sort_keys=True)
        fh.write("\n")


def read_depth(path) -> tuple[DepthMap, dict]:
    """Read a PFM and its sidecar; sidecar defaults to metric when absent."""
    vals = read_pfm(path)
    sidecar_path = str(path) + ".json"
    if os.path.exists(sidecar_path):
        with open(sidecar_path) as fh:
            sidecar = json.load(fh)
        if not isinstance(sidecar.get("normalised"), bool):
            raise FormatError(f"{sidecar_path}: missing boolean 'normalised'")
    else:
        sidecar = {"normalised": False}
    return DepthMap(vals, normalised=sidecar["normalised"]), sidecar
