"""Offline light-field baking and the TLFB light-map file format.

For every pixel of the reference (no-contact) capture, the baker projects
the pixel's 3D point onto the membrane mesh and computes the unit direction
light arrives from, per light source, by one of four methods: linear
(straight line from the LED), plane (mesh/plane slice), geodesic
(straightened Dijkstra path) or transport (heat-method distance gradient).

Stored directions use the light-arrival convention (light -> surface point);
for the non-linear methods they are projected into the tangent plane of the
reference capture's own Sobel normal, which is what makes undeformed regions
render exactly dark. Invalid pixels (no geometry within the snap distance)
store the zero vector.
"""

from __future__ import annotations

import json
import multiprocessing
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from ._kernels import slice_walk, straighten_path
from .config import SensorDescription
from .depth import DepthMap, inverse_project, unnormalize_depth
from .errors import FormatError, PathError
from .mesh import TriangleMesh, closest_surface_point, closest_surface_points
from .paths import GeodesicTree, HeatSolver, face_gradient_directions
from .render import surface_normals

MAGIC = b"TLFB"
VERSION = 1
DEFAULT_SNAP_DISTANCE = 0.002

_STATUS_OK = 0
_STATUS_UNREACHABLE = 1
_STATUS_DEGENERATE = 2


@dataclass
class LightField:
    """Baked per-pixel light-arrival directions, one block per light."""

    data: np.ndarray  # (num_lights, H, W, 3) float32; zero rows = invalid
    method: str
    mesh_hash: str
    lights_meta: list
    bake_timestamp: str
    snap_distance: float
    report: "BakeReport | None" = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 4 or self.data.shape[3] != 3:
            raise ValueError("light field data must be (lights, H, W, 3)")

    @property
    def num_lights(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def valid_mask(self) -> np.ndarray:
        """(H, W) pixels carrying a direction for every light."""
        return (np.linalg.norm(self.data.astype(np.float64), axis=3) > 0.5).all(axis=0)

    def metadata(self) -> dict:
        return {
            "method": self.method,
            "mesh_hash": self.mesh_hash,
            "lights": self.lights_meta,
            "bake_timestamp": self.bake_timestamp,
            "snap_distance": self.snap_distance,
        }

    def __eq__(self, other):
        if not isinstance(other, LightField):
            return NotImplemented
        return (self.metadata() == other.metadata()
                and self.data.shape == other.data.shape
                and np.array_equal(self.data.view(np.uint32), other.data.view(np.uint32)))


@dataclass
class BakeJob:
    """One offline bake: sensor + method + reference capture + parallelism."""

    sensor: SensorDescription
    method: str
    ref_depth: DepthMap
    jobs: int = 1
    snap_distance: float = DEFAULT_SNAP_DISTANCE
    t_scale: float = 1.0
    rotation: np.ndarray | None = None     # alignment override (defaults to
    translation: np.ndarray | None = None  # the sensor config's transform)

    def aligned_mesh(self) -> TriangleMesh:
        if self.rotation is None and self.translation is None:
            return self.sensor.aligned_mesh()
        from .mesh import load_mesh

        rot = self.rotation if self.rotation is not None else self.sensor.rotation
        tra = self.translation if self.translation is not None else self.sensor.translation
        return load_mesh(self.sensor.mesh_path).transformed(rot, tra)


@dataclass
class BakeReport:
    """Per-bake diagnostics printed by the CLI."""

    method: str
    width: int
    height: int
    valid_pixels: int
    total_pixels: int
    mean_snap_distance: float
    max_snap_distance: float
    per_light_seconds: list = field(default_factory=list)
    unreachable: list = field(default_factory=list)
    fallbacks: list = field(default_factory=list)

    @property
    def valid_fraction(self) -> float:
        return self.valid_pixels / max(self.total_pixels, 1)

    def summary(self) -> str:
        lines = [
            f"bake[{self.method}] {self.width}x{self.height}: "
            f"{self.valid_pixels}/{self.total_pixels} valid pixels "
            f"({100.0 * self.valid_fraction:.2f}%)",
            f"  point-to-mesh snap distance: mean {self.mean_snap_distance * 1e3:.4f} mm, "
            f"max {self.max_snap_distance * 1e3:.4f} mm",
        ]
        for i, secs in enumerate(self.per_light_seconds):
            extra = ""
            if self.unreachable and self.unreachable[i]:
                extra += f", {self.unreachable[i]} unreachable"
            if self.fallbacks and self.fallbacks[i]:
                extra += f", {self.fallbacks[i]} gradient fallbacks"
            lines.append(f"  light {i}: {secs:.2f}s{extra}")
        return "\n".join(lines)


def alignment_report(mesh: TriangleMesh, points: np.ndarray) -> tuple[float, float]:
    """(mean, max) point-to-mesh distance; for tuning the config transform."""
    _, _, _, dist = closest_surface_points(mesh, points.reshape(-1, 3))
    return float(dist.mean()), float(dist.max())


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        dt = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        dt = datetime.now(tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


# worker context, populated before the fork so children inherit it
_CTX: dict = {}


def bake(job: BakeJob) -> LightField:
    """Run one bake job; the report is attached as `result.report`.

    Deterministic: identical jobs produce bit-identical fields regardless
    of the parallelism degree (pixel results are assembled by index).
    """
    sensor = job.sensor
    cam = sensor.camera
    if job.method not in ("linear", "plane", "geodesic", "transport"):
        raise ValueError(f"unknown bake method {job.method!r}")
    ref = job.ref_depth
    if (ref.height, ref.width) != (cam.height, cam.width):
        raise ValueError(f"reference depth is {ref.width}x{ref.height}, "
                         f"camera is {cam.width}x{cam.height}")
    if ref.normalised:
        ref = unnormalize_depth(ref, cam)

    mesh = job.aligned_mesh()
    cloud = inverse_project(ref, cam)
    normal_map = surface_normals(cloud)
    h, w = cam.height, cam.width
    pts = cloud.points.reshape(-1, 3)

    cand = np.nonzero(cloud.valid.reshape(-1))[0]
    t_face, _, t_pos, t_dist = closest_surface_points(mesh, pts[cand])
    snap_ok = t_dist <= job.snap_distance
    valid_idx = cand[snap_ok]
    targets_face = t_face[snap_ok]
    targets_pos = t_pos[snap_ok]
    proj_normals = normal_map.normals.reshape(-1, 3)[valid_idx]

    snapped = t_dist[snap_ok]
    report = BakeReport(method=job.method, width=w, height=h,
                        valid_pixels=len(valid_idx), total_pixels=h * w,
                        mean_snap_distance=float(snapped.mean()) if len(snapped) else 0.0,
                        max_snap_distance=float(snapped.max()) if len(snapped) else 0.0)

    data = np.zeros((len(sensor.lights), h, w, 3), dtype=np.float32)
    transport_solver = HeatSolver(mesh, job.t_scale) if job.method == "transport" else None

    for m, light in enumerate(sensor.lights):
        t0 = time.perf_counter()
        if job.method == "linear":
            dirs = targets_pos - light.position[None, :]
            norms = np.linalg.norm(dirs, axis=1, keepdims=True)
            ok = norms[:, 0] > 1e-12
            out = np.zeros_like(dirs)
            out[ok] = dirs[ok] / norms[ok]
            status = np.where(ok, _STATUS_OK, _STATUS_DEGENERATE)
            report.unreachable.append(0)
            report.fallbacks.append(0)
        elif job.method == "transport":
            out, status, fallbacks = _bake_transport(
                mesh, transport_solver, light, targets_face, targets_pos, proj_normals)
            report.unreachable.append(int(np.count_nonzero(status == _STATUS_UNREACHABLE)))
            report.fallbacks.append(fallbacks)
        else:
            out, status = _bake_paths(mesh, job.method, light, targets_face,
                                      targets_pos, proj_normals, job.jobs)
            report.unreachable.append(int(np.count_nonzero(status == _STATUS_UNREACHABLE)))
            report.fallbacks.append(0)
        bad = status != _STATUS_OK
        out[bad] = 0.0
        plane = np.zeros((h * w, 3), dtype=np.float32)
        plane[valid_idx] = out.astype(np.float32)
        data[m] = plane.reshape(h, w, 3)
        report.per_light_seconds.append(time.perf_counter() - t0)

    lights_meta = [
        {"position": [float(x) for x in l.position],
         "diffuse": [float(x) for x in l.diffuse],
         "specular": [float(x) for x in l.specular]}
        for l in sensor.lights
    ]
    result = LightField(data=data, method=job.method, mesh_hash=mesh.content_hash(),
                        lights_meta=lights_meta, bake_timestamp=_timestamp(),
                        snap_distance=float(job.snap_distance), report=report)
    return result


def _project_tangent(dirs: np.ndarray, normals: np.ndarray,
                     status: np.ndarray) -> np.ndarray:
    """Project arrival directions into the tangent plane of the reference
    normals (zero normals pass through unprojected)."""
    dots = np.einsum("ij,ij->i", dirs, normals)
    out = dirs - dots[:, None] * normals
    norms = np.linalg.norm(out, axis=1)
    degenerate = norms <= 1e-6
    status[degenerate & (status == _STATUS_OK)] = _STATUS_DEGENERATE
    ok = ~degenerate
    out[ok] = out[ok] / norms[ok, None]
    return out


def _bake_transport(mesh, solver, light, faces, positions, proj_normals):
    src = closest_surface_point(mesh, light.position)
    dist_field = solver.distance_field(src)
    grads = face_gradient_directions(mesh, dist_field)
    out = grads[faces].astype(np.float64)
    status = np.zeros(len(faces), dtype=np.int8)
    zero = np.linalg.norm(out, axis=1) < 0.5
    fallbacks = int(np.count_nonzero(zero))
    if fallbacks:
        # degenerate gradient (source face or a saddle): plane-slice fallback
        n_src = mesh.interpolated_normal(src)
        for i in np.nonzero(zero)[0]:
            d, st = _slice_direction(mesh, src, n_src, int(faces[i]), positions[i])
            out[i] = d
            status[i] = st
    out = _project_tangent(out, proj_normals, status)
    return out, status, fallbacks


def _slice_direction(mesh, src, n_src, tgt_face, tgt_pos):
    """Arrival direction of the plane-slice path at one target."""
    chord = tgt_pos - src.position
    chord_norm = float(np.linalg.norm(chord))
    if chord_norm < 1e-12:
        return np.zeros(3), _STATUS_DEGENERATE
    pn = np.cross(n_src, chord)
    nn = np.linalg.norm(pn)
    if nn < 1e-12 * chord_norm:
        axis = np.zeros(3)
        axis[int(np.argmin(np.abs(n_src)))] = 1.0
        pn = np.cross(n_src, axis)
        nn = np.linalg.norm(pn)
    pn = pn / nn
    pts, reached = slice_walk(mesh.vertices, mesh.faces, mesh.adjacent_faces,
                              src.position, pn, int(src.face_index), src.position,
                              tgt_face, tgt_pos, 2 * mesh.num_faces + 4)
    if not reached:
        return np.zeros(3), _STATUS_UNREACHABLE
    d = _final_segment(pts)
    if d is None:
        return np.zeros(3), _STATUS_DEGENERATE
    return d, _STATUS_OK


def _final_segment(pts: np.ndarray):
    end = pts[-1]
    for i in range(len(pts) - 2, -1, -1):
        seg = end - pts[i]
        norm = np.linalg.norm(seg)
        if norm > 1e-9:
            return seg / norm
    return None


def _geodesic_direction(mesh, tree, tgt_face, tgt_pos):
    vids = mesh.faces[tgt_face]
    d = np.linalg.norm(mesh.vertices[vids] - tgt_pos, axis=1)
    tv = int(vids[int(np.argmin(d))])
    chain = tree.chain_to_vertex(tv)
    if chain is None:
        return np.zeros(3), _STATUS_UNREACHABLE
    src = tree.source
    pts, _ = straighten_path(mesh.vertices, mesh.faces, mesh.adjacent_faces,
                             mesh.vertex_face_offsets, mesh.vertex_faces,
                             src.position, int(src.face_index),
                             tgt_pos, int(tgt_face), chain, 1e-6, 100)
    dvec = _final_segment(pts)
    if dvec is None:
        return np.zeros(3), _STATUS_DEGENERATE
    return dvec, _STATUS_OK


def _path_chunk(args):
    lo, hi = args
    mesh = _CTX["mesh"]
    method = _CTX["method"]
    faces = _CTX["faces"]
    positions = _CTX["positions"]
    out = np.zeros((hi - lo, 3))
    status = np.zeros(hi - lo, dtype=np.int8)
    if method == "plane":
        src = _CTX["source"]
        n_src = _CTX["source_normal"]
        for i in range(lo, hi):
            out[i - lo], status[i - lo] = _slice_direction(
                mesh, src, n_src, int(faces[i]), positions[i])
    else:
        tree = _CTX["tree"]
        for i in range(lo, hi):
            out[i - lo], status[i - lo] = _geodesic_direction(
                mesh, tree, int(faces[i]), positions[i])
    return lo, out, status


def _bake_paths(mesh, method, light, faces, positions, proj_normals, jobs):
    src = closest_surface_point(mesh, light.position)
    _CTX.clear()
    _CTX.update(mesh=mesh, method=method, faces=faces, positions=positions,
                source=src, source_normal=mesh.interpolated_normal(src))
    if method == "geodesic":
        _CTX["tree"] = _ReusableTree(mesh, src)

    n = len(faces)
    out = np.zeros((n, 3))
    status = np.zeros(n, dtype=np.int8)
    if jobs <= 1 or n < 256:
        lo, chunk_out, chunk_status = _path_chunk((0, n))
        out[:] = chunk_out
        status[:] = chunk_status
    else:
        chunk = max(256, (n + jobs * 8 - 1) // (jobs * 8))
        ranges = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            for lo, chunk_out, chunk_status in pool.map(_path_chunk, ranges):
                out[lo:lo + len(chunk_out)] = chunk_out
                status[lo:lo + len(chunk_status)] = chunk_status
    _CTX.clear()
    out = _project_tangent(out, proj_normals, status)
    return out, status


class _ReusableTree:
    """GeodesicTree with target lookup by vertex id (bake-time fast path)."""

    def __init__(self, mesh, source):
        inner = GeodesicTree(mesh, source)
        self.source = source
        self.source_vertex = inner.source_vertex
        self.distances = inner.distances
        self.predecessors = inner.predecessors

    def chain_to_vertex(self, tv: int):
        if not np.isfinite(self.distances[tv]):
            return None
        chain = [tv]
        while chain[-1] != self.source_vertex:
            p = self.predecessors[chain[-1]]
            if p < 0:
                return None
            chain.append(int(p))
        chain.reverse()
        return np.asarray(chain, dtype=np.int32)


# -- TLFB file format --------------------------------------------------------


def save_light_field(fld: LightField, path):
    """Write the TLFB binary: magic, version, dims, JSON metadata, then
    per-light float32 direction blocks (little-endian, row-major)."""
    meta = json.dumps(fld.metadata(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(fld.data, dtype="<f4")
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIII", VERSION, fld.width, fld.height,
                             fld.num_lights, len(meta)))
        fh.write(meta)
        fh.write(payload.tobytes())
    os.replace(tmp, path)


def load_light_field(path) -> LightField:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 24 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a TLFB light-map (bad magic)")
    version, width, height, num_lights, meta_len = struct.unpack_from("<IIIII", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported TLFB version {version}")
    offset = 24 + meta_len
    if len(blob) < offset:
        raise FormatError(f"{path}: truncated TLFB metadata")
    try:
        meta = json.loads(blob[24:offset].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt TLFB metadata ({exc})") from exc
    expected = num_lights * height * width * 3 * 4
    if len(blob) - offset < expected:
        raise FormatError(f"{path}: TLFB payload truncated "
                          f"({len(blob) - offset} < {expected} bytes)")
    data = np.frombuffer(blob, dtype="<f4", count=num_lights * height * width * 3,
                         offset=offset).reshape(num_lights, height, width, 3).copy()
    return LightField(data=data, method=meta.get("method", "unknown"),
                      mesh_hash=meta.get("mesh_hash", ""),
                      lights_meta=meta.get("lights", []),
                      bake_timestamp=meta.get("bake_timestamp", ""),
                      snap_distance=float(meta.get("snap_distance", 0.0)))
