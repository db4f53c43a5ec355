"""Sensor configuration: one validated JSON document describing a sensor.

Schema (angles in degrees, lengths in metres, paths relative to the file):

    {
      "mesh_path": "membrane.stl",
      "transform": {"rotation": [r00..r22], "translation": [x, y, z]},
      "camera": {"width": 640, "height": 480, "fov_deg": 90,
                 "z_near": 0.005, "z_far": 0.1},
      "lights": [{"position": [x,y,z], "diffuse": [r,g,b],
                  "specular": [r,g,b]}, ...],
      "material": {"k_a": 1.0, "k_d": 0.6, "k_s": 0.2, "alpha": 16},   # optional
      "smoothing": {"kernel_size": 21, "sigma": 7},                     # optional
      "background": "background.png",                                   # optional
      "method": "transport"                                             # optional
    }

Omitted material defaults to (1.0, 0.6, 0.2, 16); omitted smoothing defaults
to kernel 21 / sigma 7 at 640 px width, scaled proportionally with resolution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .depth import CameraIntrinsics, DeformationConfig, DepthMap, synth_depth
from .errors import ConfigError
from .mesh import TriangleMesh, load_mesh
from .render import LightSourceSpec, MaterialParams

METHODS = ("linear", "plane", "geodesic", "transport")
DEFAULT_METHOD = "transport"


@dataclass
class SensorDescription:
    """Everything the baker and renderer need to know about one sensor."""

    mesh_path: Path
    rotation: np.ndarray
    translation: np.ndarray
    camera: CameraIntrinsics
    lights: list[LightSourceSpec]
    material: MaterialParams
    smoothing: DeformationConfig
    background: Path | None
    method: str

    _mesh_cache: TriangleMesh | None = None

    def aligned_mesh(self) -> TriangleMesh:
        """Membrane mesh transformed into the camera frame."""
        if self._mesh_cache is None:
            mesh = load_mesh(self.mesh_path)
            self._mesh_cache = mesh.transformed(self.rotation, self.translation)
        return self._mesh_cache

    def reference_depth(self) -> DepthMap:
        """No-contact reference capture: ray-cast of the aligned membrane."""
        return synth_depth(self.camera, membrane=self.aligned_mesh())

    def to_json_dict(self) -> dict:
        """Canonical serialisation; load(serialise(load(x))) is a fixed point."""
        out = {
            "mesh_path": str(self.mesh_path),
            "transform": {
                "rotation": [float(x) for x in self.rotation.reshape(-1)],
                "translation": [float(x) for x in self.translation],
            },
            "camera": {
                "width": self.camera.width,
                "height": self.camera.height,
                "fov_deg": math.degrees(self.camera.fov),
                "z_near": self.camera.z_near,
                "z_far": self.camera.z_far,
            },
            "lights": [
                {
                    "position": [float(x) for x in l.position],
                    "diffuse": [float(x) for x in l.diffuse],
                    "specular": [float(x) for x in l.specular],
                }
                for l in self.lights
            ],
            "material": {
                "k_a": self.material.k_a,
                "k_d": self.material.k_d,
                "k_s": self.material.k_s,
                "alpha": self.material.alpha,
            },
            "smoothing": {
                "kernel_size": self.smoothing.kernel_size,
                "sigma": self.smoothing.sigma,
            },
            "method": self.method,
        }
        if self.background is not None:
            out["background"] = str(self.background)
        return out


def default_smoothing(width: int) -> DeformationConfig:
    """Width-proportional defaults: kernel 21 / sigma 7 at 640 px."""
    scale = width / 640.0
    kernel = max(3, int(round(21 * scale)))
    if kernel % 2 == 0:
        kernel += 1
    return DeformationConfig(kernel_size=kernel, sigma=max(7.0 * scale, 0.5))


def _need(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"{where}.{key}: required field missing" if where
                          else f"{key}: required field missing")
    return doc[key]


def _floats(value, n: int, where: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64).reshape(n)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {n} numbers") from None
    if not np.isfinite(arr).all():
        raise ConfigError(f"{where}: non-finite value")
    return arr


def load_sensor_config(path) -> SensorDescription:
    """Load, validate and default-fill a sensor description.

    All invariants are checked eagerly (rotation orthonormality, camera
    ranges, light colours, referenced files) so a config that loads cannot
    violate them downstream.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    base = path.parent

    mesh_path = base / str(_need(doc, "mesh_path", ""))
    if not mesh_path.exists():
        raise ConfigError(f"mesh_path: file not found: {mesh_path}")

    tdoc = doc.get("transform", {})
    rotation = _floats(tdoc.get("rotation", np.eye(3).reshape(-1).tolist()), 9,
                       "transform.rotation").reshape(3, 3)
    translation = _floats(tdoc.get("translation", [0.0, 0.0, 0.0]), 3,
                          "transform.translation")
    if np.max(np.abs(rotation @ rotation.T - np.eye(3))) > 1e-9:
        raise ConfigError("transform.rotation: not orthonormal (within 1e-9)")
    if abs(np.linalg.det(rotation) - 1.0) > 1e-9:
        raise ConfigError("transform.rotation: determinant must be +1 (proper rotation)")

    cdoc = _need(doc, "camera", "")
    width = int(_need(cdoc, "width", "camera"))
    height = int(_need(cdoc, "height", "camera"))
    if width < 1 or height < 1:
        raise ConfigError("camera.width/height: must be positive")
    fov_deg = float(_need(cdoc, "fov_deg", "camera"))
    if not (0.0 < fov_deg < 180.0):
        raise ConfigError(f"camera.fov_deg: must be in (0, 180), got {fov_deg}")
    z_near = float(_need(cdoc, "z_near", "camera"))
    z_far = float(_need(cdoc, "z_far", "camera"))
    if not (0.0 < z_near < z_far):
        raise ConfigError(f"camera.z_near/z_far: need 0 < near < far, "
                          f"got {z_near}, {z_far}")
    camera = CameraIntrinsics(width=width, height=height,
                              fov=math.radians(fov_deg), z_near=z_near, z_far=z_far)

    ldoc = _need(doc, "lights", "")
    if not isinstance(ldoc, list) or not ldoc:
        raise ConfigError("lights: at least one light source is required")
    lights = []
    for i, entry in enumerate(ldoc):
        pos = _floats(_need(entry, "position", f"lights[{i}]"), 3, f"lights[{i}].position")
        diff = _floats(_need(entry, "diffuse", f"lights[{i}]"), 3, f"lights[{i}].diffuse")
        spec = _floats(entry.get("specular", [0.0, 0.0, 0.0]), 3, f"lights[{i}].specular")
        for name, c in (("diffuse", diff), ("specular", spec)):
            if np.any(c < 0.0) or np.any(c > 1.0):
                raise ConfigError(f"lights[{i}].{name}: channels must be in [0, 1]")
        lights.append(LightSourceSpec(pos, diff, spec))

    mdoc = doc.get("material", {})
    try:
        material = MaterialParams(
            k_a=float(mdoc.get("k_a", 1.0)), k_d=float(mdoc.get("k_d", 0.6)),
            k_s=float(mdoc.get("k_s", 0.2)), alpha=float(mdoc.get("alpha", 16.0)))
    except ValueError as exc:
        raise ConfigError(f"material: {exc}") from None

    sdoc = doc.get("smoothing")
    if sdoc is None:
        smoothing = default_smoothing(width)
    else:
        try:
            smoothing = DeformationConfig(kernel_size=int(_need(sdoc, "kernel_size", "smoothing")),
                                          sigma=float(_need(sdoc, "sigma", "smoothing")))
        except ValueError as exc:
            raise ConfigError(f"smoothing: {exc}") from None

    background = None
    if doc.get("background") is not None:
        background = base / str(doc["background"])
        if not background.exists():
            raise ConfigError(f"background: file not found: {background}")

    method = str(doc.get("method", DEFAULT_METHOD))
    if method not in METHODS:
        raise ConfigError(f"method: must be one of {METHODS}, got {method!r}")

    return SensorDescription(mesh_path=mesh_path, rotation=rotation,
                             translation=translation, camera=camera, lights=lights,
                             material=material, smoothing=smoothing,
                             background=background, method=method)
