"""curvetac: simulation of camera-based tactile sensors of arbitrary morphology.

Bake per-pixel light-direction fields over a curved sensor membrane (linear,
plane-slice, geodesic or heat-transport methods), then render realistic RGB
tactile images from depth maps via elastic smoothing, inverse projection and
Phong illumination. Includes an image-similarity harness (MAE/SSIM/PSNR).
"""

from ._kernels import kernel_backend
from .baker import (BakeJob, BakeReport, LightField, alignment_report, bake,
                    load_light_field, save_light_field)
from .config import SensorDescription, load_sensor_config
from .depth import (BoxPrimitive, CameraIntrinsics, DeformationConfig, DepthMap,
                    PointCloud, SpherePrimitive, elastic_deformation,
                    forward_project, inverse_project, read_depth, read_pfm,
                    synth_depth, unnormalize_depth, write_depth, write_pfm)
from .errors import (ConfigError, CurvetacError, FormatError, MeshError,
                     NumericalError, PathError, ZeroGradientError)
from .mesh import (SurfacePoint, TriangleMesh, closest_surface_point,
                   closest_surface_points, cotangent_laplacian, load_mesh)
from .metrics import MetricsReport, dataset_compare, mae_percent, psnr, ssim
from .paths import (DistanceField, GeodesicTree, HeatSolver, SurfacePolyline,
                    dijkstra_geodesic, distance_gradient_direction,
                    endpoint_direction, heat_distance_field, plane_slice_path)
from .render import (LightSourceSpec, MaterialParams, NormalMap, phong_shade,
                     read_png, render_frame, surface_normals, write_png)

__version__ = "0.1.0"

__all__ = [
    "BakeJob", "BakeReport", "BoxPrimitive", "CameraIntrinsics", "ConfigError",
    "CurvetacError", "DeformationConfig", "DepthMap", "DistanceField",
    "FormatError", "GeodesicTree", "HeatSolver", "LightField", "LightSourceSpec",
    "MaterialParams", "MeshError", "MetricsReport", "NormalMap", "NumericalError",
    "PathError", "PointCloud", "SensorDescription", "SpherePrimitive",
    "SurfacePoint", "SurfacePolyline", "TriangleMesh", "ZeroGradientError",
    "alignment_report", "bake", "closest_surface_point", "closest_surface_points",
    "cotangent_laplacian", "dataset_compare", "dijkstra_geodesic",
    "distance_gradient_direction", "elastic_deformation", "endpoint_direction",
    "forward_project", "heat_distance_field", "inverse_project", "kernel_backend",
    "load_light_field", "load_mesh", "load_sensor_config", "mae_percent",
    "phong_shade", "plane_slice_path", "psnr", "read_depth", "read_pfm",
    "read_png", "render_frame", "save_light_field", "ssim", "surface_normals",
    "synth_depth", "unnormalize_depth", "write_depth", "write_pfm", "write_png",
]
