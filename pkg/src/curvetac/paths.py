"""Light-arrival directions along a curved membrane.

Three realisations of "the direction light reaches a target point from a
source on the membrane": plane slicing, straightened discrete geodesics,
and heat-flow transport (geodesic distance gradient). On a flat membrane
all three reduce to the straight source->target direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix, diags
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra
from scipy.sparse.linalg import splu

from ._kernels import slice_walk, straighten_path
from .errors import NumericalError, PathError, ZeroGradientError
from .mesh import SurfacePoint, TriangleMesh, cotangent_laplacian

STRAIGHTEN_TOL = 1e-6
STRAIGHTEN_MAX_ITER = 100
_SOLVE_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class SurfacePolyline:
    """Ordered polyline on the mesh surface (source -> target)."""

    points: np.ndarray
    degenerate_plane: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise ValueError("polyline needs at least two 3D points")
        object.__setattr__(self, "points", pts)

    @property
    def total_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


@dataclass(frozen=True)
class DistanceField:
    """Per-vertex geodesic distance from a source surface point."""

    values: np.ndarray
    source: SurfacePoint
    t_scale: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))


def plane_slice_path(mesh: TriangleMesh, source: SurfacePoint,
                     target: SurfacePoint) -> SurfacePolyline:
    """Intersect the mesh with the plane through source and target that is
    orthogonal to the surface at the source; return the source->target
    sub-segment of the intersection component containing both.

    When no component contains both points a PathError is raised. A
    degenerate plane (chord parallel to the source normal) falls back to a
    deterministic perpendicular plane, flagged on the result.
    """
    src = np.asarray(source.position, dtype=np.float64)
    tgt = np.asarray(target.position, dtype=np.float64)
    chord = tgt - src
    chord_norm = np.linalg.norm(chord)
    if chord_norm < 1e-12:
        raise PathError("plane slice requires distinct source and target")
    n_src = mesh.interpolated_normal(source)
    plane_normal = np.cross(n_src, chord)
    degenerate = False
    nn = np.linalg.norm(plane_normal)
    if nn < 1e-12 * chord_norm:
        # chord runs along the normal: any plane containing it works; pick
        # the coordinate axis most orthogonal to the normal, deterministically
        axis = np.zeros(3)
        axis[int(np.argmin(np.abs(n_src)))] = 1.0
        plane_normal = np.cross(n_src, axis)
        nn = np.linalg.norm(plane_normal)
        degenerate = True
    plane_normal = plane_normal / nn

    pts, reached = slice_walk(mesh.vertices, mesh.faces, mesh.adjacent_faces,
                              src, plane_normal, int(source.face_index), src,
                              int(target.face_index), tgt, 2 * mesh.num_faces + 4)
    if not reached:
        raise PathError("no plane-slice component contains both source and target")
    return SurfacePolyline(pts, degenerate_plane=degenerate)


def _nearest_face_vertex(mesh: TriangleMesh, point: SurfacePoint) -> int:
    """Nearest vertex of the point's own face (keeps the initial path a
    valid face strip)."""
    vids = mesh.faces[point.face_index]
    d = np.linalg.norm(mesh.vertices[vids] - point.position, axis=1)
    return int(vids[int(np.argmin(d))])


def dijkstra_geodesic(mesh: TriangleMesh, source: SurfacePoint,
                      target: SurfacePoint, straighten: bool = True,
                      _tree: "GeodesicTree | None" = None) -> SurfacePolyline:
    """Discrete geodesic: shortest vertex-graph path between the endpoints'
    nearest face vertices, bracketed by the exact surface points, then
    (optionally) shortened by iterative unfolding until the relative length
    change drops below 1e-6 (at most 100 sweeps)."""
    if np.linalg.norm(target.position - source.position) < 1e-15:
        raise PathError("geodesic requires distinct source and target")
    tree = _tree if _tree is not None else GeodesicTree(mesh, source)
    chain = tree.vertex_chain(target)
    if chain is None:
        raise PathError("target unreachable from source in the edge graph")
    if straighten:
        pts, _ = straighten_path(mesh.vertices, mesh.faces, mesh.adjacent_faces,
                                 mesh.vertex_face_offsets, mesh.vertex_faces,
                                 source.position, int(source.face_index),
                                 target.position, int(target.face_index),
                                 chain, STRAIGHTEN_TOL, STRAIGHTEN_MAX_ITER)
    else:
        pts = np.vstack([source.position[None, :], mesh.vertices[chain],
                         target.position[None, :]])
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-15
        pts = pts[keep]
    return SurfacePolyline(pts)


class GeodesicTree:
    """Single-source Dijkstra tree, reusable across many targets."""

    def __init__(self, mesh: TriangleMesh, source: SurfacePoint):
        self.mesh = mesh
        self.source = source
        self.source_vertex = _nearest_face_vertex(mesh, source)
        dist, pred = _csgraph_dijkstra(mesh.edge_graph(), directed=False,
                                       indices=self.source_vertex,
                                       return_predecessors=True)
        self.distances = dist
        self.predecessors = pred

    def vertex_chain(self, target: SurfacePoint) -> np.ndarray | None:
        """Vertex indices source->target, or None if unreachable."""
        tv = _nearest_face_vertex(self.mesh, target)
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


def endpoint_direction(path: SurfacePolyline, at_target_normal) -> np.ndarray:
    """Unit direction of the path's final segment (source side -> target),
    projected into the tangent plane of the target normal.

    Segments shorter than 1e-9 m are skipped backwards until a usable one
    is found.
    """
    pts = path.points
    normal = np.asarray(at_target_normal, dtype=np.float64)
    end = pts[-1]
    direction = None
    for i in range(len(pts) - 2, -1, -1):
        seg = end - pts[i]
        if np.linalg.norm(seg) > 1e-9:
            direction = seg
            break
    if direction is None:
        # fall back to the longest available segment
        direction = pts[-1] - pts[0]
        if np.linalg.norm(direction) < 1e-15:
            raise PathError("degenerate path: no usable final segment")
    tangent = direction - np.dot(direction, normal) * normal
    norm = np.linalg.norm(tangent)
    if norm < 1e-12 * np.linalg.norm(direction):
        raise PathError("final segment is parallel to the target normal")
    return tangent / norm


class HeatSolver:
    """Prefactorised heat-method solver, shared across sources on one mesh.

    Factorises (A - t*L) for the short-time heat step and the pinned
    Laplacian for the distance-recovery Poisson solve once; each source
    then costs two triangular solves.
    """

    def __init__(self, mesh: TriangleMesh, t_scale: float = 1.0):
        if t_scale <= 0:
            raise ValueError("t_scale must be positive")
        self.mesh = mesh
        self.t_scale = float(t_scale)
        lap, areas = cotangent_laplacian(mesh)
        self.laplacian = lap
        self.areas = areas
        h = mesh.mean_edge_length()
        self.t = self.t_scale * h * h
        heat_op = (diags(areas) - self.t * lap).tocsc()
        stiffness = (-lap).tolil()
        # pin vertex 0 to remove the constant null space
        stiffness[0, :] = 0.0
        stiffness[:, 0] = 0.0
        stiffness[0, 0] = 1.0
        try:
            self._heat_lu = splu(heat_op)
            self._poisson_lu = splu(stiffness.tocsc())
        except RuntimeError as exc:
            raise NumericalError(f"sparse factorisation failed: {exc}") from exc
        self._heat_op = heat_op
        self._grad = _FaceGradient(mesh)

    def distance_field(self, source: SurfacePoint) -> DistanceField:
        mesh = self.mesh
        rhs = np.zeros(mesh.num_vertices)
        rhs[mesh.faces[source.face_index]] += source.barycentric
        u = self._heat_lu.solve(rhs)
        res = np.linalg.norm(self._heat_op @ u - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if not np.isfinite(u).all() or res > _SOLVE_RESIDUAL_TOL:
            raise NumericalError("heat-step solve failed", residual=float(res))

        grad_u = self._grad.apply(u)
        norms = np.linalg.norm(grad_u, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        x_field = -grad_u / norms

        div = self._grad.divergence(x_field)
        div = div - div.mean()  # Neumann compatibility
        b = div.copy()
        b[0] = 0.0
        phi = self._poisson_lu.solve(b)
        if not np.isfinite(phi).all():
            raise NumericalError("distance-recovery solve produced non-finite values")
        # orient so the source is the minimum, then shift distance(source)=0
        src_val = float(source.barycentric @ phi[mesh.faces[source.face_index]])
        if src_val > phi.mean():
            phi = -phi
            src_val = -src_val
        return DistanceField(phi - src_val, source, self.t_scale)


class _FaceGradient:
    """Per-face gradient and vertex divergence operators (cotan discretisation)."""

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        v, f = mesh.vertices, mesh.faces
        n = mesh.face_normals
        a2 = (2.0 * mesh.face_areas)[:, None]
        # gradient of the hat function of vertex k is (N x e_k) / (2A),
        # e_k the edge opposite k
        self.g0 = np.cross(n, v[f[:, 2]] - v[f[:, 1]]) / a2
        self.g1 = np.cross(n, v[f[:, 0]] - v[f[:, 2]]) / a2
        self.g2 = np.cross(n, v[f[:, 1]] - v[f[:, 0]]) / a2

    def apply(self, scalars: np.ndarray) -> np.ndarray:
        f = self.mesh.faces
        return (scalars[f[:, 0], None] * self.g0
                + scalars[f[:, 1], None] * self.g1
                + scalars[f[:, 2], None] * self.g2)

    def divergence(self, face_vectors: np.ndarray) -> np.ndarray:
        # integrated divergence: d_i = sum_f A_f * (grad hat_i . X_f)
        out = np.zeros(self.mesh.num_vertices)
        f = self.mesh.faces
        w = self.mesh.face_areas[:, None] * face_vectors
        np.add.at(out, f[:, 0], np.einsum("ij,ij->i", self.g0, w))
        np.add.at(out, f[:, 1], np.einsum("ij,ij->i", self.g1, w))
        np.add.at(out, f[:, 2], np.einsum("ij,ij->i", self.g2, w))
        return out


def heat_distance_field(mesh: TriangleMesh, source: SurfacePoint,
                        t_scale: float = 1.0) -> DistanceField:
    """Heat-method geodesic distance from a source point.

    Diffuse a source indicator for a short time t = t_scale * h^2 (h the
    mean edge length), normalise the negated gradient, and recover the
    distance whose gradient best matches it; shifted so the source reads 0.
    """
    return HeatSolver(mesh, t_scale).distance_field(source)


def face_gradient_directions(mesh: TriangleMesh, field: DistanceField) -> np.ndarray:
    """Unit distance-field gradient per face; zero rows where degenerate."""
    grad = _FaceGradient(mesh).apply(field.values)
    norms = np.linalg.norm(grad, axis=1, keepdims=True)
    out = np.zeros_like(grad)
    ok = norms[:, 0] > 1e-12
    out[ok] = grad[ok] / norms[ok]
    return out


def distance_gradient_direction(mesh: TriangleMesh, field: DistanceField,
                                target: SurfacePoint) -> np.ndarray:
    """Unit tangent, at the target, of the minimal geodesic from the field's
    source, pointing away from the source (the intrinsic distance gradient
    on the target's face).
    """
    grad = _FaceGradient(mesh).apply(field.values)[target.face_index]
    norm = np.linalg.norm(grad)
    if norm < 1e-12:
        raise ZeroGradientError(
            f"distance gradient vanishes on face {target.face_index}")
    return grad / norm
