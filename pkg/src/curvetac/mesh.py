"""Triangle meshes of sensor membranes: loading, validation, indexing.

Meshes are immutable after construction. All coordinates are metres.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import MeshError

# Duplicate vertices closer than this are merged on load (STL duplicates
# every vertex per facet; merging is required for adjacency).
MERGE_TOLERANCE = 1e-9
# Faces below this area are rejected as degenerate.
DEGENERATE_AREA = 1e-12


@dataclass(frozen=True)
class SurfacePoint:
    """A continuous location on a mesh: face index + barycentric coordinates."""

    face_index: int
    barycentric: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.barycentric, dtype=np.float64)
        if b.shape != (3,) or np.any(b < -1e-9) or abs(b.sum() - 1.0) > 1e-9:
            raise ValueError(f"invalid barycentric coordinates {b}")
        object.__setattr__(self, "barycentric", b)
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))


class TriangleMesh:
    """Validated, indexed triangle mesh.

    Construction computes face/vertex normals, face adjacency and the
    vertex->face incidence table, and rejects degenerate, non-manifold or
    disconnected input. Arrays are read-only afterwards; the mesh is safe
    for concurrent readers.
    """

    def __init__(self, vertices, faces):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        f = np.ascontiguousarray(faces, dtype=np.int32)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must be (F, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        if len(f) == 0:
            raise MeshError("mesh has no faces")

        self.vertices = v
        self.faces = f
        self._validate_faces()
        self._build_adjacency()
        self._validate_topology()
        self._compute_normals()
        for arr in (self.vertices, self.faces, self.face_normals,
                    self.face_areas, self.vertex_normals, self.adjacent_faces):
            arr.flags.writeable = False
        self._kdtree = None
        self._edge_graph = None

    # -- construction ------------------------------------------------------

    def _validate_faces(self):
        f = self.faces
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])):
            raise MeshError("face with repeated vertex indices")
        v = self.vertices
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        bad = np.nonzero(areas <= DEGENERATE_AREA)[0]
        if bad.size:
            raise MeshError(f"degenerate (zero-area) faces: {bad[:10].tolist()}")
        self._face_cross = cross
        self.face_areas = areas

    def _build_adjacency(self):
        f = self.faces
        nf = len(f)
        # Edge k of face f is (f[k], f[(k+1)%3]).
        ea = f[:, [0, 1, 2]].reshape(-1)
        eb = f[:, [1, 2, 0]].reshape(-1)
        key = np.minimum(ea, eb).astype(np.int64) * len(self.vertices) + np.maximum(ea, eb)
        order = np.argsort(key, kind="stable")
        sk = key[order]
        boundaries = np.nonzero(np.diff(sk))[0] + 1
        starts = np.concatenate(([0], boundaries))
        ends = np.concatenate((boundaries, [len(sk)]))
        counts = ends - starts
        if np.any(counts > 2):
            i = order[starts[np.argmax(counts > 2)]]
            raise MeshError(
                f"non-manifold edge ({ea[i]}, {eb[i]}) shared by {counts.max()} faces")
        adj = np.full(3 * nf, -1, dtype=np.int32)
        paired = np.nonzero(counts == 2)[0]
        first = order[starts[paired]]
        second = order[starts[paired] + 1]
        adj[first] = second // 3
        adj[second] = first // 3
        self.adjacent_faces = adj.reshape(nf, 3)
        self.edge_count = len(starts)
        # vertex -> incident faces (CSR layout)
        vf_vertex = f.reshape(-1)
        vf_face = np.repeat(np.arange(nf, dtype=np.int32), 3)
        order = np.argsort(vf_vertex, kind="stable")
        self.vertex_face_offsets = np.zeros(len(self.vertices) + 1, dtype=np.int64)
        np.add.at(self.vertex_face_offsets, vf_vertex + 1, 1)
        np.cumsum(self.vertex_face_offsets, out=self.vertex_face_offsets)
        self.vertex_faces = np.ascontiguousarray(vf_face[order])
        self.vertex_face_offsets.flags.writeable = False
        self.vertex_faces.flags.writeable = False

    def _validate_topology(self):
        n = len(self.vertices)
        rows = self.faces[:, [0, 1, 2]].reshape(-1)
        cols = self.faces[:, [1, 2, 0]].reshape(-1)
        g = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        ncomp = csgraph.connected_components(g, directed=False, return_labels=False)
        if ncomp != 1:
            raise MeshError(f"mesh has {ncomp} connected components, expected 1")

    def _compute_normals(self):
        fn = self._face_cross / np.linalg.norm(self._face_cross, axis=1, keepdims=True)
        self.face_normals = fn
        vn = np.zeros_like(self.vertices)
        # area weighting: the unnormalised cross product already carries 2*area
        np.add.at(vn, self.faces[:, 0], self._face_cross)
        np.add.at(vn, self.faces[:, 1], self._face_cross)
        np.add.at(vn, self.faces[:, 2], self._face_cross)
        norms = np.linalg.norm(vn, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        self.vertex_normals = vn / norms
        del self._face_cross

    # -- basic queries -----------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def euler_characteristic(self) -> int:
        return self.num_vertices - self.edge_count + self.num_faces

    def mean_edge_length(self) -> float:
        v, f = self.vertices, self.faces
        lengths = [np.linalg.norm(v[f[:, i]] - v[f[:, (i + 1) % 3]], axis=1)
                   for i in range(3)]
        # each interior edge counted twice; fine for a mean
        return float(np.mean(np.concatenate(lengths)))

    def kdtree(self) -> cKDTree:
        if self._kdtree is None:
            self._kdtree = cKDTree(self.vertices)
        return self._kdtree

    def edge_graph(self) -> sparse.csr_matrix:
        """Sparse symmetric vertex graph weighted by edge length."""
        if self._edge_graph is None:
            v, f = self.vertices, self.faces
            rows = f[:, [0, 1, 2]].reshape(-1)
            cols = f[:, [1, 2, 0]].reshape(-1)
            w = np.linalg.norm(v[rows] - v[cols], axis=1)
            g = sparse.csr_matrix((w, (rows, cols)), shape=(len(v), len(v)))
            self._edge_graph = g.maximum(g.T)
        return self._edge_graph

    def content_hash(self) -> str:
        """SHA-256 over the raw vertex and face bytes (identifies the geometry)."""
        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.faces.tobytes())
        return h.hexdigest()

    def transformed(self, rotation, translation) -> "TriangleMesh":
        """Apply a rigid transform (camera-frame alignment) and revalidate."""
        r = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(translation, dtype=np.float64).reshape(3)
        if abs(np.linalg.det(r) - 1.0) > 1e-9 or np.max(np.abs(r @ r.T - np.eye(3))) > 1e-9:
            raise MeshError("alignment transform is not a proper rigid motion")
        return TriangleMesh(self.vertices @ r.T + t, self.faces)

    def interpolated_normal(self, point: SurfacePoint) -> np.ndarray:
        """Unit vertex-normal interpolated at a surface point."""
        n = self.vertex_normals[self.faces[point.face_index]]
        v = point.barycentric @ n
        return v / np.linalg.norm(v)

    def surface_point(self, face_index: int, barycentric) -> SurfacePoint:
        b = np.asarray(barycentric, dtype=np.float64)
        pos = b @ self.vertices[self.faces[face_index]]
        return SurfacePoint(int(face_index), b, pos)

    def vertex_surface_point(self, vertex_index: int) -> SurfacePoint:
        """SurfacePoint at a mesh vertex (lowest incident face, indicator bary)."""
        lo, hi = self.vertex_face_offsets[vertex_index], self.vertex_face_offsets[vertex_index + 1]
        face = int(self.vertex_faces[lo:hi].min())
        bary = np.zeros(3)
        bary[list(self.faces[face]).index(vertex_index)] = 1.0
        return SurfacePoint(face, bary, self.vertices[vertex_index].copy())


# -- loading ---------------------------------------------------------------


def load_mesh(path, format: str | None = None) -> TriangleMesh:
    """Load and validate an STL (binary or ASCII) or OBJ mesh.

    Duplicate vertices within 1e-9 m are merged. Units are metres; no
    conversion is performed. Raises MeshError on parse or validation
    failure (degenerate faces, non-manifold edges, multiple components).
    """
    path = Path(path)
    if not path.exists():
        raise MeshError(f"mesh file not found: {path}")
    if format is None:
        format = path.suffix.lower().lstrip(".")
    if format == "stl":
        tri = _read_stl(path)
        vertices, faces = _merge_vertices(tri)
    elif format == "obj":
        vertices, faces = _read_obj(path)
        vertices, faces = _merge_indexed(vertices, faces)
    else:
        raise MeshError(f"unsupported mesh format: {format!r}")
    return TriangleMesh(vertices, faces)


def _read_stl(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < 5:
        raise MeshError(f"{path}: truncated STL")
    if data[:5] == b"solid":
        try:
            return _parse_ascii_stl(data.decode("ascii", errors="replace"))
        except MeshError:
            # some binary exporters start the 80-byte header with "solid"
            pass
    return _parse_binary_stl(data, path)


def _parse_ascii_stl(text: str) -> np.ndarray:
    coords = []
    for line in text.splitlines():
        parts = line.split()
        if parts and parts[0] == "vertex":
            if len(parts) != 4:
                raise MeshError(f"bad STL vertex line: {line.strip()!r}")
            coords.append([float(x) for x in parts[1:]])
    if not coords or len(coords) % 3:
        raise MeshError("ASCII STL without a whole number of facets")
    return np.array(coords, dtype=np.float64).reshape(-1, 3, 3)


def _parse_binary_stl(data: bytes, path: Path) -> np.ndarray:
    if len(data) < 84:
        raise MeshError(f"{path}: binary STL shorter than header")
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + count * 50
    if len(data) < expected:
        raise MeshError(f"{path}: binary STL truncated ({len(data)} < {expected} bytes)")
    rec = np.frombuffer(data, dtype=np.uint8, count=count * 50, offset=84).reshape(count, 50)
    tri = rec[:, 12:48].copy().view("<f4").reshape(count, 3, 3)
    return tri.astype(np.float64)


def _read_obj(path: Path) -> tuple[np.ndarray, np.ndarray]:
    vertices, faces = [], []
    with open(path, "r", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: bad vertex line")
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for token in parts[1:]:
                    s = token.split("/")[0]
                    i = int(s)
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise MeshError(f"{path}:{lineno}: face with <3 vertices")
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices or not faces:
        raise MeshError(f"{path}: OBJ contains no geometry")
    return np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64)


def _merge_vertices(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge per-facet duplicated vertices by grid quantisation."""
    flat = triangles.reshape(-1, 3)
    keys = np.round(flat / MERGE_TOLERANCE).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    # keep first-occurrence order for determinism
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    vertices = flat[first[order]]
    faces = rank[inverse].reshape(-1, 3)
    return vertices, faces


def _merge_indexed(vertices: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keys = np.round(vertices / MERGE_TOLERANCE).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    merged = vertices[first[order]]
    remapped = rank[inverse][faces]
    # drop vertices never referenced by a face
    used = np.zeros(len(merged), dtype=bool)
    used[remapped.reshape(-1)] = True
    if not used.all():
        newidx = np.cumsum(used) - 1
        merged = merged[used]
        remapped = newidx[remapped]
    return merged, remapped


# -- closest-point queries --------------------------------------------------


def closest_surface_point(mesh: TriangleMesh, q) -> SurfacePoint:
    """Surface point of `mesh` nearest to `q`; ties broken by lowest face index."""
    face, bary, pos, _ = _closest_batch(mesh, np.asarray(q, dtype=np.float64).reshape(1, 3))
    return SurfacePoint(int(face[0]), bary[0], pos[0])


def closest_surface_points(mesh: TriangleMesh, points) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised nearest-surface-point query.

    Returns (face_indices, barycentric (N,3), positions (N,3), distances (N)).
    """
    return _closest_batch(mesh, np.ascontiguousarray(points, dtype=np.float64))


_CLOSEST_CHUNK = 16384


def _closest_batch(mesh, q):
    n = len(q)
    faces_out = np.empty(n, dtype=np.int64)
    bary_out = np.empty((n, 3))
    pos_out = np.empty((n, 3))
    dist_out = np.empty(n)
    for lo in range(0, n, _CLOSEST_CHUNK):
        hi = min(lo + _CLOSEST_CHUNK, n)
        _closest_chunk(mesh, q[lo:hi], faces_out[lo:hi], bary_out[lo:hi],
                       pos_out[lo:hi], dist_out[lo:hi])
    return faces_out, bary_out, pos_out, dist_out


def _closest_chunk(mesh, q, faces_out, bary_out, pos_out, dist_out):
    tree = mesh.kdtree()
    d_vert, _ = tree.query(q, k=1)
    # the nearest face has a vertex within (distance to nearest vertex) +
    # (largest face diameter) of q, so this radius captures it
    v, f = mesh.vertices, mesh.faces
    if not hasattr(mesh, "_max_face_diam"):
        diams = np.max([np.linalg.norm(v[f[:, i]] - v[f[:, (i + 1) % 3]], axis=1)
                        for i in range(3)], axis=0)
        mesh._max_face_diam = float(diams.max())
    radii = d_vert + mesh._max_face_diam * (1 + 1e-12) + 1e-15
    neighborhoods = tree.query_ball_point(q, radii)

    offs, vfaces = mesh.vertex_face_offsets, mesh.vertex_faces
    q_idx, f_idx = [], []
    for i, verts in enumerate(neighborhoods):
        cand = np.unique(np.concatenate([vfaces[offs[j]:offs[j + 1]] for j in verts]))
        q_idx.append(np.full(len(cand), i, dtype=np.int64))
        f_idx.append(cand)
    q_idx = np.concatenate(q_idx)
    f_idx = np.concatenate(f_idx)

    bary, pts = _point_triangle(q[q_idx], v[f[f_idx, 0]], v[f[f_idx, 1]], v[f[f_idx, 2]])
    d2 = np.sum((q[q_idx] - pts) ** 2, axis=1)
    # per-query argmin with (distance, face index) tie-breaking
    order = np.lexsort((f_idx, d2, q_idx))
    firsts = order[np.searchsorted(q_idx[order], np.arange(len(q)))]
    faces_out[:] = f_idx[firsts]
    bary_out[:] = bary[firsts]
    pos_out[:] = pts[firsts]
    dist_out[:] = np.sqrt(d2[firsts])


def _point_triangle(p, a, b, c):
    """Closest point on triangles (a,b,c) to points p (vectorised Ericson).

    Returns (barycentric (N,3), closest point (N,3)).
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    n = len(p)
    u = np.empty(n)
    w = np.empty(n)
    done = np.zeros(n, dtype=bool)

    def settle(mask, uu, ww):
        fresh = mask & ~done
        u[fresh] = np.broadcast_to(uu, n)[fresh] if np.ndim(uu) else uu
        w[fresh] = np.broadcast_to(ww, n)[fresh] if np.ndim(ww) else ww
        done[fresh] = True

    settle((d1 <= 0) & (d2 <= 0), 0.0, 0.0)                       # vertex a
    settle((d3 >= 0) & (d4 <= d3), 1.0, 0.0)                      # vertex b
    settle((d6 >= 0) & (d5 <= d6), 0.0, 1.0)                      # vertex c
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
    settle((vc <= 0) & (d1 >= 0) & (d3 <= 0), t_ab, 0.0)          # edge ab
    vb = d5 * d2 - d1 * d6
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
    settle((vb <= 0) & (d2 >= 0) & (d6 <= 0), 0.0, t_ac)          # edge ac
    va = d3 * d6 - d5 * d4
    with np.errstate(divide="ignore", invalid="ignore"):
        t_bc = np.where((d4 - d3) + (d5 - d6) != 0,
                        (d4 - d3) / ((d4 - d3) + (d5 - d6)), 0.0)
    settle((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), 1.0 - t_bc, t_bc)  # edge bc
    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        vv = np.where(denom != 0, vb / denom, 1.0 / 3.0)
        ww_int = np.where(denom != 0, vc / denom, 1.0 / 3.0)
    settle(np.ones(n, dtype=bool), vv, ww_int)                    # interior

    u = np.clip(u, 0.0, 1.0)
    w = np.clip(w, 0.0, 1.0)
    bary = np.stack([1.0 - u - w, u, w], axis=1)
    bary[:, 0] = np.clip(bary[:, 0], 0.0, 1.0)
    bary /= bary.sum(axis=1, keepdims=True)
    pts = a + u[:, None] * ab + w[:, None] * ac
    return bary, pts


# -- differential operators ---------------------------------------------------


def cotangent_laplacian(mesh: TriangleMesh) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Cotangent Laplacian and lumped (barycentric) vertex areas.

    Off-diagonal weights w_ij = (cot a_ij + cot b_ij) / 2, diagonal the
    negative row sum (constant functions are in the kernel); symmetric.
    Areas are positive, one third of each incident face's area.
    """
    v, f = mesh.vertices, mesh.faces
    n = len(v)
    i0, i1, i2 = f[:, 0], f[:, 1], f[:, 2]
    e0 = v[i2] - v[i1]  # edge opposite vertex 0
    e1 = v[i0] - v[i2]
    e2 = v[i1] - v[i0]
    area2 = 2.0 * mesh.face_areas
    # cot(angle at vertex k) = -(e_i . e_j) / (2 * area) for the two edges
    # adjacent to k (with the cyclic sign convention below)
    cot0 = -np.einsum("ij,ij->i", e1, e2) / area2
    cot1 = -np.einsum("ij,ij->i", e2, e0) / area2
    cot2 = -np.einsum("ij,ij->i", e0, e1) / area2

    rows = np.concatenate([i1, i2, i2, i0, i0, i1])
    cols = np.concatenate([i2, i1, i0, i2, i1, i0])
    vals = 0.5 * np.concatenate([cot0, cot0, cot1, cot1, cot2, cot2])
    lap = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    diag = np.asarray(lap.sum(axis=1)).reshape(-1)
    lap = lap - sparse.diags(diag)

    areas = np.zeros(n)
    third = mesh.face_areas / 3.0
    np.add.at(areas, i0, third)
    np.add.at(areas, i1, third)
    np.add.at(areas, i2, third)
    return lap.tocsr(), areas
