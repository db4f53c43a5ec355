"""Procedural membrane prototypes.

Handy for trying the pipeline without CAD assets and for exploring sensor
morphologies before fabrication: flat sheets, open cylinders, finger shapes
(cylinder + hemispherical tip) and icospheres. All dimensions in metres.
"""

from __future__ import annotations

import struct

import numpy as np

from .mesh import TriangleMesh


def flat_sheet(half_extent: float = 0.025, z: float = 0.02, divisions: int = 60) -> TriangleMesh:
    """Square sheet in the plane z = const, centred on the camera axis."""
    ticks = np.linspace(-half_extent, half_extent, divisions + 1)
    xx, yy = np.meshgrid(ticks, ticks, indexing="xy")
    verts = np.stack([xx.reshape(-1), yy.reshape(-1),
                      np.full(xx.size, float(z))], axis=1)
    faces = []
    n = divisions + 1
    for r in range(divisions):
        for c in range(divisions):
            a = r * n + c
            b = a + 1
            d = a + n
            e = d + 1
            faces.append([a, b, e])
            faces.append([a, e, d])
    return TriangleMesh(verts, np.array(faces))


def open_cylinder(radius: float = 1.0, z_min: float = 0.0, z_max: float = 2.0,
                  segments: int = 128, rings: int = 64) -> TriangleMesh:
    """Open tube around the z axis (boundary rings at both ends)."""
    thetas = np.arange(segments) / segments * 2.0 * np.pi
    zs = np.linspace(z_min, z_max, rings + 1)
    verts = np.empty((len(zs) * segments, 3))
    for i, z in enumerate(zs):
        verts[i * segments:(i + 1) * segments, 0] = radius * np.cos(thetas)
        verts[i * segments:(i + 1) * segments, 1] = radius * np.sin(thetas)
        verts[i * segments:(i + 1) * segments, 2] = z
    faces = []
    for i in range(rings):
        for j in range(segments):
            a = i * segments + j
            b = i * segments + (j + 1) % segments
            c = (i + 1) * segments + j
            d = (i + 1) * segments + (j + 1) % segments
            faces.append([a, b, d])
            faces.append([a, d, c])
    return TriangleMesh(verts, np.array(faces))


def capped_finger(radius: float = 0.012, z_base: float = 0.01, z_tip: float = 0.035,
                  segments: int = 160, barrel_rings: int = 60,
                  cap_rings: int = 40) -> TriangleMesh:
    """Finger-shaped membrane: open-based cylinder with a hemispherical tip.

    The tube runs from z_base to z_tip around the +z axis; the cap closes it
    with a hemisphere of the same radius (apex at z_tip + radius).
    """
    thetas = np.arange(segments) / segments * 2.0 * np.pi
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    rows = []
    for z in np.linspace(z_base, z_tip, barrel_rings + 1):
        rows.append(np.stack([radius * cos_t, radius * sin_t,
                              np.full(segments, z)], axis=1))
    # cap rings at increasing polar elevation, excluding the apex
    for phi in np.linspace(0.0, np.pi / 2.0, cap_rings + 1)[1:-1]:
        r = radius * np.cos(phi)
        rows.append(np.stack([r * cos_t, r * sin_t,
                              np.full(segments, z_tip + radius * np.sin(phi))], axis=1))
    verts = np.concatenate(rows + [np.array([[0.0, 0.0, z_tip + radius]])])
    apex = len(verts) - 1
    faces = []
    n_rows = len(rows)
    for i in range(n_rows - 1):
        for j in range(segments):
            a = i * segments + j
            b = i * segments + (j + 1) % segments
            c = (i + 1) * segments + j
            d = (i + 1) * segments + (j + 1) % segments
            faces.append([a, b, d])
            faces.append([a, d, c])
    top = (n_rows - 1) * segments
    for j in range(segments):
        faces.append([top + j, top + (j + 1) % segments, apex])
    return TriangleMesh(verts, np.array(faces))


def icosphere(subdivisions: int = 4, radius: float = 1.0) -> TriangleMesh:
    """Unit-ish sphere from a subdivided icosahedron (2562 vertices at level 4)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts[0])
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True) * radius
    return TriangleMesh(verts, faces)


def _subdivide(verts, faces):
    cache: dict[tuple[int, int], int] = {}
    new_verts = [v for v in verts]

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            m = (verts[a] + verts[b]) / 2.0
            m = m / np.linalg.norm(m)
            cache[key] = len(new_verts)
            new_verts.append(m)
        return cache[key]

    new_faces = []
    for a, b, c in faces:
        ab = midpoint(a, b)
        bc = midpoint(b, c)
        ca = midpoint(c, a)
        new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return np.array(new_verts), np.array(new_faces, dtype=np.int64)


def save_stl(mesh: TriangleMesh, path):
    """Binary STL writer (for generated fixtures and prototypes)."""
    f = mesh.faces
    v = mesh.vertices
    with open(path, "wb") as fh:
        fh.write(b"curvetac membrane".ljust(80, b"\0"))
        fh.write(struct.pack("<I", len(f)))
        rec = np.zeros((len(f), 50), dtype=np.uint8)
        block = np.empty((len(f), 12), dtype="<f4")
        block[:, 0:3] = mesh.face_normals
        block[:, 3:6] = v[f[:, 0]]
        block[:, 6:9] = v[f[:, 1]]
        block[:, 9:12] = v[f[:, 2]]
        rec[:, 0:48] = block.view(np.uint8).reshape(len(f), 48)
        fh.write(rec.tobytes())


def save_obj(mesh: TriangleMesh, path):
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")
