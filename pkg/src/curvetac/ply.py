"""Binary little-endian PLY export of baked light fields (diagnostics).

Each valid pixel becomes one point: surface position, the direction encoded
as RGB (unit vector mapped to [0, 255]) and as explicit dx/dy/dz floats.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError

_HEADER = """ply
format binary_little_endian 1.0
element vertex {count}
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
property float dx
property float dy
property float dz
end_header
"""

_POINT_DTYPE = np.dtype([
    ("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
    ("red", "u1"), ("green", "u1"), ("blue", "u1"),
    ("dx", "<f4"), ("dy", "<f4"), ("dz", "<f4"),
])


def write_direction_ply(path, positions: np.ndarray, directions: np.ndarray):
    """Write points with direction attributes; inputs are (N, 3) arrays."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    if len(pos) != len(dirs):
        raise ValueError("positions and directions must pair up")
    rec = np.empty(len(pos), dtype=_POINT_DTYPE)
    rec["x"], rec["y"], rec["z"] = pos[:, 0], pos[:, 1], pos[:, 2]
    rgb = np.clip(np.rint((dirs * 0.5 + 0.5) * 255.0), 0, 255).astype(np.uint8)
    rec["red"], rec["green"], rec["blue"] = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    rec["dx"], rec["dy"], rec["dz"] = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    with open(path, "wb") as fh:
        fh.write(_HEADER.format(count=len(pos)).encode("ascii"))
        fh.write(rec.tobytes())


def read_direction_ply(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back a direction PLY: (positions, rgb, directions)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise FormatError(f"{path}: not a PLY file")
    header = blob[:end].decode("ascii", errors="replace")
    count = None
    for line in header.splitlines():
        if line.startswith("element vertex"):
            count = int(line.split()[-1])
    if count is None:
        raise FormatError(f"{path}: PLY header lacks a vertex element")
    rec = np.frombuffer(blob, dtype=_POINT_DTYPE, count=count, offset=end + len(b"end_header\n"))
    pos = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    rgb = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1)
    dirs = np.stack([rec["dx"], rec["dy"], rec["dz"]], axis=1).astype(np.float64)
    return pos, rgb, dirs
