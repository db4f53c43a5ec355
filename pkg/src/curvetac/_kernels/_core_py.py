"""Pure-Python surface-path kernels (fallback backend).

Mirrors `_core_cy.pyx` operation for operation: both backends must produce
bit-identical output (the compiled extension is built with FMA contraction
disabled for exactly this reason). Scalar math only inside the loops.
"""

import math

import numpy as np

# guard band keeping instantiated edge points off exact endpoints
_T_GUARD = 1e-9


def _local_edge(faces, f, a, b):
    """Local index k of edge {a, b} in face f, or -1."""
    v0 = faces[f, 0]
    v1 = faces[f, 1]
    v2 = faces[f, 2]
    if (v0 == a and v1 == b) or (v0 == b and v1 == a):
        return 0
    if (v1 == a and v2 == b) or (v1 == b and v2 == a):
        return 1
    if (v2 == a and v0 == b) or (v2 == b and v0 == a):
        return 2
    return -1


def slice_walk(vertices, faces, adjacent, plane_point, plane_normal,
               src_face, src_pos, tgt_face, tgt_pos, max_steps):
    """Trace the mesh/plane intersection from src_face to tgt_face.

    Walks face to face along the intersection component through the source,
    in both directions, and returns the shorter polyline that reaches the
    target face (ordered source -> target).

    Returns (points ndarray (N,3), reached bool).
    """
    px, py, pz = float(plane_point[0]), float(plane_point[1]), float(plane_point[2])
    nx, ny, nz = float(plane_normal[0]), float(plane_normal[1]), float(plane_normal[2])
    sx, sy, sz = float(src_pos[0]), float(src_pos[1]), float(src_pos[2])
    tx, ty, tz = float(tgt_pos[0]), float(tgt_pos[1]), float(tgt_pos[2])

    if src_face == tgt_face:
        return np.array([[sx, sy, sz], [tx, ty, tz]]), True

    def vdist(vid):
        return ((vertices[vid, 0] - px) * nx + (vertices[vid, 1] - py) * ny
                + (vertices[vid, 2] - pz) * nz)

    def crossings(f, skip_k):
        out = []
        dd = (vdist(faces[f, 0]), vdist(faces[f, 1]), vdist(faces[f, 2]))
        for k in range(3):
            if k == skip_k:
                continue
            da = dd[k]
            db = dd[(k + 1) % 3]
            if (da >= 0.0) != (db >= 0.0):
                out.append((k, da, db))
        return out

    def edge_point(f, k, da, db):
        a = faces[f, k]
        b = faces[f, (k + 1) % 3]
        t = da / (da - db)
        return (vertices[a, 0] + t * (vertices[b, 0] - vertices[a, 0]),
                vertices[a, 1] + t * (vertices[b, 1] - vertices[a, 1]),
                vertices[a, 2] + t * (vertices[b, 2] - vertices[a, 2]))

    best_pts = None
    best_len = 0.0
    for k0, da0, db0 in crossings(src_face, -1):
        pts = [(sx, sy, sz)]
        q = edge_point(src_face, k0, da0, db0)
        if _dist3(pts[-1], q) > 1e-15:
            pts.append(q)
        f = src_face
        k = k0
        reached = False
        for _ in range(max_steps):
            nxt = adjacent[f, k]
            if nxt == -1 or nxt == src_face:
                break
            if nxt == tgt_face:
                if _dist3(pts[-1], (tx, ty, tz)) > 1e-15:
                    pts.append((tx, ty, tz))
                reached = True
                break
            a = faces[f, k]
            b = faces[f, (k + 1) % 3]
            entry = _local_edge(faces, nxt, a, b)
            exits = crossings(nxt, entry)
            if not exits:
                break
            k, da, db = exits[0]
            q = edge_point(nxt, k, da, db)
            if _dist3(pts[-1], q) > 1e-15:
                pts.append(q)
            f = nxt
        if reached:
            length = _polyline_length(pts)
            if best_pts is None or length < best_len:
                best_pts = pts
                best_len = length
    if best_pts is None:
        return np.zeros((0, 3)), False
    return np.array(best_pts), True


def _dist3(p, q):
    dx = q[0] - p[0]
    dy = q[1] - p[1]
    dz = q[2] - p[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def _polyline_length(pts):
    total = 0.0
    for i in range(len(pts) - 1):
        total += _dist3(pts[i], pts[i + 1])
    return total


# ---------------------------------------------------------------------------
# Path straightening: strip unfolding + funnel, with fan rerouting at pinned
# vertices. Node kinds: 0 = fixed endpoint (face in `ia`), 1 = point on edge
# (vertices `ia`,`ib`, parameter `t`), 2 = mesh vertex (`ia`).
# ---------------------------------------------------------------------------


class _Node:
    __slots__ = ("kind", "ia", "ib", "t", "x", "y", "z")

    def __init__(self, kind, ia, ib, t, x, y, z):
        self.kind = kind
        self.ia = ia
        self.ib = ib
        self.t = t
        self.x = x
        self.y = y
        self.z = z


def _node_pos(node):
    return (node.x, node.y, node.z)


def _edge_node(vertices, a, b, t):
    ax, ay, az = vertices[a, 0], vertices[a, 1], vertices[a, 2]
    bx, by, bz = vertices[b, 0], vertices[b, 1], vertices[b, 2]
    return _Node(1, a, b, t, ax + t * (bx - ax), ay + t * (by - ay), az + t * (bz - az))


def _vertex_node(vertices, v):
    return _Node(2, v, -1, 0.0, vertices[v, 0], vertices[v, 1], vertices[v, 2])


def _vertex_incident(vf_offsets, vf_faces, v):
    return vf_faces[vf_offsets[v]:vf_offsets[v + 1]]


def _node_faces(faces, vf_offsets, vf_faces, node):
    if node.kind == 0:
        return (node.ia,)
    if node.kind == 1:
        out = []
        for f in _vertex_incident(vf_offsets, vf_faces, node.ia):
            if (faces[f, 0] == node.ib or faces[f, 1] == node.ib
                    or faces[f, 2] == node.ib):
                out.append(int(f))
        out.sort()
        return tuple(out)
    return tuple(sorted(int(f) for f in _vertex_incident(vf_offsets, vf_faces, node.ia)))


def _shared_face(faces, vf_offsets, vf_faces, n1, n2):
    fa = _node_faces(faces, vf_offsets, vf_faces, n1)
    fb = _node_faces(faces, vf_offsets, vf_faces, n2)
    best = -1
    for f in fa:
        for g in fb:
            if f == g and (best == -1 or f < best):
                best = f
    return best


def straighten_path(vertices, faces, adjacent, vf_offsets, vf_faces,
                    src_pos, src_face, tgt_pos, tgt_face, vertex_chain,
                    tol, max_iter):
    """Iteratively shorten a surface path by strip unfolding.

    Each pass unfolds the face strips between pinned nodes (endpoints and
    mesh vertices) into the plane and replaces the run with the taut
    shortest path inside the strip (funnel algorithm); pinned vertices are
    then rerouted around their flattened one-ring fan whenever that
    shortens the path. Stops when a pass improves the total length by less
    than `tol` (relative) or after `max_iter` passes.

    Returns (points ndarray (N,3), total length).
    """
    nodes = [_Node(0, int(src_face), -1, 0.0,
                   float(src_pos[0]), float(src_pos[1]), float(src_pos[2]))]
    for v in vertex_chain:
        nodes.append(_vertex_node(vertices, int(v)))
    nodes.append(_Node(0, int(tgt_face), -1, 0.0,
                       float(tgt_pos[0]), float(tgt_pos[1]), float(tgt_pos[2])))
    _cleanup(nodes)

    length = _nodes_length(nodes)
    for _ in range(max_iter):
        nodes = _funnel_pass(vertices, faces, vf_offsets, vf_faces, nodes)
        _vertex_sweep(vertices, faces, adjacent, vf_offsets, vf_faces, nodes)
        _cleanup(nodes)
        new_length = _nodes_length(nodes)
        if length - new_length <= tol * length:
            length = new_length
            break
        length = new_length
    pts = np.array([[n.x, n.y, n.z] for n in nodes])
    return pts, length


def _nodes_length(nodes):
    total = 0.0
    for i in range(len(nodes) - 1):
        total += _dist3(_node_pos(nodes[i]), _node_pos(nodes[i + 1]))
    return total


def _cleanup(nodes):
    i = 1
    while i < len(nodes) - 1:
        cur = nodes[i]
        removed = False
        for j in (i - 1, i + 1):
            other = nodes[j]
            if cur.kind == 2 and other.kind == 2 and cur.ia == other.ia:
                removed = True
                break
            if _dist3(_node_pos(cur), _node_pos(other)) < 1e-15:
                removed = True
                break
        if removed:
            del nodes[i]
            if i > 1:
                i -= 1
        else:
            i += 1


# -- strip funnel ------------------------------------------------------------


def _barycentric(vertices, faces, f, px, py, pz):
    a, b, c = faces[f, 0], faces[f, 1], faces[f, 2]
    abx = vertices[b, 0] - vertices[a, 0]
    aby = vertices[b, 1] - vertices[a, 1]
    abz = vertices[b, 2] - vertices[a, 2]
    acx = vertices[c, 0] - vertices[a, 0]
    acy = vertices[c, 1] - vertices[a, 1]
    acz = vertices[c, 2] - vertices[a, 2]
    apx = px - vertices[a, 0]
    apy = py - vertices[a, 1]
    apz = pz - vertices[a, 2]
    d00 = abx * abx + aby * aby + abz * abz
    d01 = abx * acx + aby * acy + abz * acz
    d11 = acx * acx + acy * acy + acz * acz
    d20 = apx * abx + apy * aby + apz * abz
    d21 = apx * acx + apy * acy + apz * acz
    denom = d00 * d11 - d01 * d01
    if denom == 0.0:
        return 1.0, 0.0, 0.0
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return 1.0 - v - w, v, w


def _edge3(vertices, a, b):
    return math.sqrt((vertices[b, 0] - vertices[a, 0]) ** 2
                     + (vertices[b, 1] - vertices[a, 1]) ** 2
                     + (vertices[b, 2] - vertices[a, 2]) ** 2)


def _place_third(vertices, a2, b2, a, b, c, side_ref):
    """2D position of vertex c unfolded across segment a2-b2, on the side
    opposite to `side_ref` (a 2D point), preserving the 3D edge lengths."""
    ra = _edge3(vertices, a, c)
    rb = _edge3(vertices, b, c)
    dx = b2[0] - a2[0]
    dy = b2[1] - a2[1]
    d2 = dx * dx + dy * dy
    d = math.sqrt(d2)
    x = (ra * ra - rb * rb + d2) / (2.0 * d)
    y2 = ra * ra - x * x
    y = math.sqrt(y2) if y2 > 0.0 else 0.0
    # unit frame along a2->b2
    ux, uy = dx / d, dy / d
    # side of side_ref relative to the a2->b2 line
    sref = (b2[0] - a2[0]) * (side_ref[1] - a2[1]) - (b2[1] - a2[1]) * (side_ref[0] - a2[0])
    if sref > 0.0:
        y = -y
    return (a2[0] + x * ux - y * uy, a2[1] + x * uy + y * ux)


def _third_vertex(faces, f, a, b):
    for k in range(3):
        v = faces[f, k]
        if v != a and v != b:
            return int(v)
    return -1


def _shared_edge(faces, f, g):
    """Vertex pair shared by faces f and g, or (-1, -1)."""
    out = []
    for k in range(3):
        v = faces[f, k]
        if faces[g, 0] == v or faces[g, 1] == v or faces[g, 2] == v:
            out.append(int(v))
    if len(out) == 2:
        return out[0], out[1]
    return -1, -1


def _cross2(ax, ay, bx, by):
    return ax * by - ay * bx


def _funnel_pass(vertices, faces, vf_offsets, vf_faces, nodes):
    """Replace every edge-node run between pinned nodes with the taut
    shortest path inside its unfolded face strip."""
    pinned = [i for i, nd in enumerate(nodes) if nd.kind != 1]
    out = [nodes[0]]
    for s in range(len(pinned) - 1):
        lo, hi = pinned[s], pinned[s + 1]
        if hi - lo > 1:
            replacement = _funnel_run(vertices, faces, vf_offsets, vf_faces,
                                      nodes, lo, hi)
            if replacement is not None:
                old_len = _nodes_length(nodes[lo:hi + 1])
                new_len = _nodes_length([nodes[lo]] + replacement + [nodes[hi]])
                if new_len < old_len:
                    out.extend(replacement)
                else:
                    out.extend(nodes[lo + 1:hi])
            else:
                out.extend(nodes[lo + 1:hi])
        out.append(nodes[hi])
    return out


def _funnel_run(vertices, faces, vf_offsets, vf_faces, nodes, lo, hi):
    """Unfold the strip spanned by nodes[lo..hi] and return the taut path's
    interior nodes, or None if the strip is broken."""
    strip = []
    for i in range(lo, hi):
        f = _shared_face(faces, vf_offsets, vf_faces, nodes[i], nodes[i + 1])
        if f == -1:
            return None
        if not strip or strip[-1] != f:
            strip.append(f)
    if len(strip) == 1:
        return []  # straight inside one face

    # unfold the strip; coords2[i] maps the three vertices of strip[i]
    f0 = strip[0]
    a, b, c = int(faces[f0, 0]), int(faces[f0, 1]), int(faces[f0, 2])
    lab = _edge3(vertices, a, b)
    a2 = (0.0, 0.0)
    b2 = (lab, 0.0)
    rc = _edge3(vertices, a, c)
    rbc = _edge3(vertices, b, c)
    x = (rc * rc - rbc * rbc + lab * lab) / (2.0 * lab)
    y2 = rc * rc - x * x
    c2 = (x, math.sqrt(y2) if y2 > 0.0 else 0.0)
    coords = {a: a2, b: b2, c: c2}

    portals = []  # (left_id, left_pos, right_id, right_pos), oriented later
    for i in range(1, len(strip)):
        pa, pb = _shared_edge(faces, strip[i - 1], strip[i])
        if pa == -1:
            return None
        opp_prev = _third_vertex(faces, strip[i - 1], pa, pb)
        nv = _third_vertex(faces, strip[i], pa, pb)
        if nv == -1 or opp_prev == -1:
            return None
        nv2 = _place_third(vertices, coords[pa], coords[pb], pa, pb, nv,
                           coords[opp_prev])
        portals.append((pa, coords[pa], pb, coords[pb]))
        coords = {pa: coords[pa], pb: coords[pb], nv: nv2}

    start2 = _node_in_face_2d(vertices, faces, nodes[lo], f0, a, b, c, a2, b2, c2)
    end2 = _node_in_face_2d_generic(vertices, faces, nodes[hi], strip[-1], coords)
    if start2 is None or end2 is None:
        return None

    bends = _string_pull(start2, end2, portals)
    if bends is None:
        return None
    return _emit_run(vertices, bends, portals)


def _node_in_face_2d(vertices, faces, node, f, a, b, c, a2, b2, c2):
    """2D coordinates of a node lying in face f (first strip face)."""
    if node.kind == 2:
        if node.ia == a:
            return a2
        if node.ia == b:
            return b2
        if node.ia == c:
            return c2
        return None
    u, v, w = _barycentric(vertices, faces, f, node.x, node.y, node.z)
    return (u * a2[0] + v * b2[0] + w * c2[0],
            u * a2[1] + v * b2[1] + w * c2[1])


def _node_in_face_2d_generic(vertices, faces, node, f, coords):
    av = int(faces[f, 0])
    bv = int(faces[f, 1])
    cv = int(faces[f, 2])
    if av not in coords or bv not in coords or cv not in coords:
        return None
    return _node_in_face_2d(vertices, faces, node, f, av, bv, cv,
                            coords[av], coords[bv], coords[cv])


def _string_pull(start2, end2, portals):
    """Funnel algorithm over ordered portals; returns the bend list
    [(pos2, vertex_id_or_-1), ...] including both endpoints."""
    # orient portals into consistent left/right chains
    n = len(portals)
    left_id = [0] * n
    right_id = [0] * n
    left_pos = [None] * n
    right_pos = [None] * n
    left_id[0], left_pos[0] = portals[0][0], portals[0][1]
    right_id[0], right_pos[0] = portals[0][2], portals[0][3]
    for i in range(1, n):
        pa, pa2, pb, pb2 = portals[i]
        if pa == left_id[i - 1] and pa2 == left_pos[i - 1]:
            left_id[i], left_pos[i] = pa, pa2
            right_id[i], right_pos[i] = pb, pb2
        elif pb == left_id[i - 1] and pb2 == left_pos[i - 1]:
            left_id[i], left_pos[i] = pb, pb2
            right_id[i], right_pos[i] = pa, pa2
        elif pa == right_id[i - 1] and pa2 == right_pos[i - 1]:
            right_id[i], right_pos[i] = pa, pa2
            left_id[i], left_pos[i] = pb, pb2
        elif pb == right_id[i - 1] and pb2 == right_pos[i - 1]:
            right_id[i], right_pos[i] = pb, pb2
            left_id[i], left_pos[i] = pa, pa2
        else:
            return None  # broken strip
    # make 'left' geometrically left of start->first-portal
    sgn = _cross2(right_pos[0][0] - start2[0], right_pos[0][1] - start2[1],
                  left_pos[0][0] - start2[0], left_pos[0][1] - start2[1])
    if sgn < 0.0:
        left_id, right_id = right_id, left_id
        left_pos, right_pos = right_pos, left_pos

    left_pos.append(end2)
    right_pos.append(end2)
    left_id.append(-1)
    right_id.append(-1)

    apex = start2
    lpt, rpt = start2, start2
    li = ri = 0
    bends = [(start2, -1)]
    i = 0
    guard = 0
    max_guard = 4 * (n + 2) * (n + 2) + 16
    while i <= n and guard < max_guard:
        guard += 1
        lp = left_pos[i]
        rp = right_pos[i]
        # tighten the right side
        if _cross2(rpt[0] - apex[0], rpt[1] - apex[1],
                   rp[0] - apex[0], rp[1] - apex[1]) >= 0.0:
            if (apex == rpt) or _cross2(lpt[0] - apex[0], lpt[1] - apex[1],
                                        rp[0] - apex[0], rp[1] - apex[1]) < 0.0:
                rpt = rp
                ri = i
            else:
                bends.append((lpt, left_id[li]))
                apex = lpt
                lpt = rpt = apex
                i = li + 1
                li = ri = i - 1
                continue
        # tighten the left side
        if _cross2(lpt[0] - apex[0], lpt[1] - apex[1],
                   lp[0] - apex[0], lp[1] - apex[1]) <= 0.0:
            if (apex == lpt) or _cross2(rpt[0] - apex[0], rpt[1] - apex[1],
                                        lp[0] - apex[0], lp[1] - apex[1]) > 0.0:
                lpt = lp
                li = i
            else:
                bends.append((rpt, right_id[ri]))
                apex = rpt
                lpt = rpt = apex
                i = ri + 1
                li = ri = i - 1
                continue
        i += 1
    if guard >= max_guard:
        return None
    bends.append((end2, -1))
    return bends


def _emit_run(vertices, bends, portals):
    """Convert funnel bends + portal crossings into interior path nodes."""
    out = []
    j = 0  # current bend segment: bends[j] -> bends[j+1]
    for (pa, pa2, pb, pb2) in portals:
        while (j + 2 < len(bends)
               and (bends[j + 1][0] == pa2 or bends[j + 1][0] == pb2)):
            vid = pa if bends[j + 1][0] == pa2 else pb
            if not out or out[-1].kind != 2 or out[-1].ia != vid:
                out.append(_vertex_node(vertices, vid))
            j += 1
        p = bends[j][0]
        q = bends[j + 1][0]
        dx = q[0] - p[0]
        dy = q[1] - p[1]
        ex = pb2[0] - pa2[0]
        ey = pb2[1] - pa2[1]
        fx = pa2[0] - p[0]
        fy = pa2[1] - p[1]
        denom = _cross2(dx, dy, ex, ey)
        if denom == 0.0:
            continue  # segment parallel to the portal: grazing pass, no node
        t = _cross2(dx, dy, fx, fy) / denom
        if t < _T_GUARD:
            t = _T_GUARD
        elif t > 1.0 - _T_GUARD:
            t = 1.0 - _T_GUARD
        out.append(_edge_node(vertices, pa, pb, t))
    return out


# -- vertex rerouting --------------------------------------------------------


def _corner_angle(vertices, faces, f, v):
    """Interior angle of face f at vertex v."""
    if faces[f, 0] == v:
        a, b = faces[f, 1], faces[f, 2]
    elif faces[f, 1] == v:
        a, b = faces[f, 2], faces[f, 0]
    else:
        a, b = faces[f, 0], faces[f, 1]
    ux = vertices[a, 0] - vertices[v, 0]
    uy = vertices[a, 1] - vertices[v, 1]
    uz = vertices[a, 2] - vertices[v, 2]
    wx = vertices[b, 0] - vertices[v, 0]
    wy = vertices[b, 1] - vertices[v, 1]
    wz = vertices[b, 2] - vertices[v, 2]
    du = math.sqrt(ux * ux + uy * uy + uz * uz)
    dw = math.sqrt(wx * wx + wy * wy + wz * wz)
    c = (ux * wx + uy * wy + uz * wz) / (du * dw)
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    return math.acos(c)


def _angle_from(vertices, v, ref, px, py, pz):
    """Angle at vertex v between the ray toward vertex `ref` and point p."""
    ux = vertices[ref, 0] - vertices[v, 0]
    uy = vertices[ref, 1] - vertices[v, 1]
    uz = vertices[ref, 2] - vertices[v, 2]
    wx = px - vertices[v, 0]
    wy = py - vertices[v, 1]
    wz = pz - vertices[v, 2]
    du = math.sqrt(ux * ux + uy * uy + uz * uz)
    dw = math.sqrt(wx * wx + wy * wy + wz * wz)
    if dw < 1e-300:
        return 0.0
    c = (ux * wx + uy * wy + uz * wz) / (du * dw)
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    return math.acos(c)


def _other_vertices(faces, f, v):
    """The two vertices of face f other than v, in face winding order from v."""
    if faces[f, 0] == v:
        return int(faces[f, 1]), int(faces[f, 2])
    if faces[f, 1] == v:
        return int(faces[f, 2]), int(faces[f, 0])
    return int(faces[f, 0]), int(faces[f, 1])


def _build_fan(vertices, faces, adjacent, vf_offsets, vf_faces, v):
    """Ordered face fan around vertex v.

    Returns (face_list, ray_list, cum_angles, closed, total); rays has one
    more entry than faces for open strips (boundary vertex), equal length
    for closed fans; cum_angles[i] is the unrolled angle of ray i, with
    face i spanning rays i..i+1 (cyclic when closed).
    """
    incident = sorted(int(f) for f in _vertex_incident(vf_offsets, vf_faces, v))
    start = incident[0]
    w_next, w_prev = _other_vertices(faces, start, v)
    order = [start]
    rays = [w_prev, w_next]
    cur = start
    cur_ray = w_next
    closed = False
    for _ in range(len(incident) + 1):
        k = _local_edge(faces, cur, v, cur_ray)
        nxt = adjacent[cur, k]
        if nxt == -1:
            break
        if nxt == start:
            closed = True
            break
        a, b = _other_vertices(faces, nxt, v)
        cur_ray = a if b == cur_ray else b
        order.append(int(nxt))
        rays.append(cur_ray)
        cur = nxt
    if not closed:
        cur = start
        cur_ray = w_prev
        for _ in range(len(incident) + 1):
            k = _local_edge(faces, cur, v, cur_ray)
            nxt = adjacent[cur, k]
            if nxt == -1:
                break
            a, b = _other_vertices(faces, nxt, v)
            cur_ray = a if b == cur_ray else b
            order.insert(0, int(nxt))
            rays.insert(0, cur_ray)
            cur = nxt
    else:
        rays.pop()  # closing ray duplicates ray 0
    cum = [0.0]
    total = 0.0
    for f in order:
        total += _corner_angle(vertices, faces, f, v)
        cum.append(total)
    if closed:
        cum.pop()
    return order, rays, cum, closed, total


def _locate_in_fan(vertices, faces, order, rays, cum, closed, v, node, face_hint):
    """Unrolled angle of `node` (seen from v) within the fan, or None."""
    if node.kind == 2:
        for i, r in enumerate(rays):
            if r == node.ia:
                return cum[i]
        return None
    for i, f in enumerate(order):
        if f == face_hint:
            ang = _angle_from(vertices, v, rays[i], node.x, node.y, node.z)
            return cum[i] + ang
    return None


def _vertex_sweep(vertices, faces, adjacent, vf_offsets, vf_faces, nodes):
    i = 1
    while i < len(nodes) - 1:
        if nodes[i].kind == 2:
            i += _relax_vertex(vertices, faces, adjacent, vf_offsets, vf_faces,
                               nodes, i)
        else:
            i += 1


def _relax_vertex(vertices, faces, adjacent, vf_offsets, vf_faces, nodes, i):
    cur = nodes[i]
    prev = nodes[i - 1]
    nxt = nodes[i + 1]
    v = cur.ia
    order, rays, cum, closed, total = _build_fan(
        vertices, faces, adjacent, vf_offsets, vf_faces, v)
    f_p = _shared_face(faces, vf_offsets, vf_faces, prev, cur)
    f_n = _shared_face(faces, vf_offsets, vf_faces, cur, nxt)
    phi_p = _locate_in_fan(vertices, faces, order, rays, cum, closed, v, prev, f_p)
    phi_n = _locate_in_fan(vertices, faces, order, rays, cum, closed, v, nxt, f_n)
    if phi_p is None or phi_n is None:
        return 1

    old_len = (_dist3(_node_pos(prev), _node_pos(cur))
               + _dist3(_node_pos(cur), _node_pos(nxt)))

    candidates = []
    if closed:
        delta = math.fmod(phi_n - phi_p, total)
        if delta < 0.0:
            delta += total
        candidates.append((phi_p, delta, 1))           # forward around the fan
        candidates.append((phi_p, total - delta, -1))  # backward
    else:
        if phi_n >= phi_p:
            candidates.append((phi_p, phi_n - phi_p, 1))
        else:
            candidates.append((phi_n, phi_p - phi_n, 2))  # reversed open span

    best_nodes = None
    best_len = old_len - 1e-15
    r_p = _dist3(_node_pos(prev), _node_pos(cur))
    r_n = _dist3(_node_pos(cur), _node_pos(nxt))
    for start_angle, delta, direction in candidates:
        if delta >= math.pi - 1e-12 or delta <= 1e-12:
            continue
        if direction == 2:
            ra, rb = r_n, r_p
        else:
            ra, rb = r_p, r_n
        crossing = _fan_crossings(vertices, rays, cum, closed, total, v,
                                  start_angle, delta, direction, ra, rb)
        if crossing is None:
            continue
        cand = []
        for (w, t) in crossing:
            if t < _T_GUARD:
                t = _T_GUARD
            elif t > 1.0 - _T_GUARD:
                t = 1.0 - _T_GUARD
            cand.append(_edge_node(vertices, v, w, t))
        if direction == 2:
            cand.reverse()
        seq = [prev] + cand + [nxt]
        cand_len = _nodes_length(seq)
        if cand_len < best_len:
            best_len = cand_len
            best_nodes = cand
    if best_nodes is None:
        return 1
    nodes[i:i + 1] = best_nodes
    return 1 if best_nodes else 0


def _fan_crossings(vertices, rays, cum, closed, total, v,
                   start_angle, delta, direction, r_p, r_n):
    """Edge crossings of the straight chord across the unrolled fan wedge,
    ordered from the start angle. None when the chord degenerates."""
    sd = math.sin(delta)
    dxx = r_n * math.cos(delta) - r_p
    dyy = r_n * sd
    out = []
    for j in range(len(rays)):
        psi = cum[j]
        if direction == -1:
            rel = math.fmod(start_angle - psi, total)
        else:
            rel = math.fmod(psi - start_angle, total)
        if closed:
            if rel < 0.0:
                rel += total
        if rel <= 1e-12 or rel >= delta - 1e-12:
            continue
        denom = dyy * math.cos(rel) - dxx * math.sin(rel)
        if denom <= 1e-300:
            return None
        rho = r_p * r_n * sd / denom
        w = rays[j]
        wx = vertices[w, 0] - vertices[v, 0]
        wy = vertices[w, 1] - vertices[v, 1]
        wz = vertices[w, 2] - vertices[v, 2]
        wlen = math.sqrt(wx * wx + wy * wy + wz * wz)
        out.append((w, rho / wlen, rel))
    out.sort(key=lambda item: item[2])
    return [(w, t) for (w, t, _) in out]
