# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled surface-path kernels (hot backend).

Line-for-line mirror of `_core_py.py`; compiled with -ffp-contract=off so
results are bit-identical to the pure-Python fallback. Keep the two files
in sync: the parity test suite compares them on randomised meshes.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport acos, cos, fmod, sin, sqrt

DEF T_SNAP = 1e-12
DEF T_GUARD = 1e-9


cdef inline int _local_edge(const int[:, ::1] faces, int f, int a, int b) noexcept nogil:
    cdef int v0 = faces[f, 0]
    cdef int v1 = faces[f, 1]
    cdef int v2 = faces[f, 2]
    if (v0 == a and v1 == b) or (v0 == b and v1 == a):
        return 0
    if (v1 == a and v2 == b) or (v1 == b and v2 == a):
        return 1
    if (v2 == a and v0 == b) or (v2 == b and v0 == a):
        return 2
    return -1


cdef inline double _dist3c(double px, double py, double pz,
                           double qx, double qy, double qz) noexcept nogil:
    cdef double dx = qx - px
    cdef double dy = qy - py
    cdef double dz = qz - pz
    return sqrt(dx * dx + dy * dy + dz * dz)


def slice_walk(const double[:, ::1] vertices, const int[:, ::1] faces,
               const int[:, ::1] adjacent, plane_point, plane_normal,
               int src_face, src_pos, int tgt_face, tgt_pos, int max_steps):
    """See `_core_py.slice_walk`."""
    cdef double px = plane_point[0], py = plane_point[1], pz = plane_point[2]
    cdef double nx = plane_normal[0], ny = plane_normal[1], nz = plane_normal[2]
    cdef double sx = src_pos[0], sy = src_pos[1], sz = src_pos[2]
    cdef double tx = tgt_pos[0], ty = tgt_pos[1], tz = tgt_pos[2]

    if src_face == tgt_face:
        return np.array([[sx, sy, sz], [tx, ty, tz]]), True

    cdef double dd[3]
    cdef int ks[2]
    cdef double das[2], dbs[2]
    cdef int n_cross, k, f, nxt, entry, a, b, step, start_i, kk
    cdef double da, db, t, qx, qy, qz, lx, ly, lz, length
    cdef list pts, best_pts = None
    cdef double best_len = 0.0
    cdef bint reached

    cdef int start_ks[3]
    cdef double start_da[3], start_db[3]
    cdef int n_start = 0
    _face_dists(vertices, faces, src_face, px, py, pz, nx, ny, nz, dd)
    for k in range(3):
        da = dd[k]
        db = dd[(k + 1) % 3]
        if (da >= 0.0) != (db >= 0.0):
            start_ks[n_start] = k
            start_da[n_start] = da
            start_db[n_start] = db
            n_start += 1

    for start_i in range(n_start):
        k = start_ks[start_i]
        da = start_da[start_i]
        db = start_db[start_i]
        pts = [(sx, sy, sz)]
        _edge_point(vertices, faces, src_face, k, da, db, &qx, &qy, &qz)
        lx, ly, lz = sx, sy, sz
        if _dist3c(lx, ly, lz, qx, qy, qz) > 1e-15:
            pts.append((qx, qy, qz))
            lx, ly, lz = qx, qy, qz
        f = src_face
        reached = False
        for step in range(max_steps):
            nxt = adjacent[f, k]
            if nxt == -1 or nxt == src_face:
                break
            if nxt == tgt_face:
                if _dist3c(lx, ly, lz, tx, ty, tz) > 1e-15:
                    pts.append((tx, ty, tz))
                reached = True
                break
            a = faces[f, k]
            b = faces[f, (k + 1) % 3]
            entry = _local_edge(faces, nxt, a, b)
            _face_dists(vertices, faces, nxt, px, py, pz, nx, ny, nz, dd)
            n_cross = 0
            for kk in range(3):
                if kk == entry:
                    continue
                da = dd[kk]
                db = dd[(kk + 1) % 3]
                if (da >= 0.0) != (db >= 0.0):
                    if n_cross < 2:
                        ks[n_cross] = kk
                        das[n_cross] = da
                        dbs[n_cross] = db
                    n_cross += 1
            if n_cross == 0:
                break
            k = ks[0]
            _edge_point(vertices, faces, nxt, k, das[0], dbs[0], &qx, &qy, &qz)
            if _dist3c(lx, ly, lz, qx, qy, qz) > 1e-15:
                pts.append((qx, qy, qz))
                lx, ly, lz = qx, qy, qz
            f = nxt
        if reached:
            length = _polyline_length(pts)
            if best_pts is None or length < best_len:
                best_pts = pts
                best_len = length
    if best_pts is None:
        return np.zeros((0, 3)), False
    return np.array(best_pts), True


cdef inline void _face_dists(const double[:, ::1] vertices, const int[:, ::1] faces,
                             int f, double px, double py, double pz,
                             double nx, double ny, double nz, double* dd) noexcept nogil:
    cdef int k, vid
    for k in range(3):
        vid = faces[f, k]
        dd[k] = ((vertices[vid, 0] - px) * nx + (vertices[vid, 1] - py) * ny
                 + (vertices[vid, 2] - pz) * nz)


cdef inline void _edge_point(const double[:, ::1] vertices, const int[:, ::1] faces,
                             int f, int k, double da, double db,
                             double* qx, double* qy, double* qz) noexcept nogil:
    cdef int a = faces[f, k]
    cdef int b = faces[f, (k + 1) % 3]
    cdef double t = da / (da - db)
    qx[0] = vertices[a, 0] + t * (vertices[b, 0] - vertices[a, 0])
    qy[0] = vertices[a, 1] + t * (vertices[b, 1] - vertices[a, 1])
    qz[0] = vertices[a, 2] + t * (vertices[b, 2] - vertices[a, 2])


cdef double _polyline_length(list pts):
    cdef double total = 0.0
    cdef Py_ssize_t i
    cdef tuple p, q
    for i in range(len(pts) - 1):
        p = <tuple>pts[i]
        q = <tuple>pts[i + 1]
        total += _dist3c(<double>p[0], <double>p[1], <double>p[2],
                         <double>q[0], <double>q[1], <double>q[2])
    return total


# ---------------------------------------------------------------------------
# Path straightening
# ---------------------------------------------------------------------------

cdef class _Node:
    cdef public int kind, ia, ib
    cdef public double t, x, y, z

    def __cinit__(self, int kind, int ia, int ib, double t,
                  double x, double y, double z):
        self.kind = kind
        self.ia = ia
        self.ib = ib
        self.t = t
        self.x = x
        self.y = y
        self.z = z


cdef inline double _node_dist(_Node a, _Node b):
    return _dist3c(a.x, a.y, a.z, b.x, b.y, b.z)


cdef _Node _edge_node(const double[:, ::1] vertices, int a, int b, double t):
    cdef double ax = vertices[a, 0], ay = vertices[a, 1], az = vertices[a, 2]
    cdef double bx = vertices[b, 0], by = vertices[b, 1], bz = vertices[b, 2]
    return _Node(1, a, b, t, ax + t * (bx - ax), ay + t * (by - ay), az + t * (bz - az))


cdef _Node _vertex_node(const double[:, ::1] vertices, int v):
    return _Node(2, v, -1, 0.0, vertices[v, 0], vertices[v, 1], vertices[v, 2])


cdef tuple _node_faces(const int[:, ::1] faces, const long long[::1] vf_offsets,
                       const int[::1] vf_faces, _Node node):
    cdef list out
    cdef long long j
    cdef int f
    if node.kind == 0:
        return (node.ia,)
    if node.kind == 1:
        out = []
        for j in range(vf_offsets[node.ia], vf_offsets[node.ia + 1]):
            f = vf_faces[j]
            if faces[f, 0] == node.ib or faces[f, 1] == node.ib or faces[f, 2] == node.ib:
                out.append(f)
        out.sort()
        return tuple(out)
    out = []
    for j in range(vf_offsets[node.ia], vf_offsets[node.ia + 1]):
        out.append(vf_faces[j])
    out.sort()
    return tuple(out)


cdef int _shared_face(const int[:, ::1] faces, const long long[::1] vf_offsets,
                      const int[::1] vf_faces, _Node n1, _Node n2):
    cdef tuple fa = _node_faces(faces, vf_offsets, vf_faces, n1)
    cdef tuple fb = _node_faces(faces, vf_offsets, vf_faces, n2)
    cdef int best = -1
    cdef int f, g
    for f in fa:
        for g in fb:
            if f == g and (best == -1 or f < best):
                best = f
    return best


cdef double _corner_angle(const double[:, ::1] vertices, const int[:, ::1] faces,
                          int f, int v):
    cdef int a, b
    if faces[f, 0] == v:
        a = faces[f, 1]; b = faces[f, 2]
    elif faces[f, 1] == v:
        a = faces[f, 2]; b = faces[f, 0]
    else:
        a = faces[f, 0]; b = faces[f, 1]
    cdef double ux = vertices[a, 0] - vertices[v, 0]
    cdef double uy = vertices[a, 1] - vertices[v, 1]
    cdef double uz = vertices[a, 2] - vertices[v, 2]
    cdef double wx = vertices[b, 0] - vertices[v, 0]
    cdef double wy = vertices[b, 1] - vertices[v, 1]
    cdef double wz = vertices[b, 2] - vertices[v, 2]
    cdef double du = sqrt(ux * ux + uy * uy + uz * uz)
    cdef double dw = sqrt(wx * wx + wy * wy + wz * wz)
    cdef double c = (ux * wx + uy * wy + uz * wz) / (du * dw)
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    return acos(c)


cdef double _angle_from(const double[:, ::1] vertices, int v, int ref,
                        double px, double py, double pz):
    cdef double ux = vertices[ref, 0] - vertices[v, 0]
    cdef double uy = vertices[ref, 1] - vertices[v, 1]
    cdef double uz = vertices[ref, 2] - vertices[v, 2]
    cdef double wx = px - vertices[v, 0]
    cdef double wy = py - vertices[v, 1]
    cdef double wz = pz - vertices[v, 2]
    cdef double du = sqrt(ux * ux + uy * uy + uz * uz)
    cdef double dw = sqrt(wx * wx + wy * wy + wz * wz)
    if dw < 1e-300:
        return 0.0
    cdef double c = (ux * wx + uy * wy + uz * wz) / (du * dw)
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    return acos(c)


cdef inline void _other_vertices(const int[:, ::1] faces, int f, int v,
                                 int* oa, int* ob) noexcept nogil:
    if faces[f, 0] == v:
        oa[0] = faces[f, 1]; ob[0] = faces[f, 2]
    elif faces[f, 1] == v:
        oa[0] = faces[f, 2]; ob[0] = faces[f, 0]
    else:
        oa[0] = faces[f, 0]; ob[0] = faces[f, 1]


cdef tuple _build_fan(const double[:, ::1] vertices, const int[:, ::1] faces,
                      const int[:, ::1] adjacent, const long long[::1] vf_offsets,
                      const int[::1] vf_faces, int v):
    cdef list incident = []
    cdef long long j
    for j in range(vf_offsets[v], vf_offsets[v + 1]):
        incident.append(vf_faces[j])
    incident.sort()
    cdef int start = incident[0]
    cdef int w_next, w_prev, cur, cur_ray, k, nxt, a, b
    _other_vertices(faces, start, v, &w_next, &w_prev)
    cdef list order = [start]
    cdef list rays = [w_prev, w_next]
    cur = start
    cur_ray = w_next
    cdef bint closed = False
    cdef Py_ssize_t guard
    for guard in range(len(incident) + 1):
        k = _local_edge(faces, cur, v, cur_ray)
        nxt = adjacent[cur, k]
        if nxt == -1:
            break
        if nxt == start:
            closed = True
            break
        _other_vertices(faces, nxt, v, &a, &b)
        cur_ray = a if b == cur_ray else b
        order.append(nxt)
        rays.append(cur_ray)
        cur = nxt
    if not closed:
        cur = start
        cur_ray = w_prev
        for guard in range(len(incident) + 1):
            k = _local_edge(faces, cur, v, cur_ray)
            nxt = adjacent[cur, k]
            if nxt == -1:
                break
            _other_vertices(faces, nxt, v, &a, &b)
            cur_ray = a if b == cur_ray else b
            order.insert(0, nxt)
            rays.insert(0, cur_ray)
            cur = nxt
    else:
        rays.pop()
    cdef list cum = [0.0]
    cdef double total = 0.0
    cdef int f
    for f in order:
        total += _corner_angle(vertices, faces, f, v)
        cum.append(total)
    if closed:
        cum.pop()
    return order, rays, cum, closed, total


cdef object _locate_in_fan(const double[:, ::1] vertices, const int[:, ::1] faces,
                           list order, list rays, list cum, bint closed,
                           int v, _Node node, int face_hint):
    cdef Py_ssize_t i
    cdef int r, f
    cdef double ang
    if node.kind == 2:
        for i in range(len(rays)):
            r = rays[i]
            if r == node.ia:
                return cum[i]
        return None
    for i in range(len(order)):
        f = order[i]
        if f == face_hint:
            ang = _angle_from(vertices, v, <int>rays[i], node.x, node.y, node.z)
            return <double>cum[i] + ang
    return None


def straighten_path(const double[:, ::1] vertices, const int[:, ::1] faces,
                    const int[:, ::1] adjacent, const long long[::1] vf_offsets,
                    const int[::1] vf_faces, src_pos, int src_face,
                    tgt_pos, int tgt_face, vertex_chain, double tol, int max_iter):
    """See `_core_py.straighten_path`."""
    cdef list nodes = [_Node(0, src_face, -1, 0.0,
                             src_pos[0], src_pos[1], src_pos[2])]
    cdef int v
    for v in vertex_chain:
        nodes.append(_vertex_node(vertices, v))
    nodes.append(_Node(0, tgt_face, -1, 0.0, tgt_pos[0], tgt_pos[1], tgt_pos[2]))
    _cleanup(nodes)

    cdef double length = _nodes_length(nodes)
    cdef double new_length
    cdef int it
    for it in range(max_iter):
        _sweep(vertices, faces, adjacent, vf_offsets, vf_faces, nodes)
        _cleanup(nodes)
        new_length = _nodes_length(nodes)
        if length - new_length <= tol * length:
            length = new_length
            break
        length = new_length
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = np.empty((len(nodes), 3))
    cdef Py_ssize_t i
    cdef _Node n
    for i in range(len(nodes)):
        n = <_Node>nodes[i]
        pts[i, 0] = n.x
        pts[i, 1] = n.y
        pts[i, 2] = n.z
    return pts, length


cdef double _nodes_length(list nodes):
    cdef double total = 0.0
    cdef Py_ssize_t i
    for i in range(len(nodes) - 1):
        total += _node_dist(<_Node>nodes[i], <_Node>nodes[i + 1])
    return total


cdef void _cleanup(list nodes):
    cdef Py_ssize_t i = 1
    cdef Py_ssize_t j
    cdef _Node cur, other
    cdef bint removed
    while i < len(nodes) - 1:
        cur = <_Node>nodes[i]
        removed = False
        for j in (i - 1, i + 1):
            other = <_Node>nodes[j]
            if cur.kind == 2 and other.kind == 2 and cur.ia == other.ia:
                removed = True
                break
            if _node_dist(cur, other) < 1e-15:
                removed = True
                break
        if removed:
            del nodes[i]
            if i > 1:
                i -= 1
        else:
            i += 1


cdef void _sweep(const double[:, ::1] vertices, const int[:, ::1] faces,
                 const int[:, ::1] adjacent, const long long[::1] vf_offsets,
                 const int[::1] vf_faces, list nodes):
    cdef Py_ssize_t i = 1
    cdef int step
    cdef _Node cur
    while i < len(nodes) - 1:
        cur = <_Node>nodes[i]
        if cur.kind == 1:
            step = _relax_edge(vertices, faces, adjacent, vf_offsets, vf_faces, nodes, i)
        else:
            step = _relax_vertex(vertices, faces, adjacent, vf_offsets, vf_faces, nodes, i)
        i += step


cdef int _relax_edge(const double[:, ::1] vertices, const int[:, ::1] faces,
                     const int[:, ::1] adjacent, const long long[::1] vf_offsets,
                     const int[::1] vf_faces, list nodes, Py_ssize_t i):
    cdef _Node cur = <_Node>nodes[i]
    cdef _Node prev = <_Node>nodes[i - 1]
    cdef _Node nxt = <_Node>nodes[i + 1]
    cdef int f1 = _shared_face(faces, vf_offsets, vf_faces, prev, cur)
    cdef int f2 = _shared_face(faces, vf_offsets, vf_faces, cur, nxt)
    if f1 == -1 or f2 == -1:
        return 1
    if f1 == f2:
        del nodes[i]
        return 0
    cdef int a = cur.ia
    cdef int b = cur.ib
    cdef double ax = vertices[a, 0], ay = vertices[a, 1], az = vertices[a, 2]
    cdef double ex = vertices[b, 0] - ax
    cdef double ey = vertices[b, 1] - ay
    cdef double ez = vertices[b, 2] - az
    cdef double elen = sqrt(ex * ex + ey * ey + ez * ez)
    cdef double ux = ex / elen, uy = ey / elen, uz = ez / elen

    cdef double dx, dy, dz, along_p, along_n, h_p, h_n, rx, ry, rz
    dx = prev.x - ax; dy = prev.y - ay; dz = prev.z - az
    along_p = dx * ux + dy * uy + dz * uz
    rx = dx - along_p * ux; ry = dy - along_p * uy; rz = dz - along_p * uz
    h_p = sqrt(rx * rx + ry * ry + rz * rz)
    dx = nxt.x - ax; dy = nxt.y - ay; dz = nxt.z - az
    along_n = dx * ux + dy * uy + dz * uz
    rx = dx - along_n * ux; ry = dy - along_n * uy; rz = dz - along_n * uz
    h_n = sqrt(rx * rx + ry * ry + rz * rz)
    if h_p + h_n < 1e-15:
        return 1
    cdef double x_star = (along_p * h_n + along_n * h_p) / (h_p + h_n)
    cdef double t_star = x_star / elen
    if t_star <= T_SNAP:
        nodes[i] = _vertex_node(vertices, a)
    elif t_star >= 1.0 - T_SNAP:
        nodes[i] = _vertex_node(vertices, b)
    else:
        nodes[i] = _edge_node(vertices, a, b, t_star)
    return 1


cdef int _relax_vertex(const double[:, ::1] vertices, const int[:, ::1] faces,
                       const int[:, ::1] adjacent, const long long[::1] vf_offsets,
                       const int[::1] vf_faces, list nodes, Py_ssize_t i):
    cdef _Node cur = <_Node>nodes[i]
    cdef _Node prev = <_Node>nodes[i - 1]
    cdef _Node nxt = <_Node>nodes[i + 1]
    cdef int v = cur.ia
    fan = _build_fan(vertices, faces, adjacent, vf_offsets, vf_faces, v)
    cdef list order = <list>fan[0]
    cdef list rays = <list>fan[1]
    cdef list cum = <list>fan[2]
    cdef bint closed = <bint>fan[3]
    cdef double total = <double>fan[4]
    cdef int f_p = _shared_face(faces, vf_offsets, vf_faces, prev, cur)
    cdef int f_n = _shared_face(faces, vf_offsets, vf_faces, cur, nxt)
    phi_p_obj = _locate_in_fan(vertices, faces, order, rays, cum, closed, v, prev, f_p)
    phi_n_obj = _locate_in_fan(vertices, faces, order, rays, cum, closed, v, nxt, f_n)
    if phi_p_obj is None or phi_n_obj is None:
        return 1
    cdef double phi_p = <double>phi_p_obj
    cdef double phi_n = <double>phi_n_obj

    cdef double old_len = _node_dist(prev, cur) + _node_dist(cur, nxt)

    cdef list candidates = []
    cdef double delta
    if closed:
        delta = fmod(phi_n - phi_p, total)
        if delta < 0.0:
            delta += total
        candidates.append((phi_p, delta, 1))
        candidates.append((phi_p, total - delta, -1))
    else:
        if phi_n >= phi_p:
            candidates.append((phi_p, phi_n - phi_p, 1))
        else:
            candidates.append((phi_n, phi_p - phi_n, 2))

    cdef list best_nodes = None
    cdef double best_len = old_len - 1e-15
    cdef double r_p = _node_dist(prev, cur)
    cdef double r_n = _node_dist(cur, nxt)
    cdef double start_angle, ra, rb, cand_len, t
    cdef int direction, w
    cdef list cand, seq
    cdef object crossing
    cdef tuple item
    for item in candidates:
        start_angle = <double>item[0]
        delta = <double>item[1]
        direction = <int>item[2]
        if delta >= 3.141592653589793 - 1e-12 or delta <= 1e-12:
            continue
        if direction == 2:
            ra = r_n; rb = r_p
        else:
            ra = r_p; rb = r_n
        crossing = _fan_crossings(vertices, rays, cum, closed, total, v,
                                  start_angle, delta, direction, ra, rb)
        if crossing is None:
            continue
        cand = []
        for pair in <list>crossing:
            w = <int>(<tuple>pair)[0]
            t = <double>(<tuple>pair)[1]
            if t < T_GUARD:
                t = T_GUARD
            elif t > 1.0 - T_GUARD:
                t = 1.0 - T_GUARD
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
    return 1 if len(best_nodes) > 0 else 0


cdef object _fan_crossings(const double[:, ::1] vertices, list rays, list cum,
                           bint closed, double total, int v, double start_angle,
                           double delta, int direction, double r_p, double r_n):
    cdef double sd = sin(delta)
    cdef double dxx = r_n * cos(delta) - r_p
    cdef double dyy = r_n * sd
    cdef list out = []
    cdef Py_ssize_t j
    cdef double psi, rel, denom, rho, wx, wy, wz, wlen
    cdef int w
    for j in range(len(rays)):
        psi = <double>cum[j]
        if direction == -1:
            rel = fmod(start_angle - psi, total)
        else:
            rel = fmod(psi - start_angle, total)
        if closed:
            if rel < 0.0:
                rel += total
        if rel <= 1e-12 or rel >= delta - 1e-12:
            continue
        denom = dyy * cos(rel) - dxx * sin(rel)
        if denom <= 1e-300:
            return None
        rho = r_p * r_n * sd / denom
        w = <int>rays[j]
        wx = vertices[w, 0] - vertices[v, 0]
        wy = vertices[w, 1] - vertices[v, 1]
        wz = vertices[w, 2] - vertices[v, 2]
        wlen = sqrt(wx * wx + wy * wy + wz * wz)
        out.append((w, rho / wlen, rel))
    out.sort(key=_rel_key)
    return [(w_t[0], w_t[1]) for w_t in out]


def _rel_key(item):
    return item[2]
