# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels; semantics mirror _pykernels exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, sin, cos, fabs, pow, INFINITY

cnp.import_array()


def displacement_errors(pred, truth):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(pred, dtype=np.float64).reshape(-1, 2)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] t = np.ascontiguousarray(truth, dtype=np.float64).reshape(-1, 2)
    if np.shape(pred) != np.shape(truth):
        raise ValueError(f"shape mismatch {np.shape(pred)} vs {np.shape(truth)}")
    cdef Py_ssize_t i, m = p.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(m)
    cdef double dx, dy
    for i in range(m):
        dx = p[i, 0] - t[i, 0]
        dy = p[i, 1] - t[i, 1]
        out[i] = sqrt(dx * dx + dy * dy)
    return out.reshape(np.shape(pred)[:-1])


cdef inline void _project(double[:, ::1] path, double[::1] arc, double x, double y,
                          Py_ssize_t start, double reach, double* s_out, Py_ssize_t* j_out) nogil:
    cdef double best_d = INFINITY, best_s = 0.0, ax, ay, sx, sy, seg2, u, px, py, d
    cdef Py_ssize_t j, best_j = start
    for j in range(start, path.shape[0] - 1):
        if j > start and arc[j] > reach:
            break
        ax = path[j, 0]
        ay = path[j, 1]
        sx = path[j + 1, 0] - ax
        sy = path[j + 1, 1] - ay
        seg2 = sx * sx + sy * sy
        if seg2 == 0.0:
            u = 0.0
        else:
            u = ((x - ax) * sx + (y - ay) * sy) / seg2
            if u < 0.0:
                u = 0.0
            elif u > 1.0:
                u = 1.0
        px = ax + u * sx - x
        py = ay + u * sy - y
        d = px * px + py * py
        if d < best_d:
            best_d = d
            best_s = arc[j] + u * sqrt(seg2)
            best_j = j
    s_out[0] = best_s
    j_out[0] = best_j


def pursuit_rollout(refs, init, double dt, double base, double gain, double exponent):
    cdef double[:, :, ::1] r = np.ascontiguousarray(refs, dtype=np.float64)
    cdef double[:, ::1] s0 = np.ascontiguousarray(init, dtype=np.float64)
    cdef Py_ssize_t n_agents = r.shape[0], n = r.shape[1]
    out_arr = np.empty((n_agents, n, 2))
    curv_arr = np.empty((n_agents, n))
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] curv = curv_arr
    cdef double[:, ::1] path = np.empty((n + 1, 2))
    cdef double[::1] arc = np.empty(n + 1)
    cdef Py_ssize_t a, i, k, seg, target
    cdef double x, y, psi, v, look, s_proj, dx, dy, c
    cdef double k1x, k1y, k1p, p2, k2x, k2y, k2p
    with nogil:
        for a in range(n_agents):
            x = s0[a, 0]
            y = s0[a, 1]
            psi = s0[a, 2]
            path[0, 0] = x
            path[0, 1] = y
            arc[0] = 0.0
            for i in range(n):
                path[i + 1, 0] = r[a, i, 0]
                path[i + 1, 1] = r[a, i, 1]
                dx = path[i + 1, 0] - path[i, 0]
                dy = path[i + 1, 1] - path[i, 1]
                arc[i + 1] = arc[i] + sqrt(dx * dx + dy * dy)
            seg = 0
            s_proj = 0.0
            for k in range(n):
                v = (arc[k + 1] - arc[k]) / dt
                look = base + gain * fabs(v)
                _project(path, arc, x, y, seg, s_proj + 2.0 * look + fabs(v) * dt, &s_proj, &seg)
                target = n
                for i in range(n + 1):
                    if arc[i] >= s_proj + look:
                        target = i
                        break
                dx = path[target, 0] - x
                dy = path[target, 1] - y
                if dx * dx + dy * dy < 1e-24:
                    c = 0.0
                else:
                    c = 2.0 * (-dx * sin(psi) + dy * cos(psi)) / pow(look, exponent)
                k1x = v * cos(psi)
                k1y = v * sin(psi)
                k1p = v * c
                p2 = psi + dt * k1p
                k2x = v * cos(p2)
                k2y = v * sin(p2)
                k2p = v * c
                x = x + 0.5 * dt * (k1x + k2x)
                y = y + 0.5 * dt * (k1y + k2y)
                psi = psi + 0.5 * dt * (k1p + k2p)
                out[a, k, 0] = x
                out[a, k, 1] = y
                curv[a, k] = c
    return out_arr, curv_arr
