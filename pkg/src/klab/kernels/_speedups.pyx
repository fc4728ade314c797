# Compiled twins of the kernels in _fallback.py. Per-element arithmetic
# follows the same operation order as the numpy code; reductions use
# Neumaier-compensated accumulation.

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


def simplex_geometry(cnp.ndarray[cnp.float64_t, ndim=2] nodes,
                     cnp.ndarray[cnp.int64_t, ndim=2] elements):
    cdef Py_ssize_t ne = elements.shape[0]
    cdef Py_ssize_t dim = nodes.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vol = np.empty(ne)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] grads = np.empty((ne, dim + 1, dim))
    cdef Py_ssize_t e, i
    cdef double ax, ay, az, ux, uy, uz, vx, vy, vz, wx, wy, wz
    cdef double det, ex, ey
    cdef double c0x, c0y, c0z, c1x, c1y, c1z, c2x, c2y, c2z
    cdef long i0, i1, i2, i3

    if dim == 2:
        for e in range(ne):
            i0 = elements[e, 0]; i1 = elements[e, 1]; i2 = elements[e, 2]
            ux = nodes[i1, 0] - nodes[i0, 0]
            uy = nodes[i1, 1] - nodes[i0, 1]
            vx = nodes[i2, 0] - nodes[i0, 0]
            vy = nodes[i2, 1] - nodes[i0, 1]
            det = ux * vy - uy * vx
            vol[e] = 0.5 * det
            # local node i, opposite edge (j, k) in cyclic order
            ex = nodes[i2, 0] - nodes[i1, 0]
            ey = nodes[i2, 1] - nodes[i1, 1]
            grads[e, 0, 0] = -ey / det
            grads[e, 0, 1] = ex / det
            ex = nodes[i0, 0] - nodes[i2, 0]
            ey = nodes[i0, 1] - nodes[i2, 1]
            grads[e, 1, 0] = -ey / det
            grads[e, 1, 1] = ex / det
            ex = nodes[i1, 0] - nodes[i0, 0]
            ey = nodes[i1, 1] - nodes[i0, 1]
            grads[e, 2, 0] = -ey / det
            grads[e, 2, 1] = ex / det
        return vol, grads

    for e in range(ne):
        i0 = elements[e, 0]; i1 = elements[e, 1]
        i2 = elements[e, 2]; i3 = elements[e, 3]
        ax = nodes[i0, 0]; ay = nodes[i0, 1]; az = nodes[i0, 2]
        ux = nodes[i1, 0] - ax; uy = nodes[i1, 1] - ay; uz = nodes[i1, 2] - az
        vx = nodes[i2, 0] - ax; vy = nodes[i2, 1] - ay; vz = nodes[i2, 2] - az
        wx = nodes[i3, 0] - ax; wy = nodes[i3, 1] - ay; wz = nodes[i3, 2] - az
        c0x = vy * wz - vz * wy; c0y = vz * wx - vx * wz; c0z = vx * wy - vy * wx
        c1x = wy * uz - wz * uy; c1y = wz * ux - wx * uz; c1z = wx * uy - wy * ux
        c2x = uy * vz - uz * vy; c2y = uz * vx - ux * vz; c2z = ux * vy - uy * vx
        det = ux * c0x + uy * c0y + uz * c0z
        vol[e] = det / 6.0
        grads[e, 1, 0] = c0x / det; grads[e, 1, 1] = c0y / det; grads[e, 1, 2] = c0z / det
        grads[e, 2, 0] = c1x / det; grads[e, 2, 1] = c1y / det; grads[e, 2, 2] = c1z / det
        grads[e, 3, 0] = c2x / det; grads[e, 3, 1] = c2y / det; grads[e, 3, 2] = c2z / det
        grads[e, 0, 0] = -(grads[e, 1, 0] + grads[e, 2, 0] + grads[e, 3, 0])
        grads[e, 0, 1] = -(grads[e, 1, 1] + grads[e, 2, 1] + grads[e, 3, 1])
        grads[e, 0, 2] = -(grads[e, 1, 2] + grads[e, 2, 2] + grads[e, 3, 2])
    return vol, grads


def local_stiffness(cnp.ndarray[cnp.float64_t, ndim=1] vols,
                    cnp.ndarray[cnp.float64_t, ndim=3] grads):
    cdef Py_ssize_t ne = grads.shape[0]
    cdef Py_ssize_t k = grads.shape[1]
    cdef Py_ssize_t dim = grads.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.empty((ne, k, k))
    cdef Py_ssize_t e, i, j, d
    cdef double acc
    for e in range(ne):
        for i in range(k):
            for j in range(k):
                acc = 0.0
                for d in range(dim):
                    acc += grads[e, i, d] * grads[e, j, d]
                out[e, i, j] = vols[e] * acc
    return out


def local_weighted_mass(cnp.ndarray[cnp.float64_t, ndim=1] vols,
                        cnp.ndarray[cnp.float64_t, ndim=2] basis,
                        cnp.ndarray[cnp.float64_t, ndim=1] qweights,
                        cnp.ndarray[cnp.float64_t, ndim=2] wvals):
    cdef Py_ssize_t ne = wvals.shape[0]
    cdef Py_ssize_t nq = basis.shape[0]
    cdef Py_ssize_t k = basis.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.zeros((ne, k, k))
    cdef Py_ssize_t e, q, i, j
    cdef double s
    for e in range(ne):
        for q in range(nq):
            s = qweights[q] * wvals[e, q]
            for i in range(k):
                for j in range(k):
                    out[e, i, j] += s * basis[q, i] * basis[q, j]
        for i in range(k):
            for j in range(k):
                out[e, i, j] *= vols[e]
    return out


def neumaier_sum(cnp.ndarray[cnp.float64_t, ndim=1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef double s = 0.0, c = 0.0, t, v
    cdef Py_ssize_t i
    for i in range(n):
        v = x[i]
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


def neumaier_dot(cnp.ndarray[cnp.float64_t, ndim=1] x,
                 cnp.ndarray[cnp.float64_t, ndim=1] y):
    cdef Py_ssize_t n = x.shape[0]
    cdef double s = 0.0, c = 0.0, t, v
    cdef Py_ssize_t i
    for i in range(n):
        v = x[i] * y[i]
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


def nearest_on_segments(cnp.ndarray[cnp.float64_t, ndim=2] points,
                        cnp.ndarray[cnp.float64_t, ndim=2] seg_a,
                        cnp.ndarray[cnp.float64_t, ndim=2] seg_b):
    cdef Py_ssize_t np_ = points.shape[0]
    cdef Py_ssize_t ns = seg_a.shape[0]
    cdef Py_ssize_t dim = points.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.empty(np_)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] nearest = np.empty((np_, dim))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] index = np.empty(np_, dtype=np.int64)
    cdef Py_ssize_t p, s, d
    cdef double dd, t, d2, best, diff
    cdef double proj[3]
    cdef double bestproj[3]
    cdef Py_ssize_t besti
    for p in range(np_):
        best = np.inf
        besti = 0
        for s in range(ns):
            dd = 0.0
            t = 0.0
            for d in range(dim):
                diff = seg_b[s, d] - seg_a[s, d]
                dd += diff * diff
                t += (points[p, d] - seg_a[s, d]) * diff
            if dd > 0.0:
                t = t / dd
            else:
                t = 0.0
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            d2 = 0.0
            for d in range(dim):
                proj[d] = seg_a[s, d] + t * (seg_b[s, d] - seg_a[s, d])
                diff = points[p, d] - proj[d]
                d2 += diff * diff
            if d2 < best:
                best = d2
                besti = s
                for d in range(dim):
                    bestproj[d] = proj[d]
        dist[p] = best ** 0.5
        index[p] = besti
        for d in range(dim):
            nearest[p, d] = bestproj[d]
    return dist, nearest, index


def nearest_points(cnp.ndarray[cnp.float64_t, ndim=2] points,
                   cnp.ndarray[cnp.float64_t, ndim=2] targets):
    cdef Py_ssize_t np_ = points.shape[0]
    cdef Py_ssize_t nt = targets.shape[0]
    cdef Py_ssize_t dim = points.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.empty(np_)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] index = np.empty(np_, dtype=np.int64)
    cdef Py_ssize_t p, t, d
    cdef double d2, best, diff
    cdef Py_ssize_t besti
    for p in range(np_):
        best = np.inf
        besti = 0
        for t in range(nt):
            d2 = 0.0
            for d in range(dim):
                diff = points[p, d] - targets[t, d]
                d2 += diff * diff
            if d2 < best:
                best = d2
                besti = t
        dist[p] = best ** 0.5
        index[p] = besti
    return dist, index
