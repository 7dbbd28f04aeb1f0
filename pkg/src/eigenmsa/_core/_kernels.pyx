# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics match ``_fallback`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()

ctypedef unsigned long long u64


cdef inline u64 _mix(u64 z) nogil:
    z = z + 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def counter_uniform(seed, trials, Py_ssize_t n_sites, stream=0):
    cdef cnp.int64_t[::1] tr = np.ascontiguousarray(trials, dtype=np.int64)
    cdef Py_ssize_t n_tr = tr.shape[0]
    out = np.empty((n_tr, n_sites), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef u64 s = <u64>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef u64 st = <u64>(int(stream) & 0xFFFFFFFFFFFFFFFF)
    cdef u64 key
    cdef Py_ssize_t t, i
    cdef double scale = 1.0 / 9007199254740992.0
    with nogil:
        for t in range(n_tr):
            key = _mix(s)
            key = _mix(key ^ <u64>tr[t])
            key = _mix(key ^ st)
            for i in range(n_sites):
                o[t, i] = <double>(_mix(key ^ <u64>i) >> 11) * scale
    return out


def localization_edges(absv, thresholds):
    cdef double[:, ::1] a = np.ascontiguousarray(absv, dtype=np.float64)
    cdef double[:, ::1] th = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef Py_ssize_t n_x = th.shape[0], n_y = a.shape[0], n_v = a.shape[1]
    out = np.ones((n_x, n_v), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] o = out
    cdef Py_ssize_t x, y, j, k, n_far
    cdef cnp.int64_t[::1] far = np.empty(n_y, dtype=np.int64)
    with nogil:
        for x in range(n_x):
            n_far = 0
            for y in range(n_y):
                if isfinite(th[x, y]):
                    far[n_far] = y
                    n_far += 1
            for j in range(n_v):
                for k in range(n_far):
                    y = far[k]
                    if not (a[y, j] <= th[x, y]):
                        o[x, j] = 0
                        break
    return out.astype(bool)


def hopcroft_karp(Py_ssize_t n_left, Py_ssize_t n_right, indptr, indices):
    cdef cnp.int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    ml = np.full(n_left, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] match_l = ml
    cdef cnp.int64_t[::1] match_r = np.full(n_right, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] dist = np.zeros(n_left, dtype=np.int64)
    cdef cnp.int64_t[::1] queue = np.zeros(n_left + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] stack = np.zeros(n_left + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] ptr = np.zeros(n_left + 1, dtype=np.int64)
    cdef cnp.int64_t inf = n_left + n_right + 2
    cdef Py_ssize_t head, tail, u, p, v, w, root, top, q, uu, vv
    cdef bint found, pushed
    with nogil:
        while True:
            tail = 0
            for u in range(n_left):
                if match_l[u] == -1:
                    dist[u] = 0
                    queue[tail] = u
                    tail += 1
                else:
                    dist[u] = inf
            found = False
            head = 0
            while head < tail:
                u = queue[head]
                head += 1
                for p in range(ip[u], ip[u + 1]):
                    w = match_r[ix[p]]
                    if w == -1:
                        found = True
                    elif dist[w] == inf:
                        dist[w] = dist[u] + 1
                        queue[tail] = w
                        tail += 1
            if not found:
                break
            for u in range(n_left):
                ptr[u] = ip[u]
            for root in range(n_left):
                if match_l[root] != -1:
                    continue
                top = 0
                stack[0] = root
                top = 1
                while top > 0:
                    u = stack[top - 1]
                    pushed = False
                    while ptr[u] < ip[u + 1]:
                        v = ix[ptr[u]]
                        w = match_r[v]
                        if w == -1:
                            for q in range(top):
                                uu = stack[q]
                                vv = ix[ptr[uu]]
                                match_l[uu] = vv
                                match_r[vv] = uu
                            top = 0
                            pushed = True
                            break
                        if dist[w] == dist[u] + 1:
                            stack[top] = w
                            top += 1
                            pushed = True
                            break
                        ptr[u] += 1
                    if not pushed:
                        dist[u] = inf
                        top -= 1
                        if top > 0:
                            ptr[stack[top - 1]] += 1
    return ml
