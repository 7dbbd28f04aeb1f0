"""Pure numpy/Python versions of the hot kernels.

Each function mirrors the compiled implementation in ``_kernels.pyx``
operation for operation so both backends return identical results.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_MASK = (1 << 64) - 1


def _mix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def counter_uniform(seed, trials, n_sites, stream=0):
    """Uniforms in [0, 1) indexed by (seed, trial, stream, site).

    Returns an array of shape ``(len(trials), n_sites)``.
    """
    trials = np.ascontiguousarray(trials, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        key = _mix(np.full(trials.shape, int(seed) & _MASK, dtype=np.uint64))
        key = _mix(key ^ trials)
        key = _mix(key ^ np.uint64(int(stream) & _MASK))
        sites = np.arange(n_sites, dtype=np.uint64)
        bits = _mix(key[:, None] ^ sites[None, :])
    return (bits >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)


def localization_edges(absv, thresholds):
    """edge[x, j] is True iff absv[y, j] <= thresholds[x, y] for every y."""
    absv = np.ascontiguousarray(absv, dtype=np.float64)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)
    n_sites, n_vec = absv.shape
    out = np.empty((thresholds.shape[0], n_vec), dtype=bool)
    for x in range(thresholds.shape[0]):
        row = thresholds[x]
        far = np.isfinite(row)
        if not far.any():
            out[x] = True
            continue
        out[x] = (absv[far] <= row[far][:, None]).all(axis=0)
    return out


def hopcroft_karp(n_left, n_right, indptr, indices):
    """Maximum matching; returns match_left with -1 for unmatched vertices."""
    indptr = [int(i) for i in indptr]
    indices = [int(i) for i in indices]
    inf = n_left + n_right + 2
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    dist = [0] * n_left

    while True:
        queue = []
        for u in range(n_left):
            if match_l[u] == -1:
                dist[u] = 0
                queue.append(u)
            else:
                dist[u] = inf
        found = False
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            for p in range(indptr[u], indptr[u + 1]):
                w = match_r[indices[p]]
                if w == -1:
                    found = True
                elif dist[w] == inf:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        if not found:
            break

        ptr = indptr[:-1]
        ptr = list(ptr)
        for root in range(n_left):
            if match_l[root] != -1:
                continue
            stack = [root]
            while stack:
                u = stack[-1]
                pushed = False
                while ptr[u] < indptr[u + 1]:
                    v = indices[ptr[u]]
                    w = match_r[v]
                    if w == -1:
                        for uu in stack:
                            vv = indices[ptr[uu]]
                            match_l[uu] = vv
                            match_r[vv] = uu
                        stack = []
                        pushed = True
                        break
                    if dist[w] == dist[u] + 1:
                        stack.append(w)
                        pushed = True
                        break
                    ptr[u] += 1
                if not pushed:
                    dist[u] = inf
                    stack.pop()
                    if stack:
                        ptr[stack[-1]] += 1
    return np.asarray(match_l, dtype=np.int64)
