"""Hot inner loops, each with a numba path and a pure-numpy path.

The numba path is used when numba imports cleanly and ``CTE_DISABLE_NUMBA``
is not set to a truthy value. Both paths are kept bit-compatible on their
integer/boolean outputs; ``benchmarks/bench_kernels.py`` times them.
"""

import logging
import os

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)

NOISE = -1

_flag = os.environ.get("CTE_DISABLE_NUMBA", "").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("disabled by CTE_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError as exc:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False
    if not _disabled:
        log.warning("numba unavailable (%s); using numpy kernels", exc)

USE_NUMBA = HAVE_NUMBA


# ---------------------------------------------------------------------------
# numpy paths
# ---------------------------------------------------------------------------

# (dr, dc) of the neighbour along the gradient for each quantized sector
_SECTOR_STEP = np.array([[0, 1], [1, 1], [1, 0], [1, -1]], dtype=np.int64)


def _np_nms(mag_q, sector):
    rows, cols = mag_q.shape
    padded = np.zeros((rows + 2, cols + 2), dtype=mag_q.dtype)
    padded[1:-1, 1:-1] = mag_q
    keep = np.zeros(mag_q.shape, dtype=bool)
    for s in range(4):
        dr, dc = _SECTOR_STEP[s]
        fwd = padded[1 + dr : 1 + dr + rows, 1 + dc : 1 + dc + cols]
        bwd = padded[1 - dr : 1 - dr + rows, 1 - dc : 1 - dc + cols]
        sel = sector == s
        keep |= sel & (mag_q > fwd) & (mag_q >= bwd)
    return keep & (mag_q > 0)


def _np_hysteresis(strong, weak):
    labels, n = ndimage.label(weak | strong, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros(strong.shape, dtype=bool)
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[np.unique(labels[strong])] = True
    seeded[0] = False
    return seeded[labels]


def _np_radius_graph(X, eps, chunk=256):
    n = X.shape[0]
    indptr = np.zeros(n + 1, dtype=np.int64)
    idx_parts, dist_parts = [], []
    for start in range(0, n, chunk):
        d = cdist(X[start : start + chunk], X)
        r, c = np.nonzero(d <= eps)
        idx_parts.append(c.astype(np.int64))
        dist_parts.append(d[r, c])
        np.add.at(indptr, start + r + 1, 1)
    indptr = np.cumsum(indptr)
    if idx_parts:
        return indptr, np.concatenate(idx_parts), np.concatenate(dist_parts)
    return indptr, np.zeros(0, np.int64), np.zeros(0)


def _np_dbscan_graph(indptr, indices, dists, weights, min_pts):
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    mass = np.bincount(rows, weights=weights[indices], minlength=n)
    core = mass >= min_pts
    labels = np.full(n, NOISE, dtype=np.int64)
    if not core.any():
        return labels, core
    both = core[rows] & core[indices]
    g = csr_matrix((np.ones(both.sum()), (rows[both], indices[both])), shape=(n, n))
    _, comp = connected_components(g, directed=False)
    # ids in order of each component's lowest-index core point
    core_idx = np.flatnonzero(core)
    order = {}
    for i in core_idx:
        c = comp[i]
        if c not in order:
            order[c] = len(order)
    labels[core_idx] = [order[comp[i]] for i in core_idx]
    # border points: nearest core neighbour, ties to the lowest index
    for i in np.flatnonzero(~core):
        nb = indices[indptr[i] : indptr[i + 1]]
        nd = dists[indptr[i] : indptr[i + 1]]
        sel = core[nb]
        if sel.any():
            nb, nd = nb[sel], nd[sel]
            best = np.lexsort((nb, nd))[0]
            labels[i] = labels[nb[best]]
    return labels, core


def _np_silhouette_samples(X, labels, weights, chunk=256):
    n = len(labels)
    k = int(labels.max()) + 1
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = weights
    sizes = onehot.sum(axis=0)
    s = np.zeros(n)
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        sums = cdist(X[rows], X) @ onehot
        own = labels[rows]
        own_size = sizes[own]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = sums[np.arange(len(rows)), own] / (own_size - 1)
            mean_other = sums / sizes
        mean_other[np.arange(len(rows)), own] = np.inf
        mean_other[:, sizes <= 0] = np.inf
        b = mean_other.min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            part = np.where(denom > 0, (b - a) / denom, 0.0)
        part[own_size <= 1] = 0.0
        s[rows] = part
    return s


def _np_nearest(Q, X, chunk=256):
    idx = np.empty(Q.shape[0], dtype=np.int64)
    dist = np.empty(Q.shape[0])
    for start in range(0, Q.shape[0], chunk):
        d = cdist(Q[start : start + chunk], X)
        j = d.argmin(axis=1)
        idx[start : start + chunk] = j
        dist[start : start + chunk] = d[np.arange(len(j)), j]
    return idx, dist


# ---------------------------------------------------------------------------
# numba paths
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_nms(mag_q, sector):
        rows, cols = mag_q.shape
        keep = np.zeros((rows, cols), dtype=np.bool_)
        steps = ((0, 1), (1, 1), (1, 0), (1, -1))
        for r in range(rows):
            for c in range(cols):
                m = mag_q[r, c]
                if m <= 0:
                    continue
                dr, dc = steps[sector[r, c]]
                rf, cf = r + dr, c + dc
                rb, cb = r - dr, c - dc
                fwd = mag_q[rf, cf] if 0 <= rf < rows and 0 <= cf < cols else 0
                bwd = mag_q[rb, cb] if 0 <= rb < rows and 0 <= cb < cols else 0
                keep[r, c] = m > fwd and m >= bwd
        return keep

    @njit(cache=True)
    def _nb_hysteresis(strong, weak):
        rows, cols = strong.shape
        out = np.zeros((rows, cols), dtype=np.bool_)
        stack = np.empty((rows * cols, 2), dtype=np.int64)
        top = 0
        for r in range(rows):
            for c in range(cols):
                if strong[r, c]:
                    out[r, c] = True
                    stack[top, 0] = r
                    stack[top, 1] = c
                    top += 1
        while top > 0:
            top -= 1
            r = stack[top, 0]
            c = stack[top, 1]
            for dr in range(-1, 2):
                for dc in range(-1, 2):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < rows and 0 <= cc < cols and not out[rr, cc]:
                        if weak[rr, cc] or strong[rr, cc]:
                            out[rr, cc] = True
                            stack[top, 0] = rr
                            stack[top, 1] = cc
                            top += 1
        return out

    @njit(cache=True)
    def _nb_radius_graph(X, eps):
        n, d = X.shape
        counts = np.zeros(n + 1, dtype=np.int64)
        # two passes: count, then fill
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(d):
                    t = X[i, k] - X[j, k]
                    s += t * t
                if np.sqrt(s) <= eps:
                    counts[i + 1] += 1
        indptr = np.cumsum(counts)
        indices = np.empty(indptr[n], dtype=np.int64)
        dists = np.empty(indptr[n])
        for i in range(n):
            pos = indptr[i]
            for j in range(n):
                s = 0.0
                for k in range(d):
                    t = X[i, k] - X[j, k]
                    s += t * t
                dd = np.sqrt(s)
                if dd <= eps:
                    indices[pos] = j
                    dists[pos] = dd
                    pos += 1
        return indptr, indices, dists

    @njit(cache=True)
    def _nb_dbscan_graph(indptr, indices, dists, weights, min_pts):
        n = len(indptr) - 1
        core = np.zeros(n, dtype=np.bool_)
        for i in range(n):
            m = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                m += weights[indices[p]]
            core[i] = m >= min_pts
        labels = np.full(n, -1, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        cluster = 0
        for i in range(n):
            if not core[i] or labels[i] != -1:
                continue
            labels[i] = cluster
            head, tail = 0, 1
            queue[0] = i
            while head < tail:
                u = queue[head]
                head += 1
                for p in range(indptr[u], indptr[u + 1]):
                    v = indices[p]
                    if core[v] and labels[v] == -1:
                        labels[v] = cluster
                        queue[tail] = v
                        tail += 1
            cluster += 1
        for i in range(n):
            if core[i]:
                continue
            best = -1
            best_d = np.inf
            for p in range(indptr[i], indptr[i + 1]):
                v = indices[p]
                if core[v]:
                    if dists[p] < best_d or (dists[p] == best_d and v < best):
                        best_d = dists[p]
                        best = v
            if best >= 0:
                labels[i] = labels[best]
        return labels, core

    @njit(cache=True)
    def _nb_silhouette_samples(X, labels, weights):
        n, d = X.shape
        k = 0
        for i in range(n):
            if labels[i] + 1 > k:
                k = labels[i] + 1
        sizes = np.zeros(k)
        for i in range(n):
            sizes[labels[i]] += weights[i]
        s = np.zeros(n)
        sums = np.zeros(k)
        for i in range(n):
            own = labels[i]
            if sizes[own] <= 1:
                continue
            sums[:] = 0.0
            for j in range(n):
                acc = 0.0
                for q in range(d):
                    t = X[i, q] - X[j, q]
                    acc += t * t
                sums[labels[j]] += weights[j] * np.sqrt(acc)
            a = sums[own] / (sizes[own] - 1)
            b = np.inf
            for c in range(k):
                if c != own and sizes[c] > 0:
                    v = sums[c] / sizes[c]
                    if v < b:
                        b = v
            den = max(a, b)
            if den > 0:
                s[i] = (b - a) / den
        return s

    @njit(cache=True)
    def _nb_nearest(Q, X):
        m, d = Q.shape
        n = X.shape[0]
        idx = np.empty(m, dtype=np.int64)
        dist = np.empty(m)
        for i in range(m):
            best = -1
            best_s = np.inf
            for j in range(n):
                s = 0.0
                for k in range(d):
                    t = Q[i, k] - X[j, k]
                    s += t * t
                if s < best_s:
                    best_s = s
                    best = j
            idx[i] = best
            dist[i] = np.sqrt(best_s)
        return idx, dist


IMPLEMENTATIONS = {
    "numpy": {
        "nms": _np_nms,
        "hysteresis": _np_hysteresis,
        "radius_graph": _np_radius_graph,
        "dbscan_graph": _np_dbscan_graph,
        "silhouette_samples": _np_silhouette_samples,
        "nearest": _np_nearest,
    }
}
if HAVE_NUMBA:
    IMPLEMENTATIONS["numba"] = {
        "nms": _nb_nms,
        "hysteresis": _nb_hysteresis,
        "radius_graph": _nb_radius_graph,
        "dbscan_graph": _nb_dbscan_graph,
        "silhouette_samples": _nb_silhouette_samples,
        "nearest": _nb_nearest,
    }


def _active(name):
    return IMPLEMENTATIONS["numba" if USE_NUMBA else "numpy"][name]


def nms(mag_q, sector):
    """Non-maximum suppression over integer magnitudes and sectors 0..3."""
    return _active("nms")(np.ascontiguousarray(mag_q, dtype=np.int64), np.ascontiguousarray(sector, dtype=np.int64))


def hysteresis(strong, weak):
    """Keep weak pixels 8-connected to a strong pixel."""
    return _active("hysteresis")(np.ascontiguousarray(strong, dtype=bool), np.ascontiguousarray(weak, dtype=bool))


def radius_graph(X, eps):
    """CSR neighbourhoods ``(indptr, indices, dists)`` with ``dist <= eps``, self included."""
    return _active("radius_graph")(np.ascontiguousarray(X, dtype=np.float64), float(eps))


def dbscan_graph(indptr, indices, dists, weights, min_pts):
    return _active("dbscan_graph")(indptr, indices, dists, np.ascontiguousarray(weights, dtype=np.float64), float(min_pts))


def silhouette_samples(X, labels, weights):
    """Per-point silhouette with integer multiplicities ``weights`` (labels compact, no noise)."""
    return _active("silhouette_samples")(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(labels, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
    )


def nearest(Q, X):
    """Index and distance of the nearest row of ``X`` for each row of ``Q`` (ties: lowest index)."""
    Q = np.ascontiguousarray(np.atleast_2d(Q), dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    return _active("nearest")(Q, X)
