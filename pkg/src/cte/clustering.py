"""Diagonal Gaussian mixtures with BIC/silhouette model selection, DBSCAN, silhouette."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from ._kernels import NOISE
from .errors import TuningError
from .neuralkit import load_container, save_container

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-6
EM_TOL = 1e-6
EM_MAX_ITER = 500
ELBOW_FRACTION = 0.02
ELBOW_RESTARTS = 3  # EM restarts per K; one start can stall in a merged-blob optimum
MAX_NOISE = 0.10
DEFAULT_MIN_PTS = (3, 5, 10)


def _weights(n, sample_weight):
    if sample_weight is None:
        return np.ones(n)
    w = np.asarray(sample_weight, dtype=np.float64)
    if w.shape != (n,) or (w < 0).any():
        raise ValueError("sample_weight must be a nonnegative vector of length N")
    return w


def first_occurrences(X):
    """Index of the first copy of each distinct row (in order of appearance) and the inverse map."""
    X = np.ascontiguousarray(X)
    seen, inverse = {}, np.empty(len(X), dtype=np.int64)
    for i, row in enumerate(X.reshape(len(X), -1)):
        inverse[i] = seen.setdefault(row.tobytes(), len(seen))
    first = np.empty(len(seen), dtype=np.int64)
    first[inverse[::-1]] = np.arange(len(X) - 1, -1, -1)
    return first, inverse


def unique_rows(X):
    """Distinct rows of ``X`` in order of first appearance, with multiplicities and the inverse map."""
    X = np.ascontiguousarray(X)
    first, inverse = first_occurrences(X)
    counts = np.bincount(inverse, minlength=len(first)).astype(np.float64)
    return X[first], counts, inverse


# ---------------------------------------------------------------------------
# Gaussian mixtures
# ---------------------------------------------------------------------------


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    responsibilities: np.ndarray | None = None
    log_likelihoods: list = field(default_factory=list)  # mean per-sample, one per EM iteration
    reseeded: list = field(default_factory=list)  # iterations where a component was reseeded
    converged: bool = False
    seed: int = 0

    @property
    def K(self):
        return len(self.weights)

    @property
    def n_parameters(self):
        K, d = self.means.shape
        return (K - 1) + 2 * K * d

    def _log_joint(self, X):
        X = np.asarray(X, dtype=np.float64)
        prec = 1.0 / self.variances
        quad = (X**2) @ prec.T - 2.0 * X @ (self.means * prec).T + np.sum(self.means**2 * prec, axis=1)
        log_det = np.sum(np.log(2.0 * np.pi * self.variances), axis=1)
        return np.log(self.weights) - 0.5 * (quad + log_det)

    def point_log_likelihood(self, X):
        return logsumexp(self._log_joint(X), axis=1)

    def predict_proba(self, X):
        lj = self._log_joint(X)
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def total_log_likelihood(self, X, sample_weight=None):
        w = _weights(len(X), sample_weight)
        return float(w @ self.point_log_likelihood(X))

    def bic(self, X, sample_weight=None):
        w = _weights(len(X), sample_weight)
        return -2.0 * self.total_log_likelihood(X, w) + self.n_parameters * np.log(w.sum())

    def save(self, path, meta=None):
        save_container(
            path,
            {"weights": self.weights, "means": self.means, "variances": self.variances},
            {"kind": "gmm", "seed": self.seed, "converged": self.converged, **(meta or {})},
        )

    @classmethod
    def load(cls, path):
        arr, meta = load_container(path)
        return cls(
            arr["weights"].astype(np.float64), arr["means"].astype(np.float64), arr["variances"].astype(np.float64),
            seed=meta.get("seed", 0), converged=meta.get("converged", False),
        )


def _kmeanspp(X, w, K, rng):
    n = len(X)
    p = w / w.sum()
    centers = [X[rng.choice(n, p=p)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, K):
        mass = w * d2
        if mass.sum() <= 0:
            idx = rng.choice(n, p=p)
        else:
            idx = rng.choice(n, p=mass / mass.sum())
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def gmm_fit(X, K, seed, sample_weight=None, max_iter=EM_MAX_ITER, tol=EM_TOL, var_floor=VAR_FLOOR, n_init=1):
    """EM for a diagonal-covariance mixture seeded k-means++ style.

    Stops when the mean per-sample log-likelihood improves by less than
    ``tol`` or after ``max_iter`` iterations. With ``n_init > 1`` the fit is
    restarted from further seeded initialisations and the run with the
    highest final log-likelihood is kept (earliest wins ties).
    """
    best = None
    for i in range(n_init):
        rng = np.random.default_rng(seed if i == 0 else [seed, i])
        m = _em(X, K, seed, rng, sample_weight, max_iter, tol, var_floor)
        if best is None or m.log_likelihoods[-1] > best.log_likelihoods[-1]:
            best = m
    return best


def _em(X, K, seed, rng, sample_weight, max_iter, tol, var_floor):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("X must be N x d with d >= 1")
    n, d = X.shape
    w = _weights(n, sample_weight)
    W = w.sum()
    if not (K >= 1 and (K < W or K == 1)):
        raise ValueError(f"need N > K >= 1 (N={W:g}, K={K})")
    global_var = np.maximum((w @ (X - (w @ X) / W) ** 2) / W, var_floor)
    model = GmmModel(
        weights=np.full(K, 1.0 / K),
        means=_kmeanspp(X, w, K, rng),
        variances=np.tile(global_var, (K, 1)),
        seed=seed,
    )
    prev = -np.inf
    for it in range(max_iter):
        lj = model._log_joint(X)
        ll_point = logsumexp(lj, axis=1)
        ll = float(w @ ll_point) / W
        model.log_likelihoods.append(ll)
        if it > 0 and abs(ll - prev) < tol:
            model.converged = True
            break
        prev = ll
        resp = np.exp(lj - ll_point[:, None])
        wr = resp * w[:, None]
        nk = wr.sum(axis=0)
        empty = nk <= 1e-10 * W
        if empty.any():
            worst = np.argsort(ll_point, kind="stable")
            for j, k in enumerate(np.flatnonzero(empty)):
                log.warning("GMM component %d lost its mass at iteration %d; reseeding", k, it)
                model.means[k] = X[worst[j % n]]
                model.variances[k] = global_var
                nk[k] = 0.0
            model.reseeded.append(it)
        safe = np.where(empty, 1.0, nk)
        means = (wr.T @ X) / safe[:, None]
        var = np.empty_like(means)
        for k in range(K):
            if not empty[k]:
                diff = X - means[k]
                var[k] = (wr[:, k] @ diff**2) / nk[k]
        means[empty] = model.means[empty]
        var[empty] = model.variances[empty]
        model.means = means
        model.variances = np.maximum(var, var_floor)
        weights = np.where(empty, 1.0 / K, nk / W)
        model.weights = weights / weights.sum()
    model.responsibilities = model.predict_proba(X)
    return model


@dataclass
class ElbowResult:
    k: int
    bic: dict
    silhouette: dict
    models: dict


def select_k_elbow(X, k_range, seed, sample_weight=None, silhouette_sample=2000, n_init=ELBOW_RESTARTS):
    """Pick K at the elbow of the BIC curve, reporting silhouettes alongside.

    Rule: the largest K whose BIC drop from the previous K in ``k_range``
    exceeds 2% of the span between the smallest K's BIC and the minimum BIC.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("k_range is empty")
    X = np.asarray(X, dtype=np.float64)
    w = _weights(len(X), sample_weight)
    bic, sil, models = {}, {}, {}
    for k in ks:
        m = gmm_fit(X, k, seed, sample_weight=w, n_init=n_init)
        models[k] = m
        bic[k] = m.bic(X, w)
        labels = m.predict(X)
        try:
            sil[k] = silhouette_score(X, labels, sample_weight=w, sample_size=silhouette_sample, seed=seed)
        except ValueError:
            sil[k] = float("nan")
    span = bic[ks[0]] - min(bic.values())
    chosen = ks[0]
    for prev, k in zip(ks, ks[1:]):
        if bic[prev] - bic[k] > ELBOW_FRACTION * span:
            chosen = k
    return ElbowResult(k=chosen, bic=bic, silhouette=sil, models=models)


# ---------------------------------------------------------------------------
# silhouette
# ---------------------------------------------------------------------------


def silhouette_score(X, labels, sample_weight=None, sample_size=None, seed=0):
    """Mean silhouette over non-noise points; integer ``sample_weight`` acts as multiplicity.

    When ``sample_size`` is given and there are more distinct points than
    that, a seeded uniform subset of them (keeping their weights) is scored.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    w = _weights(len(X), sample_weight)
    keep = labels != NOISE
    X, labels, w = X[keep], labels[keep], w[keep]
    if sample_size is not None and len(X) > sample_size:
        sel = np.sort(np.random.default_rng(seed).choice(len(X), sample_size, replace=False))
        X, labels, w = X[sel], labels[sel], w[sel]
    present, compact = np.unique(labels, return_inverse=True)
    if len(present) < 2:
        raise ValueError("silhouette is undefined for fewer than two clusters")
    s = _kernels.silhouette_samples(X, compact.reshape(-1), w)
    return float(w @ s / w.sum())


# ---------------------------------------------------------------------------
# DBSCAN
# ---------------------------------------------------------------------------


@dataclass
class DbscanModel:
    eps: float
    min_pts: float
    labels: np.ndarray
    core_mask: np.ndarray
    core_points: np.ndarray
    core_labels: np.ndarray

    @property
    def n_clusters(self):
        return int(self.labels.max()) + 1 if (self.labels != NOISE).any() else 0

    def noise_fraction(self, sample_weight=None):
        w = _weights(len(self.labels), sample_weight)
        return float(w[self.labels == NOISE].sum() / w.sum())

    def save(self, path, meta=None):
        save_container(
            path,
            {"core_points": self.core_points, "core_labels": self.core_labels, "labels": self.labels, "core_mask": self.core_mask},
            {"kind": "dbscan", "eps": self.eps, "min_pts": self.min_pts, **(meta or {})},
        )

    @classmethod
    def load(cls, path):
        arr, meta = load_container(path)
        return cls(
            eps=meta["eps"], min_pts=meta["min_pts"], labels=arr["labels"].astype(np.int64),
            core_mask=arr["core_mask"].astype(bool), core_points=arr["core_points"].astype(np.float64),
            core_labels=arr["core_labels"].astype(np.int64),
        )


def _model_from_graph(X, graph, eps, min_pts, w):
    labels, core = _kernels.dbscan_graph(*graph, w, min_pts)
    labels = np.asarray(labels, dtype=np.int64)
    core = np.asarray(core, dtype=bool)
    return DbscanModel(eps=float(eps), min_pts=min_pts, labels=labels, core_mask=core,
                       core_points=X[core].copy(), core_labels=labels[core].copy())


def dbscan(X, eps, min_pts, sample_weight=None):
    """DBSCAN with Euclidean distance, neighbourhoods ``d <= eps`` including the point itself.

    Core points are those whose neighbourhood weight reaches ``min_pts``.
    Clusters are connected components of core points, numbered in order of
    their lowest-index core point. A border point joins the cluster of its
    nearest core neighbour (ties go to the lower index), which makes the
    partition independent of input order.
    """
    if not eps > 0 or min_pts < 1:
        raise ValueError("need eps > 0 and min_pts >= 1")
    X = np.asarray(X, dtype=np.float64)
    w = _weights(len(X), sample_weight)
    return _model_from_graph(X, _kernels.radius_graph(X, eps), eps, min_pts, w)


def assign_cluster(model, x):
    """Cluster of the nearest core point; accepts one vector or a matrix of rows."""
    if len(model.core_points) == 0:
        raise ValueError("DBSCAN model has no core points")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    idx, _ = _kernels.nearest(np.atleast_2d(x), model.core_points)
    out = model.core_labels[idx]
    return int(out[0]) if single else out


def nearest_neighbor_distances(X):
    idx_d = []
    X = np.asarray(X, dtype=np.float64)
    for i in range(0, len(X), 512):
        from scipy.spatial.distance import cdist

        d = cdist(X[i : i + 512], X)
        d[np.arange(d.shape[0]), np.arange(i, i + d.shape[0])] = np.inf
        idx_d.append(d.min(axis=1))
    return np.concatenate(idx_d)


def default_eps_grid(X, n=20, seed=0, sample=2000):
    """Log-spaced radii from the 1st percentile of nearest-neighbour distances
    up to the median pairwise distance (computed on a seeded subset)."""
    from scipy.spatial.distance import pdist

    X = np.asarray(X, dtype=np.float64)
    if len(X) > sample:
        X = X[np.sort(np.random.default_rng(seed).choice(len(X), sample, replace=False))]
    nn = nearest_neighbor_distances(X)
    nn = nn[nn > 0]
    lo = np.percentile(nn, 1) if len(nn) else 1e-6
    hi = np.percentile(pdist(X), 50)
    if not hi > lo:
        hi = lo * 10
    return np.geomspace(lo, hi, n)


@dataclass
class TuneResult:
    model: DbscanModel
    silhouette: float
    k: int
    table: list  # (eps, min_pts, k, noise_fraction, silhouette or nan)


def dbscan_tune(X, eps_grid=None, min_pts_grid=DEFAULT_MIN_PTS, sample_weight=None, max_noise=MAX_NOISE,
                silhouette_sample=2000, seed=0):
    """Grid search maximising the non-noise silhouette subject to ``noise <= max_noise``.

    Ties prefer less noise, then smaller eps, then smaller min_pts.
    """
    X = np.asarray(X, dtype=np.float64)
    w = _weights(len(X), sample_weight)
    eps_grid = default_eps_grid(X, seed=seed) if eps_grid is None else np.asarray(eps_grid, dtype=np.float64)
    if len(eps_grid) == 0 or len(min_pts_grid) == 0:
        raise ValueError("empty tuning grid")
    full = _kernels.radius_graph(X, float(np.max(eps_grid)))
    indptr, indices, dists = full
    rows = np.repeat(np.arange(len(X)), np.diff(indptr))
    table, best, best_key = [], None, None
    for eps in sorted(eps_grid):
        sel = dists <= eps
        sub_indptr = np.concatenate([[0], np.cumsum(np.bincount(rows[sel], minlength=len(X)))])
        graph = (sub_indptr, indices[sel], dists[sel])
        for mp in sorted(min_pts_grid):
            m = _model_from_graph(X, graph, eps, mp, w)
            k = m.n_clusters
            noise = m.noise_fraction(w)
            sil = float("nan")
            if k >= 2 and noise <= max_noise:
                sil = silhouette_score(X, m.labels, sample_weight=w, sample_size=silhouette_sample, seed=seed)
                key = (-sil, noise, eps, mp)
                if best_key is None or key < best_key:
                    best_key, best = key, (m, sil, k)
            table.append((float(eps), mp, k, noise, sil))
    if best is None:
        raise TuningError("no (eps, min_pts) produced >= 2 clusters within the noise budget", diagnostics=table)
    return TuneResult(model=best[0], silhouette=best[1], k=best[2], table=table)


def write_assignments_csv(path, origins, labels):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["game", "level", "row", "col", "cluster"])
        for (game, level, r, c), lab in zip(origins, labels):
            wr.writerow([game, level, int(r), int(c), int(lab)])


# ---------------------------------------------------------------------------
# GMM input features
# ---------------------------------------------------------------------------


@dataclass
class BlockStandardizer:
    """Per-feature z-scores, each block then scaled to unit total variance."""

    blocks: tuple  # block sizes
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    def fit(self, F, sample_weight=None):
        w = _weights(len(F), sample_weight)
        W = w.sum()
        mean = (w @ F) / W
        std = np.sqrt((w @ (F - mean) ** 2) / W)
        std[std == 0] = 1.0
        block_scale = np.concatenate([np.full(b, np.sqrt(b)) for b in self.blocks])
        self.mean, self.scale = mean, std * block_scale
        return self

    def transform(self, F):
        return (np.asarray(F, dtype=np.float64) - self.mean) / self.scale


def gmm_features(tiles, affordances, edges):
    """Concatenate flattened 16x16x3 tile pixels in [0,1], affordances and edge bits."""
    n = len(tiles)
    return np.concatenate(
        [np.asarray(tiles, dtype=np.float64).reshape(n, -1) / 255.0,
         np.asarray(affordances, dtype=np.float64).reshape(n, -1),
         np.asarray(edges, dtype=np.float64).reshape(n, -1)],
        axis=1,
    )


GMM_BLOCKS = (16 * 16 * 3, 13, 16 * 16)
