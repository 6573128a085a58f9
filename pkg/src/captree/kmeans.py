"""Deterministic k-means with k-means++ seeding.

Pinned behavior, independent of library versions: k-means++ initialization
driven by a single seeded generator, Lloyd iterations until the largest
centroid displacement drops below ``tol`` (default 1e-6) or ``max_iter``
updates (default 100), assignment ties resolved to the lowest centroid
index, and an emptied cluster re-seeded with the point currently farthest
from its assigned centroid. The loop always ends on an assignment pass,
so stored labels are exactly nearest-centroid under the final centers.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_embedding_matrix
from .errors import TooFewPoints


class SeededKMeans(BaseEstimator, ClusterMixin):
    """Lloyd's algorithm with reproducible seeding.

    Attributes after ``fit``: ``cluster_centers_``, ``labels_``,
    ``inertia_``, ``inertia_history_`` (one entry per assignment pass,
    never increasing), ``n_iter_``.
    """

    def __init__(self, n_clusters: int = 8, seed: int = 0, tol: float = 1e-6, max_iter: int = 100):
        self.n_clusters = n_clusters
        self.seed = seed
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_embedding_matrix(X)
        n = X.shape[0]
        k = self.n_clusters
        if k < 1:
            raise ValueError(f"n_clusters must be positive, got {k}")
        if k > n:
            raise TooFewPoints(f"{n} points cannot form {k} clusters")

        rng = np.random.default_rng(self.seed)
        centers = self._init_plusplus(X, k, rng)
        labels, inertia = self._assign(X, centers)
        history = [inertia]
        n_iter = 0
        for _ in range(self.max_iter):
            new_centers = centers.copy()
            for j in range(k):
                members = labels == j
                if np.any(members):
                    new_centers[j] = X[members].mean(axis=0)
            n_iter += 1
            shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
            centers = new_centers
            labels, inertia = self._assign(X, centers)
            history.append(inertia)
            if shift < self.tol:
                break

        self.cluster_centers_ = centers
        self.labels_ = labels
        self.inertia_ = history[-1]
        self.inertia_history_ = history
        self.n_iter_ = n_iter
        return self

    def predict(self, X) -> np.ndarray:
        X = check_embedding_matrix(X)
        labels, _ = self._assign_only(X, self.cluster_centers_)
        return labels

    @staticmethod
    def _init_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        n = X.shape[0]
        centers = np.empty((k, X.shape[1]), dtype=np.float64)
        centers[0] = X[rng.integers(n)]
        if k == 1:
            return centers
        dist_sq = np.sum((X - centers[0]) ** 2, axis=1)
        for j in range(1, k):
            total = dist_sq.sum()
            if total <= 0:
                idx = int(rng.integers(n))
            else:
                idx = int(rng.choice(n, p=dist_sq / total))
            centers[j] = X[idx]
            dist_sq = np.minimum(dist_sq, np.sum((X - centers[j]) ** 2, axis=1))
        return centers

    @staticmethod
    def _assign_only(X: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d2 = cdist(X, centers, metric="sqeuclidean")
        labels = np.argmin(d2, axis=1)
        return labels, d2[np.arange(X.shape[0]), labels]

    def _assign(self, X: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, float]:
        """Nearest-centroid assignment, re-seeding any emptied cluster."""
        labels, best = self._assign_only(X, centers)
        while True:
            counts = np.bincount(labels, minlength=centers.shape[0])
            empty = np.flatnonzero(counts == 0)
            if empty.size == 0 or best.max() <= 0:
                break
            centers[empty[0]] = X[int(np.argmax(best))]
            labels, best = self._assign_only(X, centers)
        return labels, float(best.sum())
