"""Vector quantization of the requirement space.

:class:`BeamKMeans` groups beam requirements into ``K`` clusters in z-scored
feature space; :func:`build_representatives` attaches one optimized weight
matrix to every centroid so each cluster index names a concrete matrix.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features
from .exceptions import DomainError, OptimizationFailure
from .geometry import ArrayGeometry
from .oracle import BeamRequirement, CostWeights, optimize_matrix

logger = logging.getLogger(__name__)


class FeatureNormalizer(StandardScaler):
    """Per-feature z-scoring with the statistics exposed for persistence.

    Constant features keep unit scale and are flagged in ``degenerate_``.
    """

    def fit(self, X, y=None, sample_weight=None):
        X = check_features(X)
        super().fit(X, y, sample_weight)
        self.degenerate_ = self.scale_ == 1.0
        self.degenerate_ &= np.isclose(self.var_, 0.0)
        if self.degenerate_.any():
            warnings.warn(f"constant features {np.flatnonzero(self.degenerate_).tolist()} left unscaled",
                          RuntimeWarning, stacklevel=2)
        return self

    @property
    def means(self) -> np.ndarray:
        return self.mean_

    @property
    def std_devs(self) -> np.ndarray:
        return self.scale_

    def to_dict(self) -> dict:
        check_is_fitted(self)
        return {"means": self.mean_.tolist(), "std_devs": self.scale_.tolist(),
                "degenerate": self.degenerate_.astype(int).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureNormalizer":
        obj = cls()
        obj.mean_ = np.asarray(d["means"], dtype=float)
        obj.scale_ = np.asarray(d["std_devs"], dtype=float)
        if np.any(obj.scale_ <= 0):
            raise DomainError("std_devs must be positive")
        obj.var_ = obj.scale_ ** 2
        obj.degenerate_ = np.asarray(d.get("degenerate", [0] * len(obj.mean_)), dtype=bool)
        obj.n_features_in_ = len(obj.mean_)
        obj.n_samples_seen_ = 0
        return obj

    def same_as(self, other: "FeatureNormalizer") -> bool:
        return (np.array_equal(self.mean_, other.mean_) and np.array_equal(self.scale_, other.scale_))


def _sq_distances(Z, centers):
    return ((Z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def kmeans_plusplus(Z, n_clusters, rng):
    """k-means++ seeding by inverse-CDF sampling on squared distances."""
    n = Z.shape[0]
    centers = np.empty((n_clusters, Z.shape[1]))
    centers[0] = Z[min(int(rng.random() * n), n - 1)]
    closest = ((Z - centers[0]) ** 2).sum(axis=1)
    for j in range(1, n_clusters):
        cum = np.cumsum(closest)
        total = cum[-1]
        r = rng.random()
        if total <= 0:
            idx = min(int(r * n), n - 1)
        else:
            idx = min(int(np.searchsorted(cum, r * total, side="right")), n - 1)
        centers[j] = Z[idx]
        closest = np.minimum(closest, ((Z - centers[j]) ** 2).sum(axis=1))
    return centers


def hartigan(Z, labels, n_clusters, max_sweeps=100):
    """Single-point moves that strictly lower the objective.

    Moving ``x`` from cluster ``a`` to ``b`` pays off when
    ``n_b/(n_b+1) |x-c_b|^2 < n_a/(n_a-1) |x-c_a|^2``; Lloyd's rule ignores the
    count factors and so stalls in minima this step escapes. Returns
    ``(labels, moved)``.
    """
    labels = labels.copy()
    counts = np.bincount(labels, minlength=n_clusters).astype(float)
    centers = np.zeros((n_clusters, Z.shape[1]))
    np.add.at(centers, labels, Z)
    centers /= np.maximum(counts, 1)[:, None]
    moved_any = False
    for _ in range(max_sweeps):
        moved = False
        for i in range(len(Z)):
            a = labels[i]
            if counts[a] <= 1:
                continue
            d2 = ((centers - Z[i]) ** 2).sum(axis=1)
            add = counts / (counts + 1) * d2
            add[a] = np.inf
            b = int(np.argmin(add))
            if add[b] < counts[a] / (counts[a] - 1) * d2[a] * (1 - 1e-12):
                centers[a] = (centers[a] * counts[a] - Z[i]) / (counts[a] - 1)
                centers[b] = (centers[b] * counts[b] + Z[i]) / (counts[b] + 1)
                counts[a] -= 1
                counts[b] += 1
                labels[i] = b
                moved = True
        if not moved:
            break
        moved_any = True
    return labels, moved_any


def _means(Z, labels, n_clusters):
    return np.array([Z[labels == j].mean(axis=0) for j in range(n_clusters)])


def refine(Z, centers, max_iter=300, tol=1e-6):
    """Lloyd, then alternate Hartigan moves and Lloyd until neither improves.

    Same return value as :func:`lloyd`, with ``history`` spanning all phases.
    """
    centers, labels, inertia, n_iter, history = lloyd(Z, centers, max_iter, tol)
    k = centers.shape[0]
    for _ in range(20):
        if np.bincount(labels, minlength=k).min() == 0:
            break
        labels, moved = hartigan(Z, labels, k)
        if not moved:
            break
        centers, labels, inertia, extra, more = lloyd(Z, _means(Z, labels, k), max_iter, tol)
        n_iter += extra
        history += more
    return centers, labels, inertia, n_iter, history


def lloyd(Z, centers, max_iter=300, tol=1e-6):
    """Lloyd iterations from ``centers``.

    Returns ``(centers, labels, inertia, n_iter, history)`` where ``history``
    holds the objective after every assignment step.
    """
    centers = centers.copy()
    n_clusters = centers.shape[0]
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _sq_distances(Z, centers)
        labels = np.argmin(d2, axis=1)
        closest = d2[np.arange(len(Z)), labels]
        history.append(float(closest.sum()))

        counts = np.bincount(labels, minlength=n_clusters)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, Z)
        new_centers = centers.copy()
        nonempty = counts > 0
        new_centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        # re-seed empty clusters at the points worst served by their centroid
        taken = set()
        for j in np.flatnonzero(~nonempty):
            for idx in np.argsort(-closest, kind="stable"):
                if idx not in taken:
                    taken.add(idx)
                    new_centers[j] = Z[idx]
                    break
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < tol:
            break
    d2 = _sq_distances(Z, centers)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(Z)), labels].sum())
    history.append(inertia)
    return centers, labels, inertia, n_iter, history


class BeamKMeans(ClusterMixin, TransformerMixin, BaseEstimator):
    """K-means over z-scored beam requirements.

    Parameters
    ----------
    n_clusters : int, default=20
        Number of clusters, one per pre-computed weight matrix.
    n_init : int, default=10
        Number of k-means++ restarts; the lowest-inertia run is kept. Each
        run is Lloyd iterations polished by Hartigan single-point moves.
    max_iter : int, default=300
    tol : float, default=1e-6
        Stop once no centroid moves more than ``tol`` (normalized units).
    random_state : int, default=0
    normalize : bool, default=True
        Z-score features before clustering.

    Attributes
    ----------
    cluster_centers_ : ndarray of shape (n_clusters, n_features)
        Centroids in normalized feature space.
    normalizer_ : FeatureNormalizer or None
    labels_, inertia_, n_iter_ :
        Assignment, objective and iteration count of the retained run.
    inertia_history_ : list of float
        Objective after every assignment step of the retained run.
    """

    def __init__(self, n_clusters=20, n_init=10, max_iter=300, tol=1e-6, random_state=0, normalize=True):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.normalize = normalize

    def _scale(self, X):
        return self.normalizer_.transform(X) if self.normalizer_ is not None else X

    def fit(self, X, y=None):
        X = check_features(X)
        if self.n_clusters < 1:
            raise DomainError("n_clusters must be >= 1")
        if X.shape[0] < self.n_clusters:
            raise DomainError(f"{X.shape[0]} points cannot form {self.n_clusters} clusters")
        self.normalizer_ = FeatureNormalizer().fit(X) if self.normalize else None
        Z = self._scale(X)
        rng = np.random.default_rng(self.random_state)
        best = None
        for _ in range(max(1, self.n_init)):
            init = kmeans_plusplus(Z, self.n_clusters, rng)
            run = refine(Z, init, self.max_iter, self.tol)
            if best is None or run[2] < best[2]:
                best = run
        self.cluster_centers_, self.labels_, self.inertia_, self.n_iter_, self.inertia_history_ = best
        self.n_features_in_ = X.shape[1]
        self.representatives_ = None
        return self

    def transform(self, X):
        """Euclidean distances to every centroid in normalized space."""
        check_is_fitted(self, "cluster_centers_")
        Z = self._scale(check_features(X, self.n_features_in_))
        return np.sqrt(_sq_distances(Z, self.cluster_centers_))

    def predict(self, X):
        """Nearest-centroid index; ties go to the lowest index."""
        check_is_fitted(self, "cluster_centers_")
        Z = self._scale(check_features(X, self.n_features_in_))
        return np.argmin(_sq_distances(Z, self.cluster_centers_), axis=1)

    def score(self, X, y=None):
        check_is_fitted(self, "cluster_centers_")
        Z = self._scale(check_features(X, self.n_features_in_))
        return -float(_sq_distances(Z, self.cluster_centers_).min(axis=1).sum())

    @property
    def centroid_features(self) -> np.ndarray:
        """Centroids mapped back to raw feature units."""
        check_is_fitted(self, "cluster_centers_")
        if self.normalizer_ is None:
            return self.cluster_centers_.copy()
        return self.normalizer_.inverse_transform(self.cluster_centers_)

    def centroid_requirements(self) -> list[BeamRequirement]:
        return [BeamRequirement.from_array(row) for row in self.centroid_features]

    @property
    def is_complete(self) -> bool:
        reps = getattr(self, "representatives_", None)
        return reps is not None and len(reps) == self.n_clusters and all(r is not None for r in reps)


def assign(model: BeamKMeans, requirement: BeamRequirement) -> int:
    """Cluster index of a single requirement."""
    return int(model.predict(requirement.to_array()[None, :])[0])


def build_representatives(geometry: ArrayGeometry, model: BeamKMeans, cost_weights: CostWeights = CostWeights(),
                          budget: int = 200, seed: int = 0, eirp_mode: str = "absolute") -> BeamKMeans:
    """Optimize one weight matrix per centroid requirement, in place.

    Failed clusters keep ``None`` and their error in ``representative_errors_``;
    ``model.is_complete`` is true only when every cluster succeeded.
    """
    check_is_fitted(model, "cluster_centers_")
    reps, costs, errors = [], [], {}
    for j, req in enumerate(model.centroid_requirements()):
        try:
            result = optimize_matrix(geometry, req, cost_weights, budget, seed, eirp_mode)
        except OptimizationFailure as exc:
            logger.warning("cluster %d: %s", j, exc)
            reps.append(None)
            costs.append(None)
            errors[j] = str(exc)
            continue
        reps.append(result.matrix)
        costs.append(result.cost)
        logger.info("cluster %d: cost %.4f in %.2fs", j, result.cost.total, result.elapsed)
    model.representatives_ = reps
    model.representative_costs_ = costs
    model.representative_errors_ = errors
    return model
