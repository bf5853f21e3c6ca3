"""Real-time matrix selection: classify a requirement, then re-steer.

The classifier picks a cluster; that cluster's representative weight matrix
supplies amplitudes and aperture, its phases are recomputed for the requested
pointing, and (optionally) its drive power is rescaled to hit the requested
EIRP.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from .cluster import BeamKMeans, build_representatives
from .exceptions import ConfigurationError
from .geometry import ArrayGeometry, WeightMatrix
from .mlp import MLPBeamClassifier
from .oracle import POWER_SCALE_BOUNDS, BeamRequirement, CostWeights
from .pattern import DEFAULT_HALF_SPAN, DEFAULT_STEP, compute_eirp, locate_peak, measure_pattern
from .synthesis import resteer


def check_compatible(classifier: MLPBeamClassifier, cluster_model: BeamKMeans) -> None:
    """Raise :class:`ConfigurationError` unless both models share normalizer and K."""
    check_is_fitted(classifier, "coefs_")
    check_is_fitted(cluster_model, "cluster_centers_")
    if classifier.n_classes_ != cluster_model.n_clusters:
        raise ConfigurationError(
            f"classifier has {classifier.n_classes_} outputs, cluster model has {cluster_model.n_clusters} clusters")
    a, b = classifier.normalizer_, cluster_model.normalizer_
    if (a is None) != (b is None) or (a is not None and not a.same_as(b)):
        raise ConfigurationError("classifier and cluster model use different feature normalizers")
    if not cluster_model.is_complete:
        raise ConfigurationError("cluster model has no complete set of representative matrices")


def match_eirp(geometry: ArrayGeometry, weights: WeightMatrix, steer, target_dbw: float) -> WeightMatrix:
    """Rescale the drive power so the EIRP at ``steer`` equals ``target_dbw``.

    The scale relative to the current power is clipped to the same bounds the
    reference optimizer uses.
    """
    current = compute_eirp(geometry, weights, steer)
    lo, hi = POWER_SCALE_BOUNDS
    scale = min(max(10.0 ** ((target_dbw - current) / 10.0), lo), hi)
    return weights.copy(per_element_power=weights.per_element_power * scale)


def select_matrix(classifier: MLPBeamClassifier, cluster_model: BeamKMeans, requirement: BeamRequirement,
                  geometry: ArrayGeometry | None = None, power_control: bool = True):
    """Weight matrix for ``requirement`` chosen by the classifier.

    Returns
    -------
    index : int
        Most probable cluster (ties go to the lowest index).
    weights : WeightMatrix
        The cluster representative re-steered to ``requirement.pointing``.
    probs : ndarray of shape (K,)
    """
    check_compatible(classifier, cluster_model)
    geometry = geometry or ArrayGeometry()
    probs = classifier.predict_proba(requirement.to_array()[None, :])[0]
    index = int(np.argmax(probs))
    weights = resteer(geometry, cluster_model.representatives_[index], requirement.steer)
    if power_control:
        weights = match_eirp(geometry, weights, requirement.pointing, requirement.eirp_dbw)
    return index, weights, probs


class BeamMatrixSelector(ClassifierMixin, BaseEstimator):
    """End-to-end selector: k-means labels, per-cluster matrices, MLP classifier.

    ``fit`` clusters the requirements, optimizes one representative matrix
    per cluster and trains the classifier on the cluster labels; ``select``
    then answers new requirements without running the optimizer.

    Parameters
    ----------
    cluster_model : BeamKMeans, optional
        Unfitted clustering estimator; ``BeamKMeans()`` by default.
    classifier : MLPBeamClassifier, optional
        Unfitted classifier; ``MLPBeamClassifier()`` by default.
    geometry : ArrayGeometry, optional
    cost_weights : CostWeights, optional
    budget : int, default=200
        Optimizer evaluations per representative.
    power_control : bool, default=True
        Rescale the selected matrix's drive power to the requested EIRP.
    random_state : int, default=0
    """

    def __init__(self, cluster_model=None, classifier=None, geometry=None, cost_weights=None,
                 budget=200, power_control=True, random_state=0):
        self.cluster_model = cluster_model
        self.classifier = classifier
        self.geometry = geometry
        self.cost_weights = cost_weights
        self.budget = budget
        self.power_control = power_control
        self.random_state = random_state

    def fit(self, X, y=None):
        geometry = self.geometry or ArrayGeometry()
        km = clone(self.cluster_model) if self.cluster_model is not None else BeamKMeans()
        km.fit(X)
        build_representatives(geometry, km, self.cost_weights or CostWeights(), self.budget, self.random_state)
        if not km.is_complete:
            raise ConfigurationError(f"representatives failed for clusters {sorted(km.representative_errors_)}")
        clf = clone(self.classifier) if self.classifier is not None else MLPBeamClassifier()
        clf.set_params(n_classes=km.n_clusters)
        clf.fit(X, km.labels_, normalizer=km.normalizer_)
        self.cluster_model_, self.classifier_, self.geometry_ = km, clf, geometry
        self.classes_ = clf.classes_
        self.n_features_in_ = clf.n_features_in_
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "classifier_")
        return self.classifier_.predict_proba(X)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def select(self, requirement: BeamRequirement):
        check_is_fitted(self, "classifier_")
        return select_matrix(self.classifier_, self.cluster_model_, requirement, self.geometry_, self.power_control)


def selection_errors(geometry: ArrayGeometry, requirement: BeamRequirement, weights: WeightMatrix,
                     half_span=DEFAULT_HALF_SPAN, step=DEFAULT_STEP, search_span=0.5) -> dict:
    """Absolute differences between requested and achieved beam metrics.

    Cuts are taken through the pattern peak found within ``search_span``
    degrees of the requested pointing.
    """
    peak = locate_peak(geometry, weights, requirement.pointing, search_span)
    m = measure_pattern(geometry, weights, peak, half_span, step)
    eirp = compute_eirp(geometry, weights, requirement.pointing)
    return {
        "bw_az_deg": abs(m.beamwidth_az - requirement.bw_az_deg),
        "bw_el_deg": abs(m.beamwidth_el - requirement.bw_el_deg),
        "sll_az_db": abs(m.sll_az - requirement.sll_az_db),
        "sll_el_db": abs(m.sll_el - requirement.sll_el_db),
        "eirp_db": abs(eirp - requirement.eirp_dbw),
        "pointing_deg": math.hypot(peak[0] - requirement.point_el_deg, peak[1] - requirement.point_az_deg),
    }
