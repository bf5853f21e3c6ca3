import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from beamselect import (BeamRequirement, ConfigurationError, DomainError, MLPBeamClassifier, TrainingDivergence,
                        select_matrix, steering_phases)
from beamselect.cluster import BeamKMeans, FeatureNormalizer
from beamselect.geometry import steer_from_pointing
from beamselect.io import load_report
from beamselect.mlp import backward, cross_entropy, forward, init_params, softmax
from beamselect.pipeline import REPORT_DIR, load_models


def naive_cross_entropy(probs, labels):
    """Loop form of -sum y log p, independent of the vectorized one."""
    total = 0.0
    for p_row, y_row in zip(probs, labels):
        for p, y in zip(p_row, y_row):
            if y:
                total -= y * math.log(min(max(p, 1e-12), 1.0))
    return total


def flat(params):
    return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in params])


def random_problem(seed, sizes=(7, 16, 20), n=32):
    rng = np.random.default_rng(seed)
    params = init_params(list(sizes), rng, zero_output=False)
    X = rng.normal(size=(n, sizes[0]))
    Y = np.eye(sizes[-1])[rng.integers(0, sizes[-1], n)]
    return params, X, Y


# forward

def test_zero_model_is_uniform():
    params = [(np.zeros((7, 5)), np.zeros(5)), (np.zeros((5, 20)), np.zeros(20))]
    assert np.allclose(forward(params, np.ones((3, 7))), 1 / 20, atol=1e-15)


def test_hand_computed_three_class_softmax():
    W = np.array([[1.0, 0.0, -1.0], [0.5, 2.0, 0.0]])
    b = np.array([0.0, -1.0, 0.5])
    x = np.array([2.0, 1.0])
    # logits by hand: [2.5, 1.0, -1.5]
    e = [math.exp(2.5), math.exp(1.0), math.exp(-1.5)]
    want = [v / sum(e) for v in e]
    assert np.allclose(forward([(W, b)], x), want, atol=1e-15)


@settings(max_examples=100)
@given(arrays(np.float64, (5, 20), elements=st.floats(-500, 500)))
def test_softmax_is_a_distribution(logits):
    p = softmax(logits)
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_probabilities_sum_to_one_on_random_inputs(rng):
    params = init_params([7, 64, 64, 20], rng, zero_output=False)
    p = forward(params, rng.normal(size=(1000, 7)) * 3)
    assert np.max(np.abs(p.sum(axis=1) - 1)) < 1e-9


def test_non_finite_input_rejected():
    with pytest.raises(DomainError):
        forward([(np.zeros((2, 2)), np.zeros(2))], [[np.nan, 0.0]])


# loss

def test_perfect_prediction_has_no_loss():
    Y = np.eye(4)
    assert cross_entropy(Y, Y) <= 1e-11


def test_uniform_prediction_over_20_classes():
    Y = np.eye(20)[[0, 5, 19]]
    assert abs(cross_entropy(np.full((3, 20), 1 / 20), Y) - math.log(20)) < 1e-12
    assert abs(math.log(20) - 2.9957) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_loss_matches_loop_implementation(seed):
    rng = np.random.default_rng(seed)
    probs = softmax(rng.normal(size=(64, 20)) * 4)
    probs[0, :] = 0.0
    probs[0, 3] = 1.0  # exercises the clip
    Y = np.eye(20)[rng.integers(0, 20, 64)]
    assert abs(cross_entropy(probs, Y, "sum") - naive_cross_entropy(probs, Y)) < 1e-12 * max(1, naive_cross_entropy(probs, Y))
    assert abs(cross_entropy(probs, Y) - naive_cross_entropy(probs, Y) / 64) < 1e-12


def test_loss_shape_mismatch():
    with pytest.raises(DomainError):
        cross_entropy(np.ones((2, 3)) / 3, np.eye(2))


# gradients

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_match_central_differences(seed):
    params, X, Y = random_problem(seed)
    analytic = flat(backward(params, X, Y))
    theta = flat(params)
    shapes = [(W.shape, b.shape) for W, b in params]

    def unflatten(vec):
        out, i = [], 0
        for ws, bs in shapes:
            nw, nb = int(np.prod(ws)), bs[0]
            out.append((vec[i:i + nw].reshape(ws), vec[i + nw:i + nw + nb]))
            i += nw + nb
        return out

    h = 1e-5
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        numeric[i] = (cross_entropy(forward(unflatten(up), X), Y) - cross_entropy(forward(unflatten(down), X), Y)) / (2 * h)
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    assert rel.max() < 1e-3


def test_l2_penalty_gradient(rng):
    params, X, Y = random_problem(7)
    plain = backward(params, X, Y)
    penalized = backward(params, X, Y, alpha=0.1)
    for (W, _), (g0, b0), (g1, b1) in zip(params, plain, penalized):
        assert np.allclose(g1 - g0, 0.1 * W, atol=1e-14) and np.array_equal(b0, b1)


def test_gradient_vanishes_at_exact_fit():
    W = np.zeros((2, 2))
    b = np.array([2000.0, 0.0])  # exp(-2000) underflows: predictions are exactly one-hot
    X = np.ones((4, 2))
    Y = np.tile([1.0, 0.0], (4, 1))
    (gW, gb), = backward([(W, b)], X, Y)
    assert np.all(gW == 0) and np.all(gb == 0)


def test_duplicated_batch_leaves_gradient_unchanged():
    params, X, Y = random_problem(3)
    g1 = flat(backward(params, X, Y))
    g2 = flat(backward(params, np.vstack([X, X]), np.vstack([Y, Y])))
    assert np.max(np.abs(g1 - g2)) < 1e-12


# training

def two_blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = rng.normal(size=(n, 7))
    X[:, 0] += np.where(y == 1, 4.0, -4.0)
    return X, y


def test_separable_problem_is_learned_within_50_epochs():
    X, y = two_blobs()
    clf = MLPBeamClassifier(hidden_layer_sizes=(16,), max_epochs=50).fit(X, y)
    X_val, y_val = clf.validation_set_
    assert clf.score(X_val, y_val) == 1.0


def test_training_is_deterministic():
    X, y = two_blobs(seed=1)
    a = MLPBeamClassifier(hidden_layer_sizes=(8, 8), max_epochs=20, random_state=4).fit(X, y)
    b = MLPBeamClassifier(hidden_layer_sizes=(8, 8), max_epochs=20, random_state=4).fit(X, y)
    assert all(np.array_equal(u, v) and u.tobytes() == v.tobytes() for u, v in zip(a.coefs_, b.coefs_))
    assert all(np.array_equal(u, v) for u, v in zip(a.intercepts_, b.intercepts_))


def test_relabeling_permutes_confusion_matrix():
    rng = np.random.default_rng(2)
    centers = rng.normal(size=(4, 7)) * 2
    y = rng.integers(0, 4, 400)
    X = centers[y] + rng.normal(size=(400, 7))
    Xv_y = rng.integers(0, 4, 100)
    Xv = centers[Xv_y] + rng.normal(size=(100, 7))
    perm = np.array([2, 0, 3, 1])
    kw = dict(hidden_layer_sizes=(16,), max_epochs=15, random_state=0)
    a = MLPBeamClassifier(**kw).fit(X, y, Xv, Xv_y)
    b = MLPBeamClassifier(**kw).fit(X, perm[y], Xv, perm[Xv_y])
    ca = a.evaluate(Xv, Xv_y).confusion
    cb = b.evaluate(Xv, perm[Xv_y]).confusion
    assert np.array_equal(cb[np.ix_(perm, perm)], ca)


def test_divergence_raises_with_checkpoint():
    X, y = two_blobs()
    with pytest.raises(TrainingDivergence) as info:
        MLPBeamClassifier(hidden_layer_sizes=(16,), learning_rate=1e300, max_epochs=5).fit(X, y)
    checkpoint = info.value.checkpoint
    assert checkpoint is not None and all(np.all(np.isfinite(W)) for W, _ in checkpoint)


def test_label_out_of_range():
    X, y = two_blobs()
    with pytest.raises(DomainError):
        MLPBeamClassifier(n_classes=1).fit(X, y)


# trained desk-scale model

def test_smoothed_training_loss_never_rises(standard_run):
    loss = np.array(load_report(f"{standard_run.out_dir}/{REPORT_DIR}").train_loss)
    smooth = np.convolve(loss, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(smooth) <= 0)


def test_first_epoch_lowers_loss(standard_run):
    # the zero output layer starts every run at exactly ln K
    loss = load_report(f"{standard_run.out_dir}/{REPORT_DIR}").train_loss
    assert loss[0] < math.log(standard_run.n_clusters)


def test_centroid_requirements_select_their_cluster(standard_run):
    clf, km = load_models(standard_run.out_dir)
    for j, req in enumerate(km.centroid_requirements()):
        index, _, probs = select_matrix(clf, km, req, standard_run.geometry, power_control=False)
        assert index == j and probs[j] > 0.9


def test_argmax_ignores_logit_offset(standard_run, rng):
    clf, _ = load_models(standard_run.out_dir)
    X = rng.uniform([0.45, 0.45, -30, -30, 50, -8.7, -8.7], [1.5, 1.5, -20, -20, 70, 8.7, 8.7], size=(200, 7))
    logits = clf.predict_logits(X)
    assert np.array_equal(softmax(logits + 123.4).argmax(1), clf.predict(X))
    assert np.allclose(softmax(logits + 123.4), clf.predict_proba(X), atol=1e-12)


def test_selected_matrix_is_resteered(standard_run):
    clf, km = load_models(standard_run.out_dir)
    geometry = standard_run.geometry
    req = BeamRequirement(0.8, 1.2, -25, -22, 61, -4.5, 6.0)
    index, w, _ = select_matrix(clf, km, req, geometry)
    rep = km.representatives_[index]
    want = steering_phases(geometry, steer_from_pointing(-4.5, 6.0))
    assert np.array_equal(w.phases[rep.active_mask], want[rep.active_mask])
    assert np.array_equal(w.amplitudes, rep.amplitudes)


def test_mismatched_models_are_rejected(standard_run, rng):
    clf, km = load_models(standard_run.out_dir)
    req = BeamRequirement(1, 1, -25, -25, 60)
    other = BeamKMeans(n_clusters=3).fit(rng.normal(size=(30, 7)))
    other.representatives_ = km.representatives_[:3]
    with pytest.raises(ConfigurationError):
        select_matrix(clf, other, req)
    clf.normalizer_ = FeatureNormalizer().fit(rng.normal(size=(30, 7)))
    with pytest.raises(ConfigurationError):
        select_matrix(clf, km, req)


def test_end_to_end_selector_estimator(rng):
    from sklearn.base import clone

    from beamselect import BeamMatrixSelector, compute_eirp

    X = rng.uniform([0.6, 0.6, -28, -28, 55, -5, -5], [1.4, 1.4, -21, -21, 65, 5, 5], size=(90, 7))
    sel = BeamMatrixSelector(cluster_model=BeamKMeans(n_clusters=3),
                             classifier=MLPBeamClassifier(hidden_layer_sizes=(16,), max_epochs=60), budget=50)
    assert clone(sel).get_params()["budget"] == 50
    sel.fit(X)
    assert sel.predict_proba(X).shape == (90, 3)
    assert np.mean(sel.predict(X) == sel.cluster_model_.labels_) > 0.8
    req = BeamRequirement.from_array(X[0])
    index, w, probs = sel.select(req)
    assert index == int(np.argmax(probs))
    assert abs(compute_eirp(sel.geometry_, w, req.pointing) - req.eirp_dbw) < 1e-6
