import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bayeslottery import LotteryTicketClassifier, VariationalClassifier
from bayeslottery.data import synth_blobs, synth_images

FAST = dict(epochs=15, lr=3e-3, batch_size=64, samples=2, eval_samples=4)


@pytest.fixture(scope="module")
def blobs():
    tr = synth_blobs(60, 3, 0.3, seed=1)
    te = synth_blobs(30, 3, 0.3, seed=2)
    labels = np.array(["a", "b", "c"])
    return tr.x, labels[tr.y], te.x, labels[te.y]


def test_fit_predict_with_string_labels(blobs):
    X, y, Xt, yt = blobs
    clf = VariationalClassifier(hidden=(16,), **FAST).fit(X, y)
    assert list(clf.classes_) == ["a", "b", "c"]
    assert clf.n_features_in_ == 2
    proba = clf.predict_proba(Xt)
    assert proba.shape == (len(Xt), 3)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
    assert clf.score(Xt, yt) >= 0.9
    assert set(clf.predict(Xt)) <= {"a", "b", "c"}


def test_params_round_trip_and_clone():
    clf = VariationalClassifier(hidden=(8, 8), epochs=3, random_state=7)
    params = clf.get_params()
    assert params["hidden"] == (8, 8) and params["random_state"] == 7
    twin = clone(clf)
    assert twin.get_params() == params and twin is not clf
    twin.set_params(epochs=5)
    assert twin.epochs == 5 and clf.epochs == 3
    ticket = LotteryTicketClassifier(levels=2, prune_score="square")
    assert clone(ticket).get_params()["prune_score"] == "square"


def test_predict_before_fit_fails():
    with pytest.raises(NotFittedError):
        VariationalClassifier().predict(np.zeros((1, 2)))


def test_bad_input_is_rejected():
    with pytest.raises(ValueError):
        VariationalClassifier(epochs=1).fit(np.zeros((3, 2)), [0, 1])
    with pytest.raises(ValueError):
        VariationalClassifier(epochs=1).fit(np.array([[np.nan, 1.0], [0, 1]]), [0, 1])


def test_fit_is_reproducible(blobs):
    X, y, Xt, _ = blobs
    a = VariationalClassifier(hidden=(8,), **FAST).fit(X, y).predict_proba(Xt)
    b = VariationalClassifier(hidden=(8,), **FAST).fit(X, y).predict_proba(Xt)
    np.testing.assert_array_equal(a, b)


def test_deterministic_variant(blobs):
    X, y, Xt, yt = blobs
    clf = VariationalClassifier(hidden=(16,), bayesian=False, **FAST).fit(X, y)
    assert clf.score(Xt, yt) >= 0.9


def test_lottery_ticket_classifier(blobs):
    X, y, Xt, yt = blobs
    clf = LotteryTicketClassifier(hidden=(16, 16), levels=2, validation_data=(Xt, yt),
                                  **FAST).fit(X, y)
    assert len(clf.tickets_) == 3 and len(clf.records_) == 3
    assert clf.remaining_fraction_ == pytest.approx(0.64, abs=0.01)
    assert clf.score(Xt, yt) >= 0.8


def test_image_inputs_use_the_residual_network():
    tr = synth_images(6, 3, 8, 0.3, seed=0)
    clf = VariationalClassifier(arch="mini_resnet", hidden=(4, 8), epochs=1, samples=1,
                                eval_samples=1, batch_size=16).fit(tr.x, tr.y)
    assert clf.predict_proba(tr.x).shape == (18, 3)
