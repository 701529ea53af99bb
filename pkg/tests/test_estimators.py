import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.utils.estimator_checks import check_estimator

from augairl.estimators import AdversarialImitation, BehaviorCloningClassifier
from augairl.sim import OBS_DIM, TrafficConfig


def test_bc_classifier_passes_sklearn_checks():
    check_estimator(BehaviorCloningClassifier())


def test_bc_classifier_on_expert_data(small_demos):
    obs, actions, _ = small_demos.arrays()
    clf = BehaviorCloningClassifier(hidden=(32, 32), epochs=30).fit(obs, actions)
    assert clf.n_features_in_ == OBS_DIM
    assert clf.score(obs, actions) > 0.8
    p = clf.predict_proba(obs)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=1e-12)
    assert set(np.unique(clf.predict(obs))) <= set(clf.classes_)
    assert clf.loss_curve_[-1] < clf.loss_curve_[0]


def test_bc_classifier_string_labels_and_clone():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 3))
    y = np.where(X[:, 0] > 0, "left", "keep")
    clf = BehaviorCloningClassifier(hidden=(8,), epochs=50, batch_size=None, lr=1e-2).fit(X, y)
    assert clf.score(X, y) > 0.9
    c2 = clone(clf)
    assert c2.get_params() == clf.get_params()
    assert not hasattr(c2, "policy_")


def test_adversarial_imitation_fit_predict(small_demos):
    est = AdversarialImitation(algo="augairl", n_iterations=2, horizon=32, policy_hidden=(8,), disc_hidden=(8,),
                               traffic=TrafficConfig())
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((1, OBS_DIM)))
    est.fit(small_demos)
    obs, _, _ = small_demos.arrays()
    a = est.predict(obs[:10])
    assert a.shape == (10,) and a.min() >= 0 and a.max() <= 4
    np.testing.assert_allclose(est.predict_proba(obs[:10]).sum(axis=1), 1.0)
    assert len(est.log_) == 2 and est.semantic_weights_.shape == (4,)
    assert est.get_params()["algo"] == "augairl"
    with pytest.raises(ValueError):
        est.predict(np.zeros((1, 3)))


def test_adversarial_imitation_rejects_bad_inputs(small_demos):
    with pytest.raises(TypeError):
        AdversarialImitation().fit(np.zeros((3, OBS_DIM)))
    with pytest.raises(ValueError):
        AdversarialImitation(algo="trpo", n_iterations=1).fit(small_demos)
