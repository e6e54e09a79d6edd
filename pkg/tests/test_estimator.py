import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from migcn import numerics as nx
from migcn.errors import ConfigError, InputError, TrainingError
from migcn.estimator import MIGCNLocalizer
from migcn.validation import GroundingSample, check_samples, check_targets


def small(**kw):
    base = dict(d=4, window_sizes=(2, 4), stride=1, dropout_p=0.0, batch_size=3, epochs=2,
                learning_rate=1e-2, random_state=0)
    base.update(kw)
    return MIGCNLocalizer(**base)


def test_params_round_trip_and_clone():
    est = small(variant="naive")
    params = est.get_params()
    assert params["variant"] == "naive" and params["d"] == 4
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(epochs=7)
    assert est.epochs == 7


def test_unfitted_predict_raises(tiny_data):
    X, _ = tiny_data
    with pytest.raises(NotFittedError):
        small().predict(X)


def test_fit_predict_shapes_and_trace(tiny_data):
    X, y = tiny_data
    est = small().fit(X, y)
    pred = est.predict(X)
    assert pred.shape == (len(X), 2)
    assert np.all(pred[:, 0] >= 0) and np.all(pred[:, 1] <= 12.0) and np.all(pred[:, 1] > pred[:, 0])
    # 6 samples / batch 3 = 2 steps per epoch
    assert len(est.loss_trace_) == 4 and est.n_steps_ == 4
    t = est.loss_trace_[-1]
    assert abs(t.total - (t.aln + 0.1 * t.rank + 0.001 * t.reg)) < 1e-12
    assert 0.0 <= est.score(X, y) <= 1.0


def test_zero_epochs_keeps_initialization(tiny_data):
    X, y = tiny_data
    a = small(epochs=0).fit(X, y)
    b = small(epochs=0)
    b.initialize(12, 8, 8, 6, np.random.default_rng(0))
    for p, q in zip(a.params_.params(), b.params_.params()):
        assert p.name == q.name and np.array_equal(p.value, q.value)
    assert a.loss_trace_ == []


def test_prediction_does_not_mutate_params(tiny_data):
    X, y = tiny_data
    est = small(dropout_p=0.5).fit(X, y)
    before = [p.value.copy() for p in est.params_.params()]
    first = est.predict(X)
    est.objective(X, y)
    np.testing.assert_array_equal(est.predict(X), first)
    for p, v in zip(est.params_.params(), before):
        np.testing.assert_array_equal(p.value, v)


def test_batched_forward_equals_per_sample(tiny_data):
    X, _ = tiny_data
    est = small(batch_size=6).fit(X[:1], np.array([[1.0, 4.0]]))
    together = est.predict_candidates(X)
    alone = [est.predict_candidates([x])[0] for x in X]
    for a, b in zip(together, alone):
        assert [m.score for m in a] == pytest.approx([m.score for m in b], abs=1e-12)


def test_objective_is_differentiable(tiny_data):
    X, y = tiny_data
    est = small(epochs=0).fit(X, y)
    loss, parts = est.objective(X, y)
    nx.backward(loss, est.params_.params())
    assert all(np.isfinite(p.grad).all() for p in est.params_.params())
    assert parts.total.shape == (len(X),)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_loss_names_the_example(tiny_data):
    X, y = tiny_data
    # an absurd step size overflows the parameters after the first update
    est = small(epochs=3, batch_size=6, learning_rate=1e300)
    with pytest.raises(TrainingError, match=r"video 'v\d+' query 'q\d+'"):
        est.fit(X, y)


def test_validation_helpers(tiny_data):
    X, y = tiny_data
    with pytest.raises(InputError):
        check_samples([])
    with pytest.raises(InputError):
        check_samples([object()])
    arrays = check_samples(X)
    with pytest.raises(InputError):
        check_targets(np.zeros((len(X), 3)), arrays.duration)
    with pytest.raises(InputError):
        check_targets(np.tile([5.0, 2.0], (len(X), 1)), arrays.duration)
    est = small().fit(X, y)
    other = [GroundingSample(np.zeros((7, 8)), X[0].query, 7.0)]
    with pytest.raises(InputError, match="model expects"):
        est.predict(other)


def test_unknown_variant():
    with pytest.raises(ConfigError):
        small(variant="bogus").model_config()
