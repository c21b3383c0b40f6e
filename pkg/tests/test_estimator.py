import json

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from spreliability import ReliabilityMaximizer
from spreliability.reliability import oracle_optimize
from spreliability.spgraph import dumps_instance, generate, write_instance
from spreliability.validation import check_fixings, check_mask, check_masks

from conftest import triangle


def test_get_params_and_clone():
    est = ReliabilityMaximizer(cut_mode="envelope", time_limit=5.0)
    params = est.get_params()
    assert params["cut_mode"] == "envelope" and params["time_limit"] == 5.0
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(max_rounds=2)
    assert est.max_rounds == 2


@pytest.mark.parametrize("source", ["object", "json", "mapping", "path"])
def test_fit_accepts_many_sources(source, tmp_path):
    inst = generate(8, 4, 0.6)
    if source == "object":
        arg = inst
    elif source == "json":
        arg = dumps_instance(inst)
    elif source == "mapping":
        arg = json.loads(dumps_instance(inst))
    else:
        arg = tmp_path / "inst.json"
        write_instance(inst, arg)
    est = ReliabilityMaximizer().fit(arg)
    _, best = oracle_optimize(inst)
    assert est.reliability_ == pytest.approx(best, abs=1e-9)
    assert est.gap_ == 0.0 and est.status_ == "optimal"
    assert est.mask_.dtype == np.int8 and est.mask_.shape == (8,)


def test_predict_scores_masks():
    est = ReliabilityMaximizer().fit(triangle())
    assert np.array_equal(est.predict(), [1, 1, 1])
    scores = est.predict(["111", "110", "000"])
    assert scores == pytest.approx([0.972, 0.81, 0.0], abs=1e-12)
    assert est.predict(np.array([[1, 1, 1]])) == pytest.approx([0.972])
    assert est.score() == pytest.approx(0.972)
    assert est.score([[1, 0, 1], [0, 0, 1]]) == pytest.approx(0.81)


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        ReliabilityMaximizer().predict()


def test_bad_inputs():
    with pytest.raises(TypeError):
        ReliabilityMaximizer().fit(3.5)
    with pytest.raises(ValueError):
        ReliabilityMaximizer(cut_mode="fancy").fit(triangle())


@pytest.mark.parametrize(
    "mask,error",
    [("1021", ValueError), ("11", ValueError), ([1, 2, 0], ValueError), ([[1, 0, 1]], ValueError)],
)
def test_check_mask_rejects(mask, error):
    with pytest.raises(error):
        check_mask(mask, 3)


def test_check_mask_accepts_variants():
    assert check_mask("101", 3).tolist() == [1, 0, 1]
    assert check_mask([True, False, True], 3).tolist() == [1, 0, 1]
    assert check_masks("101", 3).shape == (1, 3)
    assert check_masks([[1, 0, 1], [0, 0, 0]], 3).shape == (2, 3)


def test_check_fixings():
    assert check_fixings(None, 2) == (None, None)
    assert check_fixings([1, None], 2) == (1, None)
    with pytest.raises(ValueError):
        check_fixings([0.5, None], 2)
    with pytest.raises(ValueError):
        check_fixings([1], 2)
