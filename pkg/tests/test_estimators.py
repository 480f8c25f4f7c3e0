import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from wnmchar.characterize import WriteTester, find_v_write_high, find_v_write_low, instance_circuit
from wnmchar.estimators import WriteFailureModel, WriteMarginTransformer
from wnmchar.failprob import p_fail_high, p_fail_low
from wnmchar.presets import cmos16
from wnmchar.variation import sample_params, trial_rng


def test_transformer_matches_direct_characterization():
    tech = cmos16()
    est = WriteMarginTransformer(kind="A", technology="CMOS16").fit()
    assert list(est.get_feature_names_out()) == ["v_write_l", "v_write_h"]
    assert list(est.feature_names_in_) == ["t_oxe_n", "t_oxe_p", "L", "W"]
    s = sample_params(tech, trial_rng(1, 0))
    X = np.array([[s.t_oxe_n, s.t_oxe_p, s.L, s.W]])
    got = est.transform(X)
    t = WriteTester(instance_circuit("A", tech), tech, s)
    assert got[0, 0] == find_v_write_low(t)
    assert got[0, 1] == find_v_write_high(t)


def test_transformer_checks():
    est = WriteMarginTransformer()
    with pytest.raises(NotFittedError):
        est.transform(np.ones((1, 4)))
    est.fit()
    with pytest.raises(ValueError, match="columns"):
        est.transform(np.ones((1, 3)))
    assert clone(est).get_params() == est.get_params()


def test_failure_model():
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.normal(0.3, 0.02, 500), rng.normal(0.55, 0.03, 500)])
    X[3, 0] = np.nan
    m = WriteFailureModel(vdd=0.85).fit(X)
    assert m.low_.n == 499 and m.low_.degenerate_count == 1
    p = m.predict_proba([0.0, 0.3, 0.34])
    assert p.shape == (3, 2)
    assert p[1, 0] == p_fail_low(m.low_.mean, m.low_.std, 0.3)
    assert p[2, 1] == p_fail_high(m.high_.mean, m.high_.std, 0.34, 0.85)
    c = m.curve()
    assert np.all(np.diff(c.p_fail_low) >= 0)
    with pytest.raises(ValueError):
        WriteFailureModel().fit(np.ones((5, 3)))
