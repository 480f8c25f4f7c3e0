"""scikit-learn style wrappers.

``WriteMarginTransformer`` maps rows of process parameters to write
thresholds of one flip-flop configuration, so a Monte Carlo run is
``transform(sample_matrix)``. ``WriteFailureModel`` fits the normal margin
model and predicts failure probabilities for input shifts.
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .aging import AgingParams, stress_profile
from .characterize import CharSettings, SlackMode, instance_circuit
from .device import VARYING_FIELDS
from .failprob import FailureCurve, build_curve, p_fail_high, p_fail_low
from .presets import preset
from .variation import METRICS, StatSummary, characterize_instance, zero_slack_reference


class WriteMarginTransformer(TransformerMixin, BaseEstimator):
    """Process-parameter rows to ``(V_writeL, V_writeH)``.

    Columns of ``X`` follow ``feature_names_in_`` (the varying parameters of the
    technology, e.g. ``t_oxe_n, t_oxe_p, L, W`` for CMOS16). Degenerate
    instances yield NaN.
    """

    def __init__(self, kind="A", technology="CMOS16", age=0, mode="long", aging=None,
                 settings=None):
        self.kind = kind
        self.technology = technology
        self.age = age
        self.mode = mode
        self.aging = aging
        self.settings = settings

    def _tech(self):
        return preset(self.technology) if isinstance(self.technology, str) else self.technology

    def fit(self, X=None, y=None):
        tech = self._tech()
        self.tech_ = tech
        self.feature_names_in_ = np.array(VARYING_FIELDS[tech.nominal.technology], dtype=object)
        self.n_features_in_ = len(self.feature_names_in_)
        if X is not None:
            check_array(X, ensure_min_features=self.n_features_in_)
        self.aging_ = self.aging or AgingParams()
        self.settings_ = self.settings or CharSettings()
        self.mode_ = SlackMode(self.mode)
        self.zero_ref_ = (zero_slack_reference(self.kind, tech, self.aging_, self.settings_)
                          if self.mode_ is SlackMode.ZERO else None)
        self.stress_ = (stress_profile(instance_circuit(self.kind, tech), tech)
                        if self.age > 0 else None)
        return self

    def transform(self, X):
        check_is_fitted(self, "tech_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns; expected {self.n_features_in_} "
                             f"({', '.join(self.feature_names_in_)})")
        nominal = self.tech_.nominal
        out = np.empty((X.shape[0], 2))
        for i, row in enumerate(X):
            sample = nominal.replace(**dict(zip(self.feature_names_in_, map(float, row))))
            vals = characterize_instance(self.kind, self.tech_, sample, (self.age,),
                                         (self.mode_,), METRICS, self.aging_, self.settings_,
                                         self.zero_ref_, self.stress_)
            for j, m in enumerate(METRICS):
                v = vals[(self.age, self.mode_, m)]
                out[i, j] = math.nan if v is None else v
        return out

    def get_feature_names_out(self, input_features=None):
        return np.array(METRICS, dtype=object)


class WriteFailureModel(BaseEstimator):
    """Normal fit of ``(V_writeL, V_writeH)`` columns; NaN rows count as degenerate."""

    def __init__(self, vdd=0.85, allow_step=False):
        self.vdd = vdd
        self.allow_step = allow_step

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_all_finite="allow-nan")
        if X.shape[1] != 2:
            raise ValueError("X must have two columns: V_writeL, V_writeH")
        self.n_features_in_ = 2
        sums = []
        for j in range(2):
            col = X[:, j]
            ok = col[~np.isnan(col)]
            if ok.size < 2:
                raise ValueError("need at least two non-degenerate samples per column")
            sums.append(StatSummary(ok.size, float(ok.mean()), float(ok.std(ddof=1)),
                                    float(ok.min()), float(ok.max()), int(col.size - ok.size)))
        self.low_, self.high_ = sums
        self.mean_ = np.array([s.mean for s in sums])
        self.std_ = np.array([s.std for s in sums])
        return self

    def predict_proba(self, delta_v):
        """``(p_fail_low, p_fail_high)`` per input shift, shape ``(n, 2)``."""
        check_is_fitted(self, "low_")
        dv = np.atleast_1d(np.asarray(delta_v, float)).ravel()
        return np.array([[p_fail_low(self.low_.mean, self.low_.std, v,
                                     allow_step=self.allow_step),
                          p_fail_high(self.high_.mean, self.high_.std, v, self.vdd,
                                      allow_step=self.allow_step)] for v in dv])

    def curve(self, grid=None) -> FailureCurve:
        check_is_fitted(self, "low_")
        return build_curve(self.low_, self.high_, self.vdd, grid, allow_step=self.allow_step)
