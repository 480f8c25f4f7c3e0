import math

import numpy as np
import pytest
from scipy import stats

from wnmchar import variation
from wnmchar.aging import AgingParams
from wnmchar.characterize import (CharSettings, SlackMode, WriteTester, find_v_write_high,
                                  find_v_write_low, instance_circuit)
from wnmchar.engine import SimulationError
from wnmchar.presets import cmos16, finfet16
from wnmchar.variation import (AD_CRITICAL_1PCT, ConfigurationError, McConfig,
                               MonteCarloAborted, StatSummary, anderson_darling,
                               normality_check, read_summary_csv, run_mc, sample_params,
                               summarize, trial_rng, write_raw_csv, write_summary_csv)


def test_table_values_in_presets():
    c, f = cmos16(), finfet16()
    assert (c.nominal.t_oxe_n, c.sigma["t_oxe_n"]) == (0.95, 0.0317)
    assert (f.nominal.h_fin, f.sigma["h_fin"]) == (26.0, 0.867)
    # 3 sigma / mu = 10 %
    assert 3 * f.sigma["h_fin"] / f.nominal.h_fin == pytest.approx(0.1, rel=1e-3)


def test_zero_sigma_draws_nominal():
    tech = cmos16().with_sigma_scale(0.0)
    for i in range(5):
        assert sample_params(tech, trial_rng(3, i)) == tech.nominal


def test_substreams_are_pure_functions_of_seed_and_trial():
    tech = finfet16()
    a = [sample_params(tech, trial_rng(11, i)) for i in range(6)]
    b = [sample_params(tech, trial_rng(11, i)) for i in (5, 3, 1)]
    assert b == [a[5], a[3], a[1]]
    assert a[0] != a[1]
    assert sample_params(tech, trial_rng(12, 0)) != a[0]


def test_sample_moments():
    tech = cmos16()
    xs = np.array([sample_params(tech, trial_rng(1, i)).t_oxe_n for i in range(4000)])
    assert abs(xs.mean() - 0.95) <= 3 * 0.0317 / math.sqrt(4000)
    assert xs.std(ddof=1) == pytest.approx(0.0317, rel=0.05)


class _NegativeRng:
    def standard_normal(self):
        return -1e9


def test_runaway_rejection_raises():
    with pytest.raises(ConfigurationError, match="consecutive"):
        sample_params(cmos16(), _NegativeRng())


def test_summarize_examples():
    s = summarize([0.3, 0.3, 0.3])
    assert (s.mean, s.std, s.n) == (pytest.approx(0.3), 0.0, 3)
    s = summarize([0.2, 0.4])
    assert s.mean == pytest.approx(0.3) and s.std == pytest.approx(math.sqrt(0.02))
    assert (s.min, s.max) == (0.2, 0.4)
    with pytest.raises(ValueError):
        summarize([1.0])


def test_summarize_large_normal():
    x = np.random.default_rng(2024).normal(0.3, 0.02, 10_000)
    s = summarize(x)
    assert abs(s.mean - 0.3) <= 0.0006
    assert s.std == pytest.approx(0.02, rel=0.05)
    assert s.std == pytest.approx(float(np.std(x, ddof=1)), rel=1e-12)


def test_summarize_stable_with_offset():
    x = 1e8 + np.array([0.1, 0.2, 0.3, 0.4])
    assert summarize(x).std == pytest.approx(np.std([0.1, 0.2, 0.3, 0.4], ddof=1), rel=1e-6)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_anderson_darling_matches_scipy(seed):
    x = np.random.default_rng(seed).normal(5, 2, 500)
    assert anderson_darling(x) == pytest.approx(stats.anderson(x).statistic, rel=1e-9)


def test_normality_verdicts():
    rng = np.random.default_rng(9)
    ok = normality_check(rng.normal(0.3, 0.02, 10_000))
    assert ok.passed and ok.modified <= AD_CRITICAL_1PCT
    bad = normality_check(rng.uniform(0, 1, 10_000))
    assert not bad.passed
    flat = normality_check(np.full(200, 0.4))
    assert flat.zero_variance and not flat.passed
    with pytest.raises(ValueError):
        normality_check(rng.normal(size=50))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        McConfig(0, 1)
    with pytest.raises(ConfigurationError):
        McConfig(1, 1, ages=(3,))
    with pytest.raises(ConfigurationError):
        McConfig(1, -1)


def _tiny(n, tech, **kw):
    base = dict(ages=(0,), modes=(SlackMode.LONG,), kinds=("A",), technologies=(tech,))
    base.update(kw)
    return McConfig(n, 5, **base)


def test_single_deterministic_trial_equals_nominal():
    tech = cmos16().with_sigma_scale(0.0)
    r = run_mc(_tiny(1, tech))
    t = WriteTester(instance_circuit("A", tech), tech)
    s = r.summaries[("A", "CMOS16", 0, "long", "v_write_l")]
    assert s.n == 1 and s.mean == find_v_write_low(t)
    assert r.summaries[("A", "CMOS16", 0, "long", "v_write_h")].mean == find_v_write_high(t)


def test_worker_count_does_not_change_results(tmp_path):
    cfg = _tiny(6, cmos16(), ages=(0, 10))
    a = run_mc(cfg, workers=1)
    b = run_mc(cfg, workers=2)
    assert a.summaries == b.summaries
    write_raw_csv(tmp_path / "a.csv", a.raw)
    write_raw_csv(tmp_path / "b.csv", b.raw)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    for key, s in a.summaries.items():
        assert s.n + s.degenerate_count == cfg.n_trials
        assert s.std > 0


def test_summary_csv_round_trip(tmp_path):
    sums = {("A", "CMOS16", 0.0, "long", "v_write_l"): StatSummary(10, 0.3, 0.02, 0.25, 0.35, 1),
            ("G", "FINFET16", 10.0, "zero", "v_write_h"): summarize([0.5, 0.6, 0.55])}
    p = tmp_path / "s.csv"
    write_summary_csv(p, sums)
    back = read_summary_csv(p)
    assert back == sums


def test_abort_on_too_many_failures(monkeypatch):
    calls = {"n": 0}
    real = variation.characterize_instance

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] % 2:
            raise SimulationError("injected")
        return real(*a, **k)

    monkeypatch.setattr(variation, "characterize_instance", flaky)
    with pytest.raises(MonteCarloAborted):
        run_mc(_tiny(4, cmos16()))


def test_failures_are_counted_when_rare(monkeypatch):
    real = variation.characterize_instance
    seen = {"n": 0}

    def once(*a, **k):
        seen["n"] += 1
        if seen["n"] == 3:
            raise SimulationError("injected")
        return real(*a, **k)

    monkeypatch.setattr(variation, "characterize_instance", once)
    r = run_mc(_tiny(25, cmos16()), workers=1)
    s = r.summaries[("A", "CMOS16", 0, "long", "v_write_l")]
    assert s.n == 24 and s.failed_count == 1
    assert r.failures[("A", "CMOS16")][0][0] == 2


def test_zero_slack_reference_is_positive_setup():
    ref = variation.zero_slack_reference("A", cmos16(), AgingParams(), CharSettings())
    assert ref.for_metric("v_write_l") == ref.fall and ref.for_metric("v_write_h") == ref.rise
    assert ref.fall > 0 and ref.rise > 0
