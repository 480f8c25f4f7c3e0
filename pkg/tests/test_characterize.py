import math

import numpy as np
import pytest

from wnmchar.characterize import (LONG_SLACK, CharacterizationError, CharSettings,
                                  DegenerateInstance, QEdge, SlackMode, ThresholdElement,
                                  WnmSample, WriteTester, bisect_threshold, find_v_write_high,
                                  find_v_write_low, functional_check, instance_circuit,
                                  measure_clk_to_q, min_setup_time, output_correct,
                                  retention_time, schedule, wnm)
from wnmchar.netlist import Capacitor, parse
from wnmchar.presets import cmos16
from wnmchar.waveform import Waveform

VDD = 0.85


def test_threshold_element_low_and_high():
    el = ThresholdElement(VDD, VDD / 2)
    lo = find_v_write_low(el, detail=True)
    assert len(el.calls) == 10 == lo.evaluations
    hi = find_v_write_high(el, detail=True)
    assert len(el.calls) == 20
    assert abs(lo.value - 0.425) <= 0.001 * VDD
    assert abs(hi.value - 0.425) <= 0.001 * VDD
    assert math.ceil(math.log2(1 / 0.001)) == 10


@pytest.mark.parametrize("thr", [0.05, 0.2, 0.61, 0.8])
def test_bisection_bracket_straddles(thr):
    el = ThresholdElement(VDD, thr)
    res = find_v_write_low(el, detail=True)
    good, bad = res.bracket
    assert el.writes(0, good) and not el.writes(0, bad)
    assert abs(bad - good) <= 0.001 * VDD
    res = find_v_write_high(el, detail=True)
    good, bad = res.bracket
    assert el.writes(1, good) and not el.writes(1, bad)
    assert abs(bad - good) <= 0.001 * VDD


def test_degenerate_instance_detected():
    with pytest.raises(DegenerateInstance):
        find_v_write_low(ThresholdElement(VDD, -0.1))
    with pytest.raises(DegenerateInstance):
        find_v_write_high(ThresholdElement(VDD, VDD + 0.1))


def test_zero_mode_needs_reference():
    with pytest.raises(CharacterizationError):
        find_v_write_low(ThresholdElement(VDD, 0.4), SlackMode.ZERO)


def test_bisect_generic_counts():
    res = bisect_threshold(lambda x: x < 3.3, 0.0, 10.0, 0.01)
    assert res.evaluations == math.ceil(math.log2(1000))
    assert res.value <= 3.3 < res.value + 0.01


def _wave(values, t1=1e-9):
    t = np.linspace(0, t1, len(values))
    return Waveform(tuple(t), tuple(values))


def test_output_correct_cases():
    win = (0.0, 1e-9)
    assert output_correct(_wave([VDD] * 5), 1, win, VDD)
    assert not output_correct(_wave([VDD / 2] * 5), 1, win, VDD)
    assert output_correct(_wave([0, 0.3, VDD, VDD, VDD]), 1, win, VDD)
    assert not output_correct(_wave([0, VDD, 0.5, VDD, VDD]), 1, win, VDD)
    assert output_correct(_wave([VDD, 0.4, 0.0, 0.0, 0.01]), 0, win, VDD)
    assert not output_correct(_wave([0, 0, 0, 0, 0.2]), 0, win, VDD)
    with pytest.raises(CharacterizationError):
        output_correct(_wave([VDD] * 5), 1, (0.0, 2e-9), VDD)


def test_wnm_arithmetic():
    assert wnm(0.30, 0.60, VDD) == pytest.approx((0.30, 0.25))
    assert wnm(0.3, VDD, VDD)[1] == 0.0
    assert wnm(0.0, 0.5, VDD)[0] == 0.0
    s = WnmSample.from_thresholds(0.3, 0.6, VDD)
    assert (s.wnm_l, s.wnm_h) == pytest.approx((0.3, 0.25))
    with pytest.raises(ValueError):
        wnm(-0.1, 0.5, VDD)


@pytest.mark.parametrize("slack", [5e-12, 300e-12, LONG_SLACK])
def test_schedule_places_d_change(slack):
    s = CharSettings()
    sch = schedule(s, slack, VDD)
    assert sch.capture_edge - sch.d_change == pytest.approx(slack)
    # D never moves before the preceding falling edge plus the hold margin
    assert sch.d_change >= sch.first_edge + s.period / 2 + s.hold_margin - 1e-18
    assert sch.clock.at(sch.capture_edge) == pytest.approx(VDD / 2)
    assert sch.cycle_end - sch.capture_edge == pytest.approx(s.period - s.ramp / 2)


class _DelayStub:
    """Clock-to-Q grows as the setup time shrinks; crosses 1.10x nominal at 7 ps."""

    vdd = VDD
    nominal = 20e-12

    def clk_to_q(self, edge, setup, *, sched=None, t_snap=None):
        return self.nominal * (1 + 0.1 * math.exp(-(setup - 7e-12) / 3e-12))


def test_min_setup_on_synthetic_stub():
    stub = _DelayStub()
    res = min_setup_time(stub, QEdge.RISE_Q, cmos16(), nominal=stub.nominal, detail=True)
    assert abs(res.value - 7e-12) <= 0.1e-12
    good, bad = res.bracket
    assert abs(good - bad) <= 0.1e-12


def test_nominal_clk_to_q_band_and_load():
    tech = cmos16()
    c = instance_circuit("A", tech)
    t0 = measure_clk_to_q(c, QEdge.RISE_Q, tech)
    assert 1e-12 <= t0 <= 50e-12
    heavy = c.replace(capacitors=(Capacitor("CL", "q", "gnd", 2e-15),))
    assert measure_clk_to_q(heavy, QEdge.RISE_Q, tech) > t0


def test_real_cell_writes_rails_and_thresholds_ordered():
    tech = cmos16()
    t = WriteTester(instance_circuit("C", tech), tech)
    assert t.writes(0, 0.0, LONG_SLACK) and t.writes(1, VDD, LONG_SLACK)
    assert not t.writes(0, VDD, LONG_SLACK) and not t.writes(1, 0.0, LONG_SLACK)
    lo = find_v_write_low(t)
    hi = find_v_write_high(t)
    assert 0 <= lo < hi <= VDD


# two inverters from D to Q: transparent, so it never holds against D
BUFFER = ("Vdd vdd gnd DC 0.85\nM1 x d gnd gnd N\nM2 x d vdd vdd P m=2\n"
          "M3 q x gnd gnd N\nM4 q x vdd vdd P m=2\nVck ck gnd DC 0\nVd d gnd DC 0\n"
          ".pin D d\n.pin CK ck\n.pin Q q\n")


@pytest.mark.parametrize("logic", [0, 1])
def test_functional_check_separates_register_from_buffer(logic):
    tech = cmos16()
    assert functional_check(instance_circuit("A", tech), tech, logic)
    assert not functional_check(parse(BUFFER), tech, logic)


def test_retention_static_versus_transparent():
    tech = cmos16()
    assert math.isinf(retention_time(instance_circuit("A", tech), tech, 1, t_max=1e-6))
    lost = retention_time(parse(BUFFER), tech, 1, t_max=1e-6)
    assert 0 < lost < 50e-12


def test_dynamic_cell_loses_a_stored_one():
    tech = cmos16()
    t = retention_time(instance_circuit("F", tech), tech, 1, t_max=10e-6)
    assert 100e-9 < t < 10e-6
