import math

import numpy as np
import pytest

from wnmchar.characterize import CharSettings, QEdge, measure_clk_to_q, instance_circuit
from wnmchar.engine import (ConvergenceError, SimulationError, SolverOptions, compile_circuit,
                            dc_operating_point, transient)
from wnmchar.netlist import parse
from wnmchar.presets import cmos16, finfet16
from wnmchar.waveform import Waveform

INV = ("Vdd vdd gnd DC 0.85\nVin in gnd DC {vin}\nM1 out in gnd gnd N\n"
       "M2 out in vdd vdd P m=2\n")
LATCH = ("Vdd vdd gnd DC 0.85\nM1 b a gnd gnd N\nM2 b a vdd vdd P m=2\n"
         "M3 a b gnd gnd N\nM4 a b vdd vdd P m=2\n")
RING = ("Vdd vdd gnd DC 0.85\n"
        + "".join(f"MN{i} n{(i + 1) % 3} n{i} gnd gnd N\nMP{i} n{(i + 1) % 3} n{i} vdd vdd P m=2\n"
                  f"C{i} n{(i + 1) % 3} gnd 0.5f\n" for i in range(3)))


def test_waveform_clamps_and_edges():
    w = Waveform.edges(0.0, [(1e-9, 1.0)], 10e-12)
    assert w.at(-1.0) == 0.0 and w.at(5e-9) == 1.0
    assert w.at(1e-9) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        Waveform((1.0, 0.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        Waveform.edges(0.0, [(1e-9, 1.0), (1.001e-9, 0.0)], 10e-12)


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_rc_step(k):
    rc = parse("V1 out gnd DC 1 r=1k\nC1 out gnd 1f\n")
    tau = 1e-12
    res = transient(rc, 3 * tau, tau / 10, {"out": 0.0}, cmos16(), breakpoints=[k * tau])
    exact = 1 - math.exp(-k)
    assert res.at("out", k * tau) == pytest.approx(exact, rel=1e-3)


@pytest.mark.parametrize("tech", [cmos16(), finfet16()], ids=["cmos", "finfet"])
def test_inverter_rails(tech):
    hi = dc_operating_point(parse(INV.format(vin=0)), tech)["out"]
    lo = dc_operating_point(parse(INV.format(vin=0.85)), tech)["out"]
    assert abs(hi - 0.85) <= 1e-3
    assert abs(lo) <= 1e-3


def test_bistable_follows_seed():
    tech = cmos16()
    c = parse(LATCH)
    one = dc_operating_point(c, tech, seed={"a": 0.8, "b": 0.05})
    zero = dc_operating_point(c, tech, seed={"a": 0.05, "b": 0.8})
    assert one["a"] > 0.84 and one["b"] < 0.01
    assert zero["a"] < 0.01 and zero["b"] > 0.84


def test_kirchhoff_residual_at_operating_point():
    tech = cmos16()
    c = parse(INV.format(vin=0.4))
    op = dc_operating_point(c, tech)
    from wnmchar.device import drain_current
    m1, m2 = c.device("M1"), c.device("M2")
    i_n = drain_current(m1, op["in"], op["out"], tech)
    i_p = drain_current(m2, op["in"] - 0.85, op["out"] - 0.85, tech)
    assert abs(i_n + i_p) <= 1e-12 + 1e-9 * abs(i_n)


def test_transient_settles_to_operating_point():
    tech = cmos16()
    c = parse(INV.format(vin=0.3))
    op = dc_operating_point(c, tech)
    res = transient(c, 200e-12, 5e-12, {"out": 0.0}, tech)
    assert res.final()["out"] == pytest.approx(op["out"], abs=1e-4)


def test_ring_oscillator_period_stable():
    tech = cmos16()
    res = transient(parse(RING), 400e-12, 1e-12, {"n0": 0.85, "n1": 0.0, "n2": 0.85}, tech)
    t = res.times
    y = res.v("n0") - 0.425
    ups = [t[k] - y[k] * (t[k + 1] - t[k]) / (y[k + 1] - y[k])
           for k in range(len(t) - 1) if y[k] < 0 <= y[k + 1]]
    periods = np.diff(ups)[-5:]
    assert len(periods) == 5
    assert np.ptp(periods) <= 0.02 * periods.mean()


def test_charge_conservation():
    tech = cmos16()
    c = parse("C1 a gnd 2f\nC2 b gnd 1f\nR1 a b 10k\nC3 a b 0.5f\n")
    res = transient(c, 200e-12, 1e-12, {"a": 0.9, "b": 0.0}, tech)
    # node charge; the bridging capacitor adds equal and opposite terms
    q0 = 2e-15 * 0.9 + 1e-15 * 0.0
    va, vb = res.v("a")[-1], res.v("b")[-1]
    q1 = 2e-15 * va + 1e-15 * vb
    assert abs(q1 - q0) <= 1e-4 * q0
    assert va == pytest.approx(vb, abs=1e-6)


def test_min_node_cap_is_a_floor():
    tech = cmos16()
    small = compile_circuit(parse("V1 a gnd DC 1 r=1k\nC1 b gnd 1e-18\nR1 a b 1k\n"), tech)
    big = compile_circuit(parse("V1 a gnd DC 1 r=1k\nC1 b gnd 1f\nR1 a b 1k\n"), tech)
    assert small.node_capacitance("b") == pytest.approx(tech.min_node_cap)
    assert big.node_capacitance("b") == pytest.approx(1e-15)


def test_dt_max_respected_and_deterministic():
    tech = cmos16()
    c = parse(RING)
    ic = {"n0": 0.85, "n1": 0.0, "n2": 0.85}
    a = transient(c, 100e-12, 2e-12, ic, tech)
    b = transient(c, 100e-12, 2e-12, ic, tech)
    assert np.max(np.diff(a.times)) <= 2e-12 * (1 + 1e-9)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.voltages, b.voltages)
    assert np.all(np.isfinite(a.voltages))
    assert a.voltages.min() >= -0.5 * 0.85 and a.voltages.max() <= 1.5 * 0.85


def test_halving_dt_max_keeps_delay():
    tech = cmos16()
    c = instance_circuit("A", tech)
    d1 = measure_clk_to_q(c, QEdge.RISE_Q, tech, settings=CharSettings(dt_max=10e-12))
    d2 = measure_clk_to_q(c, QEdge.RISE_Q, tech, settings=CharSettings(dt_max=5e-12))
    assert abs(d1 - d2) <= 0.005 * d2


def test_step_underflow_carries_partial_result():
    tech = cmos16()
    c = parse(INV.format(vin=0)).with_source("in", Waveform.edges(0.0, [(10e-12, 0.85)], 1e-12))
    opts = SolverOptions(max_iter=1, max_step=1e-3, dt_min=1e-13)
    with pytest.raises(SimulationError) as e:
        transient(c, 50e-12, 1e-12, {"out": 0.85}, tech, options=opts)
    assert e.value.partial is not None
    assert e.value.partial.times[-1] < 50e-12


def test_dc_failure_is_convergence_error():
    tech = cmos16()
    opts = SolverOptions(max_iter=1, max_step=1e-4)
    with pytest.raises(ConvergenceError):
        dc_operating_point(parse(INV.format(vin=0.85)), tech, options=opts)


def test_unknown_initial_node():
    with pytest.raises(KeyError):
        transient(parse(INV.format(vin=0)), 1e-12, 1e-13, {"nope": 0.0}, cmos16())


def test_waveform_csv_dump(tmp_path):
    res = transient(parse("V1 out gnd DC 1 r=1k\nC1 out gnd 1f\n"), 2e-12, 1e-13,
                    {"out": 0.0}, cmos16())
    p = tmp_path / "w.csv"
    res.to_csv(p, ["out"])
    rows = p.read_text().splitlines()
    assert rows[0] == "time,out"
    assert len(rows) == len(res.times) + 1
