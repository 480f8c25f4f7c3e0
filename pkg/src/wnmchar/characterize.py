"""Timing and write-threshold extraction for flip-flop instances.

Every measurement follows the same stimulus: the clock starts low, a first
rising edge captures the opposite of the value under test, then D moves to
its test voltage and a capture edge follows ``slack`` later. When the slack is
longer than half a period, the low clock phase before the capture edge is
stretched so that no other edge sees the D transition. Q is judged over the
clock cycle that starts at the capture edge.

The network state just before D moves is simulated once per instance and
reused by every bisection step.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cells import FlipFlopKind, attach_fo4_load, build_flipflop, has_fo4_load
from .device import ProcessSample, TechnologyConfig
from .engine import (DEFAULT_OPTIONS, CompiledCircuit, SolverOptions,
                     compile_circuit, transient)
from .netlist import Circuit
from .waveform import Waveform

logger = logging.getLogger(__name__)

LONG_SLACK = 2e-9


class CharacterizationError(RuntimeError):
    pass


class DegenerateInstance(CharacterizationError):
    """The instance fails to write even a full-rail input."""


class SlackMode(str, enum.Enum):
    LONG = "long"
    ZERO = "zero"


class QEdge(str, enum.Enum):
    RISE_Q = "rise"
    FALL_Q = "fall"


@dataclass(frozen=True)
class CharSettings:
    period: float = 1e-9
    ramp: float = 10e-12  # clock and data 0-100 % transition time
    t_first_edge: float = 100e-12
    hold_margin: float = 50e-12  # D never moves closer than this after the falling edge
    dt_max: float | None = None  # default: period / 100
    band: float = 0.1  # Q must settle within band * vdd of its rail
    accuracy: float = 0.001  # bisection resolution as a fraction of vdd
    setup_resolution: float = 0.1e-12
    delay_budget: float = 0.10  # min setup time: allowed clock-to-Q increase
    options: SolverOptions = DEFAULT_OPTIONS

    @property
    def step_limit(self) -> float:
        return self.dt_max if self.dt_max is not None else self.period / 100.0


@dataclass(frozen=True)
class Schedule:
    first_edge: float
    d_change: float
    capture_edge: float
    cycle_end: float
    clock: Waveform

    @property
    def snapshot_time(self) -> float:
        return self.d_change


def schedule(settings: CharSettings, slack: float, vdd: float) -> Schedule:
    T, ramp = settings.period, settings.ramp
    e1 = settings.t_first_edge
    earliest = e1 + T / 2 + settings.hold_margin
    capture = max(e1 + T, earliest + slack)
    clock = Waveform.edges(0.0, [(e1, vdd), (e1 + T / 2, 0.0), (capture, vdd),
                                 (capture + T / 2, 0.0)], ramp)
    return Schedule(e1, capture - slack, capture, capture + T - ramp / 2, clock)


def output_correct(q, expected: int, window: tuple[float, float], vdd: float,
                   band: float = 0.1) -> bool:
    """Q reaches ``expected``'s rail within ``band * vdd`` and stays there.

    ``q`` is a :class:`Waveform` (or any object with ``times``/``values``).
    """
    t = np.asarray(q.times, float)
    v = np.asarray(q.values, float)
    t0, t1 = window
    if t0 < t[0] - 1e-18 or t1 > t[-1] + 1e-18:
        raise CharacterizationError("window outside the simulated range")
    rail = vdd if expected else 0.0
    tol = band * vdd
    mask = (t >= t0) & (t <= t1)
    vw = np.concatenate([[np.interp(t0, t, v)], v[mask], [np.interp(t1, t, v)]])
    inside = np.abs(vw - rail) <= tol
    if not inside[-1]:
        return False
    first = int(np.argmax(inside))
    return bool(np.all(inside[first:]))


@dataclass
class BisectionResult:
    value: float
    bracket: tuple[float, float]  # (passing end, failing end)
    evaluations: int


def bisect_threshold(passes: Callable[[float], bool], pass_end: float, fail_end: float,
                     tolerance: float) -> BisectionResult:
    """Shrink ``[pass_end, fail_end]`` (either order) until narrower than ``tolerance``.

    The endpoints are assumed, not evaluated; the returned value is the last
    point that passed (or ``pass_end`` if none did).
    """
    n = max(0, math.ceil(math.log2(abs(fail_end - pass_end) / tolerance) - 1e-12))
    good, bad = pass_end, fail_end
    for _ in range(n):
        mid = 0.5 * (good + bad)
        if passes(mid):
            good = mid
        else:
            bad = mid
    return BisectionResult(good, (good, bad), n)


class WriteTester:
    """Runs write experiments on one flip-flop instance.

    ``writes(logic, v_d, slack)`` starts from the opposite stored value, holds D
    at ``v_d`` from ``slack`` before the capture edge, and reports whether Q
    settles to ``logic`` within the cycle.
    """

    def __init__(self, circuit: Circuit, tech: TechnologyConfig,
                 sample: ProcessSample | None = None, delta_vth: dict | None = None,
                 settings: CharSettings = CharSettings()):
        if not has_fo4_load(circuit):
            logger.debug("characterizing %s without an FO4 load", circuit.name)
        self.tech = tech
        self.settings = settings
        self.compiled = compile_circuit(circuit, tech, sample, delta_vth)
        self.d_node = circuit.pins["D"]
        self.ck_node = circuit.pins["CK"]
        self.q_node = circuit.pins["Q"]
        self.evaluations = 0
        self._snapshots: dict = {}

    @property
    def vdd(self) -> float:
        return self.tech.vdd

    def _run(self, cc: CompiledCircuit, t_start, t_stop, initial):
        return transient(cc, t_stop, self.settings.step_limit, initial, t_start=t_start,
                         options=self.settings.options)

    def _snapshot(self, sched: Schedule, d_init: float, t_snap: float):
        key = (round(sched.capture_edge, 18), d_init, round(t_snap, 18))
        if key not in self._snapshots:
            cc = (self.compiled.with_waveform(self.ck_node, sched.clock)
                  .with_waveform(self.d_node, Waveform.dc(d_init)))
            res = self._run(cc, 0.0, t_snap, None)
            self._snapshots[key] = {n: v for n, v in res.final().items()}
        return self._snapshots[key]

    def simulate(self, logic: int, v_d: float, slack: float, *, t_snap: float | None = None,
                 sched: Schedule | None = None):
        """Transient for one experiment; returns ``(result, schedule)``."""
        s = self.settings
        sched = sched or schedule(s, slack, self.vdd)
        d_init = 0.0 if logic else self.vdd
        d_change = sched.capture_edge - slack
        if t_snap is None:
            t_snap = d_change - s.ramp
        state = self._snapshot(sched, d_init, t_snap)
        d_wave = Waveform.edges(d_init, [(d_change, v_d)], s.ramp)
        cc = (self.compiled.with_waveform(self.ck_node, sched.clock)
              .with_waveform(self.d_node, d_wave))
        free = set(cc.node_names[:cc.nu])
        init = {n: v for n, v in state.items() if n in free}
        self.evaluations += 1
        return self._run(cc, t_snap, sched.cycle_end, init), sched

    def writes(self, logic: int, v_d: float, slack: float) -> bool:
        """Simulator failures propagate; they are not counted as failed writes."""
        res, sched = self.simulate(logic, v_d, slack)
        q = res.waveform(self.q_node)
        return output_correct(q, logic, (sched.capture_edge, sched.cycle_end), self.vdd,
                              self.settings.band)

    def clk_to_q(self, edge: QEdge, slack: float, *, sched: Schedule | None = None,
                 t_snap: float | None = None) -> float:
        """Clock 50 % to Q 50 % delay for a full-rail D transition; ``inf`` if Q never crosses."""
        logic = 1 if QEdge(edge) is QEdge.RISE_Q else 0
        v_d = self.vdd if logic else 0.0
        res, sched = self.simulate(logic, v_d, slack, t_snap=t_snap, sched=sched)
        tc = res.crossing(self.q_node, self.vdd / 2, after=sched.capture_edge - self.settings.ramp,
                          rising=bool(logic))
        if tc is None:
            return math.inf
        return tc - sched.capture_edge


@dataclass(frozen=True)
class ThresholdElement:
    """Synthetic oracle: writes 0 below ``threshold`` and 1 above it."""

    vdd: float
    threshold: float
    calls: list = field(default_factory=list, compare=False)

    def writes(self, logic: int, v_d: float, slack: float = 0.0) -> bool:
        self.calls.append(v_d)
        return v_d < self.threshold if logic == 0 else v_d > self.threshold


def _slack_for(mode: SlackMode | float, zero_slack: float | None) -> float:
    if isinstance(mode, (int, float)) and not isinstance(mode, SlackMode):
        return float(mode)
    if SlackMode(mode) is SlackMode.LONG:
        return LONG_SLACK
    if zero_slack is None:
        raise CharacterizationError("zero-slack mode needs the reference minimum setup time")
    return zero_slack


def find_v_write_low(tester, mode: SlackMode | float = SlackMode.LONG, *,
                     zero_slack: float | None = None, accuracy: float = 0.001,
                     detail: bool = False):
    """Highest D voltage still written as logic 0."""
    slack = _slack_for(mode, zero_slack)
    vdd = tester.vdd
    res = bisect_threshold(lambda v: tester.writes(0, v, slack), 0.0, vdd, accuracy * vdd)
    if res.value == 0.0 and not tester.writes(0, 0.0, slack):
        raise DegenerateInstance("instance does not write 0 at a 0 V input")
    return res if detail else res.value


def find_v_write_high(tester, mode: SlackMode | float = SlackMode.LONG, *,
                      zero_slack: float | None = None, accuracy: float = 0.001,
                      detail: bool = False):
    """Lowest D voltage still written as logic 1."""
    slack = _slack_for(mode, zero_slack)
    vdd = tester.vdd
    res = bisect_threshold(lambda v: tester.writes(1, v, slack), vdd, 0.0, accuracy * vdd)
    if res.value == vdd and not tester.writes(1, vdd, slack):
        raise DegenerateInstance("instance does not write 1 at a full-rail input")
    return res if detail else res.value


def wnm(v_write_l: float, v_write_h: float, vdd: float) -> tuple[float, float]:
    """``(WNM_L, WNM_H)`` from the write thresholds."""
    for v in (v_write_l, v_write_h):
        if not -1e-12 <= v <= vdd + 1e-12:
            raise ValueError(f"write threshold {v} outside [0, vdd]")
    return v_write_l, vdd - v_write_h


@dataclass(frozen=True)
class WnmSample:
    v_write_l: float
    v_write_h: float
    wnm_l: float
    wnm_h: float

    @classmethod
    def from_thresholds(cls, v_write_l: float, v_write_h: float, vdd: float) -> WnmSample:
        lo, hi = wnm(v_write_l, v_write_h, vdd)
        return cls(v_write_l, v_write_h, lo, hi)


@dataclass(frozen=True)
class TimingResult:
    t_ck_to_q_rise: float
    t_ck_to_q_fall: float
    t_setup_min_rise: float
    t_setup_min_fall: float

    def clk_to_q(self, edge: QEdge) -> float:
        return self.t_ck_to_q_rise if QEdge(edge) is QEdge.RISE_Q else self.t_ck_to_q_fall

    def setup_min(self, edge: QEdge) -> float:
        return self.t_setup_min_rise if QEdge(edge) is QEdge.RISE_Q else self.t_setup_min_fall


def _tester(c, tech, sample=None, aging=None, settings=CharSettings()):
    if hasattr(c, "clk_to_q"):  # a WriteTester or a stand-in with the same interface
        return c
    shifts = aging.delta_vth if hasattr(aging, "delta_vth") else aging
    return WriteTester(c, tech, sample, shifts, settings)


def measure_clk_to_q(c, edge: QEdge, tech: TechnologyConfig, aging=None, *,
                     sample: ProcessSample | None = None,
                     settings: CharSettings = CharSettings()) -> float:
    tester = _tester(c, tech, sample, aging, settings)
    t = tester.clk_to_q(edge, LONG_SLACK)
    if not math.isfinite(t):
        raise CharacterizationError(f"Q never crossed vdd/2 for a full-rail {QEdge(edge).value} write")
    return t


def min_setup_time(c, edge: QEdge, tech: TechnologyConfig, aging=None, *,
                   nominal: float | None = None, sample: ProcessSample | None = None,
                   settings: CharSettings = CharSettings(), detail: bool = False):
    """Smallest D-to-clock offset keeping clock-to-Q within the delay budget."""
    tester = _tester(c, tech, sample, aging, settings)
    s = settings
    if nominal is None:
        nominal = measure_clk_to_q(tester, edge, tech)
    limit = (1.0 + s.delay_budget) * nominal
    # every offset in the search range changes D after the preceding falling edge
    sched = schedule(s, 0.0, tech.vdd)
    t_snap = sched.first_edge + s.period / 2 + s.hold_margin - s.ramp
    hi = sched.capture_edge - (t_snap + s.ramp)
    lo = -s.period / 4

    def ok(setup: float) -> bool:
        return tester.clk_to_q(edge, setup, sched=sched, t_snap=t_snap) <= limit

    if not ok(hi):
        raise CharacterizationError("clock-to-Q exceeds the budget even with the longest setup")
    res = bisect_threshold(ok, hi, lo, s.setup_resolution)
    return res if detail else res.value


def characterize_timing(c, tech: TechnologyConfig, aging=None, *,
                        sample: ProcessSample | None = None,
                        settings: CharSettings = CharSettings()) -> TimingResult:
    tester = _tester(c, tech, sample, aging, settings)
    rise = measure_clk_to_q(tester, QEdge.RISE_Q, tech)
    fall = measure_clk_to_q(tester, QEdge.FALL_Q, tech)
    su_r = min_setup_time(tester, QEdge.RISE_Q, tech, nominal=rise, settings=settings)
    su_f = min_setup_time(tester, QEdge.FALL_Q, tech, nominal=fall, settings=settings)
    return TimingResult(rise, fall, su_r, su_f)


def instance_circuit(kind: FlipFlopKind | str, tech: TechnologyConfig) -> Circuit:
    return attach_fo4_load(build_flipflop(kind, tech), tech)


def functional_check(c, tech: TechnologyConfig, logic: int, *,
                     settings: CharSettings = CharSettings()) -> bool:
    """Capture, hold and recapture with full-rail D and a long setup slack.

    D settles at ``logic`` 2 ns before the capture edge and flips back half a
    period after it. Q must settle to ``logic`` and hold it until the next
    rising edge, then follow D to the opposite value within that cycle.
    """
    s = settings
    vdd = tech.vdd
    sched = schedule(s, LONG_SLACK, vdd)
    nxt = sched.capture_edge + s.period
    clock = Waveform.edges(0.0, [(sched.first_edge, vdd), (sched.first_edge + s.period / 2, 0.0),
                                 (sched.capture_edge, vdd),
                                 (sched.capture_edge + s.period / 2, 0.0),
                                 (nxt, vdd), (nxt + s.period / 2, 0.0)], s.ramp)
    rail = vdd if logic else 0.0
    flip = sched.capture_edge + s.period / 2 + s.hold_margin
    d = Waveform.edges(vdd - rail, [(sched.d_change, rail), (flip, vdd - rail)], s.ramp)
    ckt = c.with_source(c.pins["CK"], clock).with_source(c.pins["D"], d)
    end = nxt + s.period - s.ramp / 2
    res = transient(ckt, end, s.step_limit, None, tech, options=s.options,
                    breakpoints=(sched.capture_edge, nxt))
    q = res.waveform(c.pins["Q"])
    return (output_correct(q, logic, (sched.capture_edge, nxt), vdd, s.band)
            and output_correct(q, 1 - logic, (nxt, end), vdd, s.band))


def retention_time(c, tech: TechnologyConfig, logic: int, *, t_max: float = 100e-6,
                   settings: CharSettings = CharSettings()) -> float:
    """How long Q keeps ``logic`` once the clock stops low and D flips.

    The value is captured on one rising edge, the clock falls and stays low,
    and D moves to the opposite rail ``hold_margin`` later. Returns the time
    from that D transition until Q first leaves its ``band * vdd`` window, or
    ``inf`` if it holds for ``t_max``.
    """
    s = settings
    vdd = tech.vdd
    e1 = s.t_first_edge
    fall = e1 + s.period / 2
    t_d = fall + s.hold_margin
    rail = vdd if logic else 0.0
    clock = Waveform.edges(0.0, [(e1, vdd), (fall, 0.0)], s.ramp)
    d = Waveform.edges(rail, [(t_d, vdd - rail)], s.ramp)
    ckt = c.with_source(c.pins["CK"], clock).with_source(c.pins["D"], d)
    t_stop = t_d + t_max
    res = transient(ckt, t_stop, max(s.step_limit, t_max / 1000), None, tech,
                    options=s.options, breakpoints=(t_d + s.period,))
    q = res.v(c.pins["Q"])
    t = res.times
    if not output_correct(res.waveform(c.pins["Q"]), logic, (fall, t_d), vdd, s.band):
        raise CharacterizationError("value was not captured before the retention test")
    out = np.abs(q - rail) > s.band * vdd
    idx = np.nonzero(out & (t >= t_d))[0]
    if idx.size == 0:
        return math.inf
    k = idx[0]
    # linear interpolation of the band crossing
    lvl = s.band * vdd
    y0, y1 = abs(q[k - 1] - rail) - lvl, abs(q[k] - rail) - lvl
    tc = t[k - 1] + (t[k] - t[k - 1]) * (-y0) / (y1 - y0) if y1 != y0 else t[k]
    return float(tc - t_d)
