"""Transient nonlinear circuit simulation.

Nodal analysis with ideal grounded sources eliminated as known voltages,
damped Newton iteration at every time point and trapezoidal integration with a
backward-Euler step after each source breakpoint. The step size is controlled
by a divided-difference estimate of the local truncation error and never
exceeds ``dt_max``.
"""
from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .device import (Polarity, ProcessSample, TechnologyConfig,
                     current_factor, gate_capacitance, parasitic_capacitances,
                     threshold_voltage)
from .netlist import GND, Circuit
from .waveform import Waveform


class SimulationError(RuntimeError):
    """Transient analysis aborted; ``partial`` holds the waveform up to the failure."""

    def __init__(self, message: str, partial: TransientResult | None = None):
        super().__init__(message)
        self.partial = partial


class ConvergenceError(SimulationError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    i_abstol: float = 1e-12
    v_reltol: float = 1e-4
    v_abstol: float = 1e-6
    gmin: float = 1e-12
    max_step: float = 0.3  # Newton voltage update limit, V
    max_iter: int = 40
    dt_min: float = 1e-15
    dt_first: float = 1e-14  # first step after a breakpoint
    lte_reltol: float = 1e-3
    lte_abstol: float = 2e-4


DEFAULT_OPTIONS = SolverOptions()


@dataclass
class CompiledCircuit:
    """Array form of a circuit bound to a technology and process sample."""

    circuit: Circuit
    tech: TechnologyConfig
    node_names: list
    nu: int
    mos: tuple
    caps: tuple
    res: tuple
    src_nodes: list  # full-vector index order of fixed nodes: names
    src_waves: list
    vt: float
    src_arrays: tuple = field(init=False)
    breakpoints: np.ndarray = field(init=False)

    def __post_init__(self):
        self._pack_sources()

    def _pack_sources(self):
        ts, vs, off, cnt = [], [], [], []
        for wf in self.src_waves:
            off.append(len(ts))
            cnt.append(len(wf.times))
            ts.extend(wf.times)
            vs.extend(wf.values)
        self.src_arrays = (np.array(ts, float), np.array(vs, float),
                           np.array(off, np.int64), np.array(cnt, np.int64))
        self.breakpoints = np.unique(np.array(ts, float)) if ts else np.zeros(0)

    @property
    def index(self) -> dict:
        return {n: i for i, n in enumerate(self.node_names)}

    def with_waveform(self, node: str, waveform: Waveform) -> CompiledCircuit:
        """Copy with the source on ``node`` replaced (device arrays are shared)."""
        k = self.src_nodes.index(node)
        waves = list(self.src_waves)
        waves[k] = waveform
        new = dataclasses.replace(self, circuit=self.circuit.with_source(node, waveform),
                                  src_waves=waves)
        return new

    def node_capacitance(self, node: str) -> float:
        """Total capacitance attached to ``node`` (to any other node), F."""
        k = self.index[node]
        a, b, c = self.caps
        return float(c[(a == k) | (b == k)].sum())

    def fixed_voltages(self, t: float) -> np.ndarray:
        return np.array([wf.at(t) for wf in self.src_waves], float)


def compile_circuit(circuit: Circuit, tech: TechnologyConfig,
                    sample: ProcessSample | None = None,
                    delta_vth: dict | None = None) -> CompiledCircuit:
    sample = sample or tech.nominal
    if delta_vth:
        circuit = circuit.with_delta_vth(delta_vth)

    fixed: list[str] = [GND]
    waves: list[Waveform] = [Waveform.dc(0.0)]
    extra_res = []
    for s in circuit.sources:
        fixed.append(s.driven_node)
        waves.append(s.waveform)
        if s.r is not None:
            extra_res.append((s.driven_node, s.node, 1.0 / s.r))
    fixed_set = set(fixed)
    free = sorted(n for n in circuit.nodes if n not in fixed_set)
    names = free + fixed
    idx = {n: i for i, n in enumerate(names)}
    nu = len(free)

    cap_acc: dict[tuple[int, int], float] = {}

    def add_cap(a, b, c):
        ia, ib = idx[a], idx[b]
        if ia == ib or (ia >= nu and ib >= nu) or c <= 0:
            return
        key = (min(ia, ib), max(ia, ib))
        cap_acc[key] = cap_acc.get(key, 0.0) + c

    m_rows = []
    for d in circuit.devices:
        p = tech.params(d.polarity)
        m_rows.append((idx[d.drain], idx[d.gate], idx[d.source],
                       1 if d.polarity is Polarity.N else -1,
                       current_factor(d, tech, sample), threshold_voltage(d, tech, sample),
                       p.n_sub, p.clm, p.theta))
        cg = gate_capacitance(d, tech, sample)
        c_ov, c_j = parasitic_capacitances(d, tech, sample)
        add_cap(d.gate, d.source, 0.5 * cg + c_ov)
        add_cap(d.gate, d.drain, 0.5 * cg + c_ov)
        add_cap(d.drain, d.body, c_j)
        add_cap(d.source, d.body, c_j)
    for c in circuit.capacitors:
        add_cap(c.a, c.b, c.value)
    # top every free node up to the minimum capacitance
    attached = np.zeros(len(names))
    for (a, b), cval in cap_acc.items():
        attached[a] += cval
        attached[b] += cval
    for n in free:
        add_cap(n, GND, max(0.0, tech.min_node_cap - attached[idx[n]]))

    if m_rows:
        cols = list(zip(*m_rows))
        mos = (np.array(cols[0], np.int64), np.array(cols[1], np.int64),
               np.array(cols[2], np.int64), np.array(cols[3], np.int64),
               np.array(cols[4], float), np.array(cols[5], float),
               np.array(cols[6], float), np.array(cols[7], float), np.array(cols[8], float))
    else:
        z = np.zeros(0)
        zi = np.zeros(0, np.int64)
        mos = (zi, zi, zi, zi, z, z, z, z, z)
    keys = sorted(cap_acc)
    caps = (np.array([k[0] for k in keys], np.int64), np.array([k[1] for k in keys], np.int64),
            np.array([cap_acc[k] for k in keys], float))
    rrows = [(idx[r.a], idx[r.b], 1.0 / r.value) for r in circuit.resistors]
    rrows += [(idx[a], idx[b], g) for a, b, g in extra_res]
    res = (np.array([r[0] for r in rrows], np.int64), np.array([r[1] for r in rrows], np.int64),
           np.array([r[2] for r in rrows], float))
    return CompiledCircuit(circuit, tech, names, nu, mos, caps, res, fixed, waves,
                           tech.thermal_voltage)


def _as_compiled(c, tech, sample=None, delta_vth=None) -> CompiledCircuit:
    if isinstance(c, CompiledCircuit):
        return c
    if tech is None:
        raise TypeError("a TechnologyConfig is required to simulate a Circuit")
    return compile_circuit(c, tech, sample, delta_vth)


def _residual(cc: CompiledCircuit, x: np.ndarray, opts: SolverOptions):
    nu = cc.nu
    F = np.zeros(nu)
    J = np.zeros((nu, nu))
    iscale = np.zeros(nu)
    dummy = np.zeros(cc.caps[0].shape[0])
    _kernel.assemble(x, nu, _kernel.MODE_DC, 1.0, opts.gmin, *cc.mos, cc.vt,
                     *cc.caps, dummy, dummy, *cc.res, F, J, iscale)
    return F


def dc_operating_point(c, tech: TechnologyConfig | None = None, *, seed: dict | None = None,
                       t: float = 0.0, sample: ProcessSample | None = None,
                       delta_vth: dict | None = None,
                       options: SolverOptions = DEFAULT_OPTIONS) -> dict[str, float]:
    """Solve the static operating point with all sources evaluated at ``t``.

    Free nodes start from ``seed`` (default ``vdd / 2``). When plain Newton
    fails, sources are ramped up from zero in steps and the solve is repeated.
    """
    cc = _as_compiled(c, tech, sample, delta_vth)
    x = _solve_dc(cc, t, seed, options)
    return {n: float(v) for n, v in zip(cc.node_names, x)}


def _solve_dc(cc: CompiledCircuit, t: float, seed, opts: SolverOptions) -> np.ndarray:
    nu = cc.nu
    vdd = cc.tech.vdd
    x = np.full(len(cc.node_names), vdd / 2.0)
    seed = dict(cc.circuit.initial, **(seed or {}))
    idx = cc.index
    for n, v in seed.items():
        if n in idx and idx[n] < nu:
            x[idx[n]] = v
    fixed = cc.fixed_voltages(t)
    args = (opts.gmin, opts.i_abstol, opts.v_reltol, opts.v_abstol, opts.max_step,
            opts.max_iter * 4, *cc.mos, cc.vt, *cc.caps, *cc.res)

    trial = x.copy()
    trial[nu:] = fixed
    if _kernel.dc_solve(trial, nu, *args) >= 0:
        return trial

    # source stepping
    trial = x.copy()
    trial[:nu] = 0.0
    for scale in np.linspace(0.0, 1.0, 21):
        trial[nu:] = scale * fixed
        if _kernel.dc_solve(trial, nu, *args) < 0:
            break
    else:
        return trial

    # gmin stepping: a large shunt to ground makes the first solve near-linear
    trial = x.copy()
    trial[nu:] = fixed
    for g in [10.0 ** -e for e in range(3, 13)] + [opts.gmin]:
        if _kernel.dc_solve(trial, nu, max(g, opts.gmin), *args[1:]) < 0:
            break
    else:
        return trial

    # pseudo-transient: ramp every source from 0 V and let the network settle
    t_ramp, t_end = 50e-12, 1e-9
    ramped = dataclasses.replace(
        cc, src_waves=[Waveform.pwl([(0.0, 0.0), (t_ramp, v)]) for v in fixed])
    x0 = np.zeros(len(cc.node_names))
    status, _, volts, _ = _kernel.transient(
        x0, nu, 0.0, t_end, t_end / 200, opts.dt_min, opts.dt_first,
        np.array([t_ramp, t_end]), opts.gmin, opts.i_abstol, opts.v_reltol, opts.v_abstol,
        opts.max_step, opts.max_iter, opts.lte_reltol, opts.lte_abstol,
        *ramped.src_arrays, *cc.mos, cc.vt, *cc.caps, *cc.res)
    if status == _kernel.STATUS_OK:
        trial = volts[-1].copy()
        trial[nu:] = fixed
        if _kernel.dc_solve(trial, nu, *args) >= 0:
            return trial
    raise ConvergenceError("dc operating point did not converge "
                           "(newton, source/gmin stepping and pseudo-transient failed)")


@dataclass
class TransientResult:
    times: np.ndarray
    node_names: list
    voltages: np.ndarray  # shape (n_times, n_nodes)
    stats: dict

    def __post_init__(self):
        self._idx = {n: i for i, n in enumerate(self.node_names)}

    def v(self, node: str) -> np.ndarray:
        return self.voltages[:, self._idx[node]]

    def waveform(self, node: str) -> Waveform:
        return Waveform(tuple(self.times), tuple(self.v(node)))

    def at(self, node: str, t):
        return np.interp(t, self.times, self.v(node))

    def final(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.node_names, self.voltages[-1])}

    def state(self) -> dict[str, float]:
        return self.final()

    def crossing(self, node: str, level: float, after: float = -math.inf,
                 rising: bool | None = None) -> float | None:
        """First time after ``after`` at which ``node`` crosses ``level``."""
        t = self.times
        y = self.v(node) - level
        start = int(np.searchsorted(t, after, side="left"))
        if start > 0:
            start -= 1
        for k in range(max(start, 0), len(t) - 1):
            y0, y1 = y[k], y[k + 1]
            up = y0 < 0 <= y1
            down = y0 > 0 >= y1
            if (up and rising is not False) or (down and rising is not True):
                tc = t[k] + (t[k + 1] - t[k]) * (-y0) / (y1 - y0) if y1 != y0 else t[k + 1]
                if tc >= after:
                    return float(tc)
        return None

    def to_csv(self, path, nodes=None) -> None:
        nodes = list(nodes) if nodes is not None else list(self.node_names)
        cols = [self._idx[n] for n in nodes]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + nodes)
            for t, row in zip(self.times, self.voltages):
                w.writerow([repr(float(t))] + [repr(float(row[c])) for c in cols])


def transient(c, t_stop: float, dt_max: float, initial: dict | None = None,
              tech: TechnologyConfig | None = None, *, t_start: float = 0.0,
              breakpoints=(), sample: ProcessSample | None = None,
              delta_vth: dict | None = None,
              options: SolverOptions = DEFAULT_OPTIONS) -> TransientResult:
    """Integrate from ``t_start`` to ``t_stop``.

    ``initial`` maps node names to starting voltages; free nodes it leaves out
    come from the operating point at ``t_start`` (seeded with ``initial``).
    Extra ``breakpoints`` are times the step sequence must land on exactly.
    """
    if not t_stop > t_start:
        raise ValueError("t_stop must exceed t_start")
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    cc = _as_compiled(c, tech, sample, delta_vth)
    nu = cc.nu
    idx = cc.index
    initial = dict(initial or {})
    unknown = [n for n in initial if n not in idx]
    if unknown:
        raise KeyError(f"initial voltages for unknown nodes: {unknown}")
    free_names = cc.node_names[:nu]
    if all(n in initial for n in free_names):
        x0 = np.zeros(len(cc.node_names))
        for n in free_names:
            x0[idx[n]] = initial[n]
    else:
        x0 = _solve_dc(cc, t_start, initial, options)
        for n, v in initial.items():
            if idx[n] < nu:
                x0[idx[n]] = v

    bps = np.unique(np.concatenate([cc.breakpoints, np.asarray(breakpoints, float),
                                    [t_stop]]))
    bps = bps[(bps > t_start) & (bps <= t_stop)]
    o = options
    status, times, volts, stats = _kernel.transient(
        x0, nu, float(t_start), float(t_stop), float(dt_max), o.dt_min, o.dt_first, bps,
        o.gmin, o.i_abstol, o.v_reltol, o.v_abstol, o.max_step, o.max_iter,
        o.lte_reltol, o.lte_abstol, *cc.src_arrays, *cc.mos, cc.vt, *cc.caps, *cc.res)
    result = TransientResult(times, list(cc.node_names), volts,
                             {"steps": int(stats[0]), "newton_iterations": int(stats[1]),
                              "rejected_steps": int(stats[2])})
    if status != _kernel.STATUS_OK:
        kind = "step size underflow" if status == _kernel.STATUS_DT_UNDERFLOW else \
            "newton failure below minimum step"
        err = ConvergenceError if status == _kernel.STATUS_NO_CONVERGENCE else SimulationError
        raise err(f"transient aborted at t={times[-1]:.4e} s: {kind}", partial=result)
    if not np.all(np.isfinite(volts)):
        raise SimulationError("non-finite node voltage", partial=result)
    return result
