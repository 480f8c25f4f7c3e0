"""NBTI threshold drift for P devices.

Two additive contributions are modelled: interface traps, driven by the gate
overdrive and the oxide field and growing as ``t**NIT``, and oxide traps,
driven by the oxide field alone and growing as ``t**NOT``. Time is in years,
bias in volts, oxide thickness in nm.

Stress bias comes from a pre-stress run: the cell is clocked with D held at
each rail and node voltages are sampled at the end of both clock phases. Every
sample carries equal weight. A device contributes interface damage only in the
samples where it is inverted; its interface time is scaled by that duty
fraction. The oxide term sees the duty-weighted mean field over all samples.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .device import Polarity, ProcessSample, TechnologyConfig, threshold_voltage
from .engine import DEFAULT_OPTIONS, SolverOptions, transient
from .netlist import Circuit
from .waveform import Waveform

BOLTZMANN_EV = 8.617333262e-5
AGES = (0, 2, 4, 6, 8, 10)


@dataclass(frozen=True)
class AgingParams:
    """Fitting coefficients of the drift laws.

    Defaults come from ``scripts/calibrate_aging.py``; see the README for the
    calibration targets.
    """

    TITTD: float = 0.07899  # eV
    TITCE: float = 1.0
    TITFD: float = 0.5  # nm/V
    NIT: float = 0.16
    TOTFD: float = 0.3  # nm/V
    TOTTD: float = 30.0  # K nm/V
    NOT: float = 0.2
    ot_scale: float = 0.0238483  # V at 1 year and zero field
    temperature: float = 300.0  # K
    k: float = BOLTZMANN_EV

    def __post_init__(self):
        for name in ("TITTD", "TITCE", "TITFD", "NIT", "TOTFD", "TOTTD", "NOT",
                     "ot_scale", "temperature", "k"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"aging coefficient {name} must be finite")
        for name in ("NIT", "NOT"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.temperature <= 0 or self.k <= 0:
            raise ValueError("temperature and k must be positive")
        if self.ot_scale < 0:
            raise ValueError("ot_scale must be >= 0")

    @property
    def oxide_field_coeff(self) -> float:
        return self.TOTFD + self.TOTTD / self.temperature


def _check_time(t: float):
    if not t >= 0:
        raise ValueError(f"stress time must be >= 0, got {t}")


def delta_vth_interface(p: AgingParams, v_gs: float, v_ds: float, vth: float,
                        t_oxe: float, temp: float | None, t: float) -> float:
    """Interface-trap shift in V.

    ``v_ds`` is accepted for signature symmetry; the field term depends on the
    gate bias only.
    """
    _check_time(t)
    temp = p.temperature if temp is None else temp
    overdrive = abs(v_gs) - abs(vth)
    if overdrive <= 0.0 or t == 0.0:
        return 0.0
    e_ox = abs(v_gs) / t_oxe
    return (math.exp(-p.TITTD / (p.k * temp)) * (overdrive / t_oxe) ** p.TITCE
            * math.exp(p.TITFD * e_ox) * t ** p.NIT)


def delta_vth_oxide(p: AgingParams, v_gs: float, v_ds: float, t_oxe: float,
                    temp: float | None, t: float) -> float:
    """Oxide-trap shift in V."""
    _check_time(t)
    temp = p.temperature if temp is None else temp
    if t == 0.0:
        return 0.0
    e_ox = abs(v_gs) / t_oxe
    return math.exp((p.TOTFD + p.TOTTD / temp) * e_ox) * p.ot_scale * t ** p.NOT


@dataclass(frozen=True)
class DeviceStress:
    """Sampled gate/drain bias magnitudes of one P device over the pre-stress run."""

    name: str
    v_gs: tuple[float, ...]
    v_ds: tuple[float, ...]
    vth: float
    t_oxe: float

    def split(self, p: AgingParams, t: float) -> tuple[float, float]:
        """``(interface, oxide)`` shift after ``t`` years."""
        vgs = np.asarray(self.v_gs)
        vds = np.asarray(self.v_ds)
        on = vgs > abs(self.vth)
        it = 0.0
        if on.any():
            duty = on.mean()
            it = delta_vth_interface(p, vgs[on].mean(), vds[on].mean(), self.vth,
                                     self.t_oxe, None, duty * t)
        ot = delta_vth_oxide(p, vgs.mean(), vds.mean(), self.t_oxe, None, t)
        return float(it), float(ot)


@dataclass(frozen=True)
class AgingState:
    age_years: float
    delta_vth: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.age_years < 0:
            raise ValueError("age must be >= 0")
        if self.age_years == 0 and any(v != 0.0 for v in self.delta_vth.values()):
            raise ValueError("a fresh cell carries no threshold shift")

    def apply(self, c: Circuit) -> Circuit:
        p_names = {d.name for d in c.devices if d.polarity is Polarity.P}
        stray = set(self.delta_vth) - p_names
        if stray:
            raise ValueError(f"aging shifts for unknown or N devices: {sorted(stray)}")
        return c.with_delta_vth(self.delta_vth)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["device", "delta_vth"])
            for name in sorted(self.delta_vth):
                w.writerow([name, repr(self.delta_vth[name])])

    @classmethod
    def from_csv(cls, path, age_years: float) -> AgingState:
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        return cls(age_years, {r["device"]: float(r["delta_vth"]) for r in rows})


@dataclass(frozen=True)
class StressProfile:
    """Pre-stress result for one cell instance; ages it to any time cheaply."""

    devices: tuple[DeviceStress, ...]

    def resampled(self, c: Circuit, tech: TechnologyConfig,
                  sample: ProcessSample | None) -> StressProfile:
        """Same bias samples, thresholds and oxide thickness of another process sample.

        Settled latch and clock nodes sit at the rails, so the sampled bias
        barely depends on the process draw; Monte Carlo trials reuse the
        nominal pre-stress run through this method.
        """
        devs = {d.name: d for d in c.devices}
        out = []
        for ds in self.devices:
            dv = devs[ds.name]
            s = dv.sample or sample or tech.nominal
            vth = threshold_voltage(dv.replace(delta_vth=0.0), tech, s)
            out.append(DeviceStress(ds.name, ds.v_gs, ds.v_ds, vth, s.t_oxe(Polarity.P)))
        return StressProfile(tuple(out))

    def components(self, p: AgingParams, age: float) -> dict[str, tuple[float, float]]:
        return {d.name: d.split(p, age) for d in self.devices}

    def state(self, p: AgingParams, age: float) -> AgingState:
        if age == 0:
            return AgingState(0, {d.name: 0.0 for d in self.devices})
        return AgingState(age, {n: it + ot for n, (it, ot) in self.components(p, age).items()})


def _p_bias(dev, v: dict[str, float]) -> tuple[float, float]:
    # the higher of drain/source acts as source for a P device
    hi = max(v[dev.drain], v[dev.source])
    lo = min(v[dev.drain], v[dev.source])
    return max(0.0, hi - v[dev.gate]), hi - lo


def stress_profile(c: Circuit, tech: TechnologyConfig, *, sample: ProcessSample | None = None,
                   period: float = 1e-9, ramp: float = 10e-12,
                   options: SolverOptions = DEFAULT_OPTIONS) -> StressProfile:
    """Sample every P device's bias in both clock phases with D at each rail."""
    if "CK" not in c.pins or "D" not in c.pins:
        raise ValueError("stress analysis needs CK and D pins")
    ck, d = c.pins["CK"], c.pins["D"]
    vdd = tech.vdd
    e1 = 100e-12
    clock = Waveform.edges(0.0, [(e1, vdd), (e1 + period / 2, 0.0), (e1 + period, vdd),
                                 (e1 + 1.5 * period, 0.0)], ramp)
    t_low = e1 + period - 2 * ramp  # settled, clock low
    t_high = e1 + 1.5 * period - 2 * ramp  # settled, clock high
    pdevs = [dv for dv in c.devices if dv.polarity is Polarity.P]
    biases: dict[str, list[tuple[float, float]]] = {dv.name: [] for dv in pdevs}
    for v_d in (0.0, vdd):
        cc = c.with_source(ck, clock).with_source(d, Waveform.dc(v_d))
        res = transient(cc, t_high + ramp, period / 500, tech=tech, sample=sample,
                        breakpoints=(t_low, t_high), options=options)
        for t in (t_low, t_high):
            volts = {n: float(res.at(n, t)) for n in res.node_names}
            for dv in pdevs:
                biases[dv.name].append(_p_bias(dv, volts))
    out = []
    for dv in pdevs:
        vgs, vds = zip(*biases[dv.name])
        fresh = dv.replace(delta_vth=0.0)
        s = dv.sample or sample or tech.nominal
        out.append(DeviceStress(dv.name, vgs, vds, threshold_voltage(fresh, tech, s),
                                s.t_oxe(Polarity.P)))
    return StressProfile(tuple(out))


def apply_stress(c: Circuit, tech: TechnologyConfig, p: AgingParams, age: float, *,
                 sample: ProcessSample | None = None) -> AgingState:
    if age < 0:
        raise ValueError("age must be >= 0")
    return stress_profile(c, tech, sample=sample).state(p, age)


def age_series(c: Circuit, tech: TechnologyConfig, p: AgingParams, ages=AGES, *,
               sample: ProcessSample | None = None) -> dict[float, AgingState]:
    prof = stress_profile(c, tech, sample=sample)
    return {a: prof.state(p, a) for a in ages}
