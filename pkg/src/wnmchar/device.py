"""Compact N/P transistor models for the 16 nm CMOS and FinFET technologies.

The drain current is an EKV-style interpolation: ``ln(1 + exp(x))**2`` blends
the subthreshold exponential into square-law strong inversion, a mobility
degradation factor ``1 / (1 + theta * Vov)`` bends the square law toward a
linear dependence, and ``1 + lambda * |Vds|`` models channel-length
modulation. The result is smooth in both bias voltages, odd in ``Vds`` and
exactly linear in effective width.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

from ._kernel import mos_eval

EPS0 = 8.8541878128e-12  # F/m
K_BOLTZMANN_EV = 8.617333262e-5  # eV/K


class GeometryError(ValueError):
    """Raised when a process sample or device yields non-physical geometry."""


class Technology(str, enum.Enum):
    CMOS16 = "CMOS16"
    FINFET16 = "FINFET16"


class Polarity(str, enum.Enum):
    N = "N"
    P = "P"


# varying geometric parameters per technology
VARYING_FIELDS = {
    Technology.CMOS16: ("t_oxe_n", "t_oxe_p", "L", "W"),
    Technology.FINFET16: ("t_oxe_n", "t_oxe_p", "L", "h_fin", "t_fin"),
}


@dataclass(frozen=True)
class ProcessSample:
    """One draw of the geometric process parameters of a cell (lengths in nm).

    For CMOS, ``L`` and ``W`` are drawn dimensions; for FinFET ``W`` is unused
    and the width follows from the fin geometry.
    """

    technology: Technology
    t_oxe_n: float
    t_oxe_p: float
    L: float
    W: float | None = None
    h_fin: float | None = None
    t_fin: float | None = None
    n_fins: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "technology", Technology(self.technology))
        if self.technology is Technology.CMOS16:
            if self.W is None:
                raise GeometryError("CMOS sample needs W")
            if any(v is not None for v in (self.h_fin, self.t_fin, self.n_fins)):
                raise GeometryError("CMOS sample must not carry fin fields")
        else:
            if self.W is not None:
                raise GeometryError("FinFET sample must not carry W")
            if self.h_fin is None or self.t_fin is None:
                raise GeometryError("FinFET sample needs h_fin and t_fin")
            if self.n_fins is None:
                object.__setattr__(self, "n_fins", 1)
            if int(self.n_fins) < 1:
                raise GeometryError("n_fins must be >= 1")
        for name in VARYING_FIELDS[self.technology]:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise GeometryError(f"{name} must be a positive length, got {v!r}")

    def replace(self, **changes) -> ProcessSample:
        return dataclasses.replace(self, **changes)

    def varying(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in VARYING_FIELDS[self.technology]}

    def t_oxe(self, polarity: Polarity | str) -> float:
        return self.t_oxe_n if Polarity(polarity) is Polarity.N else self.t_oxe_p


@dataclass(frozen=True)
class PolarityParams:
    vth0: float  # threshold magnitude at nominal t_oxe, V
    mobility: float  # effective mobility factor, m^2/(V s)
    n_sub: float  # subthreshold slope factor
    clm: float  # channel-length modulation, 1/V
    theta: float  # mobility degradation, 1/V


@dataclass(frozen=True)
class TechnologyConfig:
    name: str
    vdd: float
    temperature: float
    nominal: ProcessSample
    sigma: dict
    nmos: PolarityParams
    pmos: PolarityParams
    eps_ox: float = 3.9
    l_int: float = 0.0  # nm, CMOS only
    w_int: float = 0.0  # nm, CMOS only
    c_junction: float = 0.0  # F per metre of effective width, drain/source to body
    c_overlap: float = 0.0  # F per metre of effective width, gate to drain/source
    body_coeff: float = 0.0
    p_to_n: float = 2.0  # P:N width ratio of logic gates
    keeper_ratio: float = 0.5  # static keeper size relative to minimum
    min_node_cap: float = 1e-17  # grounded capacitance added to every free node, F

    def __post_init__(self):
        if not self.vdd > 0:
            raise ValueError("vdd must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        fields_present = set(VARYING_FIELDS[self.nominal.technology])
        if set(self.sigma) != fields_present:
            raise ValueError(
                f"sigma fields {sorted(self.sigma)} must mirror {sorted(fields_present)}")
        if any(s < 0 for s in self.sigma.values()):
            raise ValueError("standard deviations must be >= 0")

    @property
    def technology(self) -> Technology:
        return self.nominal.technology

    @property
    def thermal_voltage(self) -> float:
        return K_BOLTZMANN_EV * self.temperature

    def params(self, polarity: Polarity | str) -> PolarityParams:
        return self.nmos if Polarity(polarity) is Polarity.N else self.pmos

    def replace(self, **changes) -> TechnologyConfig:
        return dataclasses.replace(self, **changes)

    def with_sigma_scale(self, factor: float) -> TechnologyConfig:
        return self.replace(sigma={k: v * factor for k, v in self.sigma.items()})


@dataclass(frozen=True)
class DeviceInstance:
    """A transistor in a circuit.

    ``sample`` overrides the circuit-wide process sample for this device only;
    ``delta_vth`` is the aging shift (magnitude) added to the threshold.
    """

    name: str
    polarity: Polarity
    drain: str
    gate: str
    source: str
    body: str
    m: float = 1.0
    delta_vth: float = 0.0
    sample: ProcessSample | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        if not self.m > 0:
            raise ValueError(f"{self.name}: size multiplier must be positive")
        if self.polarity is Polarity.N and self.delta_vth != 0.0:
            raise ValueError(f"{self.name}: N devices carry no NBTI shift")
        if self.delta_vth < 0:
            raise ValueError(f"{self.name}: delta_vth must be >= 0")

    @property
    def terminals(self) -> tuple[str, str, str, str]:
        return (self.drain, self.gate, self.source, self.body)

    def replace(self, **changes) -> DeviceInstance:
        return dataclasses.replace(self, **changes)


def effective_geometry(sample: ProcessSample, tech: TechnologyConfig | None = None,
                       *, l_int: float | None = None, w_int: float | None = None):
    """Return ``(W_eff, L_eff)`` in nm for one minimum-size device.

    CMOS uses the BSIM offsets ``L_eff = L - 2 L_int`` and ``W_eff = W - 2 W_int``;
    FinFET uses ``W_eff = n_fins * (2 h_fin + t_fin)`` with ``L_eff = L``.
    """
    if sample.technology is Technology.CMOS16:
        li = l_int if l_int is not None else (tech.l_int if tech is not None else 0.0)
        wi = w_int if w_int is not None else (tech.w_int if tech is not None else 0.0)
        w_eff = sample.W - 2.0 * wi
        l_eff = sample.L - 2.0 * li
    else:
        w_eff = sample.n_fins * (2.0 * sample.h_fin + sample.t_fin)
        l_eff = sample.L
    if not (w_eff > 0 and l_eff > 0):
        raise GeometryError(f"non-positive effective geometry W={w_eff} L={l_eff}")
    return w_eff, l_eff


def _sample_of(dev: DeviceInstance, tech: TechnologyConfig, sample: ProcessSample | None):
    return dev.sample or sample or tech.nominal


def threshold_voltage(dev: DeviceInstance, tech: TechnologyConfig,
                      sample: ProcessSample | None = None) -> float:
    """Threshold magnitude: nominal value scaled by oxide thickness, plus aging."""
    s = _sample_of(dev, tech, sample)
    p = tech.params(dev.polarity)
    ratio = s.t_oxe(dev.polarity) / tech.nominal.t_oxe(dev.polarity)
    return p.vth0 * ratio + dev.delta_vth


def oxide_capacitance(t_oxe_nm: float, eps_ox: float = 3.9) -> float:
    """Parallel-plate oxide capacitance per area, F/m^2."""
    return eps_ox * EPS0 / (t_oxe_nm * 1e-9)


def current_factor(dev: DeviceInstance, tech: TechnologyConfig,
                   sample: ProcessSample | None = None) -> float:
    """``mu * Cox * W_eff / L_eff * m`` in A/V^2."""
    s = _sample_of(dev, tech, sample)
    w_eff, l_eff = effective_geometry(s, tech)
    p = tech.params(dev.polarity)
    cox = oxide_capacitance(s.t_oxe(dev.polarity), tech.eps_ox)
    return p.mobility * cox * (w_eff / l_eff) * dev.m


def drain_current(dev: DeviceInstance, v_gs: float, v_ds: float, tech: TechnologyConfig,
                  sample: ProcessSample | None = None) -> float:
    """Current flowing into the drain terminal at the given terminal biases."""
    if not (math.isfinite(v_gs) and math.isfinite(v_ds)):
        raise ValueError("bias voltages must be finite")
    p = tech.params(dev.polarity)
    pol = 1 if dev.polarity is Polarity.N else -1
    i, _, _, _ = mos_eval(pol, v_gs, v_ds, 0.0, current_factor(dev, tech, sample),
                          threshold_voltage(dev, tech, sample), p.n_sub,
                          tech.thermal_voltage, p.clm, p.theta)
    return i


def drain_current_derivatives(dev: DeviceInstance, v_gs: float, v_ds: float,
                              tech: TechnologyConfig, sample: ProcessSample | None = None):
    """``(I_D, dI/dVg, dI/dVd, dI/dVs)`` with the source at 0 V."""
    p = tech.params(dev.polarity)
    pol = 1 if dev.polarity is Polarity.N else -1
    return mos_eval(pol, v_gs, v_ds, 0.0, current_factor(dev, tech, sample),
                    threshold_voltage(dev, tech, sample), p.n_sub,
                    tech.thermal_voltage, p.clm, p.theta)


def gate_capacitance(dev: DeviceInstance, tech: TechnologyConfig,
                     sample: ProcessSample | None = None) -> float:
    s = _sample_of(dev, tech, sample)
    w_eff, l_eff = effective_geometry(s, tech)
    cox = oxide_capacitance(s.t_oxe(dev.polarity), tech.eps_ox)
    return cox * (w_eff * 1e-9) * (l_eff * 1e-9) * dev.m


def parasitic_capacitances(dev: DeviceInstance, tech: TechnologyConfig,
                           sample: ProcessSample | None = None):
    """``(gate overlap per side, junction per side)`` in F."""
    s = _sample_of(dev, tech, sample)
    w_eff, _ = effective_geometry(s, tech)
    w = w_eff * 1e-9 * dev.m
    return tech.c_overlap * w, tech.c_junction * w
