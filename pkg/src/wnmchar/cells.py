"""Transistor-level generators for the seven master-slave flip-flops.

All cells capture on the rising clock edge. Cells A-F derive ``ckb`` and a
delayed true phase ``cki`` from the clock pin through two local inverters.
Master-side gates switch on ``ck``/``ckb`` and are transparent while CK is
low; slave-side gates switch on ``cki``/``ckb`` and are transparent while CK
is high, so the master closes before the slave opens.

A  TG static: transmission-gate latches with always-on weak keeper inverters.
B  TG pseudo-static: non-inverting TG latches closed by a clocked TG keeper.
C  B plus a bootstrap TG per latch, input straight to latch output.
D  C2MOS pseudo-static: clocked-inverter latches with clocked-inverter keepers.
E  D plus a bootstrap TG per latch.
F  C2MOS dynamic: D without keepers.
G  TSPC: N- and P-type precharged stages on the single clock, output inverter.
"""
from __future__ import annotations

import enum

from .device import DeviceInstance, Polarity, TechnologyConfig
from .netlist import GND, Circuit, NetlistError, Source
from .waveform import Waveform

VDD = "vdd"


class FlipFlopKind(str, enum.Enum):
    A_TG_STATIC = "A"
    B_TG_PSEUDO = "B"
    C_TG_BOOTSTRAP = "C"
    D_C2MOS_PSEUDO = "D"
    E_C2MOS_BOOTSTRAP = "E"
    F_C2MOS_DYNAMIC = "F"
    G_TSPC_DYNAMIC = "G"

    @classmethod
    def parse(cls, name: str) -> FlipFlopKind:
        key = str(name).strip().upper()
        for k in cls:
            if key in (k.value, k.name, f"FF{k.value}", f"FF-{k.value}", f"FF_{k.value}"):
                return k
        valid = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown flip-flop kind {name!r}; valid kinds: {valid}")

    @property
    def is_dynamic(self) -> bool:
        return self in (FlipFlopKind.F_C2MOS_DYNAMIC, FlipFlopKind.G_TSPC_DYNAMIC)


ALL_KINDS = tuple(FlipFlopKind)


class _Builder:
    def __init__(self, tech: TechnologyConfig):
        self.tech = tech
        self.devices: list[DeviceInstance] = []

    def n(self, name, d, g, s, m=1.0):
        self.devices.append(DeviceInstance(f"M{name}", Polarity.N, d, g, s, GND, m))

    def p(self, name, d, g, s, m=1.0):
        self.devices.append(DeviceInstance(f"M{name}", Polarity.P, d, g, s, VDD,
                                           m * self.tech.p_to_n))

    def inv(self, name, a, y, m=1.0):
        self.n(f"{name}n", y, a, GND, m)
        self.p(f"{name}p", y, a, VDD, m)

    def tg(self, name, a, b, n_gate, p_gate, m=1.0):
        self.n(f"{name}n", b, n_gate, a, m)
        self.p(f"{name}p", b, p_gate, a, m)

    def cinv(self, name, a, y, en, enb, m=1.0):
        """Clocked inverter driving ``y`` while ``en`` is high."""
        self.p(f"{name}p1", f"{name}_x", a, VDD, 2 * m)
        self.p(f"{name}p2", y, enb, f"{name}_x", 2 * m)
        self.n(f"{name}n2", y, en, f"{name}_y", 2 * m)
        self.n(f"{name}n1", f"{name}_y", a, GND, 2 * m)

    def clock_buffers(self):
        self.inv("CK1", "ck", "ckb")
        self.inv("CK2", "ckb", "cki")


def _tg_static(b: _Builder):
    k = b.tech.keeper_ratio
    b.clock_buffers()
    b.tg("T1", "d", "m1", "ckb", "ck")
    b.inv("I1", "m1", "m2")
    b.inv("K1", "m2", "m1", k)
    b.tg("T2", "m2", "s1", "cki", "ckb")
    b.inv("I2", "s1", "q")
    b.inv("K2", "q", "s1", k)


def _tg_pseudo(b: _Builder, bootstrap: bool):
    b.clock_buffers()
    b.tg("T1", "d", "m1", "ckb", "ck")
    b.inv("I1", "m1", "m2")
    b.inv("I2", "m2", "m3")
    b.tg("T2", "m3", "m1", "cki", "ckb")
    b.tg("T3", "m3", "s1", "cki", "ckb")
    b.inv("I3", "s1", "s2")
    b.inv("I4", "s2", "q")
    b.tg("T4", "q", "s1", "ckb", "ck")
    if bootstrap:
        b.tg("B1", "d", "m3", "ckb", "ck")
        b.tg("B2", "m3", "q", "cki", "ckb")


def _c2mos(b: _Builder, keepers: bool, bootstrap: bool):
    b.clock_buffers()
    b.cinv("C1", "d", "m1", "ckb", "ck")
    b.inv("I1", "m1", "m2")
    b.cinv("C2", "m2", "s1", "cki", "ckb")
    b.inv("I2", "s1", "q")
    if keepers:
        b.cinv("K1", "m2", "m1", "cki", "ckb")
        b.cinv("K2", "q", "s1", "ckb", "ck")
    if bootstrap:
        b.tg("B1", "d", "m2", "ckb", "ck")
        b.tg("B2", "m2", "q", "cki", "ckb")


def _tspc(b: _Builder):
    # stage 1: P-type latch, transparent while CK is low
    b.p("P1", "x1", "d", VDD, 2)
    b.p("P2", "n1", "ck", "x1", 2)
    b.n("N1", "n1", "d", GND)
    # stage 2: precharged high while CK is low, evaluates on the rising edge
    b.p("P3", "n2", "ck", VDD)
    b.n("N2", "n2", "n1", "x2", 2)
    b.n("N3", "x2", "ck", GND, 2)
    # stage 3: N-type latch, transparent while CK is high
    b.p("P4", "n3", "n2", VDD)
    b.n("N4", "n3", "ck", "x3", 2)
    b.n("N5", "x3", "n2", GND, 2)
    b.inv("IO", "n3", "q")


def _sources(tech: TechnologyConfig):
    return (Source("Vdd", VDD, Waveform.dc(tech.vdd)),
            Source("Vck", "ck", Waveform.dc(0.0)),
            Source("Vd", "d", Waveform.dc(0.0)))


def build_flipflop(kind: FlipFlopKind | str, tech: TechnologyConfig) -> Circuit:
    kind = kind if isinstance(kind, FlipFlopKind) else FlipFlopKind.parse(kind)
    b = _Builder(tech)
    if kind is FlipFlopKind.A_TG_STATIC:
        _tg_static(b)
    elif kind is FlipFlopKind.B_TG_PSEUDO:
        _tg_pseudo(b, bootstrap=False)
    elif kind is FlipFlopKind.C_TG_BOOTSTRAP:
        _tg_pseudo(b, bootstrap=True)
    elif kind is FlipFlopKind.D_C2MOS_PSEUDO:
        _c2mos(b, keepers=True, bootstrap=False)
    elif kind is FlipFlopKind.E_C2MOS_BOOTSTRAP:
        _c2mos(b, keepers=True, bootstrap=True)
    elif kind is FlipFlopKind.F_C2MOS_DYNAMIC:
        _c2mos(b, keepers=False, bootstrap=False)
    else:
        _tspc(b)
    return Circuit(f"FF_{kind.value}", tuple(b.devices), (), (), _sources(tech),
                   {"D": "d", "CK": "ck", "Q": "q"})


LOAD_PREFIX = "MLOAD"


def attach_fo4_load(c: Circuit, tech: TechnologyConfig) -> Circuit:
    """Hang an inverter sized 4x minimum on the Q pin (may be applied once)."""
    if "Q" not in c.pins:
        raise NetlistError("circuit has no Q pin")
    if any(d.name.startswith(LOAD_PREFIX) for d in c.devices):
        raise NetlistError("FO4 load already attached")
    q = c.pins["Q"]
    load = (DeviceInstance(f"{LOAD_PREFIX}n", Polarity.N, "qload", q, GND, GND, 4.0),
            DeviceInstance(f"{LOAD_PREFIX}p", Polarity.P, "qload", q, VDD, VDD,
                           4.0 * tech.p_to_n))
    return c.with_devices(c.devices + load)


def has_fo4_load(c: Circuit) -> bool:
    return any(d.name.startswith(LOAD_PREFIX) for d in c.devices)


def loaded_flipflop(kind: FlipFlopKind | str, tech: TechnologyConfig) -> Circuit:
    return attach_fo4_load(build_flipflop(kind, tech), tech)
