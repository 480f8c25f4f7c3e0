"""Circuit data model and a small line-oriented netlist format.

Grammar (case-insensitive keywords, one element per line)::

    * comment                      (also ';' trailing comments)
    .title <text>
    M<name> <d> <g> <s> <b> <N|P> [m=<mult>] [dvth=<volts>]
    C<name> <a> <b> <farads>
    R<name> <a> <b> <ohms>
    V<name> <node> <gnd|0> DC <volts> [r=<ohms>]
    V<name> <node> <gnd|0> PWL(<t1> <v1> <t2> <v2> ...) [r=<ohms>]
    .pin <D|CK|Q> <node>
    .ic <node>=<volts> [<node>=<volts> ...]
    .end

Numbers accept SPICE suffixes (f p n u m k meg g t). ``0`` and ``gnd`` name
the ground node. A source with ``r=`` is a Thevenin source: the waveform drives
a hidden node connected to ``<node>`` through the resistance. Nodes come into
existence through element lines; directives naming any other node are errors.
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field

from .device import DeviceInstance, Polarity
from .waveform import Waveform

GND = "gnd"
PIN_NAMES = ("D", "CK", "Q")


class NetlistError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}, col {column}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class Capacitor:
    name: str
    a: str
    b: str
    value: float


@dataclass(frozen=True)
class Resistor:
    name: str
    a: str
    b: str
    value: float


@dataclass(frozen=True)
class Source:
    """Independent voltage source from ``node`` to ground."""

    name: str
    node: str
    waveform: Waveform
    r: float | None = None

    @property
    def driven_node(self) -> str:
        return self.node if self.r is None else f"{self.node}#{self.name}"


def _norm(node: str) -> str:
    return GND if node.lower() in ("0", GND) else node


@dataclass(frozen=True)
class Circuit:
    name: str = "circuit"
    devices: tuple = ()
    capacitors: tuple = ()
    resistors: tuple = ()
    sources: tuple = ()
    pins: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)

    def __post_init__(self):
        for attr in ("devices", "capacitors", "resistors", "sources"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        object.__setattr__(self, "pins", dict(self.pins))
        object.__setattr__(self, "initial", dict(self.initial))
        names = [e.name for e in self.elements]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise NetlistError(f"duplicate element names: {sorted(dupes)}")
        nodes = self.nodes
        for pin, node in self.pins.items():
            if pin not in PIN_NAMES:
                raise NetlistError(f"unknown pin label {pin!r}")
            if node not in nodes:
                raise NetlistError(f"pin {pin} references undefined node {node!r}")
        for node in self.initial:
            if node not in nodes:
                raise NetlistError(f"initial condition on undefined node {node!r}")
        driven = {s.node for s in self.sources if s.r is None}
        for s in self.sources:
            if s.node == GND:
                raise NetlistError(f"source {s.name} drives ground")
        if len(driven) != sum(1 for s in self.sources if s.r is None):
            raise NetlistError("node driven by more than one ideal source")

    @property
    def elements(self):
        return self.devices + self.capacitors + self.resistors + self.sources

    @property
    def nodes(self) -> set[str]:
        out = {GND}
        for d in self.devices:
            out.update(d.terminals)
        for e in self.capacitors + self.resistors:
            out.update((e.a, e.b))
        for s in self.sources:
            out.add(s.node)
        return out

    @property
    def source_nodes(self) -> dict[str, Source]:
        return {s.node: s for s in self.sources if s.r is None}

    def source(self, node: str) -> Source:
        for s in self.sources:
            if s.node == node:
                return s
        raise KeyError(node)

    def replace(self, **changes) -> Circuit:
        return dataclasses.replace(self, **changes)

    def with_source(self, node: str, waveform: Waveform) -> Circuit:
        """Copy with the waveform of the source on ``node`` replaced."""
        srcs = []
        found = False
        for s in self.sources:
            if s.node == node:
                s = dataclasses.replace(s, waveform=waveform)
                found = True
            srcs.append(s)
        if not found:
            raise KeyError(f"no source drives {node!r}")
        return self.replace(sources=tuple(srcs))

    def with_devices(self, devices) -> Circuit:
        return self.replace(devices=tuple(devices))

    def device(self, name: str) -> DeviceInstance:
        for d in self.devices:
            if d.name == name:
                return d
        raise KeyError(name)

    def with_delta_vth(self, shifts: dict[str, float]) -> Circuit:
        return self.with_devices(
            d.replace(delta_vth=shifts.get(d.name, d.delta_vth)) for d in self.devices)


_SUFFIX = {"t": 1e12, "g": 1e9, "meg": 1e6, "k": 1e3, "m": 1e-3, "u": 1e-6,
           "n": 1e-9, "p": 1e-12, "f": 1e-15}
_NUM_RE = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(meg|[tgkmunpf])?[a-z]*$",
                     re.IGNORECASE)


def parse_number(tok: str) -> float:
    m = _NUM_RE.match(tok.strip())
    if not m:
        raise ValueError(f"bad number {tok!r}")
    scale = _SUFFIX[m.group(2).lower()] if m.group(2) else 1.0
    return float(m.group(1)) * scale


def _fmt(x: float) -> str:
    return repr(float(x))


def _split_params(tokens, lineno, text, allowed):
    pos, params = [], {}
    for tok in tokens:
        if "=" in tok:
            k, _, v = tok.partition("=")
            k = k.lower()
            if k not in allowed:
                raise NetlistError(f"unknown parameter {k!r}", lineno, text.find(tok) + 1)
            try:
                params[k] = parse_number(v)
            except ValueError as e:
                raise NetlistError(str(e), lineno, text.find(tok) + 1) from None
        else:
            pos.append(tok)
    return pos, params


def _parse_waveform(spec: str, lineno: int, col: int) -> Waveform:
    s = spec.strip()
    up = s.upper()
    try:
        if up.startswith("DC"):
            return Waveform.dc(parse_number(s[2:].strip()))
        if up.startswith("PWL"):
            inner = s[3:].strip()
            if not (inner.startswith("(") and inner.endswith(")")):
                raise ValueError("PWL needs parenthesised breakpoints")
            nums = [parse_number(t) for t in inner[1:-1].replace(",", " ").split()]
            if not nums or len(nums) % 2:
                raise ValueError("PWL needs time/value pairs")
            return Waveform(tuple(nums[0::2]), tuple(nums[1::2]))
        return Waveform.dc(parse_number(s))
    except ValueError as e:
        raise NetlistError(f"bad waveform: {e}", lineno, col) from None


def parse(text: str, name: str = "circuit") -> Circuit:
    devices, caps, ress, srcs = [], [], [], []
    pins: dict[str, str] = {}
    pin_lines: list[tuple[str, str, int, int]] = []
    ic_lines: list[tuple[str, float, int, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped or stripped.startswith("*"):
            continue
        col0 = line.find(stripped) + 1
        head = stripped.split()[0]
        kind = head[0].upper()
        if stripped.startswith("."):
            directive = head.lower()
            rest = stripped.split()[1:]
            if directive == ".end":
                break
            if directive == ".title":
                name = stripped[len(head):].strip() or name
            elif directive == ".pin":
                if len(rest) != 2:
                    raise NetlistError(".pin expects <label> <node>", lineno, col0)
                label = rest[0].upper()
                if label not in PIN_NAMES:
                    raise NetlistError(f"unknown pin label {rest[0]!r}", lineno,
                                       line.find(rest[0]) + 1)
                if label in pins:
                    raise NetlistError(f"duplicate pin label {label}", lineno, col0)
                pins[label] = _norm(rest[1])
                pin_lines.append((label, _norm(rest[1]), lineno, line.find(rest[1]) + 1))
            elif directive == ".ic":
                for tok in rest:
                    node, eq, val = tok.partition("=")
                    if not eq:
                        raise NetlistError(f"bad .ic entry {tok!r}", lineno, line.find(tok) + 1)
                    try:
                        ic_lines.append((_norm(node), parse_number(val), lineno,
                                         line.find(tok) + 1))
                    except ValueError as e:
                        raise NetlistError(str(e), lineno, line.find(tok) + 1) from None
            else:
                raise NetlistError(f"unknown directive {head!r}", lineno, col0)
            continue

        if kind == "V":
            m = re.match(r"^(\S+)\s+(\S+)\s+(\S+)\s+(.*)$", stripped)
            if not m:
                raise NetlistError("source expects <name> <node> <gnd> <waveform>", lineno, col0)
            vname, node, ref, rest = m.groups()
            if _norm(ref) != GND:
                raise NetlistError(f"source reference must be ground, got {ref!r}", lineno,
                                   line.find(ref, len(vname)) + 1)
            r = None
            rm = re.search(r"\s+r=(\S+)\s*$", rest, re.IGNORECASE)
            if rm:
                try:
                    r = parse_number(rm.group(1))
                except ValueError as e:
                    raise NetlistError(str(e), lineno, col0) from None
                rest = rest[: rm.start()]
            wf = _parse_waveform(rest, lineno, line.find(rest) + 1)
            srcs.append(Source(vname, _norm(node), wf, r))
            continue

        toks = stripped.split()
        if kind == "M":
            pos, params = _split_params(toks[1:], lineno, line, {"m", "dvth"})
            if len(pos) != 5:
                raise NetlistError("device expects <d> <g> <s> <b> <N|P>", lineno, col0)
            pol = pos[4].upper()
            if pol not in ("N", "P"):
                raise NetlistError(f"polarity must be N or P, got {pos[4]!r}", lineno,
                                   line.find(pos[4], len(head)) + 1)
            d, g, s, b = (_norm(x) for x in pos[:4])
            try:
                devices.append(DeviceInstance(head, Polarity(pol), d, g, s, b,
                                              m=params.get("m", 1.0),
                                              delta_vth=params.get("dvth", 0.0)))
            except ValueError as e:
                raise NetlistError(str(e), lineno, col0) from None
        elif kind in ("C", "R"):
            if len(toks) != 4:
                raise NetlistError(f"{kind} element expects <name> <a> <b> <value>", lineno, col0)
            try:
                val = parse_number(toks[3])
            except ValueError as e:
                raise NetlistError(str(e), lineno, line.find(toks[3], len(head)) + 1) from None
            if not val > 0:
                raise NetlistError("element value must be positive", lineno, col0)
            cls = Capacitor if kind == "C" else Resistor
            (caps if kind == "C" else ress).append(
                cls(head, _norm(toks[1]), _norm(toks[2]), val))
        else:
            raise NetlistError(f"unknown element type {head!r}", lineno, col0)

    circuit_nodes = {GND}
    for d in devices:
        circuit_nodes.update(d.terminals)
    for e in caps + ress:
        circuit_nodes.update((e.a, e.b))
    for s in srcs:
        circuit_nodes.add(s.node)
    for label, node, lineno, col in pin_lines:
        if node not in circuit_nodes:
            raise NetlistError(f"undefined node {node!r} in .pin {label}", lineno, col)
    for node, _, lineno, col in ic_lines:
        if node not in circuit_nodes:
            raise NetlistError(f"undefined node {node!r} in .ic", lineno, col)
    return Circuit(name, tuple(devices), tuple(caps), tuple(ress), tuple(srcs), pins,
                   {n: v for n, v, _, _ in ic_lines})


def serialize(c: Circuit) -> str:
    out = [f".title {c.name}"]
    for s in c.sources:
        wf = s.waveform
        if len(wf.times) == 1:
            spec = f"DC {_fmt(wf.values[0])}"
        else:
            spec = "PWL(" + " ".join(f"{_fmt(t)} {_fmt(v)}"
                                     for t, v in zip(wf.times, wf.values)) + ")"
        tail = f" r={_fmt(s.r)}" if s.r is not None else ""
        out.append(f"{s.name} {s.node} {GND} {spec}{tail}")
    for d in c.devices:
        extra = f" m={_fmt(d.m)}"
        if d.delta_vth:
            extra += f" dvth={_fmt(d.delta_vth)}"
        out.append(f"{d.name} {d.drain} {d.gate} {d.source} {d.body} {d.polarity.value}{extra}")
    for e in c.capacitors + c.resistors:
        out.append(f"{e.name} {e.a} {e.b} {_fmt(e.value)}")
    for label in PIN_NAMES:
        if label in c.pins:
            out.append(f".pin {label} {c.pins[label]}")
    if c.initial:
        out.append(".ic " + " ".join(f"{n}={_fmt(v)}" for n, v in c.initial.items()))
    out.append(".end")
    return "\n".join(out) + "\n"
