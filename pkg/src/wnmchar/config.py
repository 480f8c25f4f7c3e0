"""Run configuration read from an INI file.

See ``configs/run.ini`` for a complete annotated example. Every key is
optional; missing keys fall back to the built-in presets and defaults.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .aging import AGES, AgingParams
from .cells import ALL_KINDS, FlipFlopKind
from .characterize import CharSettings, SlackMode
from .device import TechnologyConfig
from .presets import PRESETS, preset

QUICK_TRIALS = 100
QUICK_AGES = (0, 10)


class ConfigError(ValueError):
    pass


def _list(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split() if t]


@dataclass(frozen=True)
class RunConfig:
    technologies: tuple = tuple(PRESETS)
    tech_configs: dict = field(default_factory=dict)  # name -> TechnologyConfig
    kinds: tuple = ALL_KINDS
    ages: tuple = AGES
    timing_ages: tuple = (0, 10)
    modes: tuple = (SlackMode.LONG, SlackMode.ZERO)
    trials: int = 10_000
    seed: int = 1
    workers: int = 1
    out: Path = Path("results")
    aging: AgingParams = AgingParams()
    settings: CharSettings = CharSettings()

    def __post_init__(self):
        for t in self.technologies:
            if t not in PRESETS:
                raise ConfigError(f"unknown technology {t!r}; presets: {sorted(PRESETS)}")
        if not self.tech_configs:
            object.__setattr__(self, "tech_configs", {t: preset(t) for t in self.technologies})
        bad = [a for a in tuple(self.ages) + tuple(self.timing_ages) if a not in AGES]
        if bad:
            raise ConfigError(f"ages {bad} not in {AGES}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def tech(self, name: str) -> TechnologyConfig:
        return self.tech_configs[name]

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def quick(self) -> RunConfig:
        return self.replace(trials=QUICK_TRIALS, ages=QUICK_AGES,
                            timing_ages=tuple(a for a in self.timing_ages if a in QUICK_AGES))

    def check_output_dir(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        if not os.access(self.out, os.W_OK):
            raise ConfigError(f"output directory {self.out} is not writable")


def _floats(sec, names, target):
    out = {}
    for n in names:
        if n in sec:
            try:
                out[n] = sec.getfloat(n)
            except ValueError as e:
                raise ConfigError(f"[{sec.name}] {n}: {e}") from None
    return dataclasses.replace(target, **out) if out else target


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep case of aging coefficient names
    try:
        with open(path) as f:
            cp.read_file(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None

    known = {"run", "aging", "characterize"} | {f"technology.{t}" for t in PRESETS}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}; expected {sorted(known)}")

    kw: dict = {}
    if cp.has_section("run"):
        r = cp["run"]
        try:
            if "technologies" in r:
                kw["technologies"] = tuple(t.upper() for t in _list(r["technologies"]))
            if "kinds" in r:
                kw["kinds"] = tuple(FlipFlopKind.parse(k) for k in _list(r["kinds"]))
            if "ages" in r:
                kw["ages"] = tuple(int(a) for a in _list(r["ages"]))
            if "timing_ages" in r:
                kw["timing_ages"] = tuple(int(a) for a in _list(r["timing_ages"]))
            if "modes" in r:
                kw["modes"] = tuple(SlackMode(m.lower()) for m in _list(r["modes"]))
            for key in ("trials", "seed", "workers"):
                if key in r:
                    kw[key] = r.getint(key)
            if "out" in r:
                kw["out"] = Path(r["out"])
        except ValueError as e:
            raise ConfigError(f"[run] {e}") from None

    if cp.has_section("aging"):
        names = [f.name for f in dataclasses.fields(AgingParams)]
        stray = set(cp["aging"]) - set(names)
        if stray:
            raise ConfigError(f"[aging] unknown keys {sorted(stray)}")
        try:
            kw["aging"] = _floats(cp["aging"], names, AgingParams())
        except ValueError as e:
            raise ConfigError(f"[aging] {e}") from None

    if cp.has_section("characterize"):
        sec = cp["characterize"]
        names = ("period", "ramp", "hold_margin", "dt_max", "band", "accuracy",
                 "setup_resolution", "delay_budget")
        stray = set(sec) - set(names)
        if stray:
            raise ConfigError(f"[characterize] unknown keys {sorted(stray)}")
        kw["settings"] = _floats(sec, names, CharSettings())

    techs = kw.get("technologies", tuple(PRESETS))
    tcfg = {}
    for t in techs:
        if t not in PRESETS:
            raise ConfigError(f"unknown technology {t!r}; presets: {sorted(PRESETS)}")
        tc = preset(t)
        name = f"technology.{t}"
        if cp.has_section(name):
            sec = cp[name]
            try:
                if "vdd" in sec:
                    tc = tc.replace(vdd=sec.getfloat("vdd"))
                if "temperature" in sec:
                    tc = tc.replace(temperature=sec.getfloat("temperature"))
                if "sigma_scale" in sec:
                    tc = tc.with_sigma_scale(sec.getfloat("sigma_scale"))
                sig = dict(tc.sigma)
                for k in list(sec):
                    if k.startswith("sigma."):
                        f = k.split(".", 1)[1]
                        if f not in sig:
                            raise ConfigError(f"[{name}] {k}: not a varying parameter "
                                              f"({sorted(sig)})")
                        sig[f] = sec.getfloat(k)
                    elif k not in ("vdd", "temperature", "sigma_scale"):
                        raise ConfigError(f"[{name}] unknown key {k!r}")
                tc = tc.replace(sigma=sig)
            except ValueError as e:
                if isinstance(e, ConfigError):
                    raise
                raise ConfigError(f"[{name}] {e}") from None
        tcfg[t] = tc
    kw["tech_configs"] = tcfg
    return RunConfig(**kw)
