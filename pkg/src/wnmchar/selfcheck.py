"""Analytic oracle checks runnable from the command line."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

from .characterize import ThresholdElement, find_v_write_high, find_v_write_low
from .engine import dc_operating_point, transient
from .failprob import normal_cdf, p_fail_low
from .netlist import parse
from .presets import cmos16
from .waveform import Waveform

# Phi(x) by 40-digit quadrature of the normal density
PHI_REFERENCE = {
    -6.0: 9.865876450376981407008641e-10,
    -2.0: 0.02275013194817920720028264,
    0.0: 0.5,
    1.0: 0.8413447460685429485852325,
    2.0: 0.9772498680518207927997174,
    6.0: 0.9999999990134123549623019,
}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def rc_step() -> Check:
    tech = cmos16()
    rc = parse("V1 out gnd DC 1 r=1k\nC1 out gnd 1f\n")
    tau = 1e-12
    pts = (0.5, 1.0, 2.0)
    res = transient(rc, 3 * tau, tau / 10, {"out": 0.0}, tech,
                    breakpoints=[k * tau for k in pts])
    errs = []
    for k in pts:
        exact = 1 - math.exp(-k)
        errs.append(abs(res.at("out", k * tau) - exact) / exact)
    return Check("rc step response", max(errs) <= 1e-3, f"max rel err {max(errs):.2e}")


def inverter_rails() -> Check:
    tech = cmos16()
    inv = parse("Vdd vdd gnd DC 0.85\nVin in gnd DC 0\nM1 out in gnd gnd N\n"
                "M2 out in vdd vdd P m=2\n")
    hi = dc_operating_point(inv, tech)["out"]
    lo = dc_operating_point(inv.with_source("in", Waveform.dc(tech.vdd)), tech)["out"]
    err = max(abs(hi - tech.vdd), abs(lo))
    return Check("inverter dc rails", err <= 1e-3, f"max rail error {err * 1e3:.3f} mV")


def bisection_oracle() -> Check:
    vdd = 0.85
    el = ThresholdElement(vdd, vdd / 2)
    lo = find_v_write_low(el, 0.0, detail=True)
    n_lo = len(el.calls)
    hi = find_v_write_high(el, 0.0, detail=True)
    n_hi = len(el.calls) - n_lo
    err = max(abs(lo.value - vdd / 2), abs(hi.value - vdd / 2))
    ok = err <= 0.001 * vdd and lo.evaluations == hi.evaluations == 10
    return Check("bisection on threshold element", ok,
                 f"err {err * 1e3:.3f} mV, evaluations {n_lo}/{n_hi}")


def normal_cdf_oracle() -> Check:
    err = max(abs(normal_cdf(x) - ref) for x, ref in PHI_REFERENCE.items())
    med = abs(p_fail_low(0.3, 0.02, 0.3) - 0.5)
    return Check("normal cdf", err <= 1e-10 and med <= 1e-10,
                 f"max abs err {err:.1e}, median err {med:.1e}")


def run_all() -> list[Check]:
    t0 = time.perf_counter()
    checks = [rc_step(), inverter_rails(), bisection_oracle(), normal_cdf_oracle()]
    dt = time.perf_counter() - t0
    return checks + [Check("oracle suite runtime", True, f"{dt:.2f} s")]
