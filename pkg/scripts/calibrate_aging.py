"""Fit the NBTI prefactors to a target 10-year flip-flop delay degradation.

The shape coefficients (TITCE, TITFD, NIT, TOTFD, TOTTD, NOT) are fixed by
hand. TITTD and ot_scale are then solved in closed form from the interface
shift of a fully stressed nominal CMOS P device (|v_gs| = vdd, 10 years) and a
fixed oxide-to-interface ratio. The interface target is bisected so that the
clock-to-Q degradation, averaged over both Q edges and all fourteen cells,
matches ``--target``.

    python scripts/calibrate_aging.py --target 0.15
"""
from __future__ import annotations

import argparse
import dataclasses
import math

from wnmchar.aging import AgingParams, stress_profile
from wnmchar.cells import ALL_KINDS
from wnmchar.characterize import CharSettings, QEdge, instance_circuit, measure_clk_to_q
from wnmchar.presets import cmos16, finfet16


def params_for(it_full: float, ratio: float, base: AgingParams) -> AgingParams:
    tech = cmos16()
    vdd, vth, tox = tech.vdd, tech.pmos.vth0, tech.nominal.t_oxe_p
    e_ox = vdd / tox
    shape = ((vdd - vth) / tox) ** base.TITCE * math.exp(base.TITFD * e_ox) * 10 ** base.NIT
    tittd = -base.k * base.temperature * math.log(it_full / shape)
    ot_scale = ratio * it_full / (math.exp(base.oxide_field_coeff * e_ox) * 10 ** base.NOT)
    return dataclasses.replace(base, TITTD=tittd, ot_scale=ot_scale)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--target", type=float, default=0.15)
    ap.add_argument("--ratio", type=float, default=1.0, help="oxide/interface shift at full stress")
    args = ap.parse_args()
    settings = CharSettings()
    cells = []
    for tech in (cmos16(), finfet16()):
        for kind in ALL_KINDS:
            c = instance_circuit(kind, tech)
            fresh = [measure_clk_to_q(c, e, tech, settings=settings) for e in QEdge]
            cells.append((tech, kind, c, fresh, stress_profile(c, tech)))

    def degradation(p: AgingParams):
        out = []
        for tech, kind, c, fresh, prof in cells:
            st = prof.state(p, 10)
            aged = [measure_clk_to_q(c, e, tech, st, settings=settings) for e in QEdge]
            out.append((tech.name, kind.value, [a / f - 1 for a, f in zip(aged, fresh)]))
        return out

    def mean_deg(p):
        d = degradation(p)
        return sum(sum(x) / 2 for _, _, x in d) / len(d)

    lo, hi = 0.005, 0.2
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        if mean_deg(params_for(mid, args.ratio, AgingParams())) < args.target:
            lo = mid
        else:
            hi = mid
    p = params_for(0.5 * (lo + hi), args.ratio, AgingParams())
    print(f"interface shift at full stress, 10 y: {0.5 * (lo + hi) * 1e3:.2f} mV")
    print(f"TITTD = {p.TITTD:.6g}")
    print(f"ot_scale = {p.ot_scale:.6g}")
    for tech, kind, (r, f) in degradation(p):
        print(f"{tech:9s} {kind}  rise {r:+.3f}  fall {f:+.3f}")


if __name__ == "__main__":
    main()
