"""Command-line driver.

    wnmchar timing          clock-to-Q and minimum setup table
    wnmchar wnm             nominal and Monte Carlo write thresholds
    wnmchar failprob        failure-probability curves from a summary CSV
    wnmchar export-netlists built-in cells in the netlist format
    wnmchar selfcheck       analytic oracle checks

Exit status: 0 success, 1 usage or configuration error, 2 characterization
failure, 3 simulator convergence failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .aging import stress_profile
from .cells import FlipFlopKind, build_flipflop
from .characterize import (CharacterizationError, DegenerateInstance, QEdge, SlackMode,
                           WriteTester, characterize_timing, find_v_write_high,
                           find_v_write_low, instance_circuit)
from .config import ConfigError, RunConfig, load_config
from .engine import ConvergenceError, SimulationError
from .failprob import build_curve, curves_svg, write_curves_csv
from .netlist import serialize
from .selfcheck import run_all
from .variation import (McConfig, normality_check, read_summary_csv, run_mc,
                        write_raw_csv, write_summary_csv, zero_slack_reference)

log = logging.getLogger("wnmchar")

EXIT_OK, EXIT_USAGE, EXIT_CHAR, EXIT_CONV = 0, 1, 2, 3

TIMING_FIELDS = ("tech", "ff_kind", "edge", "age_years", "t_ck_to_q_ps", "t_setup_min_ps",
                 "status")
NOMINAL_FIELDS = ("ff_kind", "tech", "age_years", "slack_mode", "v_write_l", "v_write_h",
                  "wnm_l", "wnm_h")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _r(x) -> str:
    return repr(float(x))


def cmd_timing(cfg: RunConfig) -> int:
    path = cfg.out / "timing.csv"
    failed = 0
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TIMING_FIELDS)
        for tname in cfg.technologies:
            tech = cfg.tech(tname)
            for kind in cfg.kinds:
                c = instance_circuit(kind, tech)
                prof = stress_profile(c, tech) if any(a > 0 for a in cfg.timing_ages) else None
                for age in cfg.timing_ages:
                    st = prof.state(cfg.aging, age) if prof is not None and age > 0 else None
                    try:
                        tr = characterize_timing(c, tech, st, settings=cfg.settings)
                    except (CharacterizationError, SimulationError) as e:
                        failed += 1
                        log.error("%s %s age %s: %s", tname, kind.value, age, e)
                        for edge in QEdge:
                            w.writerow([tname, kind.value, edge.value, age, "", "",
                                        f"error: {e}"])
                        f.flush()
                        if isinstance(e, ConvergenceError):
                            raise
                        continue
                    for edge in QEdge:
                        w.writerow([tname, kind.value, edge.value, age,
                                    _r(tr.clk_to_q(edge) * 1e12), _r(tr.setup_min(edge) * 1e12),
                                    "ok"])
                    f.flush()
    log.info("wrote %s", path)
    return EXIT_CHAR if failed else EXIT_OK


def read_timing_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        r["age_years"] = int(r["age_years"])
        for k in ("t_ck_to_q_ps", "t_setup_min_ps"):
            r[k] = float(r[k]) if r[k] else math.nan
    return rows


def nominal_thresholds(cfg: RunConfig, tname: str, kind: FlipFlopKind, zero_ref) -> dict:
    tech = cfg.tech(tname)
    c = instance_circuit(kind, tech)
    prof = stress_profile(c, tech)
    out = {}
    for age in cfg.ages:
        st = prof.state(cfg.aging, age).delta_vth if age > 0 else None
        tester = WriteTester(c, tech, None, st, cfg.settings)
        for mode in cfg.modes:
            vals = []
            for find, metric in ((find_v_write_low, "v_write_l"), (find_v_write_high, "v_write_h")):
                try:
                    vals.append(find(tester, mode, zero_slack=zero_ref.for_metric(metric),
                                     accuracy=cfg.settings.accuracy))
                except DegenerateInstance:
                    vals.append(math.nan)
            out[(age, mode)] = tuple(vals)
    return out


def _comparison_report(cfg: RunConfig, nominal: dict, summaries: dict, mc_samples) -> list[str]:
    lines = []
    # zero-slack aging direction on nominal instances
    for (tname, kind), vals in nominal.items():
        if SlackMode.ZERO not in cfg.modes or len(cfg.ages) < 2:
            continue
        ages = sorted(cfg.ages)
        vl = [vals[(a, SlackMode.ZERO)][0] for a in ages]
        vh = [vals[(a, SlackMode.ZERO)][1] for a in ages]
        ok = (all(b <= a + 1e-12 for a, b in zip(vl, vl[1:]))
              and all(b >= a - 1e-12 for a, b in zip(vh, vh[1:])))
        lines.append(f"{'ok  ' if ok else 'FLAG'} zero-slack aging trend {tname} {kind.value}: "
                     f"V_writeL {vl[0]:.4f}->{vl[-1]:.4f}, V_writeH {vh[0]:.4f}->{vh[-1]:.4f}")
    # FinFET spread below CMOS
    if {"CMOS16", "FINFET16"} <= set(cfg.technologies):
        for (kind, tname, age, mode, metric), s in summaries.items():
            if tname != "FINFET16":
                continue
            other = summaries.get((kind, "CMOS16", age, mode, metric))
            if other is None or math.isnan(s.std) or math.isnan(other.std):
                continue
            ok = s.std < other.std
            lines.append(f"{'ok  ' if ok else 'FLAG'} sigma FinFET<CMOS {kind} {age}y {mode} "
                         f"{metric}: {s.std * 1e3:.2f} vs {other.std * 1e3:.2f} mV")
    # normality and mean-vs-nominal
    for key, s in summaries.items():
        kind, tname, age, mode, metric = key
        x = mc_samples(*key)
        if x.size >= 100:
            nc = normality_check(x)
            flag = "ok  " if nc.passed else "FLAG"
            lines.append(f"{flag} normality {tname} {kind} {age}y {mode} {metric}: "
                         f"A*2={nc.modified:.3f} (1% point {nc.critical})")
        nom = nominal[(tname, FlipFlopKind.parse(kind))][(age, SlackMode(mode))]
        nv = nom[0] if metric == "v_write_l" else nom[1]
        if s.n >= 2 and not math.isnan(nv):
            band = 3 * s.std / math.sqrt(s.n)
            ok = abs(s.mean - nv) <= band
            lines.append(f"{'ok  ' if ok else 'FLAG'} mean vs nominal {tname} {kind} {age}y "
                         f"{mode} {metric}: {s.mean:.5f} vs {nv:.5f} (band {band:.5f})")
    return lines


def cmd_wnm(cfg: RunConfig) -> int:
    refs, nominal = {}, {}
    for tname in cfg.technologies:
        tech = cfg.tech(tname)
        for kind in cfg.kinds:
            refs[(kind, tname)] = zero_slack_reference(kind, tech, cfg.aging, cfg.settings)
            nominal[(tname, kind)] = nominal_thresholds(cfg, tname, kind, refs[(kind, tname)])
    with open(cfg.out / "nominal.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(NOMINAL_FIELDS)
        for (tname, kind), vals in nominal.items():
            vdd = cfg.tech(tname).vdd
            for (age, mode), (vl, vh) in vals.items():
                w.writerow([kind.value, tname, _r(age), mode.value, _r(vl), _r(vh), _r(vl),
                            _r(vdd - vh)])
    mc = McConfig(cfg.trials, cfg.seed, tuple(cfg.ages), tuple(cfg.modes), tuple(cfg.kinds),
                  tuple(cfg.tech(t) for t in cfg.technologies), aging=cfg.aging,
                  settings=cfg.settings)
    res = run_mc(mc, cfg.workers, refs)
    write_raw_csv(cfg.out / "raw.csv", res.raw)
    write_summary_csv(cfg.out / "summary.csv", res.summaries)
    report = _comparison_report(cfg, nominal, res.summaries, res.samples)
    (cfg.out / "report.txt").write_text("\n".join(report) + "\n")
    flags = sum(1 for line in report if line.startswith("FLAG"))
    log.info("wrote nominal.csv, raw.csv, summary.csv, report.txt (%d flags)", flags)
    return EXIT_OK


def cmd_failprob(cfg: RunConfig, summary_path: Path | None, allow_step: bool) -> int:
    path = summary_path or cfg.out / "summary.csv"
    if not Path(path).exists():
        raise UsageError(f"summary CSV {path} not found; run 'wnmchar wnm' first or pass "
                         "--summary")
    sums = read_summary_csv(path)
    curves = {}
    for (kind, tname, age, mode, metric), s in sums.items():
        if metric != "v_write_l":
            continue
        hi = sums.get((kind, tname, age, mode, "v_write_h"))
        if hi is None:
            raise UsageError(f"{path}: no v_write_h summary for {kind} {tname} {age} {mode}")
        vdd = cfg.tech(tname).vdd if tname in cfg.tech_configs else 0.85
        try:
            curves[(kind, tname, age, mode)] = build_curve(s, hi, vdd, allow_step=allow_step)
        except ValueError as e:
            raise CharacterizationError(f"{kind} {tname} {age}y {mode}: {e}") from None
    write_curves_csv(cfg.out / "curves.csv", curves)
    for tname in sorted({k[1] for k in curves}):
        for mode in sorted({k[3] for k in curves}):
            sub = {k: c for k, c in curves.items() if k[1] == tname and k[3] == mode}
            if sub:
                svg = curves_svg(sub, f"write failure probability, {tname}, {mode} slack")
                (cfg.out / f"failprob_{tname}_{mode}.svg").write_text(svg)
    log.info("wrote curves.csv and SVG plots")
    return EXIT_OK


def cmd_export_netlists(cfg: RunConfig, kinds: list[str] | None) -> int:
    try:
        chosen = [FlipFlopKind.parse(k) for k in kinds] if kinds else list(cfg.kinds)
    except ValueError as e:
        raise UsageError(str(e)) from None
    d = cfg.out / "netlists"
    d.mkdir(parents=True, exist_ok=True)
    for tname in cfg.technologies:
        for kind in chosen:
            text = serialize(build_flipflop(kind, cfg.tech(tname)))
            (d / f"{tname}_{kind.value}.net").write_text(text)
    log.info("wrote %d netlists to %s", len(chosen) * len(cfg.technologies), d)
    return EXIT_OK


def cmd_selfcheck() -> int:
    checks = run_all()
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHAR


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--quick", action="store_true",
                        help="desk-scale run: 100 trials, ages 0 and 10")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="wnmchar", description="Flip-flop write-margin characterization.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("timing", parents=[common], help="clock-to-Q and minimum setup table")
    sub.add_parser("wnm", parents=[common], help="nominal and Monte Carlo write thresholds")
    fp = sub.add_parser("failprob", parents=[common], help="failure-probability curves")
    fp.add_argument("--summary", type=Path, help="summary CSV (default: OUT/summary.csv)")
    fp.add_argument("--allow-step", action="store_true",
                    help="accept zero-sigma summaries as step functions")
    ex = sub.add_parser("export-netlists", parents=[common], help="write built-in netlists")
    ex.add_argument("--kinds", nargs="+", help="subset of kinds (default: all)")
    sub.add_parser("selfcheck", parents=[common], help="analytic oracle checks")
    return p


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.quick:
        cfg = cfg.quick()
    changes = {k: getattr(args, k) for k in ("seed", "trials", "workers", "out")
               if getattr(args, k) is not None}
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "selfcheck":
            return cmd_selfcheck()
        cfg = _resolve_config(args)
        cfg.check_output_dir()
        if args.command == "timing":
            return cmd_timing(cfg)
        if args.command == "wnm":
            return cmd_wnm(cfg)
        if args.command == "failprob":
            return cmd_failprob(cfg, args.summary, args.allow_step)
        return cmd_export_netlists(cfg, args.kinds)
    except (ConfigError, UsageError) as e:
        print(f"wnmchar: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as e:
        print(f"wnmchar: convergence failure: {e}", file=sys.stderr)
        return EXIT_CONV
    except (CharacterizationError, SimulationError) as e:
        print(f"wnmchar: characterization failure: {e}", file=sys.stderr)
        return EXIT_CHAR


if __name__ == "__main__":
    sys.exit(main())
