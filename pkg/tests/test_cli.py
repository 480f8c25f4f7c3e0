import csv
import subprocess
import sys

import pytest

from wnmchar.cells import ALL_KINDS, build_flipflop
from wnmchar.cli import main, read_timing_csv
from wnmchar.failprob import read_curves_csv
from wnmchar.netlist import parse
from wnmchar.presets import preset
from wnmchar.variation import read_summary_csv

SMALL = """
[run]
technologies = CMOS16
kinds = A
ages = 0 10
timing_ages = 0 10
modes = long zero
trials = 3
seed = 9
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def test_selfcheck(capsys):
    assert main(["selfcheck"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 5 and all(line.startswith("PASS") for line in out)


def test_console_script_runs():
    r = subprocess.run([sys.executable, "-m", "wnmchar.cli", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "wnmchar" in r.stdout


@pytest.mark.parametrize("argv", [[], ["bogus"], ["wnm", "--trials", "x"]])
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 1


def test_bad_config_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[run]\nages = 5\n")
    assert main(["timing", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert "ages" in capsys.readouterr().err


def test_export_round_trip(tmp_path):
    assert main(["export-netlists", "--out", str(tmp_path)]) == 0
    for tname in ("CMOS16", "FINFET16"):
        for kind in ALL_KINDS:
            text = (tmp_path / "netlists" / f"{tname}_{kind.value}.net").read_text()
            assert parse(text) == build_flipflop(kind, preset(tname))
    c = (tmp_path / "netlists" / "CMOS16_C.net").read_text()
    b = (tmp_path / "netlists" / "CMOS16_B.net").read_text()
    assert "MB1n" in c and "MB1n" not in b


def test_export_unknown_kind(tmp_path, capsys):
    assert main(["export-netlists", "--kinds", "A", "Q", "--out", str(tmp_path)]) == 1
    assert "valid kinds: A, B, C, D, E, F, G" in capsys.readouterr().err


def _summary(path, std=0.02):
    fields = ("ff_kind", "tech", "age", "mode", "metric", "n", "mean", "std", "min", "max",
              "degenerate_count")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(fields)
        w.writerow(["A", "CMOS16", 0, "zero", "v_write_l", 100, 0.3, std, 0.25, 0.35, 0])
        w.writerow(["A", "CMOS16", 0, "zero", "v_write_h", 100, 0.55, std, 0.5, 0.6, 0])


def test_failprob_from_hand_written_summary(tmp_path):
    s = tmp_path / "s.csv"
    _summary(s)
    assert main(["failprob", "--summary", str(s), "--out", str(tmp_path)]) == 0
    curves = read_curves_csv(tmp_path / "curves.csv")
    c = curves[("A", "CMOS16", 0.0, "zero")]
    i = list(c.delta_v).index(0.3)
    assert c.p_fail_low[i] == 0.5
    svg = (tmp_path / "failprob_CMOS16_zero.svg").read_text()
    assert svg.count('class="series"') == 1


def test_failprob_zero_sigma_needs_flag(tmp_path):
    s = tmp_path / "s.csv"
    _summary(s, std=0.0)
    assert main(["failprob", "--summary", str(s), "--out", str(tmp_path)]) == 2
    assert main(["failprob", "--summary", str(s), "--allow-step", "--out", str(tmp_path)]) == 0


def test_failprob_missing_summary_names_prerequisite(tmp_path, capsys):
    assert main(["failprob", "--out", str(tmp_path)]) == 1
    assert "wnmchar wnm" in capsys.readouterr().err


def test_timing_table(tmp_path, small_cfg):
    assert main(["timing", "--config", str(small_cfg), "--out", str(tmp_path)]) == 0
    rows = read_timing_csv(tmp_path / "timing.csv")
    assert len(rows) == 1 * 2 * 1 * 2
    by = {(r["edge"], r["age_years"]): r for r in rows}
    for edge in ("rise", "fall"):
        assert by[(edge, 10)]["t_ck_to_q_ps"] > by[(edge, 0)]["t_ck_to_q_ps"]
        assert by[(edge, 10)]["t_setup_min_ps"] >= by[(edge, 0)]["t_setup_min_ps"]
        assert by[(edge, 0)]["status"] == "ok"


def test_wnm_pipeline_deterministic(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["wnm", "--config", str(small_cfg), "--out", str(a)]) == 0
    assert main(["wnm", "--config", str(small_cfg), "--out", str(b), "--workers", "2"]) == 0
    for name in ("nominal.csv", "raw.csv", "summary.csv", "report.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    sums = read_summary_csv(a / "summary.csv")
    assert len(sums) == 1 * 2 * 2 * 2
    assert all(s.n + s.degenerate_count == 3 for s in sums.values())
    assert main(["failprob", "--out", str(a)]) == 0
    assert len(read_curves_csv(a / "curves.csv")) == 4
    report = (a / "report.txt").read_text()
    assert "zero-slack aging trend CMOS16 A" in report


def test_wnm_zero_sigma_mean_equals_nominal(tmp_path, small_cfg):
    text = small_cfg.read_text() + "[technology.CMOS16]\nsigma_scale = 0\n"
    small_cfg.write_text(text.replace("modes = long zero", "modes = long").replace(
        "ages = 0 10", "ages = 0"))
    assert main(["wnm", "--config", str(small_cfg), "--out", str(tmp_path)]) == 0
    with open(tmp_path / "nominal.csv") as f:
        nom = next(csv.DictReader(f))
    sums = read_summary_csv(tmp_path / "summary.csv")
    s = sums[("A", "CMOS16", 0.0, "long", "v_write_l")]
    assert s.mean == float(nom["v_write_l"]) and s.std == 0.0
