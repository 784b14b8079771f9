import json

import numpy as np
import pytest

from surfdiff import cli
from surfdiff import flow as fl
from surfdiff import geometry as geo


STATIONARY_INI = """\
[scenario]
name = mini-stationary
seed = 7
delta = 0.25
end_time = 0.01
sample_count = 10

[reference]
kind = circles
circles = 0 0 1 1

[weak]
shape = circle 1
resolution = 128
perturb_amplitude = 0.04
perturb_mode = 3
dt = 1e-4
"""

BUBBLE_INI = """\
[scenario]
name = mini-bubbles
seed = 11
delta = 0.25
end_time = 0.004
sample_count = 10

[reference]
kind = circles
circles = 0 0 1 1

[weak]
shape = circle 1
resolution = 96
perturb_amplitude = 0.02
perturb_mode = 2
bubbles = auto 3 0.01
dt = 1e-4
"""


@pytest.fixture()
def stationary_cfg(tmp_path):
    path = tmp_path / "stat.ini"
    path.write_text(STATIONARY_INI)
    return path


def test_load_scenario(stationary_cfg):
    sc = cli.load_scenario(stationary_cfg)
    assert sc.name == "mini-stationary"
    assert sc.seed == 7
    assert sc.delta == 0.25
    assert sc.ref_kind == "circles"
    assert len(sc.ref_circles) == 1
    assert sc.weak_perturb_mode == 3


def test_load_scenario_missing_section(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nname = x\nend_time = 1\n")
    with pytest.raises(ValueError):
        cli.load_scenario(bad)


def test_simulate_stationary_end_to_end(stationary_cfg, tmp_path):
    out = tmp_path / "out"
    code = cli.main(["simulate", str(stationary_cfg), "--out", str(out)])
    assert code == 0
    run_dir = out / "stat"
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["gronwall"]["verdict"].startswith("PASS")
    assert summary["length_monotone"] is True
    assert summary["area_drift"] <= 1e-4
    assert summary["worst_slacks"]["pointwise_slack"] >= -1e-12
    assert (run_dir / "reports.csv").exists()
    assert (run_dir / "trajectory" / "index.csv").exists()


def test_simulate_deterministic_outputs(stationary_cfg, tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert cli.main(["simulate", str(stationary_cfg), "--out", str(out1)]) == 0
    assert cli.main(["simulate", str(stationary_cfg), "--out", str(out2)]) == 0
    for rel in ("stat/summary.json", "stat/reports.csv",
                "stat/trajectory/index.csv", "stat/trajectory/curve_00000.txt"):
        a = (out1 / rel).read_bytes()
        b = (out2 / rel).read_bytes()
        assert a == b, f"{rel} differs between identical runs"


def test_simulate_bubbles_disjoint_and_recorded(tmp_path):
    path = tmp_path / "bub.ini"
    path.write_text(BUBBLE_INI)
    out = tmp_path / "out"
    code = cli.main(["simulate", str(path), "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "bub" / "summary.json").read_text())
    assert len(summary["bubbles"]) == 3
    for cx, cy, r in summary["bubbles"]:
        # placed outside the tube: the distance to the unit circle exceeds 2 delta
        assert abs(np.hypot(cx, cy) - 1.0) > 2 * 0.25


def test_verify_suites_pass(capsys):
    for suite in ("geometry", "poisson", "calibration", "energy"):
        assert cli.run_suite(suite) == 0
    out = capsys.readouterr().out
    assert "PASS geometry/circle curvature" in out
    assert "FAIL" not in out


def test_verify_poisson_convergence(capsys):
    assert cli.run_suite("poisson-convergence") == 0
    out = capsys.readouterr().out
    assert "order-2 convergence" in out


def test_identical_initial_data_uniqueness(tmp_path):
    ini = STATIONARY_INI.replace("perturb_amplitude = 0.04",
                                 "perturb_amplitude = 0.0")
    ini = ini.replace("name = mini-stationary", "name = identical")
    path = tmp_path / "ident.ini"
    path.write_text(ini)
    out = tmp_path / "out"
    assert cli.main(["simulate", str(path), "--out", str(out)]) == 0
    summary = json.loads((out / "ident" / "summary.json").read_text())
    assert summary["gronwall"]["verdict"] == "PASS-TRIVIAL"


def test_simulate_jobs_flag(stationary_cfg, tmp_path):
    second = tmp_path / "stat2.ini"
    second.write_text(STATIONARY_INI.replace("name = mini-stationary",
                                             "name = mini-second"))
    out = tmp_path / "par"
    code = cli.main(["simulate", str(stationary_cfg), str(second),
                     "--out", str(out), "--jobs", "2"])
    assert code == 0
    assert (out / "stat" / "summary.json").exists()
    assert (out / "stat2" / "summary.json").exists()


def test_verify_unknown_suite():
    assert cli.run_suite("nope") == 2
    assert cli.run_suite("") == 2


def test_verify_cli_exit_codes():
    assert cli.main(["verify", "geometry"]) == 0
    assert cli.main(["verify", "does-not-exist"]) == 2


def test_compare_command(tmp_path):
    strong_curve = geo.PolyCurve([geo.make_ellipse(2.0, 1.0, 256)])
    weak_curve = geo.PolyCurve([geo.make_ellipse(2.0, 1.0, 64)])
    cfg_s = fl.FlowConfig(dt=1e-4, end_time=0.01)
    cfg_w = fl.FlowConfig(dt=1e-4, end_time=0.01)
    strong = fl.make_reference(cfg_s, strong_curve, sample_stride=5)
    weak = fl.make_reference(cfg_w, weak_curve, sample_stride=5)
    fl.export_trajectory(strong, tmp_path / "strong")
    fl.export_trajectory(weak, tmp_path / "weak")
    code = cli.main(["compare", str(tmp_path / "weak"), str(tmp_path / "strong"),
                     "--out", str(tmp_path / "cmp")])
    assert code == 0
    summary = json.loads((tmp_path / "cmp" / "summary.json").read_text())
    assert summary["gronwall"]["verdict"].startswith("PASS")


def test_report_command(stationary_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    cli.main(["simulate", str(stationary_cfg), "--out", str(out)])
    code = cli.main(["report", str(out / "stat")])
    assert code == 0
    captured = capsys.readouterr().out
    assert "gronwall" in captured
    assert "report samples" in captured


def test_report_missing_directory(tmp_path):
    assert cli.main(["report", str(tmp_path / "nothing")]) == 2
