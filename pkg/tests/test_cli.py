import csv
import json

import numpy as np
import pytest

from wyflow.cli import main
from wyflow.config import ConfigError, PRESETS, resolve
from wyflow.flow import FlowTrace
from wyflow.output import read_field, write_field


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.reader(fh))


def write_ini(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


# ----------------------------------------------------------------- configuration


def test_presets_cover_all_cases():
    assert set(PRESETS) == {
        "positive_cap", "positive_cap_perturbed", "zero_flat_constant",
        "zero_flat_perturbed", "negative_weighted", "hyperbolic_weighted",
    }


def test_unknown_keys_and_sections_are_errors(tmp_path):
    with pytest.raises(ConfigError):
        resolve(path=write_ini(tmp_path / "a.ini", "[flow]\nbogus = 1\n"))
    with pytest.raises(ConfigError):
        resolve(path=write_ini(tmp_path / "b.ini", "[nonsense]\nx = 1\n"))
    with pytest.raises(ConfigError):
        resolve("no_such_preset")
    with pytest.raises(ConfigError):
        resolve(path=write_ini(tmp_path / "c.ini", "[flow]\nmax_steps = many\n"))


def test_precedence_defaults_preset_file_flags(tmp_path):
    ini = write_ini(tmp_path / "s.ini", "[scenario]\nname = zero_flat_perturbed\n[flow]\ndt = 1e-3\nmonitor_stride = 7\n")
    cfg = resolve(path=ini, overrides={"flow": {"dt": 2e-3}})
    assert cfg.name == "zero_flat_perturbed"
    assert cfg.get("flow", "dt") == 2e-3  # flag beats file
    assert cfg.get("flow", "monitor_stride") == 7  # file beats preset
    assert cfg.get("flow", "stepper") == "semi-implicit"  # preset beats default
    assert cfg.get("flow", "s_cfl") == 0.2  # default


def test_flag_overrides_file_on_the_command_line(tmp_path, capsys):
    ini = write_ini(tmp_path / "s.ini", "[scenario]\nname = zero_flat_constant\n[background]\nnodes = 64\n")
    out = tmp_path / "o"
    assert main(["run", "--config", ini, "--mesh", "32", "--out", str(out)]) == 0
    echoed = (out / "config.ini").read_text()
    assert "nodes = 32" in echoed
    assert len(read_csv(out / "w_final.csv")) == 33


def test_resolved_config_round_trips(tmp_path):
    cfg = resolve("negative_weighted", overrides={"run": {"seed": 11}})
    path = write_ini(tmp_path / "echo.ini", cfg.to_ini())
    again = resolve(path=path)
    assert again.values == cfg.values


# ----------------------------------------------------------------- run


def test_run_zero_constant_outputs(tmp_path, capsys):
    out = tmp_path / "zero"
    assert main(["run", "--scenario", "zero_flat_constant", "--out", str(out)]) == 0
    for name in ("trace.csv", "summary.json", "w_final.csv", "R_final.csv", "config.ini"):
        assert (out / name).is_file()
    rows = read_csv(out / "trace.csv")
    assert tuple(rows[0]) == FlowTrace.columns
    assert len(rows) == 2
    summary = json.loads((out / "summary.json").read_text())
    assert list(summary) == ["converged", "steps", "r_inf", "steady_residual", "case", "wall_time_seconds"]
    assert summary["converged"] is True and summary["steps"] == 0 and summary["case"] == "zero"
    assert read_csv(out / "w_final.csv")[0] == ["x", "w"]
    assert read_csv(out / "R_final.csv")[0] == ["x", "R"]
    assert not [p for p in out.iterdir() if p.name.startswith(".")]


def test_run_positive_cap_converges(tmp_path, capsys):
    out = tmp_path / "cap"
    assert main(["run", "--scenario", "positive_cap", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is True and summary["case"] == "positive"
    assert summary["r_inf"] == pytest.approx(6 * np.pi, rel=1e-4)


def test_run_truncated_exits_two(tmp_path, capsys):
    out = tmp_path / "trunc"
    assert main(["run", "--scenario", "positive_cap_perturbed", "--max-steps", "1", "--out", str(out)]) == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is False and summary["steps"] == 1


def test_run_errors_exit_one(tmp_path, capsys):
    assert main(["run", "--scenario", "nope", "--out", str(tmp_path / "x")]) == 1
    assert "unknown scenario" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "y")]) == 1
    bad = write_ini(tmp_path / "bad.ini", "[initial]\nkind = file\npath = %s\n" % (tmp_path / "none.csv"))
    assert main(["run", "--config", bad, "--out", str(tmp_path / "z")]) == 1


def test_run_from_field_file(tmp_path, capsys):
    first = tmp_path / "first"
    assert main(["run", "--scenario", "zero_flat_perturbed", "--mesh", "32", "--max-steps", "5", "--out", str(first)]) == 2
    w = read_field(first / "w_final.csv")
    ini = write_ini(tmp_path / "f.ini", f"[background]\nm = 2.0\nnodes = 32\n[initial]\nkind = file\npath = {first / 'w_final.csv'}\n[flow]\nmax_steps = 3\n")
    second = tmp_path / "second"
    assert main(["run", "--config", ini, "--out", str(second)]) in (0, 2)
    assert w.size == 32


def test_json_format_adds_trace_json(tmp_path, capsys):
    out = tmp_path / "j"
    assert main(["run", "--scenario", "zero_flat_constant", "--format", "json", "--out", str(out)]) == 0
    data = json.loads((out / "trace.json").read_text())
    assert tuple(data["columns"]) == FlowTrace.columns
    assert (out / "trace.csv").is_file()


def test_runs_are_bitwise_reproducible(tmp_path, capsys):
    ini = write_ini(
        tmp_path / "r.ini",
        "[background]\nm = 2.0\nnodes = 48\n[initial]\nkind = random\namplitude = 0.2\n"
        "[flow]\nmax_steps = 40\nmonitor_stride = 5\n",
    )
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["run", "--config", ini, "--seed", "5", "--out", str(out)]) == 2
    for name in ("trace.csv", "w_final.csv", "R_final.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    echoes = [[ln for ln in (o / "config.ini").read_text().splitlines() if not ln.startswith("dir =")] for o in outs]
    assert echoes[0] == echoes[1]
    s0, s1 = (json.loads((o / "summary.json").read_text()) for o in outs)
    s0.pop("wall_time_seconds"), s1.pop("wall_time_seconds")
    assert s0 == s1
    other = tmp_path / "c"
    main(["run", "--config", ini, "--seed", "6", "--out", str(other)])
    assert (other / "trace.csv").read_bytes() != (outs[0] / "trace.csv").read_bytes()


def test_field_csv_round_trips_doubles_exactly(tmp_path):
    rng = np.random.default_rng(3)
    x = np.linspace(0.0, 1.0, 50)
    v = rng.standard_normal(50) * 10.0 ** rng.integers(-300, 300, 50)
    write_field(tmp_path / "f.csv", (x,), v, "w")
    assert np.array_equal(read_field(tmp_path / "f.csv"), v)
    assert [p.name for p in tmp_path.iterdir()] == ["f.csv"]


# ----------------------------------------------------------------- classify and spectrum


@pytest.mark.parametrize(
    "scenario,label",
    [("zero_flat_constant", "zero"), ("positive_cap", "positive"), ("negative_weighted", "negative")],
)
def test_classify(tmp_path, capsys, scenario, label):
    assert main(["classify", "--scenario", scenario, "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.split()[0] == label


def test_spectrum_outputs(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["spectrum", "--scenario", "positive_cap", "--k", "4", "--out", str(out)]) == 0
    rows = read_csv(out / "spectrum.csv")
    assert rows[0] == ["index", "lambda"] and len(rows) == 5
    assert float(rows[1][1]) == pytest.approx(6.0, rel=1e-10)
    modes = read_csv(out / "modes.csv")
    assert modes[0] == ["x", "psi_0", "psi_1", "psi_2", "psi_3"]


def test_spectrum_flat_closed_form(tmp_path, capsys):
    out = tmp_path / "f"
    assert main(["spectrum", "--scenario", "zero_flat_constant", "--mesh", "512", "--k", "3", "--out", str(out)]) == 0
    lam = [float(r[1]) for r in read_csv(out / "spectrum.csv")[1:]]
    alpha = 4 * 4 / 3
    assert abs(lam[0]) < 1e-8
    assert lam[1:] == pytest.approx([alpha * np.pi**2, alpha * 4 * np.pi**2], rel=1e-4)


def test_spectrum_k_too_large(tmp_path, capsys):
    assert main(["spectrum", "--scenario", "zero_flat_constant", "--mesh", "32", "--k", "40", "--out", str(tmp_path)]) == 1


# ----------------------------------------------------------------- verify


def test_verify_default_suite_passes(tmp_path, capsys):
    out = tmp_path / "v"
    assert main(["verify", "--out", str(out)]) == 0
    rows = read_csv(out / "verify.csv")
    assert rows[0] == ["check", "passed", "detail"]
    assert {r[0] for r in rows[1:]} == {"transformation_law", "integration_by_parts", "dense_spectrum", "dr_dt"}
    assert all(r[1] == "True" for r in rows[1:])
    assert (out / "refinement_transformation_law.csv").is_file()


def test_verify_perturbed_dr_dt(tmp_path, capsys):
    ini = write_ini(tmp_path / "p.ini", "[background]\nm = 2.0\n[initial]\nkind = trig\namplitude = 0.2\nfrequency = 2.0\n[verify]\nchecks = dr_dt\n")
    assert main(["verify", "--config", ini, "--out", str(tmp_path / "p")]) == 0
    assert "ratio" in capsys.readouterr().out


def test_verify_corrupted_tolerance_fails(tmp_path, capsys):
    ini = write_ini(tmp_path / "bad.ini", "[verify]\nchecks = transformation_law\nmin_order = 5\n")
    assert main(["verify", "--config", ini, "--out", str(tmp_path / "b")]) == 1
    assert "FAIL transformation_law" in capsys.readouterr().out


def test_verify_empty_selection_prints_usage(tmp_path, capsys):
    assert main(["verify", "--checks", "", "--out", str(tmp_path / "e")]) == 1
    err = capsys.readouterr().err
    assert "no checks selected" in err and "usage:" in err
    assert main(["verify", "--checks", "bogus", "--out", str(tmp_path / "e")]) == 1
