"""End-to-end checks of the command line interface."""

import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from bosedimer import cli
from bosedimer.errors import SolverError


def run(tmp_path, *args):
    """Invoke the CLI in-process with outputs under tmp_path."""
    return cli.main([*args])


def read_csv(path):
    """Return (schema_line, config_dict, header, rows) of one output file."""
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# schema_version=")
    assert lines[1].startswith("# config=")
    config = json.loads(lines[1][len("# config="):])
    reader = csv.reader(io.StringIO("\n".join(lines[2:])))
    table = list(reader)
    return lines[0], config, table[0], table[1:]


def test_help_exits_zero(tmp_path):
    assert cli.main(["--help"]) == 0
    assert cli.main(["sweep1d", "--help"]) == 0


def test_unknown_command_exits_two():
    assert cli.main(["frobnicate"]) == 2


def test_usage_errors_exit_two(tmp_path):
    out = str(tmp_path / "x")
    # driven system has no stationary state
    assert cli.main(["stationary", "--param", "A=0.5", "--param", "T=2",
                     "--out", out]) == 2
    assert cli.main(["sweep1d", "--param", "N=8", "--axis", "Q",
                     "--out", out]) == 2
    assert cli.main(["stationary", "--param", "N=nope", "--out", out]) == 2
    assert cli.main(["stationary", "--param", "Nope=3", "--out", out]) == 2
    assert cli.main(["sweep1d", "--param", "N=8", "--range", "0.1",
                     "--out", out]) == 2
    assert cli.main(["stationary", "--format", "yaml", "--out", out]) == 2
    assert cli.main(["chaos", "--model", "wrong", "--out", out]) == 2


def test_numerical_failure_exits_one(tmp_path, monkeypatch):
    def boom(sm):
        raise SolverError("synthetic failure", residual=1.0, tol=1e-10)

    monkeypatch.setattr(cli, "stationary_state", boom)
    assert cli.main(["stationary", "--param", "N=6",
                     "--out", str(tmp_path / "x")]) == 1


def test_stationary_outputs(tmp_path):
    out = tmp_path / "st"
    assert run(tmp_path, "stationary", "--param", "N=12", "--param", "U=0.6",
               "--out", str(out)) == 0
    schema, config, header, rows = read_csv(out.with_suffix(".csv"))
    assert schema == "# schema_version=1"
    assert config["param"]["N"] == 12
    assert header == ["n", "rho_nn"]
    diag = np.array([float(r[1]) for r in rows])
    assert len(diag) == 13
    assert abs(diag.sum() - 1.0) < 1e-9

    side = json.loads(out.with_suffix(".json").read_text())
    assert side["schema_version"] == 1
    assert side["maxima_count"] == 2
    assert side["maxima_indices"] == [3, 9]
    assert 0 < side["purity"] < 1
    # leading eigenvalue of the generator is zero
    assert abs(side["spectrum"][0]["re"]) < 1e-9

    _, _, sheader, srows = read_csv(tmp_path / "st_state.csv")
    assert sheader == ["row", "col", "re", "im"]
    assert len(srows) == 13 * 13


def test_spectrum_sorted_by_real_part(tmp_path):
    out = tmp_path / "sp"
    assert run(tmp_path, "spectrum", "--param", "N=10", "--k", "4",
               "--out", str(out)) == 0
    _, _, header, rows = read_csv(out.with_suffix(".csv"))
    assert header == ["index", "re", "im"]
    re = [float(r[1]) for r in rows]
    assert len(re) == 4
    assert abs(re[0]) < 1e-9
    assert all(a >= b - 1e-12 for a, b in zip(re[:-1], re[1:]))


def test_sweep1d_tables_and_refinement(tmp_path):
    out = tmp_path / "sw"
    assert run(tmp_path, "sweep1d", "--param", "N=8", "--axis", "U",
               "--range", "0.3:0.9", "--steps", "4", "--out", str(out)) == 0
    _, config, header, rows = read_csv(out.with_suffix(".csv"))
    assert header == ["axis", "value", "n", "rho_nn", "is_max"]
    assert len(rows) == 4 * 9
    flags = {r[4] for r in rows}
    assert flags == {"0", "1"}

    side = json.loads(out.with_suffix(".json").read_text())
    assert len(side["columns"]) == 4
    assert all(c["error"] is None for c in side["columns"])
    kinds = {p["kind"] for p in side["bifurcation_points"]}
    assert "classical" in kinds
    classical = [p for p in side["bifurcation_points"]
                 if p["kind"] == "classical"]
    # analytic pitchfork of the undriven flow sits at J/2 + 2 gamma^2 / J
    assert abs(classical[0]["value"] - 0.52) < 2e-3

    _, _, cheader, crows = read_csv(tmp_path / "sw_classical.csv")
    assert cheader == ["axis", "value", "n", "stability"]
    assert {r[3] for r in crows} <= {"stable", "unstable", "marginal"}


def test_meanfield_branch_table(tmp_path):
    out = tmp_path / "mf"
    assert run(tmp_path, "meanfield", "--axis", "U", "--range", "0.3:0.7",
               "--steps", "3", "--out", str(out)) == 0
    _, _, header, rows = read_csv(out.with_suffix(".csv"))
    assert header == ["axis", "value", "n", "theta", "phi", "stability"]
    by_value = {}
    for r in rows:
        by_value.setdefault(float(r[1]), []).append(r[5])
    assert by_value[0.3].count("stable") == 1
    assert by_value[0.7].count("stable") == 2
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["counts"][0]["stable"] == 1
    assert side["counts"][-1]["stable"] == 2


def test_meanfield_single_point(tmp_path):
    out = tmp_path / "mf1"
    assert run(tmp_path, "meanfield", "--param", "U=0.7",
               "--out", str(out)) == 0
    _, _, _, rows = read_csv(out.with_suffix(".csv"))
    assert [r[5] for r in rows].count("stable") == 2


def test_sweep2d_grid_and_quoting(tmp_path):
    out = tmp_path / "s2"
    assert run(tmp_path, "sweep2d", "--param", "N=8",
               "--axis", "U", "--range", "0.3:0.8", "--steps", "2",
               "--axis2", "E", "--range2", "0:0.03", "--steps2", "2",
               "--out", str(out)) == 0
    raw = out.with_suffix(".csv").read_text()
    assert '"S' in raw  # labels carry a comma, so they must be quoted
    _, _, header, rows = read_csv(out.with_suffix(".csv"))
    assert len(header) == 8
    assert len(rows) == 4
    assert all(len(r) == 8 for r in rows)
    labels = {r[7] for r in rows}
    assert any(lbl.startswith("S1,U") for lbl in labels)
    assert any(lbl.startswith("S2,U") for lbl in labels)

    _, _, bheader, brows = read_csv(tmp_path / "s2_boundary.csv")
    assert bheader == ["kind", "value1", "value2"]
    assert {r[0] for r in brows} == {"quantum", "classical"}


def test_chaos_both_models(tmp_path):
    out = tmp_path / "ch"
    assert run(tmp_path, "chaos", "--param", "N=5", "--range", "0.5:1.3",
               "--steps", "2", "--transient", "20", "--record", "30",
               "--realizations", "2", "--bins", "20", "--seed", "9",
               "--out", str(out)) == 0
    _, config, header, rows = read_csv(out.with_suffix(".csv"))
    assert header == ["model", "value", "bin_lo", "bin_hi", "weight"]
    assert len(rows) == 2 * 2 * 20
    assert config["param"]["J"] == -1.0 and config["param"]["T"] == 2.0
    models = {r[0] for r in rows}
    assert models == {"classical", "quantum"}
    # bins tile [0, N]
    lows = sorted({float(r[2]) for r in rows})
    assert lows[0] == 0.0 and abs(lows[-1] + 0.25 - 5.0) < 1e-12

    side = json.loads(out.with_suffix(".json").read_text())
    assert side["column_seeds"] == [9, 10]
    assert all(c["occupied_bins"] >= 1 for c in side["columns"])


def test_chaos_classical_only(tmp_path):
    out = tmp_path / "chc"
    assert run(tmp_path, "chaos", "--model", "classical", "--param", "N=5",
               "--range", "0.5:1.3", "--steps", "2", "--transient", "20",
               "--record", "30", "--bins", "20", "--out", str(out)) == 0
    _, _, _, rows = read_csv(out.with_suffix(".csv"))
    assert {r[0] for r in rows} == {"classical"}
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["column_seeds"] == []
    assert all("cluster_centers" in c for c in side["columns"])


def test_chaos_large_n_needs_flag(tmp_path):
    out = str(tmp_path / "big")
    code = cli.main(["chaos", "--model", "quantum", "--param", "N=101",
                     "--steps", "1", "--transient", "1", "--record", "2",
                     "--realizations", "1", "--out", out])
    assert code == 2


def test_config_file_with_flag_override(tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({
        "param": {"N": 12, "U": 0.6}, "axis": "U",
        "range": "0.2:1.0", "steps": 5}))
    out = tmp_path / "cfg"
    assert run(tmp_path, "sweep1d", "--config", str(conf),
               "--steps", "3", "--out", str(out)) == 0
    side = json.loads(out.with_suffix(".json").read_text())
    c = side["config"]
    assert c["steps"] == 3            # flag wins
    assert c["range"] == "0.2:1.0"    # file value survives
    assert c["param"]["N"] == 12
    assert len(side["columns"]) == 3


def test_config_file_param_overridden_by_flag(tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"param": {"N": 12, "U": 0.9}}))
    out = tmp_path / "cfg2"
    assert run(tmp_path, "stationary", "--config", str(conf),
               "--param", "U=0.2", "--out", str(out)) == 0
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["config"]["param"]["U"] == 0.2
    assert side["config"]["param"]["N"] == 12


def test_missing_config_file_exits_two(tmp_path):
    assert cli.main(["stationary", "--config", str(tmp_path / "no.json"),
                     "--out", str(tmp_path / "x")]) == 2


def test_rerun_is_byte_identical(tmp_path):
    args = ["sweep1d", "--param", "N=8", "--range", "0.3:0.9",
            "--steps", "3", "--out", str(tmp_path / "rr")]
    assert cli.main(args) == 0
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert cli.main(args) == 0
    second = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert first == second
    assert len(first) == 3


def test_chaos_rerun_same_seed_identical(tmp_path):
    args = ["chaos", "--param", "N=5", "--steps", "2", "--transient", "10",
            "--record", "20", "--realizations", "2", "--bins", "10",
            "--seed", "4", "--out", str(tmp_path / "cc")]
    assert cli.main(args) == 0
    first = (tmp_path / "cc.csv").read_bytes()
    assert cli.main(args) == 0
    assert (tmp_path / "cc.csv").read_bytes() == first


def test_chaos_different_seed_differs(tmp_path):
    base = ["chaos", "--model", "quantum", "--param", "N=5", "--steps", "1",
            "--transient", "10", "--record", "40", "--realizations", "2",
            "--bins", "10"]
    assert cli.main(base + ["--seed", "1", "--out",
                            str(tmp_path / "a")]) == 0
    assert cli.main(base + ["--seed", "2", "--out",
                            str(tmp_path / "b")]) == 0
    assert (tmp_path / "a.csv").read_text().splitlines()[3:] != \
        (tmp_path / "b.csv").read_text().splitlines()[3:]


def test_json_format_single_file(tmp_path):
    out = tmp_path / "jf"
    assert run(tmp_path, "sweep1d", "--param", "N=8", "--range", "0.3:0.9",
               "--steps", "3", "--format", "json", "--out", str(out)) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["jf.json"]
    blob = json.loads(out.with_suffix(".json").read_text())
    assert blob["schema_version"] == 1
    assert blob["table"]["header"][0] == "axis"
    assert blob["table_classical"]["header"] == \
        ["axis", "value", "n", "stability"]
    assert len(blob["table"]["rows"]) == 3 * 9


def test_default_out_prefix(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["spectrum", "--param", "N=6"]) == 0
    assert (tmp_path / "spectrum.csv").exists()
    assert (tmp_path / "spectrum.json").exists()


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bosedimer.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "stationary" in proc.stdout and "chaos" in proc.stdout
