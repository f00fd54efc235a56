import csv
import json
import subprocess
import sys

import pytest

from metastable.cli import CONFIG_KEYS, ConfigError, build_parser, main, parse_config_text


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


class TestConfigFile:
    def test_parse(self):
        cfg = parse_config_text("""
            # comment line
            weights = [0.5, 0.5]   # trailing comment
            beta = 0.5
            engine = ulam
            schedule = [0.05, 0.02]
        """)
        assert cfg == {"weights": [0.5, 0.5], "beta": 0.5, "engine": "ulam",
                       "schedule": [0.05, 0.02]}

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_config_text("bogus = 1")

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            parse_config_text("weights [0.5]")

    def test_cli_overrides_file(self, tmp_path):
        (tmp_path / "c.cfg").write_text("engine = orbit\nsteps = 10\nburn_in = 100\n")
        # the file alone is invalid (steps < burn_in); the flag repairs it
        assert main(["density", "--config", str(tmp_path / "c.cfg"), "--out", str(tmp_path),
                     "--engine", "exact"]) == 0

    def test_seed_from_file(self, tmp_path):
        (tmp_path / "c.cfg").write_text("seed = 123\nengine = orbit\nsteps = 20000\n")
        assert main(["density", "--config", str(tmp_path / "c.cfg"), "--out", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "f_eps_orbit.meta.json").read_text())["seed"] == 123


class TestHelp:
    @pytest.mark.parametrize("command", ["build", "validate", "density", "sweep", "extreme",
                                         "example"])
    def test_lists_every_key(self, command, capsys):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args([command, "--help"])
        assert info.value.code == 0
        text = capsys.readouterr().out
        for key, *_ in CONFIG_KEYS:
            assert f"--{key}" in text
        for flag in ("--config", "--out", "--seed"):
            assert flag in text
        assert "[default: 0.4]" in text and "[default: 2000]" in text


class TestBuild:
    def test_example(self, tmp_path):
        assert run(tmp_path, "build") == 0
        for name in ("M.csv", "g.csv", "T.csv", "T_eps.csv", "conditions.json"):
            assert (tmp_path / name).exists()
        assert len((tmp_path / "g.csv").read_text().splitlines()) == 92

    def test_two_cell(self, tmp_path):
        assert run(tmp_path, "build", "--weights", "[0.5,0.5]", "--beta", "0.5") == 0
        rows = list(csv.reader((tmp_path / "g.csv").open()))[1:]
        assert [float(r[0]) for r in rows] == [0.0, 0.375, 0.5, 0.875]
        assert len((tmp_path / "T.csv").read_text().splitlines()) == 9

    def test_infeasible_gate(self, tmp_path, capsys):
        assert run(tmp_path, "build", "--alpha", "0.9", "--eps_scale", "0.02") == 2
        assert "'alpha'" in capsys.readouterr().err

    def test_exclusive_gate_specs(self, tmp_path, capsys):
        assert run(tmp_path, "build", "--alpha", "0.5", "--eps_scale", "0.02",
                   "--eps_A", "0.02") == 2
        assert "not both" in capsys.readouterr().err

    @pytest.mark.parametrize("args, field", [(["--beta", "1.5"], "beta"),
                                             (["--N", "abc"], "N"),
                                             (["--eps_A", "0.5"], "eps_A"),
                                             (["--eps_B", "0.5"], "eps_B"),
                                             (["--gate_slope", "1"], "gate_slope"),
                                             (["--weights", "[0.2,0.2]"], "weights"),
                                             (["--target", "nope"], "target"),
                                             (["--seed", "-3"], "--seed")])
    def test_config_errors_name_field(self, tmp_path, capsys, args, field):
        assert run(tmp_path, "build", *args) == 2
        assert f"'{field}'" in capsys.readouterr().err

    def test_hard_failure_exit_3(self, tmp_path):
        assert run(tmp_path, "build", "--weights", "[0.25,0.5,0.25,0.0]", "--beta", "0.5") == 3
        report = json.loads((tmp_path / "conditions.json").read_text())
        assert report["I3"]["status"] == "fail"

    def test_idempotent(self, tmp_path):
        run(tmp_path / "a", "build")
        run(tmp_path / "b", "build")
        for name in ("M.csv", "M.meta.json", "g.csv", "T.csv", "T_eps.csv", "conditions.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestValidate:
    def test_prints_json(self, tmp_path, capsys):
        assert run(tmp_path, "validate") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["I4a"]["status"] == "fail" and report["P2"]["status"] == "pass"


class TestDensity:
    def test_exact(self, tmp_path):
        assert run(tmp_path, "density", "--engine", "exact") == 0
        heights = [float(r.split(",")[2]) for r in
                   (tmp_path / "f_B_exact.csv").read_text().splitlines()[1:]]
        assert max(heights) == 7.5

    def test_both(self, tmp_path, capsys):
        assert run(tmp_path, "density", "--engine", "both", "--seed", "7") == 0
        out = capsys.readouterr().out
        l1 = float(out.strip().splitlines()[-1].split("=")[1])
        assert l1 <= 0.05
        for name in ("f_eps_ulam.csv", "f_eps_orbit.csv", "orbit_stats.csv"):
            assert (tmp_path / name).exists()

    def test_steps_below_burn_in(self, tmp_path):
        assert run(tmp_path, "density", "--engine", "orbit", "--steps", "100",
                   "--burn_in", "1000") == 2

    def test_unknown_engine(self, tmp_path):
        assert run(tmp_path, "density", "--engine", "magic") == 2

    def test_non_convergence_exit_4(self, tmp_path):
        assert run(tmp_path, "density", "--engine", "ulam", "--bins", "300",
                   "--max_iters", "3") == 4
        meta = json.loads((tmp_path / "f_eps_ulam.meta.json").read_text())
        assert meta["iterations"] == 3 and meta["residual"] > 1e-10

    def test_pdf_file(self, tmp_path):
        pdf = tmp_path / "pdf.csv"
        pdf.write_text("# x,f\n0,0\n1,2\n")
        assert run(tmp_path, "density", "--engine", "exact", "--pdf_file", str(pdf),
                   "--N", "2") == 0
        heights = [float(r.split(",")[2]) for r in
                   (tmp_path / "f_B_exact.csv").read_text().splitlines()[1:]]
        assert heights == pytest.approx([0.5, 1.5])


class TestSweeps:
    def test_sweep(self, tmp_path):
        assert run(tmp_path, "sweep", "--alpha", "0.5") == 0
        rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
        assert len(rows) == 4
        l1 = [float(r["l1_to_limit"]) for r in rows]
        assert all(b < a for a, b in zip(l1, l1[1:]))

    def test_increasing_schedule(self, tmp_path):
        assert run(tmp_path, "sweep", "--schedule", "0.01,0.02") == 2

    def test_extreme(self, tmp_path):
        assert run(tmp_path, "extreme", "--mode", "to_fA") == 0
        rows = list(csv.DictReader((tmp_path / "extreme_to_fA.csv").open()))
        assert [float(r["eps_A"]) for r in rows] == pytest.approx([0.01, 0.0025, 0.0004])

    def test_bad_mode(self, tmp_path):
        assert run(tmp_path, "extreme", "--mode", "up") == 2

    def test_sweep_non_convergence(self, tmp_path):
        assert run(tmp_path, "sweep", "--schedule", "[0.05]", "--max_iters", "2") == 4
        assert (tmp_path / "sweep.csv").read_text().count("ulam:unconverged") == 1


class TestExample:
    def test_manifest(self, tmp_path):
        assert run(tmp_path, "example", "--steps", "300000") == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert len(manifest["artifacts"]) >= 6


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "metastable", "validate", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["I3"]["status"] == "pass"
