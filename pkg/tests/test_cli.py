"""Command line front end: config validation, dispatch, output contract."""

import json
import math

import pytest

from qpkam.cli import main, resolve_config
from qpkam.errors import ConfigError


def dioph_config(out_dir, gamma=math.sqrt(2.0)):
    return {
        "mode": "dioph",
        "frequency": {"omega": [1.0], "gamma": gamma},
        "problem": {"sigma": 1.01, "K_max": 40, "nu_values": [1, 2, 5]},
        "output": {"directory": str(out_dir)},
    }


def appl_config(out_dir, **problem_overrides):
    problem = {
        "phi": {"name": "arctan"},
        "f_damp": {"name": "even_arctan"},
        "g_nl": {"name": "arctan", "scale": 2.0 / math.pi},
        "forcing": {"modes": [{"k": [1, 0], "amp": 1.0},
                              {"k": [0, 1], "amp": 0.5}]},
        "amplitude": 50.0,
        "n_periods": 50,
        "method": "rk4",
    }
    problem.update(problem_overrides)
    return {
        "mode": "appl-run",
        "frequency": {"mu": [math.sqrt(2.0), math.sqrt(3.0)], "omega0": 1.0},
        "problem": problem,
        "output": {"directory": str(out_dir)},
    }


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestResolveConfig:
    def test_round_trip_with_defaults(self, tmp_path):
        cfg = resolve_config(dioph_config(tmp_path))
        assert cfg["mode"] == "dioph"
        assert cfg["frequency"] == {"omega": [1.0], "gamma": math.sqrt(2.0)}
        assert cfg["problem"]["K_max"] == 40
        assert cfg["output"]["formats"] == ["csv", "json"]
        assert cfg["seed"] == 0

    def test_unknown_key_named(self, tmp_path):
        doc = dioph_config(tmp_path)
        doc["problem"]["bogus_knob"] = 3
        with pytest.raises(ConfigError) as exc:
            resolve_config(doc)
        assert any("unknown-key" in p and "bogus_knob" in p
                   for p in exc.value.problems)

    def test_missing_field_named(self, tmp_path):
        doc = dioph_config(tmp_path)
        del doc["problem"]["sigma"]
        with pytest.raises(ConfigError) as exc:
            resolve_config(doc)
        assert any("missing-field" in p and "sigma" in p
                   for p in exc.value.problems)

    def test_range_violation_named(self, tmp_path):
        doc = dioph_config(tmp_path)
        doc["problem"]["sigma"] = 0.5      # must exceed the frequency count
        with pytest.raises(ConfigError) as exc:
            resolve_config(doc)
        assert any("range-violation" in p and "sigma" in p
                   for p in exc.value.problems)

    def test_mode_subcommand_mismatch(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            resolve_config(dioph_config(tmp_path), mode="kam-run")
        assert any("range-violation" in p and "mode" in p
                   for p in exc.value.problems)

    def test_bad_integrator_name(self, tmp_path):
        doc = appl_config(tmp_path, method="Euler")
        with pytest.raises(ConfigError) as exc:
            resolve_config(doc)
        assert any("range-violation" in p and "method" in p
                   for p in exc.value.problems)

    def test_problems_are_collected_not_first_only(self, tmp_path):
        doc = dioph_config(tmp_path)
        del doc["problem"]["sigma"]
        doc["problem"]["bogus_knob"] = 3
        with pytest.raises(ConfigError) as exc:
            resolve_config(doc)
        assert len(exc.value.problems) >= 2


class TestExitCodes:
    def test_success_prints_record_count(self, tmp_path, capsys):
        path = write_config(tmp_path, dioph_config(tmp_path / "out"))
        assert main(["dioph", "--config", path]) == 0
        out = capsys.readouterr().out
        assert "dioph" in out and "records" in out

    def test_config_error_is_exit_1(self, tmp_path, capsys):
        doc = dioph_config(tmp_path / "out")
        del doc["problem"]["sigma"]
        path = write_config(tmp_path, doc)
        assert main(["dioph", "--config", path]) == 1
        assert "sigma" in capsys.readouterr().err

    def test_missing_config_file_is_exit_1(self, tmp_path, capsys):
        assert main(["dioph", "--config", str(tmp_path / "nope.json")]) == 1
        assert "config error" in capsys.readouterr().err

    def test_scientific_failure_is_exit_2(self, tmp_path, capsys):
        # gamma = 0.5 with omega = (1,) has an exact resonance
        doc = dioph_config(tmp_path / "out", gamma=0.5)
        path = write_config(tmp_path, doc)
        assert main(["dioph", "--config", path]) == 2
        assert "scientific failure" in capsys.readouterr().err


class TestOutputs:
    def test_dioph_outputs_and_reproducibility(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, dioph_config(out))
        assert main(["dioph", "--config", path]) == 0
        files = {n: (out / n).read_bytes()
                 for n in ("resolved_config.json", "report.json",
                           "results.csv")}
        report = json.loads(files["report.json"])
        # scan minimum of |<k, omega> gamma + l| weighted by |k|^sigma
        assert abs(report["summary"]["certificate"]["c0"]
                   - 0.3455325179520259) < 1e-15
        sums = {d["nu"]: d for d in report["summary"]["divisor_sums"]}
        assert abs(sums[1]["sum"] - 1.0) < 1e-12
        assert abs(sums[2]["sum"] - 13.25) < 1e-10
        assert all(d["sum"] <= d["bound"] for d in sums.values())
        header = files["results.csv"].decode().splitlines()[0]
        assert header == "radius,worst_divisor,running_c0"
        # reruns are byte identical
        assert main(["dioph", "--config", path]) == 0
        for name, blob in files.items():
            assert (out / name).read_bytes() == blob, name

    def test_smooth_demo(self, tmp_path):
        out = tmp_path / "out"
        doc = {
            "mode": "smooth-demo",
            "problem": {"p_test": [1.0, 2.5],
                        "deltas": [0.3, 0.2, 0.1, 0.05, 0.02, 0.01]},
            "output": {"directory": str(out)},
        }
        path = write_config(tmp_path, doc)
        assert main(["smooth-demo", "--config", path]) == 0
        report = json.loads((out / "report.json").read_text())
        for p, slope in report["summary"]["slopes"].items():
            assert abs(slope - float(p)) <= 0.3
        header = (out / "results.csv").read_text().splitlines()[0]
        assert header == "p_test,delta,sup_error"

    def test_kam_run(self, tmp_path):
        out = tmp_path / "out"
        doc = {
            "mode": "kam-run",
            "frequency": {"omega": [1.0], "gamma": math.sqrt(2.0)},
            "truncation": {"K_max": 6, "L_max": 6, "D_y": 6, "r": 1.0},
            "schedule": {"epsilon": 1e-3, "mu": 0.01, "n_max": 2},
            "problem": {"modes": [
                {"target": "f", "k": [1], "l": 0, "amplitude": 1e-3},
                {"target": "g", "k": [1], "l": 1, "amplitude": 1e-3},
            ]},
            "output": {"directory": str(out)},
        }
        path = write_config(tmp_path, doc)
        assert main(["kam-run", "--config", path]) == 0
        report = json.loads((out / "report.json").read_text())
        hist = report["summary"]
        assert hist["final_norms"]["f"] < 1e-6
        assert hist["final_norms"]["g"] < 1e-6
        lines = (out / "results.csv").read_text().splitlines()
        assert lines[0] == "n,f_hat,g_hat,u,v,f_next_sup,g_next_sup"
        assert len(lines) >= 1 + 2
        for line in lines[1:]:          # plain float reprs, no numpy noise
            assert all(float(cell) >= 0 for cell in line.split(","))

    def test_twist_sim_thread_ordering(self, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        doc = {
            "mode": "twist-sim",
            "frequency": {"omega": [1.0], "gamma": math.sqrt(2.0)},
            "problem": {
                "a_modes": [{"k": [1]}], "b_modes": [{"k": [1]}],
                "amplitude": 1e-3,
                "y0_values": [0.1, 0.2, 0.3, 0.4],
                "n_iter": 1500,
            },
            "output": {"directory": str(out1)},
        }
        path = write_config(tmp_path, doc)
        assert main(["twist-sim", "--config", path]) == 0
        doc["output"]["directory"] = str(out2)
        path2 = write_config(tmp_path, doc, name="config2.json")
        assert main(["twist-sim", "--config", path2, "--threads", "4"]) == 0
        csv1 = (out1 / "results.csv").read_text()
        csv2 = (out2 / "results.csv").read_text()
        assert csv1 == csv2              # worker count never reorders rows
        ids = [line.split(",")[0] for line in csv1.splitlines()[1:]]
        assert ids == ["0", "1", "2", "3"]
        report = json.loads((out1 / "report.json").read_text())
        assert report["summary"]["reversibility_residual"] <= 1e-9

    def test_appl_run(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, appl_config(out))
        assert main(["appl-run", "--config", path]) == 0
        report = json.loads((out / "report.json").read_text())
        s = report["summary"]
        assert abs(s["twist_coefficient"] + (math.pi**2 + 4.0)) < 1e-12
        assert s["sections"] == 50
        assert not s["escaped"]
        assert s["bounds_ratio"] < 2.0

    def test_no_subcommand_is_exit_1(self, capsys):
        assert main([]) == 1
        capsys.readouterr()
