import csv
import json
import math
from pathlib import Path

import pytest

from limfb import harness
from limfb.cli import ANALYTIC_OPS, main
from limfb.errors import ConfigError
from limfb.harness import config_from_dict, load_config, run, validate
from limfb.results import CSV_COLUMNS, CurveResult, CurveRow

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def small_fig1(tmp_path, seed=7, **extra):
    raw = {
        "experiment": "fig1_mrt_rate_vs_B",
        "params": {"N": 4, "beta": 4.0},
        "sweep": {"axis": "B", "grid": [0, 2, 4]},
        "n_iter": 300,
        "seed": seed,
        "output": {"dir": str(tmp_path), "stem": "fig1_small"},
    }
    raw.update(extra)
    return raw


def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


# ---------------------------------------------------------------- config


class TestConfig:
    def test_shipped_configs_load(self):
        paths = sorted(CONFIG_DIR.glob("*.json"))
        assert len(paths) >= 7
        for path in paths:
            assert load_config(path).experiment in harness.EXPERIMENTS

    def test_beta_two_rejected(self):
        with pytest.raises(ConfigError, match="pathloss exponent must exceed 2") as info:
            config_from_dict({"experiment": "fig1_mrt_rate_vs_B", "params": {"beta": 2.0}, "seed": 1})
        assert info.value.path == "params.beta"

    def test_zf_single_antenna_rejected(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict({"experiment": "fig3_zf_rate_vs_B", "params": {"N": 1}, "seed": 1})
        assert info.value.path == "params.N"

    def test_experiment_mode_mismatch(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict({"experiment": "fig1_mrt_rate_vs_B", "params": {"mode": "ZF"}})
        assert info.value.path == "params.mode"

    @pytest.mark.parametrize(
        "patch,path",
        [
            ({"colour": 1}, "colour"),
            ({"params": {"M": 3}}, "params.M"),
            ({"sweep": {"grid": [0, 2, 2]}}, "sweep.grid"),
            ({"sweep": {"grid": []}}, "sweep.grid"),
            ({"sweep": {"grid": [0, 1.5]}}, "sweep.grid[1]"),
            ({"sweep": {"axis": "Tc"}}, "sweep.axis"),
            ({"n_iter": 50}, "n_iter"),
            ({"seed": -1}, "seed"),
            ({"quantizer": "LLOYD"}, "quantizer"),
            ({"output": {"folder": "x"}}, "output.folder"),
            ({"experiment": "fig9"}, "experiment"),
        ],
    )
    def test_field_paths(self, tmp_path, patch, path):
        raw = small_fig1(tmp_path)
        raw.update(patch)
        with pytest.raises(ConfigError) as info:
            config_from_dict(raw)
        assert info.value.path == path

    def test_small_n_iter_allowed_without_simulation(self, tmp_path):
        cfg = config_from_dict(small_fig1(tmp_path, n_iter=10, simulate=False))
        assert cfg.n_iter == 10

    def test_defaults_follow_figures(self):
        cfg = config_from_dict({"experiment": "fig2_mrt_bstar_vs_Tc"})
        assert cfg.grid == harness.DEFAULT_TC_GRID
        assert cfg.beta == 4.0 and cfg.n_iter == 5000
        assert cfg.lambda_bs == pytest.approx(1e-5 / math.pi)
        assert config_from_dict({"experiment": "fig1_mrt_rate_vs_B"}).grid == tuple(range(21))

    def test_missing_seed_auto_and_echoed(self, tmp_path):
        raw = small_fig1(tmp_path)
        del raw["seed"]
        report = validate(config_from_dict(raw))
        assert report["seed_source"] == "auto"
        assert isinstance(report["config"]["seed"], int)

    def test_bad_files(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(bad)


# ---------------------------------------------------------------- results


class TestResults:
    def test_csv_round_trip(self, tmp_path):
        res = CurveResult([CurveRow(2.0, "b", 0.5, 0.4, 0.6, "simulation"),
                           CurveRow(1.0, "a", 1.25),
                           CurveRow(3.0, "a", math.nan, status="failed:X")])
        path = res.write_csv(tmp_path / "r.csv")
        with path.open() as fh:
            assert next(csv.reader(fh)) == list(CSV_COLUMNS)
        back = CurveResult.read_csv(path)
        assert [r.series for r in back] == ["a", "a", "b"]
        assert back.rows[0].value == 1.25 and math.isnan(back.rows[1].value)
        assert back.rows[1].status == "failed:X"


# ---------------------------------------------------------------- experiments


class TestRun:
    def test_fig1_rows_and_metadata(self, tmp_path):
        out = run(config_from_dict(small_fig1(tmp_path)))
        assert out.csv_path.exists() and out.json_path.exists()
        assert set(out.result.series_names()) == {"analytic_scvq", "lower_bound", "simulation_rvq"}
        for r in out.result:
            assert r.ci_low <= r.value <= r.ci_high
            if r.source != "simulation":
                assert r.ci_low == r.value == r.ci_high
        meta = json.loads(out.json_path.read_text())
        for key in ("config", "seed", "wall_time_s", "discards", "library_version", "failed_rows"):
            assert key in meta
        assert meta["seed"] == 7 and meta["failed_rows"] == 0

    def test_same_seed_byte_identical(self, tmp_path):
        a = run(config_from_dict(small_fig1(tmp_path / "a", seed=11)))
        b = run(config_from_dict(small_fig1(tmp_path / "b", seed=11)))
        assert a.csv_path.read_bytes() == b.csv_path.read_bytes()
        c = run(config_from_dict(small_fig1(tmp_path / "c", seed=12)))
        assert a.csv_path.read_bytes() != c.csv_path.read_bytes()

    def test_thread_count_does_not_change_output(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LIMFB_THREADS", "1")
        a = run(config_from_dict(small_fig1(tmp_path / "a")))
        monkeypatch.setenv("LIMFB_THREADS", "3")
        b = run(config_from_dict(small_fig1(tmp_path / "b")))
        assert a.csv_path.read_bytes() == b.csv_path.read_bytes()

    def test_metadata_reruns(self, tmp_path):
        raw = small_fig1(tmp_path / "first")
        del raw["seed"]
        first = run(config_from_dict(raw))
        assert first.metadata["seed_source"] == "auto"
        echo = first.metadata["config"]
        again = run(harness.ExperimentConfig(**{
            **echo, "grid": tuple(echo["grid"]), "quantities": tuple(echo["quantities"]),
            "mode": harness.Mode(echo["mode"]), "quantizer": harness.sim.Quantizer(echo["quantizer"]),
            "net_rate_basis": harness.NetRateBasis(echo["net_rate_basis"]),
            "out_dir": str(tmp_path / "second"),
        }))
        assert first.csv_path.read_bytes() == again.csv_path.read_bytes()

    def test_fig2_reference_point(self, tmp_path):
        raw = {"experiment": "fig2_mrt_bstar_vs_Tc", "sweep": {"grid": [100, 1000]},
               "output": {"dir": str(tmp_path)}}
        out = run(config_from_dict(raw))
        rows = {r.series: r.value for r in out.result if r.x == 1000}
        assert rows["bound_ceil"] == 23
        assert rows["bound_raw"] == pytest.approx(22.16, abs=5e-3)
        assert rows["optimum_exhaustive"] >= 23

    def test_fig4_series(self, tmp_path):
        raw = {"experiment": "fig4_zf_bstar_vs_Tc", "sweep": {"grid": [100, 1000]},
               "output": {"dir": str(tmp_path)}}
        out = run(config_from_dict(raw))
        rows = {r.series: r.value for r in out.result if r.x == 1000}
        assert rows["bound_ceil"] == 48
        assert abs(rows["optimum_exhaustive"] - rows["bound_ceil"]) <= 4

    def test_fig5_single_crossover(self, tmp_path):
        cfg = load_config(CONFIG_DIR / "fig5_crossover.json").with_out_dir(tmp_path)
        out = run(cfg)
        report = out.metadata["crossover"]
        assert report["sign_changes"] == 1
        assert report["mrt_wins_at_smallest_Tc"] and report["zf_wins_at_largest_Tc"]
        lo, hi = report["crossovers"][0]["between"]
        assert lo < report["crossovers"][0]["threshold_Tc"] < hi

    def test_ccdf_experiment(self, tmp_path):
        raw = {"experiment": "ccdf", "params": {"N": 2, "B": 4, "mode": "ZF"},
               "sweep": {"grid": [0.1, 1.0, 10.0]}, "n_iter": 2000, "seed": 3,
               "output": {"dir": str(tmp_path)}}
        out = run(config_from_dict(raw))
        ana = out.result.values("analytic")
        emp = out.result.values("simulation_scvq")
        assert all(abs(a - e) < 0.05 for a, e in zip(ana, emp))

    def test_custom_sweep_flags_failed_rows(self, tmp_path):
        raw = {"experiment": "custom_sweep", "params": {"B": 6},
               "sweep": {"axis": "N", "grid": [8, 9]}, "quantities": ["ccdf", "rate"],
               "seed": 1, "output": {"dir": str(tmp_path)}}
        out = run(config_from_dict(raw))
        status = {(r.x, r.series): r.status for r in out.result}
        assert status[(8.0, "ccdf")] == "ok"
        assert status[(9.0, "ccdf")] == "failed:DomainError"
        assert status[(9.0, "rate")] == "ok"
        assert out.failed_rows == 1

    def test_analytic_above_simulation(self, tmp_path):
        raw = small_fig1(tmp_path, n_iter=2000)
        raw["sweep"] = {"grid": [2, 6, 10]}
        out = run(config_from_dict(raw))
        for ana, sim_row in zip(out.result.series("analytic_scvq"), out.result.series("simulation_rvq")):
            assert ana.value >= sim_row.ci_low


# ---------------------------------------------------------------- threads


class TestThreads:
    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv("LIMFB_THREADS", "3")
        assert harness.thread_cap() == 3
        monkeypatch.setenv("LIMFB_THREADS", "0")
        assert harness.thread_cap() == 1

    def test_env_invalid(self, monkeypatch):
        monkeypatch.setenv("LIMFB_THREADS", "many")
        with pytest.raises(ConfigError):
            harness.thread_cap()

    def test_default(self, monkeypatch):
        monkeypatch.delenv("LIMFB_THREADS", raising=False)
        assert 1 <= harness.thread_cap() <= 4


# ---------------------------------------------------------------- CLI


class TestCli:
    def test_analytic_prints_number(self, capsys):
        assert main(["analytic", "mrt_b_lower", "--N", "4", "--beta", "4", "--Tc", "1000"]) == 0
        assert float(capsys.readouterr().out) == pytest.approx(22.16, abs=5e-3)

    def test_analytic_ccdf(self, capsys):
        assert main(["analytic", "zf_sir_ccdf", "--N", "4", "--B", "10", "--beta", "4", "--gamma", "1"]) == 0
        assert 0.0 < float(capsys.readouterr().out) < 1.0

    @pytest.mark.parametrize("op", sorted(ANALYTIC_OPS))
    def test_every_op_runs(self, op, capsys):
        args = {"N": "4", "beta": "4", "B": "6", "Tc": "1000", "gamma": "1"}
        argv = ["analytic", op]
        for name in ANALYTIC_OPS[op][0]:
            argv += [f"--{name}", args[name]]
        assert main(argv) == 0
        assert math.isfinite(float(capsys.readouterr().out))

    def test_analytic_errors(self, capsys):
        assert main(["analytic", "no_such_op"]) == 2
        assert main(["analytic", "mrt_rate", "--N", "4"]) == 2
        assert main(["analytic", "mrt_rate", "--N", "4", "--beta", "2", "--B", "1"]) == 2
        assert main(["analytic", "mrt_sir_ccdf", "--N", "9", "--beta", "4", "--B", "1", "--gamma", "1"]) == 2
        assert main(["frobnicate"]) == 2

    def test_validate(self, tmp_path, capsys):
        path = write_config(tmp_path, small_fig1(tmp_path))
        assert main(["validate", "--config", str(path)]) == 0
        assert json.loads(capsys.readouterr().out)["valid"] is True

    def test_validate_rejects(self, tmp_path, capsys):
        raw = small_fig1(tmp_path)
        raw["params"]["beta"] = 2.0
        path = write_config(tmp_path, raw)
        assert main(["validate", "--config", str(path)]) == 2
        assert "params.beta" in capsys.readouterr().err

    def test_run_with_overrides(self, tmp_path):
        path = write_config(tmp_path, small_fig1(tmp_path / "ignored"))
        out_dir = tmp_path / "override"
        assert main(["run", "--config", str(path), "--seed", "99", "--out", str(out_dir)]) == 0
        meta = json.loads((out_dir / "fig1_small.json").read_text())
        assert meta["seed"] == 99
        assert not (tmp_path / "ignored").exists()

    def test_partial_failure_exit_codes(self, tmp_path):
        raw = {"experiment": "custom_sweep", "params": {"B": 6},
               "sweep": {"axis": "N", "grid": [8, 9]}, "quantities": ["ccdf"],
               "seed": 1, "output": {"dir": str(tmp_path)}}
        path = write_config(tmp_path, raw)
        assert main(["run", "--config", str(path)]) == 3
        assert main(["run", "--config", str(path), "--allow-partial"]) == 0
