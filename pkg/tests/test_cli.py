import json
import math

import numpy as np
import pytest

from spinboson.cli import (
    ConfigError,
    main,
    normalize_config,
    parse_config,
    parse_config_dict,
    run,
    sweep,
)

FAST_YAML = """
system: {epsilon: 0.0, delta: 0.2}
bath: {s: 1.0, alpha: 0.02, omega_max: 10.0, n_b: 4}
temperature: 0.2
ansatz: {variant: D2, m: 1}
sampling: {n_s: 4, master_seed: 7}
integrator: {scheme: rk4, dt: 0.1, t_final: 2.0}
output: {grid_dt: 0.5}
"""


class TestParsing:
    def test_empty_document_gives_defaults(self):
        cfg = parse_config("")
        assert cfg.system.delta == 0.1
        assert cfg.bath.n_b == 250
        assert cfg.temperature == 0.2
        assert cfg.m == 2
        assert cfg.n_s == 400
        assert cfg.master_seed == 12345
        assert cfg.integrator.t_final == 50.0
        assert cfg.output_format == "tsv"

    def test_partial_override(self):
        cfg = parse_config("bath: {s: 0.6}\ntemperature: 0")
        assert cfg.bath.s == 0.6
        assert cfg.bath.n_b == 250  # untouched default
        assert cfg.beta == math.inf

    def test_beta_is_inverse_temperature(self):
        cfg = parse_config("temperature: 0.2")
        assert cfg.beta == pytest.approx(5.0)

    def test_t_grid(self):
        cfg = parse_config(FAST_YAML)
        np.testing.assert_allclose(cfg.t_grid, [0.0, 0.5, 1.0, 1.5, 2.0])

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="top-level"):
            parse_config("bogus: 1")

    def test_unknown_section_key(self):
        with pytest.raises(ConfigError, match="bath"):
            parse_config("bath: {cutoff: 2.0}")

    def test_bad_variant_message(self):
        with pytest.raises(ConfigError, match="variant"):
            parse_config("ansatz: {variant: D3}")

    def test_bad_temperature(self):
        with pytest.raises(ConfigError, match="temperature"):
            parse_config("temperature: -1")

    def test_bad_n_b_type(self):
        with pytest.raises(ConfigError, match="n_b"):
            parse_config("bath: {n_b: 2.5}")

    def test_bad_format(self):
        with pytest.raises(ConfigError, match="format"):
            parse_config("output: {format: parquet}")

    def test_grid_exceeding_horizon(self):
        with pytest.raises(ConfigError, match="grid_dt"):
            parse_config("output: {grid_dt: 100.0}\nintegrator: {t_final: 2.0}")

    def test_invalid_yaml(self):
        with pytest.raises(ConfigError, match="YAML"):
            parse_config("system: {epsilon: ")

    def test_round_trip_idempotent(self):
        cfg = parse_config(FAST_YAML)
        doc = normalize_config(cfg)
        again = parse_config_dict(doc)
        assert normalize_config(again) == doc

    def test_manifest_replay_dict(self):
        cfg = parse_config(FAST_YAML)
        manifest = {"format_version": 1, "config": normalize_config(cfg)}
        replay = parse_config_dict(manifest)
        assert normalize_config(replay) == normalize_config(cfg)


class TestRun:
    def test_writes_table_and_manifest(self, tmp_path):
        cfg = parse_config(FAST_YAML)
        result, table_path = run(cfg, tmp_path)
        assert table_path.name == "results.tsv"
        lines = table_path.read_text().strip().split("\n")
        assert lines[0].split("\t") == [
            "t", "pz_mean", "pz_stderr", "norm_drift_max", "energy_drift_max", "n_effective",
        ]
        assert len(lines) == 1 + cfg.t_grid.size
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["format_version"] == 1
        assert manifest["config"] == normalize_config(cfg)
        assert "numpy" in manifest["versions"]

    def test_replay_is_bit_exact(self, tmp_path):
        cfg = parse_config(FAST_YAML)
        _, table1 = run(cfg, tmp_path / "a")
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        cfg2 = parse_config_dict(manifest)
        _, table2 = run(cfg2, tmp_path / "b")
        assert table1.read_text() == table2.read_text()

    def test_seed_changes_results(self, tmp_path):
        cfg1 = parse_config(FAST_YAML)
        cfg2 = parse_config(FAST_YAML.replace("master_seed: 7", "master_seed: 8"))
        r1, _ = run(cfg1, tmp_path / "a")
        r2, _ = run(cfg2, tmp_path / "b")
        assert not np.array_equal(r1.pz_mean, r2.pz_mean)

    def test_csv_format(self, tmp_path):
        cfg = parse_config(FAST_YAML + "\noutput: {grid_dt: 0.5, format: csv}")
        _, table_path = run(cfg, tmp_path)
        assert table_path.name == "results.csv"
        assert "," in table_path.read_text().splitlines()[0]

    def test_oracle_compare_column(self, tmp_path):
        # decoupled bath: the analytic column must match the simulated mean
        yaml_text = FAST_YAML.replace("alpha: 0.02", "alpha: 0.0").replace(
            "temperature: 0.2", "temperature: 0"
        ).replace("n_s: 4", "n_s: 1")
        cfg = parse_config(yaml_text)
        _, table_path = run(cfg, tmp_path, oracle_compare=True)
        lines = table_path.read_text().strip().split("\n")
        assert lines[0].split("\t")[-1] == "pz_analytic"
        for line in lines[1:]:
            cells = line.split("\t")
            assert float(cells[1]) == pytest.approx(float(cells[-1]), abs=1e-6)


class TestSweep:
    def base_cfg(self):
        return parse_config(FAST_YAML)

    def test_needs_two_values(self):
        with pytest.raises(ConfigError):
            sweep(self.base_cfg(), "m", [1])

    def test_bad_axis(self):
        with pytest.raises(ConfigError, match="axis"):
            sweep(self.base_cfg(), "temperature", [0.1, 0.2])

    def test_deviation_report(self):
        report, results = sweep(self.base_cfg(), "n_s", [2, 4], threshold=1.0)
        assert report["axis"] == "n_s"
        assert len(report["deviations"]) == 1
        assert report["converged"]
        assert results[0].n_effective == 2
        assert results[1].n_effective == 4

    def test_dt_sweep_converges(self):
        report, _ = sweep(self.base_cfg(), "dt", [0.2, 0.1], threshold=1e-3)
        assert report["deviations"][0] < 1e-3


class TestMain:
    def write_cfg(self, tmp_path, text=FAST_YAML):
        path = tmp_path / "cfg.yaml"
        path.write_text(text)
        return path

    def test_run_command(self, tmp_path, capsys):
        cfg_path = self.write_cfg(tmp_path)
        rc = main(["run", str(cfg_path), "--outdir", str(tmp_path / "out")])
        assert rc == 0
        assert (tmp_path / "out" / "results.tsv").exists()
        assert "4/4 trajectories" in capsys.readouterr().out

    def test_run_from_manifest(self, tmp_path, capsys):
        cfg_path = self.write_cfg(tmp_path)
        assert main(["run", str(cfg_path), "--outdir", str(tmp_path / "a")]) == 0
        rc = main(
            ["run", str(tmp_path / "a" / "manifest.json"), "--outdir", str(tmp_path / "b")]
        )
        assert rc == 0
        assert (tmp_path / "a" / "results.tsv").read_text() == (
            tmp_path / "b" / "results.tsv"
        ).read_text()

    def test_seed_override(self, tmp_path, capsys):
        cfg_path = self.write_cfg(tmp_path)
        assert main(["run", str(cfg_path), "--outdir", str(tmp_path / "a")]) == 0
        assert main(
            ["run", str(cfg_path), "--outdir", str(tmp_path / "b"), "--seed", "99"]
        ) == 0
        a = (tmp_path / "a" / "results.tsv").read_text()
        b = (tmp_path / "b" / "results.tsv").read_text()
        assert a != b
        manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert manifest["config"]["sampling"]["master_seed"] == 99

    def test_sweep_command(self, tmp_path, capsys):
        cfg_path = self.write_cfg(tmp_path)
        rc = main(
            [
                "sweep", str(cfg_path),
                "--axis", "m", "--values", "1,2",
                "--outdir", str(tmp_path / "out"), "--threshold", "1.0",
            ]
        )
        assert rc == 0
        report = json.loads((tmp_path / "out" / "sweep.json").read_text())
        assert report["values"] == [1, 2]
        assert report["converged"]
