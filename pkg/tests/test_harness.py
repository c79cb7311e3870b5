from pandas import DataFrame
from py4tcp.custom_types import ExperimentConfig, ExperimentKind, LogBase
from py4tcp.exceptions import ConfigError, DatasetFormatError, EmitError, Py4TcpException
from py4tcp.harness.config import read_config_values, resolve_config
from py4tcp.harness.datasets import load_scores_csv, plugin_cond_stats, synthesize_scores, write_scores_csv
from py4tcp.harness.emit import emit, read_emitted, render
from py4tcp.harness.experiments import BOUNDS_COLUMNS, Experiments
from py4tcp.predictors import symmetric_cond_stats
from py4tcp.prob_core import gaussian_q_inv
from py4tcp.session import TcpSession
from py4tcp.utils import convert_rows_to_pandas
import json
import numpy as np
import pytest


def _write(path, text: str) -> str:
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestScoreCsv:

    def test_valid_file(self, tmp_path):
        dataset = load_scores_csv(_write(tmp_path / "ok.csv", "p_0,p_1,label\n0.7,0.3,0\n0.2,0.8,1\n"))
        assert dataset.n_rows == 2 and dataset.m_classes == 2
        np.testing.assert_array_equal(dataset.labels, [0, 1])
        np.testing.assert_allclose(dataset.probs, [[0.7, 0.3], [0.2, 0.8]])

    @pytest.mark.parametrize("text, line", [
        ("p_0,p_1,label\n0.7,0.3,0\n0.2,0.7,1\n", 3),
        ("a,b,label\n0.7,0.3,0\n", 1),
        ("p_0,p_1,label\n0.7,abc,0\n", 2),
        ("p_0,p_1,label\n0.7,0.3,0\n0.2,0.8,2\n", 3),
        ("p_0,p_1,label\n1.2,-0.2,0\n", 2),
        ("p_0,p_1,label\n0.7,0.3,0\n0.7,0.3,0,5\n", 3),
        ("", 1),
    ])
    def test_errors_carry_line(self, tmp_path, text, line):
        with pytest.raises(DatasetFormatError) as exc:
            load_scores_csv(_write(tmp_path / "bad.csv", text))
        assert exc.value.line == line
        assert f"line {line}" in str(exc.value)

    def test_write_and_load(self, tmp_path, noisy_labels):
        dataset = synthesize_scores(noisy_labels, 50, seed=1)
        path = str(tmp_path / "scores.csv")
        write_scores_csv(dataset, path)
        loaded = load_scores_csv(path)
        np.testing.assert_array_equal(loaded.probs, dataset.probs)
        np.testing.assert_array_equal(loaded.labels, dataset.labels)

    def test_plugin_statistics(self, noisy_labels):
        stats, h_se, sigma_se = plugin_cond_stats(synthesize_scores(noisy_labels, 20_000, seed=0))
        exact = symmetric_cond_stats(noisy_labels)
        assert abs(stats.h - exact.h) <= 4 * h_se
        assert abs(stats.sigma - exact.sigma) <= 4 * sigma_se


class TestEmit:

    def test_header_only_for_no_rows(self, tmp_path):
        df = convert_rows_to_pandas([], LogBase.NATS, BOUNDS_COLUMNS)
        path = emit(df, "csv", str(tmp_path / "empty.csv"), {"kind": "bounds_curve"})
        loaded, meta = read_emitted(path)
        assert len(loaded) == 0
        assert list(loaded.columns) == BOUNDS_COLUMNS
        assert meta == {"kind": "bounds_curve", "git_describe": "unknown"}

    def test_csv_floats_survive(self, tmp_path):
        values = [0.1, 1.0 / 3.0, -np.inf, 1e-300, 0.5448054310393]
        df = DataFrame({"n": [1, 2, 3, 4, 5], "value_nats": values})
        path = emit(df, "csv", str(tmp_path / "out.csv"), {"alpha": 0.1, "n_grid": [1, 2]})
        loaded, meta = read_emitted(path)
        np.testing.assert_array_equal(loaded["value_nats"].to_numpy(), values)
        assert meta["alpha"] == 0.1 and meta["n_grid"] == [1, 2]
        with open(path, encoding="utf-8") as handle:
            assert handle.readline() == "# alpha: 0.1\n"

    def test_json(self, tmp_path):
        df = DataFrame({"n": [1, 2], "value_nats": [0.25, np.inf]})
        path = emit(df, "json", str(tmp_path / "out.json"), {"alpha": 0.1})
        with open(path, encoding="utf-8") as handle:
            document = json.load(handle)
        assert set(document) == {"meta", "rows"}
        loaded, meta = read_emitted(path)
        np.testing.assert_array_equal(loaded["value_nats"].to_numpy(), [0.25, np.inf])
        assert meta["git_describe"] == "unknown"

    def test_render_is_deterministic(self):
        df = DataFrame({"n": [1], "value_nats": [0.1]})
        assert render(df, "csv", {"a": 1}) == render(df.copy(), "csv", {"a": 1})

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(EmitError) as exc:
            emit(DataFrame({"n": [1]}), "csv", str(tmp_path / "missing" / "out.csv"))
        assert exc.value.path.endswith("out.csv")


class TestConfig:

    def test_json_and_toml(self, tmp_path):
        from_json = read_config_values(_write(tmp_path / "c.json", '{"kind": "bounds_curve", "alpha": 0.05}'))
        from_toml = read_config_values(_write(tmp_path / "c.toml", 'kind = "bounds_curve"\nalpha = 0.05\n'))
        assert from_json == from_toml == {"kind": "bounds_curve", "alpha": 0.05}

    def test_file_overrides_flags(self, tmp_path):
        path = _write(tmp_path / "c.toml", "alpha = 0.05\nn_grid = [100, 200]\n")
        cfg = resolve_config(ExperimentKind.BOUNDS_CURVE, {"alpha": 0.2, "epsilon": 0.2, "seed": None}, path)
        assert cfg.alpha == 0.05
        assert cfg.epsilon == 0.2
        assert cfg.n_grid == (100, 200)

    def test_kind_defaults(self):
        cfg = resolve_config("bonferroni_compare", {})
        assert cfg.n_grid == (1, 2, 5, 10, 20, 40)
        assert cfg.trials == 500

    @pytest.mark.parametrize("name, text", [
        ("c.json", '{"alhpa": 0.1}'),
        ("c.yaml", "alpha: 0.1"),
        ("c.json", "{not json"),
        ("c.json", "[1, 2]"),
        ("c.json", '{"kind": "gutman_sim"}'),
        ("c.json", '{"kind": "no_such_kind"}'),
        ("c.json", '{"n_grid": [200, 100]}'),
        ("c.json", '{"scores_path": "scores.csv"}'),
    ])
    def test_bad_files(self, tmp_path, name, text):
        with pytest.raises(ConfigError):
            resolve_config(ExperimentKind.BOUNDS_CURVE, {}, _write(tmp_path / name, text))

    def test_from_file(self, tmp_path):
        cfg = ExperimentConfig.from_file(_write(tmp_path / "c.json", '{"kind": "gutman_sim", "lam": 0.1}'))
        assert cfg.kind == ExperimentKind.GUTMAN_SIM and cfg.lam == 0.1
        assert cfg.trials == 10000
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(_write(tmp_path / "d.json", '{"lam": 0.1}'))

    def test_meta_leaves_out_run_only_fields(self):
        meta = ExperimentConfig.for_kind("bounds_curve", workers=4, output="x.csv").to_meta()
        assert "workers" not in meta and "output" not in meta
        assert meta["kind"] == "bounds_curve"

    @pytest.mark.parametrize("kind", ["bounds_curve", "alpha_sweep", "gutman_sim", "exponent_table"])
    def test_scores_only_for_bonferroni(self, kind):
        with pytest.raises(ConfigError, match="only read by bonferroni_compare"):
            ExperimentConfig.for_kind(kind, scores_path="scores.csv")
        assert ExperimentConfig.for_kind("bonferroni_compare", scores_path="scores.csv").scores_path == "scores.csv"


class TestExperiments:

    def test_bounds_curve(self, session, noisy_labels):
        df, meta = Experiments(session).run(ExperimentConfig.for_kind("bounds_curve"))
        stats = symmetric_cond_stats(noisy_labels)
        assert list(df["n"]) == [100, 200, 400, 800, 1600]
        row = df[df["n"] == 100].iloc[0]
        expected = stats.h + stats.sigma * gaussian_q_inv(0.1) / 10 - np.log(100) / 200
        assert row["converse_approx_nats"] == pytest.approx(expected, abs=1e-12)
        assert row["converse_approx_nats"] == pytest.approx(0.69072, abs=1e-4)
        assert meta["achievability_min_n"] == 748
        assert np.isnan(row["achievability_nats"])
        large = df[df["n"] == 1600].iloc[0]
        assert large["converse_exact_nats"] <= large["min_oracle_log_size_nats"] <= large["exact_oracle_log_size_nats"]
        assert large["exact_oracle_log_size_nats"] <= large["achievability_nats"]

    def test_bounds_curve_in_bits(self, session):
        nats, nats_meta = Experiments(session).run(ExperimentConfig.for_kind("bounds_curve", n_grid=(100,)))
        bits, meta = Experiments(session).run(ExperimentConfig.for_kind("bounds_curve", n_grid=(100,),
                                                                        log_base="bits"))
        assert "converse_approx_bits" in bits.columns and "converse_approx_nats" not in bits.columns
        assert bits["converse_approx_bits"].iloc[0] == pytest.approx(nats["converse_approx_nats"].iloc[0] / np.log(2))
        assert meta["log_base"] == "bits"
        assert "sigma_nats" not in meta and "rho_nats3" not in meta
        assert meta["sigma_bits"] == pytest.approx(nats_meta["sigma_nats"] / np.log(2))
        assert meta["rho_bits3"] == pytest.approx(nats_meta["rho_nats3"] / np.log(2) ** 3)

    def test_noiseless_channel(self, session):
        df, meta = Experiments(session).run(ExperimentConfig.for_kind("bounds_curve", epsilon=0.0))
        np.testing.assert_array_equal(df["converse_exact_nats"], 0.0)
        np.testing.assert_array_equal(df["achievability_nats"], 0.0)
        np.testing.assert_array_equal(df["min_oracle_log_size_nats"], 0.0)
        assert meta["achievability_min_n"] is None

    def test_alpha_sweep(self, session):
        df, _ = Experiments(session).run(ExperimentConfig.for_kind("alpha_sweep", alphas=(0.05, 0.1),
                                                                   n_grid=(100, 400)))
        assert len(df) == 4
        assert set(df["alpha"]) == {0.05, 0.1}

    def test_bonferroni_compare(self, session):
        cfg = ExperimentConfig.for_kind("bonferroni_compare", n_grid=(1, 20), trials=50)
        df, meta = Experiments(session).run(cfg)
        assert meta["per_sample_levels"]["20"] == pytest.approx(0.005)
        assert meta["full_set_from_n"] == 20
        row = df[df["n"] == 20].iloc[0]
        assert row["gamma_nats"] == pytest.approx(np.log(10), rel=1e-12)
        assert row["log_m_nats"] == pytest.approx(np.log(10))

    def test_bonferroni_on_scores(self, session, tmp_path, noisy_labels):
        path = str(tmp_path / "scores.csv")
        write_scores_csv(synthesize_scores(noisy_labels, 400, seed=2), path)
        cfg = ExperimentConfig.for_kind("bonferroni_compare", scores_path=path, n_grid=(1, 5), trials=20)
        df, meta = Experiments(session).run(cfg)
        assert len(df) == 2
        assert meta["plugin_h_nats"] > 0.0 and meta["plugin_h_se_nats"] > 0.0

    def test_gutman_sim_with_large_threshold(self, session):
        cfg = ExperimentConfig.for_kind("gutman_sim", lam=10.0, n_grid=(20, 40, 60), trials=200)
        df, meta = Experiments(session).run(cfg)
        np.testing.assert_array_equal(df["p_e"], 0.0)
        np.testing.assert_array_equal(df["set_size_2_freq"], 1.0)
        assert meta["set_size_2_exponent_nats"] == 0.0
        assert meta["empty_set_exponent_nats"] == 10.0
        assert meta["set_size_2_slope_nats"] == pytest.approx(0.0, abs=1e-12)

    def test_exponent_table(self, session):
        df, meta = Experiments(session).run(ExperimentConfig.for_kind("exponent_table", instances=2))
        assert list(df["instance"]) == [0, 1, 2]
        assert meta["max_abs_gap_nats"] <= 1e-3
        assert np.all(df["f_solver_nats"] <= df["f_grid_nats"] + 1e-7)

    def test_audit(self, session):
        df, meta = Experiments(session).run(ExperimentConfig.for_kind("theorem1_audit", trials=200))
        assert len(df) == 200
        assert meta["min_slack"] >= -1e-12
        assert np.all(df["predictor_error"] <= df["alpha"])

    def test_errors_raise_or_return_none(self, tmp_path):
        path = _write(tmp_path / "bad.csv", "p_0,p_1,label\n0.7,0.2,0\n")
        cfg = ExperimentConfig.for_kind("bonferroni_compare", scores_path=path, n_grid=(1,), trials=5)
        log_file = str(tmp_path / "tlab_logs.log")
        with pytest.raises(Py4TcpException):
            Experiments(TcpSession(show_prints=False, exception_on_error=True, log_file=log_file)).run(cfg)
        quiet = TcpSession(show_prints=False, exception_on_error=False, log_file=log_file)
        assert Experiments(quiet).run(cfg) == (None, None)

    def test_workers_do_not_change_output_bytes(self, session, tmp_path):
        paths = []
        for workers in (1, 4):
            cfg = ExperimentConfig.for_kind("bonferroni_compare", n_grid=(1, 5), trials=60, workers=workers,
                                            output=str(tmp_path / f"w{workers}.csv"))
            df, meta = Experiments(session).run(cfg)
            paths.append(emit(df, cfg.fmt, cfg.output, meta))
        with open(paths[0], "rb") as first, open(paths[1], "rb") as second:
            assert first.read() == second.read()
