import json

import numpy as np

from flowcast import gradcheck
from flowcast.cli import main
from flowcast.synthetic import sinusoid_dataset


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


class TestTrain:
    def test_artifacts_written(self, cli_workspace):
        out = cli_workspace / "out"
        assert (out / "best.ckpt").exists()
        assert (out / "train_log.csv").exists()
        metrics = read_json(out / "metrics.json")
        assert metrics["parameter_count"] > 0
        assert set(metrics["test"]) == {"rmse", "mae", "mape"}
        assert "persistence" in metrics

    def test_train_log_has_expected_columns(self, cli_workspace):
        lines = (cli_workspace / "out" / "train_log.csv").read_text().splitlines()
        assert lines[0] == "epoch,lr,train_huber,train_contrast,val_rmse,val_mae,val_mape"
        assert len(lines) == 3  # header + 2 epochs

    def test_same_seed_reproduces_log_bytes(self, cli_workspace, tmp_path):
        rc1 = main(["train", "--config", str(cli_workspace / "cfg.json"),
                    "--out", str(tmp_path / "a"), "--seed", "7"])
        rc2 = main(["train", "--config", str(cli_workspace / "cfg.json"),
                    "--out", str(tmp_path / "b"), "--seed", "7"])
        assert rc1 == rc2 == 0
        log_a = (tmp_path / "a" / "train_log.csv").read_bytes()
        log_b = (tmp_path / "b" / "train_log.csv").read_bytes()
        assert log_a == log_b
        m_a = read_json(tmp_path / "a" / "metrics.json")
        m_b = read_json(tmp_path / "b" / "metrics.json")
        m_a.pop("timestamp"), m_b.pop("timestamp")
        assert m_a == m_b

    def test_repeat_zero_rejected(self, cli_workspace):
        rc = main(["train", "--config", str(cli_workspace / "cfg.json"), "--repeat", "0"])
        assert rc == 2

    def test_missing_data_file_exits_2_naming_path(self, tmp_path, capsys):
        cfg = {"data": {"path": str(tmp_path / "absent.csv"), "format": "csv"},
               "output": {"dir": str(tmp_path / "out")}}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        rc = main(["train", "--config", str(path)])
        assert rc == 2
        assert "absent.csv" in capsys.readouterr().err

    def test_bin_format_trains_end_to_end(self, tmp_path):
        from flowcast.data import SeriesDataset, save_bin
        ds = sinusoid_dataset(nodes=5, steps=120, seed=8)
        rng = np.random.default_rng(0)
        mask = rng.uniform(size=ds.values.shape) < 0.05
        mask[0] = False
        values = np.where(mask, 0, ds.values).astype(np.float32)
        save_bin(SeriesDataset(values, mask), str(tmp_path / "flows.bin"))
        cfg = {"data": {"path": str(tmp_path / "flows.bin"), "format": "bin"},
               "model": {"channels": [8, 8, 8, 8], "head_hidden": 8},
               "train": {"epochs": 1, "batch_size": 16, "seed": 0},
               "output": {"dir": str(tmp_path / "binout")}}
        (tmp_path / "bin.json").write_text(json.dumps(cfg))
        assert main(["train", "--config", str(tmp_path / "bin.json")]) == 0
        assert main(["eval", str(tmp_path / "binout" / "best.ckpt"),
                     "--out", str(tmp_path / "bineval")]) == 0

    def test_use_es_false_trains_and_has_no_adjacency(self, cli_workspace, tmp_path):
        doc = json.loads((cli_workspace / "cfg.json").read_text())
        doc["model"]["use_es"] = False
        doc["train"]["epochs"] = 1
        doc["output"]["dir"] = str(tmp_path / "noes")
        (tmp_path / "noes.json").write_text(json.dumps(doc))
        assert main(["train", "--config", str(tmp_path / "noes.json")]) == 0
        rc = main(["export-aam", str(tmp_path / "noes" / "best.ckpt"), "0",
                   "--out", str(tmp_path / "noes")])
        assert rc == 2  # no edge graph block, nothing to export

    def test_repeat_aggregates_seeds(self, cli_workspace, tmp_path):
        rc = main(["train", "--config", str(cli_workspace / "cfg.json"),
                   "--out", str(tmp_path / "rep"), "--repeat", "2", "--seed", "11"])
        assert rc == 0
        metrics = read_json(tmp_path / "rep" / "metrics.json")
        assert [r["seed"] for r in metrics["runs"]] == [11, 12]
        assert "test_mae_mean" in metrics and "test_mae_std" in metrics
        assert (tmp_path / "rep" / "best_seed11.ckpt").exists()
        assert (tmp_path / "rep" / "best_seed12.ckpt").exists()


class TestEval:
    def test_reproduces_training_test_metrics_exactly(self, cli_workspace, tmp_path):
        rc = main(["eval", str(cli_workspace / "out" / "best.ckpt"),
                   "--out", str(tmp_path / "eval")])
        assert rc == 0
        trained = read_json(cli_workspace / "out" / "metrics.json")["test"]
        evaled = read_json(tmp_path / "eval" / "metrics.json")["test"]
        assert evaled == trained  # same code path, bit-identical floats

    def test_max_learned_checkpoint_round_trips(self, cli_workspace, tmp_path):
        doc = json.loads((cli_workspace / "cfg.json").read_text())
        doc["model"]["attention_op"] = "max_learned"
        doc["train"]["epochs"] = 1
        doc["output"]["dir"] = str(tmp_path / "ml")
        (tmp_path / "ml.json").write_text(json.dumps(doc))
        assert main(["train", "--config", str(tmp_path / "ml.json")]) == 0
        assert main(["eval", str(tmp_path / "ml" / "best.ckpt"),
                     "--out", str(tmp_path / "mleval")]) == 0
        trained = read_json(tmp_path / "ml" / "metrics.json")["test"]
        evaled = read_json(tmp_path / "mleval" / "metrics.json")["test"]
        assert evaled == trained

    def test_node_count_mismatch_exits_2(self, cli_workspace, tmp_path):
        other = sinusoid_dataset(nodes=4, steps=120, seed=9)
        np.savetxt(tmp_path / "other.csv", other.values, delimiter=",", fmt="%.4f")
        rc = main(["eval", str(cli_workspace / "out" / "best.ckpt"),
                   "--data", str(tmp_path / "other.csv"), "--out", str(tmp_path / "e")])
        assert rc == 2

    def test_corrupt_checkpoint_exits_3(self, cli_workspace, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"XXXXXXXX" + b"\x00" * 100)
        rc = main(["eval", str(bad), "--out", str(tmp_path / "e2")])
        assert rc == 3


class TestPredict:
    def test_forecast_shape(self, cli_workspace, tmp_path):
        rc = main(["predict", str(cli_workspace / "out" / "best.ckpt"), "0",
                   "--out", str(tmp_path / "p")])
        assert rc == 0
        forecast = np.loadtxt(tmp_path / "p" / "forecast_w0.csv", delimiter=",")
        assert forecast.shape == (12, 6)

    def test_window_index_out_of_range_exits_2(self, cli_workspace, tmp_path):
        rc = main(["predict", str(cli_workspace / "out" / "best.ckpt"), "100000",
                   "--out", str(tmp_path / "p2")])
        assert rc == 2


class TestExportAam:
    def test_matrices_satisfy_invariants(self, cli_workspace, tmp_path):
        ckpt = str(cli_workspace / "out" / "best.ckpt")
        assert main(["export-aam", ckpt, "3", "--out", str(tmp_path / "x")]) == 0
        assert main(["export-aam", ckpt, "3", "--reversed", "--out", str(tmp_path / "x")]) == 0
        a = np.loadtxt(tmp_path / "x" / "aam_w3.csv", delimiter=",")
        ar = np.loadtxt(tmp_path / "x" / "aam_reversed_w3.csv", delimiter=",")
        assert a.shape == (6, 6) and ar.shape == (6, 6)
        assert a.min() >= 0.0 and a.max() < 1.0
        assert ar.min() >= 0.0 and ar.max() < 1.0
        assert np.all(a * ar == 0.0)

    def test_45_block_extractable_on_wide_network(self, tmp_path):
        ds = sinusoid_dataset(nodes=50, steps=100, seed=2)
        np.savetxt(tmp_path / "wide.csv", ds.values, delimiter=",", fmt="%.4f")
        cfg = {"data": {"path": str(tmp_path / "wide.csv"), "format": "csv"},
               "model": {"channels": [8, 8, 8, 8], "head_hidden": 8},
               "train": {"epochs": 1, "batch_size": 16, "seed": 0},
               "output": {"dir": str(tmp_path / "wout")}}
        (tmp_path / "wide.json").write_text(json.dumps(cfg))
        assert main(["train", "--config", str(tmp_path / "wide.json")]) == 0
        assert main(["export-aam", str(tmp_path / "wout" / "best.ckpt"), "0",
                     "--out", str(tmp_path / "wout")]) == 0
        a = np.loadtxt(tmp_path / "wout" / "aam_w0.csv", delimiter=",")
        block = a[:45, :45]
        assert block.shape == (45, 45)
        assert block.min() >= 0.0 and block.max() < 1.0


class TestGradcheckCommand:
    def test_fresh_build_passes_listing_each_op_once(self, capsys):
        assert main(["gradcheck", "--seed", "5"]) == 0
        out = capsys.readouterr().out
        lines = [l for l in out.splitlines() if "max_rel_err" in l]
        names = [l.split()[0] for l in lines]
        assert len(names) == len(set(names))
        expected = {case.name for case in gradcheck.default_registry()} | {"full_model"}
        assert set(names) == expected

    def test_broken_op_exits_nonzero(self, monkeypatch, capsys):
        import flowcast.tensor as T

        def broken(x):
            def backward(g):
                T._accumulate(x, 5.0 * g)

            return T._make(x.data * 2.0, (x,), backward, "broken")

        def build(rng):
            x = T.Tensor(rng.normal(size=(3,)), requires_grad=True, dtype=np.float64)
            return {"x": x}, lambda: broken(x).sum()

        monkeypatch.setattr(gradcheck, "default_registry",
                            lambda: [gradcheck.OpCase("broken", build)])
        rc = main(["gradcheck"])
        assert rc == 4
        assert "FAIL" in capsys.readouterr().out

    def test_unknown_size_preset_rejected(self):
        assert main(["gradcheck", "--size", "huge"]) == 2


class TestAblate:
    def test_table3_enumerates_11_cases(self, cli_workspace, tmp_path, capsys):
        rc = main(["ablate", "table3", "--config", str(cli_workspace / "cfg.json"),
                   "--out", str(tmp_path / "abl")])
        assert rc == 0
        doc = read_json(tmp_path / "abl" / "ablation.json")
        assert len(doc["cases"]) == 11
        names = [c["case"] for c in doc["cases"]]
        assert names[0] == "1_backbone_only"
        assert {"8_attention_avg", "9_attention_max_learned",
                "10_representative_middle", "11_representative_first"} <= set(names)
        lambdas = [n for n in names if "lambda" in n]
        assert lambdas == ["4_lambda_0.3", "5_lambda_0.5", "6_lambda_0.7", "7_lambda_0.9"]
        csv_lines = (tmp_path / "abl" / "ablation.csv").read_text().splitlines()
        assert len(csv_lines) == 12

    def test_backbone_only_case_disables_graph_block_and_contrast(self):
        from flowcast.cli import ABLATION_PRESETS
        name, overrides = ABLATION_PRESETS["table3"][0]
        assert name == "1_backbone_only"
        assert overrides == {"use_es": False, "lambda": 0.0}

    def test_unknown_preset_exits_2(self, cli_workspace):
        assert main(["ablate", "table9", "--config", str(cli_workspace / "cfg.json")]) == 2


class TestConfigCommand:
    def test_dump_defaults_parses_and_round_trips(self, capsys, tmp_path):
        assert main(["config", "--dump-defaults"]) == 0
        dumped = capsys.readouterr().out
        doc = json.loads(dumped)
        assert doc["train"]["epochs"] == 50
        assert doc["model"]["lambda"] == 0.1
        path = tmp_path / "defaults.json"
        path.write_text(dumped)
        assert main(["config", "--check", str(path)]) == 0

    def test_invalid_config_check_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"model": {"attention_op": "bogus"}}))
        assert main(["config", "--check", str(path)]) == 2
