import json

import numpy as np
import pytest

from daedl import data, experiment
from daedl.errors import ConfigError

FAST = {"dataset": "two_moons", "n_samples": 200, "max_epochs": 4, "patience": 4,
        "hidden": "8,8", "ood_n": 50}


class TestRunConfig:
    def test_required_key(self):
        with pytest.raises(ConfigError, match="dataset"):
            experiment.from_mapping({"seed": 1})

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="lr"):
            experiment.from_mapping({"dataset": "two_moons", "lr": 0.1})

    def test_coercion(self):
        cfg = experiment.from_mapping({"dataset": "two_moons", "hidden": "16, 8", "sn": "false",
                                       "learning_rate": "0.01", "ablate_seeds": [1, 2], "batch_size": 16.0})
        assert cfg.hidden == (16, 8) and cfg.sn is False and cfg.learning_rate == 0.01
        assert cfg.ablate_seeds == (1, 2) and cfg.batch_size == 16

    @pytest.mark.parametrize("key,value", [("sn", "maybe"), ("batch_size", "x"), ("noise", True),
                                           ("ablate_rows", "eds,xyz"), ("dataset", "cifar"),
                                           ("val_ratio", 1.5), ("patience", 500), ("hidden", "")])
    def test_bad_values(self, key, value):
        with pytest.raises(ConfigError):
            experiment.from_mapping({"dataset": "two_moons", key: value})

    def test_load_config(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"dataset": "blobs", "seed": 3}))
        cfg = experiment.load_config(tmp_path / "c.json", ["seed=5", "noise=0.2"])
        assert (cfg.dataset, cfg.seed, cfg.noise) == ("blobs", 5, 0.2)
        with pytest.raises(ConfigError):
            experiment.load_config(tmp_path / "c.json", ["seed"])
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigError):
            experiment.load_config(tmp_path / "bad.json")

    def test_round_trip(self):
        cfg = experiment.from_mapping(FAST)
        assert experiment.from_mapping(cfg.to_dict()) == cfg
        assert json.loads(json.dumps(cfg.to_dict())) == cfg.to_dict()

    def test_parameterization(self):
        assert experiment.from_mapping({"dataset": "two_moons", "exp": False}).parameterization == "relu_plus_one"


class TestSplits:
    def test_two_moons(self):
        cfg = experiment.from_mapping(FAST)
        s = experiment.build_splits(cfg)
        assert len(s.train) + len(s.val) + len(s.test) == 200
        assert list(s.ood) == ["uniform"] and len(s.ood["uniform"]) == 50

    def test_corruption_sets(self):
        s = experiment.build_splits(experiment.from_mapping({**FAST, "ood": "uniform,rotation:3"}))
        assert set(s.ood) == {"uniform", "rotation:3"}
        np.testing.assert_array_equal(s.ood["rotation:3"].y, s.test.y)

    def test_bad_ood_entry(self):
        with pytest.raises(ConfigError):
            experiment.build_splits(experiment.from_mapping({**FAST, "ood": "swirl:2"}))

    def test_csv(self, tmp_path):
        data.write_csv(tmp_path / "tr.csv", data.two_moons(100, seed=1))
        data.write_csv(tmp_path / "te.csv", data.two_moons(40, seed=2))
        data.write_csv(tmp_path / "ood.csv", data.uniform_ood(30, [[5, 6], [5, 6]]))
        cfg = experiment.from_mapping({"dataset": "csv", "train_path": str(tmp_path / "tr.csv"),
                                       "test_path": str(tmp_path / "te.csv"), "ood": "",
                                       "ood_paths": str(tmp_path / "ood.csv")})
        s = experiment.build_splits(cfg)
        assert len(s.test) == 40 and len(s.train) + len(s.val) == 100 and list(s.ood) == ["ood"]

    def test_csv_dimension_mismatch(self, tmp_path):
        data.write_csv(tmp_path / "tr.csv", data.two_moons(100, seed=1))
        data.write_csv(tmp_path / "ood.csv", data.LabeledDataset(np.zeros((5, 3)), np.zeros(5), 1))
        cfg = experiment.from_mapping({"dataset": "csv", "train_path": str(tmp_path / "tr.csv"),
                                       "ood_paths": str(tmp_path / "ood.csv")})
        with pytest.raises(ConfigError, match="dimension"):
            experiment.build_splits(cfg)

    def test_missing_paths(self):
        with pytest.raises(ConfigError):
            experiment.build_splits(experiment.from_mapping({"dataset": "csv"}))
        with pytest.raises(ConfigError):
            experiment.build_splits(experiment.from_mapping({"dataset": "idx"}))


@pytest.fixture(scope="module")
def fast_run():
    cfg = experiment.from_mapping(FAST)
    return cfg, experiment.train_run(cfg)


class TestEvaluate:
    def test_audit_round_trip(self, tmp_path, fast_run):
        cfg, r = fast_run
        report, table = experiment.evaluate(r.net, r.gda, r.splits.test, r.splits.ood, config=cfg.to_dict())
        experiment.write_report(tmp_path, report, table)
        again = experiment.metrics_from_table(experiment.read_scores(tmp_path / "scores.csv"))
        assert again.keys() == report.metrics.keys()
        for k, v in report.metrics.items():
            assert (np.isnan(v) and np.isnan(again[k])) or again[k] == v, k
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["config"]["dataset"] == "two_moons"
        lines = (tmp_path / "report.txt").read_text().splitlines()
        assert len(lines) == len(report.metrics) and all(" = " in line for line in lines)

    def test_identical_sets(self, fast_run):
        _, r = fast_run
        report, _ = experiment.evaluate(r.net, r.gda, r.splits.test, {"same": r.splits.test})
        assert report.metrics["ood/same/aleatoric/auroc"] == 0.5
        assert report.metrics["ood/same/epistemic/auroc"] == 0.5

    def test_distant_ood(self, fast_run):
        _, r = fast_run
        far = data.uniform_ood(40, [[500, 600], [500, 600]], seed=0)
        _, table = experiment.evaluate(r.net, r.gda, r.splits.test, {"far": far})
        mask = table["set"] == "ood:far"
        np.testing.assert_array_equal(table["s"][mask], 0.0)
        np.testing.assert_array_equal(table["epistemic"][mask], 2.0)

    def test_measures(self, fast_run):
        _, r = fast_run
        report, _ = experiment.evaluate(r.net, r.gda, r.splits.test, r.splits.ood, measures=("epistemic",))
        assert not any("aleatoric/" in k for k in report.metrics)
        with pytest.raises(ConfigError):
            experiment.evaluate(r.net, r.gda, r.splits.test, r.splits.ood, measures=("variance",))


class TestLandscape:
    def test_grid(self, fast_run):
        cfg, r = fast_run
        grid = experiment.landscape(r.net, r.gda, cfg.replace(landscape_resolution=7))
        assert grid.shape == (49, len(experiment.LANDSCAPE_COLUMNS))
        assert np.all(np.isfinite(grid))
        # row-major: x varies fastest
        np.testing.assert_allclose(grid[:7, 1], cfg.landscape_y[0])
        np.testing.assert_allclose(grid[:7, 0], np.linspace(*cfg.landscape_x, 7))

    def test_far_corner(self, fast_run):
        cfg, r = fast_run
        grid = experiment.landscape(r.net, r.gda, cfg.replace(landscape_x="-40,3", landscape_y="-40,2"))
        assert abs(grid[0, 2] - np.log(2)) < 1e-6

    def test_needs_2d(self, tmp_path):
        cfg = experiment.from_mapping({**FAST, "dataset": "blobs"})
        ds = data.LabeledDataset(np.random.default_rng(0).normal(size=(60, 3)), np.repeat([0, 1], 30), 2)
        data.write_csv(tmp_path / "d.csv", ds)
        cfg = experiment.from_mapping({**FAST, "dataset": "csv", "train_path": str(tmp_path / "d.csv")})
        r = experiment.train_run(cfg)
        with pytest.raises(ConfigError):
            experiment.landscape(r.net, r.gda, cfg)


class TestAblate:
    def test_rows_and_toggles(self, tmp_path):
        cfg = experiment.from_mapping({**FAST, "ablate_rows": "---,ed-,eds", "ablate_seeds": "0,1"})
        per_run, summary = experiment.ablate(cfg, workers=1)
        assert len(per_run) == 6 and list(summary) == ["---", "ed-", "eds"]
        # density off means s = 1 for every ID point
        assert summary["---"]["mean_s_id"] == 1.0
        experiment.write_ablation(tmp_path / "a.csv", summary, 2)
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert len(lines) == 4 and lines[1].startswith("(---),0,0,0,2")

    def test_thread_cap(self, monkeypatch):
        monkeypatch.setenv("DAEDL_THREADS", "3")
        assert experiment.thread_cap() == 3
        monkeypatch.setenv("DAEDL_THREADS", "0")
        with pytest.raises(ConfigError):
            experiment.thread_cap()

    def test_toggles(self):
        assert experiment.row_toggles("e-s") == (True, False, True)
        assert experiment.row_toggles("---") == (False, False, False)
