import json

import numpy as np
import pytest

import prefminer as pm


def test_split_arithmetic():
    assert pm.split_sizes(201666) == (151250, 25208, 25208)
    assert pm.split_sizes(52082, 0.8, 0.1, 0.1) == (41666, 5208, 5208)


def test_sessionize_gap_boundary():
    gap = 30 * 60_000
    events = [pm.Event("u", t, pm.EventKind.add_to_cart, "A") for t in (0, gap - 1, 2 * gap - 1)]
    sessions = pm.sessionize(events)
    assert [len(s) for s in sessions] == [2, 1]
    assert sessions[1].start_ts == 2 * gap - 1


def test_rank_two_items_closed_form():
    ranked = pm.rank([pm.PreferencePair("A", "B", 3)], prior_wins=0.0)
    assert ranked[0].item_id == "A"
    ranked = pm.rank([pm.PreferencePair("A", "B", 3)], method="win-rate")
    assert ranked[0].score == 1.0 and ranked[1].score == 0.0


def test_auc_with_ties():
    assert pm.auc([0.1, 0.5, 0.5, 0.9], [0, 0, 1, 1]) == pytest.approx(0.875)
    assert pm.auc([0.1, 0.2], [1, 1]) is None


def test_pca_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 5)) @ rng.normal(size=(5, 5))
    model = pm.pca_fit(x, k=5)
    z = model.transform(x)
    assert np.allclose(model.inverse_transform(z), x, atol=1e-9)
    assert np.allclose(model.components @ model.components.T, np.eye(5), atol=1e-10)
    model.save(tmp_path / "pca.bin")
    assert np.array_equal(pm.PcaModel.load(tmp_path / "pca.bin").transform(x), z)
    with pytest.raises(pm.ConfigError):
        pm.pca_fit(x)


def test_train_and_predict():
    rng = np.random.default_rng(1)
    y = np.arange(200) % 2
    x = rng.normal(size=(200, 3)) + np.where(y[:, None] == 1, 2.0, -2.0)
    for kind in ("logreg", "random-forest", "mlp"):
        model = pm.train(kind, x, y.tolist(), seed=3)
        p = model.predict_proba(x)
        assert pm.auc(p.tolist(), y.tolist()) > 0.99
    with pytest.raises(pm.DataError):
        pm.train("logreg", x, [1] * 200)


def test_small_pipeline(tmp_path):
    world_cfg = {"n_items": 150, "n_users": 2000, "n_sessions": 20000, "n_pools": 15, "feature_dim": 16}
    files = pm.generate_world(tmp_path / "world", json.dumps(world_cfg))

    events = pm.read_events(files["events"])
    sessions = pm.sessionize(events)
    pairs, report = pm.mine_pairs(sessions, files["catalog"], min_count=2)
    assert report["kept_pairs"] <= report["raw_pairs"]
    ranked = pm.rank(pairs)
    labels = pm.label(ranked)
    assert set(labels.values()) == {0, 1}

    config = {
        "events": str(files["events"]),
        "catalog": str(files["catalog"]),
        "features": str(files["features"]),
        "ground_truth": str(files["ground_truth"]),
        "output_dir": str(tmp_path / "out"),
        "min_count": 2,
        "classifiers": {"kinds": ["logreg", "random-forest"]},
    }
    (tmp_path / "config.json").write_text(json.dumps(config))
    first = pm.run_pipeline(tmp_path / "config.json")
    assert "manifest.json" not in first["manifest"]
    assert first["spearman"] > 0.5
    second = pm.run_pipeline(tmp_path / "config.json", threads=2)
    assert first["manifest"] == second["manifest"]


def test_missing_config_field(tmp_path):
    (tmp_path / "config.json").write_text("{}")
    with pytest.raises(pm.ConfigError, match="events"):
        pm.run_pipeline(tmp_path / "config.json")
