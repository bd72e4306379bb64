import math

import pytest

import sfk


def test_presets_and_shapes():
    assert sfk.preset_names() == ["2x32", "4x16", "8x8"]
    cfg = sfk.preset("4x16", 2)
    assert cfg["alpha"] == "8"
    micro = {"preset": "4x16", "num_classes": "2", "crop_size": "32", "scale_short_side": "36",
             "slow.base_channels": "16", "backbone_depth": "1,1,1,1"}
    assert sfk.validate_config(micro)["fast.base_channels"] == "2"
    with pytest.raises(sfk.ConfigError):
        sfk.validate_config(dict(cfg, **{"slow.base_channels": "16"}))
    shapes = sfk.feature_shapes(micro)
    assert shapes["slow_input"][2] == 4
    assert shapes["fast_input"][2] == 32
    assert shapes["fast_features"][2] == 32


def test_config_errors_map_to_python_exceptions():
    with pytest.raises(sfk.ConfigError):
        sfk.validate_config({"preset": "4x16", "no_such_key": "1"})
    assert issubclass(sfk.ConfigError, sfk.SfkError)


def test_metrics():
    recs = [sfk.PredictionRecord(f"v{i}", 0, 0 if i < 142 else 1, [0.5, 0.5]) for i in range(192)]
    assert math.isclose(sfk.accuracy(recs), 100 * 142 / 192)
    assert math.isclose(sfk.accuracy(recs) + sfk.error_rate(recs), 100.0)
    assert sfk.confusion_matrix(recs, ["a", "b"]) == [[142, 50], [0, 0]]
    with pytest.raises(sfk.InvalidArgument):
        sfk.accuracy([])
    assert sfk.argmax(sfk.combine_view_scores([[1.0, 0.5], [2.1, 2.4]], probability=False)) == 0


def test_splits():
    assert sfk.allocate_counts(165, [0.7, 0.2, 0.1]) == [116, 33, 16]


def test_triage_category_fixture():
    store = sfk.TriageStore()
    recs = [sfk.PredictionRecord(f"e{i:02d}", 0, 1, [0.2, 0.8]) for i in range(54)]
    assert store.import_predictions(recs, ["flat service", "smash"]) == 54
    ids = store.case_ids()
    for i, cid in enumerate(ids):
        cats = set()
        if i < 24:
            cats.add("serve confusion")
        elif i < 35:
            cats.add("slice/volley confusion")
        elif i < 44:
            cats.add("smash/serve confusion")
        elif i < 52:
            cats.add("others")
        if i < 3 or i >= 52:
            cats.add("beginners")
        store.assign(cid, cats, reviewer="py", timestamp_ms=i + 1)
    report = store.report()
    assert abs(report["serve confusion"] - 44.4) < 0.05
    assert abs(report["beginners"] - 9.3) < 0.05
    assert store.ranking()[0][0] == "serve confusion"
    assert "serve confusion\t44.4" in store.report_tsv()
    with pytest.raises(sfk.NotFoundError):
        store.assign("missing", {"others"})
    with pytest.raises(sfk.InvalidArgument):
        store.assign(ids[0], set())


def test_cli_entry_point():
    code, _out, err = sfk.run_cli(["report"])
    assert code == 1
    assert err
