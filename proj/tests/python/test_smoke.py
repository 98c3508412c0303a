import math

import pytest

import mga


def face(shift=0.0, s=40.0):
    # Frontal-ish face: eyes, nose, mouth and jaw on a slightly asymmetric grid.
    xy = []
    for i in range(68):
        x = math.cos(i * 0.37) * s + 100 + shift + 0.3 * math.sin(i)
        y = math.sin(i * 0.37) * s + 100 + 0.2 * math.cos(3 * i)
        xy += [x, y]
    return xy


def test_feature_length_and_translation_invariance():
    side, f = mga.build_feature(face())
    assert side in ("left", "right")
    assert len(f) == mga.feature_length()
    _, g = mga.build_feature(face(shift=25.0))
    assert max(abs(a - b) for a, b in zip(f, g)) < 1e-9


def test_fusion_and_groups():
    f = mga.fuse_experts([0.5, 0.3, 0.2], [(0.9, 0.1), (0.6, 0.4), (0.2, 0.8)])
    assert f[0] == pytest.approx(0.67, abs=1e-12)
    assert mga.coarse_group(19.9) == "young"
    assert mga.coarse_group(20) == "adult"
    assert mga.coarse_group(50) == "elder"
    with pytest.raises(mga.ContractError):
        mga.fuse_experts([0.5, 0.6, 0.2], [(0.5, 0.5)] * 3)
    with pytest.raises(mga.MgaError):
        mga.coarse_group(-1)


def test_parameter_budget():
    assert mga.parameter_count("reference") <= 2_500_000
    assert mga.parameter_count("desk") < mga.parameter_count("reference")
    with pytest.raises(mga.ConfigError):
        mga.parameter_count("huge")


def test_metrics_perfect():
    r = mga.metrics([0.9, 0.1], [30.0, 60.0], [30.0, 60.0], [1, 0])
    assert r["gender_accuracy"] == 100.0
    assert r["age_mae"] == 0.0


def test_synthesize_train_predict(tmp_path):
    assert mga.synthesize(tmp_path / "data", 60, seed=2) == 60
    manifest = tmp_path / "data" / "manifest.csv"
    cfg = tmp_path / "tiny.json"
    cfg.write_text(
        '{"training": {'
        + ", ".join(f'"{k}": {{"epochs": 1, "batch_size": 32}}' for k in ("can", "dgn", "in", "expert", "mga"))
        + "}}"
    )
    with pytest.raises(mga.StateError):
        mga.train(manifest, tmp_path / "run", stages=(2, 2), config=cfg)
    losses = mga.train(manifest, tmp_path / "run", stages=(1, 4), config=cfg, seed=3)
    assert sorted(losses) == sorted(
        ["stage1.can", "stage1.dgn", "stage2.in", "stage3.young", "stage3.adult", "stage3.elder", "stage4.mga"]
    )
    preds = mga.predict(tmp_path / "run" / "stage4.ckpt", manifest, "mga", config=cfg)
    assert len(preds) == 60
    assert all(len(v) == 1 for v in losses.values())
    assert all(0.0 <= p["p_male"] <= 1.0 for p in preds)
