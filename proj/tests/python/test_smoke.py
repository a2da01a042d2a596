import json
import math

import numpy as np
import pytest

import promptforge as pf


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_mix_prompt_endpoints_and_midpoint():
    a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert np.array_equal(pf.mix_prompt(a, b, 1.0).ravel(), a)
    assert np.array_equal(pf.mix_prompt(a, b, 0.0).ravel(), b)
    np.testing.assert_allclose(pf.mix_prompt(a, b, 0.5).ravel(), [2 ** -0.5, 2 ** -0.5], atol=1e-15)
    with pytest.raises(pf.ValidationError):
        pf.mix_prompt(a, b, 1.5)


def test_spherical_distance_matches_cosine_form():
    rng = np.random.default_rng(0)
    for _ in range(200):
        u, v = unit(rng.normal(size=8)), unit(rng.normal(size=8))
        c = pf.cosine_similarity(u, v)
        alt = (2 * math.asin(math.sqrt(max(0.0, (1 - c) / 2)))) ** 2
        assert abs(pf.spherical_distance_sq(u, v) - alt) < 1e-9
    assert pf.spherical_distance_sq(np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == pytest.approx(math.pi ** 2)


def test_codebook_stats_match_numpy():
    rng = np.random.default_rng(1)
    for k in (1, 2, 17, 64):
        c = rng.normal(size=(k, 5))
        mean, std = pf.codebook_stats(c)
        np.testing.assert_allclose(mean, c.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(std, c.std(axis=0), atol=1e-12)


def test_contrastive_loss_closed_forms():
    a = np.array([1.0, 0.0])
    negs = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    assert pf.contrastive_prompt_loss(a, a, negs, 0.1) == pytest.approx(math.log(4), abs=1e-12)
    assert pf.contrastive_prompt_loss(a, a, negs[:1], 0.1) == pytest.approx(math.log(2), abs=1e-12)


def test_soft_label_and_distill_loss():
    y = pf.soft_label(np.array([1.0, 0.0, 0.0]), np.eye(3), 1.0)
    assert y[0] == pytest.approx(0.5761168847658291, abs=1e-12)
    assert sum(y) == pytest.approx(1.0)
    assert pf.distill_loss(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0)


def test_world_rendering():
    assert len(pf.categories()) == 7
    roles = dict(pf.domains())
    held = [d for d, r in roles.items() if r == "held-out-eval"] or [d for d, r in roles.items() if "held" in r]
    assert held
    px, labels = pf.render_domain(held[0], 3, 5)
    assert px.shape[0] == 21 and px.shape[3] == 3
    assert px.min() >= 0.0 and px.max() <= 1.0
    assert sorted(set(labels)) == list(range(7))
    again, _ = pf.render_domain(held[0], 3, 5)
    assert np.array_equal(px, again)


def test_config_is_strict_and_round_trips():
    cfg = pf.default_config()
    assert pf.normalize_config(cfg) == cfg
    assert pf.config_hash(cfg) == pf.config_hash(json.loads(json.dumps(cfg)))
    partial = pf.normalize_config({"schema": cfg["schema"], "seeds": [3]})
    assert partial["seeds"] == [3] and partial["methods"] == cfg["methods"]
    with pytest.raises(pf.ValidationError):
        pf.normalize_config({"schema": cfg["schema"], "sedes": [1]})
    assert set(pf.ablation_suites()) == {"data-scale", "dict-size", "scale-e", "augmentation", "intra-vs-instance"}


def tiny_config():
    cfg = pf.default_config()
    cfg["teacher"].update(epochs=3, train_per_class=10, eval_per_class=4, gate_train_accuracy=0.0,
                          gate_heldout_accuracy=0.0)
    cfg["generator"].update(epochs=2, train_per_class=10, val_per_class=4, gate_mse=1.0)
    cfg["synthesis"].update(per_class=3, iterations=5)
    cfg["prompts"]["contrastive"]["epochs"] = 2
    cfg["distill"].update(warmup_epochs=2, finetune_epochs=2)
    cfg["evaluation"]["per_class"] = 6
    cfg["fewshot"].update(ks=[1, 2], epochs=2, baseline_epochs=1, baseline_per_class=4)
    cfg["seeds"] = [1]
    return cfg


def test_tiny_pipeline_and_report(tmp_path):
    cfg = tiny_config()
    rows, record = pf.run_pipeline(cfg, tmp_path / "run")
    assert record["config_hash"] == pf.config_hash(cfg)
    assert {r["method"] for r in rows} == set(cfg["methods"]) | {"domain-trained"}
    assert all(0.0 <= r["accuracy"] <= 1.0 for r in rows)
    assert pf.read_results(str(tmp_path / "run" / "results.csv")) == rows
    written = pf.emit_report(str(tmp_path / "run"))
    assert any(p.endswith("zero_shot.csv") for p in written)
    rows2, record2 = pf.run_pipeline(cfg, tmp_path / "run")
    assert rows2 == rows
    assert record2["stages"]["teacher"]["hit"]
