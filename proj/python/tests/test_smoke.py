import itertools
import math
import random

import pytest

import hqm

scipy_optimize = pytest.importorskip("scipy.optimize")
np = pytest.importorskip("numpy")


def test_iou_examples():
    a = hqm.Box(0.5, 0.5, 0.4, 0.4)
    assert hqm.iou(a, hqm.Box(0.6, 0.5, 0.4, 0.4)) == pytest.approx(0.6, abs=1e-12)
    assert hqm.giou(a, a) == pytest.approx(1.0)
    assert hqm.iou(hqm.Box(0.2, 0.5, 0.1, 0.1), hqm.Box(0.8, 0.5, 0.1, 0.1)) == 0.0


def test_hungarian_matches_scipy():
    rng = random.Random(4)
    for _ in range(200):
        q = rng.randint(1, 8)
        t = rng.randint(1, q)
        cost = [[rng.uniform(-3, 3) for _ in range(t)] for _ in range(q)]
        pairs = hqm.hungarian(cost)
        assert [p[1] for p in pairs] == list(range(t))
        assert len({p[0] for p in pairs}) == t
        rows, cols = scipy_optimize.linear_sum_assignment(np.array(cost))
        expected = float(np.array(cost)[rows, cols].sum())
        assert sum(cost[a][b] for a, b in pairs) == pytest.approx(expected, abs=1e-12)


def test_shift_box_bounds():
    gt = hqm.Box(0.5, 0.5, 0.3, 0.2)
    for seed in range(500):
        box, _ = hqm.shift_box(gt, 0.4, 0.6, seed)
        assert 0.4 - 1e-12 <= hqm.iou(gt, box) <= 0.6 + 1e-12


def test_amm_mask_only_touches_top_k():
    rng = random.Random(1)
    ref = [rng.random() for _ in range(64)]
    attn = [rng.random() + 1e-3 for _ in range(64)]
    top = set(hqm.top_k_indices(ref, 8))
    for seed in range(50):
        out = hqm.amm_mask(attn, ref, top_k=8, gamma=0.4, seed=seed)
        for i, (x, y) in enumerate(zip(attn, out)):
            if i not in top:
                assert x == y
            else:
                assert y in (0.0, x)


def test_focal_reduces_to_half_bce():
    logits = [-2.0, 0.3, 1.5]
    labels = [0.0, 1.0, 1.0]
    bce = sum(
        -math.log(1 / (1 + math.exp(-x))) if y else -math.log(1 - 1 / (1 + math.exp(-x)))
        for x, y in zip(logits, labels)
    )
    assert hqm.sigmoid_focal_sum(logits, labels, gamma=0.0, alpha=0.5) == pytest.approx(0.5 * bce, abs=1e-12)


def test_config_round_trip_and_errors():
    cfg = hqm.default_config()
    assert hqm.normalize_config(cfg) == cfg
    cfg["model"]["heads"] = 3
    with pytest.raises(hqm.ConfigError):
        hqm.normalize_config(cfg)


def test_dataset_is_deterministic():
    cfg = hqm.tiny_config()
    a = hqm.generate_dataset(cfg, 9, 3)
    assert a == hqm.generate_dataset(cfg, 9, 3)
    assert len(a["scenes"]) == 3


def test_tiny_training_and_grad_check():
    cfg = hqm.tiny_config()
    cfg["strategy"] = "ajl"
    cfg["optimizer"]["epochs"] = 2
    rows = hqm.train(cfg)
    assert [r["epoch"] for r in rows] == [1, 2]
    assert all(math.isfinite(r["loss_total"]) for r in rows)
    assert rows == hqm.train(cfg)
    errors = hqm.grad_check(strategies=["baseline", "ajl"])
    assert set(errors) == {"baseline", "ajl"}
    assert max(errors.values()) < 1e-4
