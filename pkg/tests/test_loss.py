import math

import numpy as np
import pytest
from oracles import brute_force_contrast, fd_gradient, rel_error

from contrareg import (
    AugmentedBatch,
    ContrastConfig,
    contrastive_loss,
    inverse_frequency_weights,
    loss_breakdown,
    per_anchor_loss,
    pushing_weights_for,
    regression_loss,
    total_loss,
)
from contrareg.errors import EmptyPositiveSetError, InvalidInputError
from contrareg.loss import select_pairs_for, weighted_regression_loss
from contrareg.pairing import PairSets, select_pairs


def masks(m, pos, neg):
    pos_mask = np.zeros((m, m), dtype=bool)
    neg_mask = np.zeros((m, m), dtype=bool)
    for j, items in pos.items():
        pos_mask[j, items] = True
    for j, items in neg.items():
        neg_mask[j, items] = True
    return PairSets(pos_mask=pos_mask, neg_mask=neg_mask)


def batch_for(z, labels, preds=None, origin=None):
    m = len(labels)
    return AugmentedBatch(
        z=np.asarray(z, dtype=np.float64),
        labels=list(labels),
        predictions=list(preds) if preds is not None else list(labels),
        origin=np.arange(m) if origin is None else origin,
    )


UNIT_TRIPLE = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def test_single_anchor_closed_form_s1():
    pairs = masks(3, pos={0: [1]}, neg={0: [2]})
    value = per_anchor_loss(0, UNIT_TRIPLE, pairs, [1.0], tau=1.0)
    assert value == pytest.approx(math.log(1.0 + math.exp(-1.0)), abs=1e-12)


def test_single_anchor_closed_form_s2():
    pairs = masks(3, pos={0: [1]}, neg={0: [2]})
    value = per_anchor_loss(0, UNIT_TRIPLE, pairs, [2.0], tau=1.0)
    assert value == pytest.approx(math.log(1.0 + 2.0 / math.e), abs=1e-12)
    # and pushing harder costs more
    assert value > per_anchor_loss(0, UNIT_TRIPLE, pairs, [1.0], tau=1.0)


def test_all_zero_pushing_weights_zero_loss():
    pairs = masks(3, pos={0: [1]}, neg={0: [2]})
    assert per_anchor_loss(0, UNIT_TRIPLE, pairs, [0.0], tau=1.0) == 0.0


def test_per_anchor_rejects_non_anchor_and_empty_positives():
    pairs = masks(3, pos={0: [1]}, neg={0: [2]})
    with pytest.raises(InvalidInputError):
        per_anchor_loss(1, UNIT_TRIPLE, pairs, [], tau=1.0)
    pairs_no_pos = masks(3, pos={}, neg={0: [2]})
    with pytest.raises(EmptyPositiveSetError):
        per_anchor_loss(0, UNIT_TRIPLE, pairs_no_pos, [1.0], tau=1.0)


def test_batch_value_is_mean_over_all_examples():
    # only example 0 is an anchor; features already unit-norm
    cfg = ContrastConfig(variant="no_push_weight", temperature=1.0)
    pairs = masks(3, pos={0: [1], 1: [0]}, neg={0: [2]})
    batch = batch_for(UNIT_TRIPLE, [0.0, 0.0, 5.0])
    value, dz, detail = contrastive_loss(batch, pairs, None, cfg)
    assert value == pytest.approx(math.log(1.0 + math.exp(-1.0)) / 3.0, abs=1e-12)
    assert detail.anchors_used == 1
    assert detail.skipped_empty_positive == 0


def test_full_variant_reproduces_closed_form_via_density():
    # labels 0,0,5: distance to the negative is 5; pick the scale so that
    # scale * w_0 * 5 == 2 exactly
    labels = [0.0, 0.0, 5.0]
    density = inverse_frequency_weights(labels, 1.0)
    w0 = density.weight_for(0.0)
    cfg = ContrastConfig(
        variant="full", temperature=1.0, push_power_scale=2.0 / (w0 * 5.0)
    )
    pairs = masks(3, pos={0: [1], 1: [0]}, neg={0: [2]})
    batch = batch_for(UNIT_TRIPLE, labels)
    value, _, _ = contrastive_loss(batch, pairs, density, cfg)
    assert value == pytest.approx(math.log(1.0 + 2.0 / math.e) / 3.0, rel=1e-12)


def test_zero_anchor_batch_gives_zero_loss_and_gradient():
    cfg = ContrastConfig()
    labels = [1.0, 1.2, 1.4, 1.1]
    batch = batch_for(np.random.default_rng(0).normal(size=(4, 3)), labels)
    pairs = select_pairs_for(batch, cfg)
    density = inverse_frequency_weights(labels, 1.0)
    value, dz, detail = contrastive_loss(batch, pairs, density, cfg)
    assert value == 0.0
    assert np.array_equal(dz, np.zeros_like(dz))
    assert detail.anchors_used == 0


def test_empty_positive_anchor_skipped_and_counted():
    # no duplicated views: example 0 has a negative but no positives
    cfg = ContrastConfig(variant="no_push_weight")
    labels = [0.0, 10.0, 10.2]
    preds = [5.0, 5.0, 20.0]
    batch = batch_for(np.random.default_rng(1).normal(size=(3, 4)), labels, preds)
    pairs = select_pairs_for(batch, cfg)
    assert pairs.anchor_mask[0] and len(pairs.positives[0]) == 0
    value, dz, detail = contrastive_loss(batch, pairs, None, cfg)
    assert detail.skipped_empty_positive == 1
    assert detail.anchors_used == 1  # example 1 (negative of 0, positive 2)
    assert np.isfinite(value)


def variant_weight_fn(cfg, labels, density):
    def fn(j, q):
        if cfg.variant in ("no_push_weight", "contrastive_only"):
            return 1.0
        if cfg.variant == "no_sim_weight":
            return cfg.push_power_scale * density.weight_for(labels[j])
        dist = abs(labels[j] - labels[q])
        if cfg.variant == "no_rarity_weight":
            return cfg.push_power_scale * dist
        return cfg.push_power_scale * density.weight_for(labels[j]) * dist

    return fn


@pytest.mark.parametrize(
    "variant", ["full", "no_push_weight", "no_sim_weight", "no_rarity_weight", "contrastive_only"]
)
def test_batch_loss_matches_brute_force_all_variants(variant):
    rng = np.random.default_rng(5)
    for _ in range(10):
        m = int(rng.integers(2, 33))
        labels = rng.uniform(0, 12, m)
        preds = labels + rng.normal(0, 2.5, m)
        z = rng.normal(size=(m, 6))
        cfg = ContrastConfig(
            variant=variant,
            temperature=float(rng.choice([0.2, 0.7, 1.0])),
            similarity_window=float(rng.choice([0.5, 1.0, 2.0])),
            push_power_scale=0.05,
        )
        density = inverse_frequency_weights(labels, cfg.similarity_window)
        batch = batch_for(z, labels, preds)
        pairs = select_pairs_for(batch, cfg)
        value, _, detail = contrastive_loss(batch, pairs, density, cfg)

        expected, per_anchor, skipped = brute_force_contrast(
            z,
            labels,
            preds,
            cfg.similarity_window,
            cfg.temperature,
            variant_weight_fn(cfg, labels, density),
            normalize=True,
            label_only=variant == "contrastive_only",
        )
        assert value == pytest.approx(expected, rel=1e-9, abs=1e-12)
        assert detail.skipped_empty_positive == skipped
        got = {j: v for j, v in detail.per_anchor if v != 0.0 or j in per_anchor}
        for j, v in per_anchor.items():
            assert got[j] == pytest.approx(v, rel=1e-9, abs=1e-12)


def test_pushing_weights_for_variants():
    labels = [21.0, 80.0, 21.5]
    preds = [50.0, 50.0, 95.0]
    cfg = ContrastConfig(similarity_window=1.0, push_power_scale=0.01)
    batch = batch_for(np.eye(3), labels, preds)
    pairs = select_pairs_for(batch, cfg)
    density = inverse_frequency_weights(labels, 1.0)
    w0 = density.weight_for(21.0)

    full = pushing_weights_for(0, pairs, labels, density, cfg)
    assert full == pytest.approx([0.01 * w0 * 59.0])

    cfg_s = ContrastConfig(variant="no_push_weight")
    assert pushing_weights_for(0, pairs, labels, density, cfg_s).tolist() == [1.0]

    cfg_sim = ContrastConfig(variant="no_sim_weight", push_power_scale=0.01)
    assert pushing_weights_for(0, pairs, labels, density, cfg_sim) == pytest.approx(
        [0.01 * w0]
    )

    cfg_eta = ContrastConfig(variant="no_rarity_weight", push_power_scale=0.01)
    assert pushing_weights_for(0, pairs, labels, density, cfg_eta) == pytest.approx(
        [0.59]
    )


def test_full_with_unit_weights_equals_no_push_weight():
    # uniform density (one label per bin) and constant pairwise distance 5,
    # with scale 0.2 the full pushing weight is exactly 1
    labels = [0.0, 0.0, 5.0, 5.0]
    z = np.random.default_rng(2).normal(size=(4, 3))
    preds = [2.0, 2.1, 2.0, 2.1]
    density = inverse_frequency_weights([0.0, 5.0], 1.0)  # both bins count 1
    cfg_full = ContrastConfig(variant="full", push_power_scale=0.2)
    cfg_s = ContrastConfig(variant="no_push_weight")
    batch = batch_for(z, labels, preds, origin=[0, 0, 1, 1])
    pairs = select_pairs_for(batch, cfg_full)
    v_full, dz_full, _ = contrastive_loss(batch, pairs, density, cfg_full)
    v_s, dz_s, _ = contrastive_loss(batch, pairs, None, cfg_s)
    assert v_full == v_s
    assert np.array_equal(dz_full, dz_s)


def test_loss_nonnegative_property():
    rng = np.random.default_rng(7)
    cfg = ContrastConfig(push_power_scale=0.1)
    for _ in range(20):
        m = int(rng.integers(2, 40))
        labels = rng.uniform(0, 10, m)
        preds = labels + rng.normal(0, 2, m)
        batch = batch_for(rng.normal(size=(m, 5)), labels, preds)
        pairs = select_pairs_for(batch, cfg)
        density = inverse_frequency_weights(labels, 1.0)
        value, _, detail = contrastive_loss(batch, pairs, density, cfg)
        assert value >= 0.0
        assert all(v >= 0.0 for _, v in detail.per_anchor)


def test_monotone_in_single_pushing_weight():
    rng = np.random.default_rng(8)
    z = rng.normal(size=(5, 4))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    pairs = masks(5, pos={0: [1, 2]}, neg={0: [3, 4]})
    s = np.array([0.5, 1.5])
    base = per_anchor_loss(0, z, pairs, s, tau=0.7)
    for k in range(2):
        bumped = s.copy()
        bumped[k] += 0.25
        assert per_anchor_loss(0, z, pairs, bumped, tau=0.7) > base


def test_permutation_invariance():
    rng = np.random.default_rng(9)
    m = 12
    labels = rng.uniform(0, 8, m)
    preds = labels + rng.normal(0, 2, m)
    z = rng.normal(size=(m, 6))
    cfg = ContrastConfig(push_power_scale=0.05)
    density = inverse_frequency_weights(labels, 1.0)

    batch = batch_for(z, labels, preds)
    value, _, _ = contrastive_loss(batch, select_pairs_for(batch, cfg), density, cfg)

    perm = rng.permutation(m)
    batch_p = batch_for(z[perm], labels[perm], preds[perm])
    value_p, _, _ = contrastive_loss(
        batch_p, select_pairs_for(batch_p, cfg), density, cfg
    )
    assert value_p == pytest.approx(value, rel=1e-12)


def gradient_case(seed, m=16, dim=8, window=1.0, tau=0.2, normalize=True):
    rng = np.random.default_rng(seed)
    labels = rng.uniform(0, 10, m)
    preds = labels + rng.normal(0, 2, m)
    z = rng.normal(size=(m, dim))
    cfg = ContrastConfig(
        similarity_window=window,
        temperature=tau,
        push_power_scale=0.05,
        normalize_features=normalize,
    )
    density = inverse_frequency_weights(labels, window)
    batch = batch_for(z, labels, preds)
    pairs = select_pairs_for(batch, cfg)
    return z, labels, preds, cfg, density, batch, pairs


@pytest.mark.parametrize("seed,normalize", [(0, True), (1, True), (2, False)])
def test_gradient_matches_finite_differences(seed, normalize):
    z, labels, preds, cfg, density, batch, pairs = gradient_case(
        seed, normalize=normalize
    )
    _, dz, _ = contrastive_loss(batch, pairs, density, cfg)

    def value_at(zv):
        b = batch_for(zv, labels, preds)
        v, _, _ = contrastive_loss(b, pairs, density, cfg)
        return v

    fd = fd_gradient(value_at, z.copy())
    assert rel_error(dz, fd) < 1e-5


def test_gradient_descent_step_separates_the_pair():
    # one anchor, one positive, one negative, free feature vectors
    rng = np.random.default_rng(11)
    for _ in range(10):
        z = rng.normal(size=(3, 4))
        pairs = masks(3, pos={0: [1]}, neg={0: [2]})
        cfg = ContrastConfig(
            variant="no_push_weight", normalize_features=False, temperature=0.7
        )
        batch = batch_for(z, [0.0, 0.0, 9.0], [4.0, 4.0, 4.1])
        _, dz, _ = contrastive_loss(batch, pairs, None, cfg)
        stepped = z - 0.05 * dz
        assert stepped[0] @ stepped[1] > z[0] @ z[1]
        assert stepped[0] @ stepped[2] < z[0] @ z[2]


def test_stop_peer_gradient_switch():
    z, labels, preds, cfg, density, batch, pairs = gradient_case(3)
    cfg_stop = ContrastConfig(
        similarity_window=cfg.similarity_window,
        temperature=cfg.temperature,
        push_power_scale=cfg.push_power_scale,
        stop_peer_gradient=True,
    )
    v_full, dz_full, _ = contrastive_loss(batch, pairs, density, cfg)
    v_stop, dz_stop, _ = contrastive_loss(batch, pairs, density, cfg_stop)
    assert v_stop == pytest.approx(v_full, rel=1e-12)  # value unchanged
    assert not np.allclose(dz_full, dz_stop)  # flow differs
    # rows that are peers but never anchors get zero gradient under stop
    never_anchor = ~pairs.anchor_mask
    if never_anchor.any():
        assert np.allclose(dz_stop[never_anchor], 0.0)


def test_regression_loss_mae():
    value, grad = regression_loss([3.0], [1.0], "mae")
    assert value == 2.0
    assert grad.tolist() == [1.0]
    value, grad = regression_loss([1.0, 2.0], [1.0, 2.0], "mae")
    assert value == 0.0
    assert grad.tolist() == [0.0, 0.0]


def test_regression_loss_rmse_value_and_gradient():
    value, grad = regression_loss([1.0, 3.0], [0.0, 0.0], "rmse")
    assert value == pytest.approx(math.sqrt(5.0), abs=1e-12)

    def f(p):
        return regression_loss(p, [0.0, 0.0], "rmse")[0]

    fd = fd_gradient(f, np.array([1.0, 3.0]))
    assert rel_error(grad, fd) < 1e-8
    # all-zero residual: gradient defined as 0
    value, grad = regression_loss([2.0, 2.0], [2.0, 2.0], "rmse")
    assert value == 0.0 and grad.tolist() == [0.0, 0.0]


def test_weighted_regression_loss_reduces_to_plain():
    preds = np.array([1.0, 4.0, -2.0])
    labels = np.array([0.0, 5.0, -2.5])
    v_plain, g_plain = regression_loss(preds, labels, "mae")
    v_w, g_w = weighted_regression_loss(preds, labels, np.ones(3), "mae")
    assert v_w == v_plain and np.array_equal(g_w, g_plain)
    v2, g2 = weighted_regression_loss(preds, labels, np.array([2.0, 0.5, 0.5]), "mae")
    assert v2 == pytest.approx((2.0 * 1 + 0.5 * 1 + 0.5 * 0.5) / 3)

    def f(p):
        return weighted_regression_loss(p, labels, np.array([2.0, 0.5, 0.5]), "rmse")[0]

    v_r, g_r = weighted_regression_loss(preds, labels, np.array([2.0, 0.5, 0.5]), "rmse")
    assert rel_error(g_r, fd_gradient(f, preds.copy())) < 1e-8


def test_total_loss_weighting():
    assert total_loss(2.0, 0.5, 1.0, 4.0) == 4.0
    assert total_loss(2.0, 0.5, 1.0, 0.0) == 2.0
    assert total_loss(2.0, 0.5, 0.0, 1.0) == 0.5


def test_loss_breakdown_consistency_and_json():
    z, labels, preds, cfg, density, batch, pairs = gradient_case(4)
    bd = loss_breakdown(batch, pairs, density, cfg)
    assert bd.total == pytest.approx(
        cfg.regression_weight * bd.regression_loss
        + cfg.contrast_weight * bd.contrast_loss,
        abs=1e-12,
    )
    _, dz_raw, _ = contrastive_loss(batch, pairs, density, cfg)
    assert np.allclose(bd.dz, cfg.contrast_weight * dz_raw, rtol=0, atol=0)
    payload = bd.to_json_dict()
    assert set(payload) == {
        "regression_loss",
        "contrast_loss",
        "total",
        "anchors_used",
        "skipped_empty_positive",
        "per_anchor",
    }


def test_config_validation():
    with pytest.raises(InvalidInputError):
        ContrastConfig(temperature=0.0)
    with pytest.raises(InvalidInputError):
        ContrastConfig(variant="nope")
    with pytest.raises(InvalidInputError):
        ContrastConfig(regression_kind="mse")
    with pytest.raises(InvalidInputError):
        ContrastConfig(similarity_window=-1.0)
