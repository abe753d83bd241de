import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqednet.cavity_physics import DelayProfile
from cqednet.noise_channels import (
    LOST,
    LossEvent,
    NoiseBudget,
    NonCPError,
    PhotonPath,
    build_twirled_channel,
    canonical_mask,
    dephasing_rule,
    loss_backaction,
    sample_loss_location,
    stage_distribution,
    table2_factor,
)

from oracles import dense_twirl, element_factor, total_variation

W_EXAMPLE = (1.0, 0.97, 0.9, 0.8, 0.7)


def test_middle_class_is_always_even():
    assert table2_factor(2, 2, W_EXAMPLE, "L") == 1.0
    assert table2_factor(2, 2, W_EXAMPLE, "R") == 0.0


def test_published_and_corrected_04_entry():
    W = W_EXAMPLE
    assert table2_factor(0, 4, W, "L", published=True) == pytest.approx((1 + W[2] + W[4]) / 4)
    assert table2_factor(0, 4, W, "L") == pytest.approx((1 + 2 * W[2] + W[4]) / 4)
    assert table2_factor(4, 0, W, "R") == pytest.approx((1 - 2 * W[2] + W[4]) / 4)


@pytest.mark.parametrize("k,l", [(k, l) for k in range(5) for l in range(k, 5)])
def test_outcome_factors_sum_to_element_formula(k, l):
    # L + R must reproduce the unconditioned element (1 + (-1)^m W_m) / 2
    W = W_EXAMPLE
    m = l - k
    total = table2_factor(k, l, W, "L") + table2_factor(k, l, W, "R")
    assert total == pytest.approx((1 + (-1) ** m * W[m]) / 2, abs=1e-15)
    for o in (0, 1):
        assert table2_factor(k, l, W, o) == pytest.approx(element_factor(k, l, W, o), abs=1e-15)


def test_published_04_entry_breaks_the_sum_rule():
    W = W_EXAMPLE
    total = table2_factor(0, 4, W, "L", published=True) + table2_factor(0, 4, W, "R")
    assert abs(total - (1 + W[4]) / 2) > 1e-3


def test_ideal_factors():
    W = (1.0,) * 5
    for k in range(5):
        for l in range(5):
            even = (k % 2 == 0) and (l % 2 == 0)
            assert table2_factor(k, l, W, "L") == pytest.approx(1.0 if even else 0.0, abs=1e-15)
            assert table2_factor(k, l, W, "R") == pytest.approx(1.0 if k % 2 and l % 2 else 0.0, abs=1e-15)


def test_ideal_channel():
    for w in (3, 4):
        ch = build_twirled_channel(DelayProfile.ideal(), w)
        assert ch.as_dict() == {(0, 0): 1.0}


def test_example_channel_matches_dense_oracle():
    w1 = 0.99
    W = tuple(w1 ** (m * m) for m in range(5))
    ch = build_twirled_channel(W, 4)
    ref, diag = dense_twirl(W, 4)
    assert diag["residual"] < 1e-12 and diag["schur_deviation"] < 1e-12
    assert total_variation(ch.as_dict(), ref) < 1e-10


def test_weight3_uses_low_classes_only():
    ch = build_twirled_channel(DelayProfile.from_w1(0.9), 3)
    assert all(m < 8 for m in ch.masks)
    ref, _ = dense_twirl(DelayProfile.from_w1(0.9).w, 3)
    assert total_variation(ch.as_dict(), ref) < 1e-10


def test_canonical_mask_prefers_light_representative():
    assert canonical_mask(0b1111, 4) == 0
    assert canonical_mask(0b1110, 4) == 0b0001
    assert canonical_mask(0b0011, 4) == 0b0011
    assert canonical_mask(0b1100, 4) == 0b0011


def test_published_table_is_rejected_or_flagged():
    # the printed entry is not trace consistent, so the joint twirl either
    # goes non-CP or gives a visibly different channel
    W = DelayProfile.from_w1(0.7).w
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pub = build_twirled_channel(W, 4, published=True)
    except NonCPError:
        return
    assert total_variation(pub.as_dict(), build_twirled_channel(W, 4).as_dict()) > 1e-6


def test_to_json_round_trip():
    ch = build_twirled_channel(DelayProfile.from_w1(0.95), 4)
    doc = ch.to_json()
    assert doc["weight"] == 4
    assert sum(e["prob"] for e in doc["events"]) == pytest.approx(1.0)
    assert json.loads(json.dumps(doc)) == doc


w1s = st.floats(0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(w1s, st.sampled_from([3, 4]))
def test_twirled_probabilities_sum_to_one(w1, w):
    ch = build_twirled_channel(DelayProfile.from_w1(w1), w)
    assert math.fsum(ch.probs) == pytest.approx(1.0, abs=1e-10)
    assert min(ch.probs) >= 0.0


def test_flip_probability_vanishes_continuously():
    values = [build_twirled_channel(DelayProfile.from_w1(1 - eps), 4).flip_probability for eps in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert values == sorted(values, reverse=True)
    assert values[-1] < 1e-7


# -- loss ---------------------------------------------------------------------


def test_loss_backaction_examples():
    none = loss_backaction(LossEvent(0, 4))
    assert none.prefix_mask == 0 and none.probability == 0.0 and none.syndrome == LOST
    one = loss_backaction(LossEvent(1, 4))
    assert one.prefix_mask == 0b1 and one.probability == 0.5
    full = loss_backaction(LossEvent(4, 4))
    assert full.prefix_mask == 0b1111 and canonical_mask(full.prefix_mask, 4) == 0
    with pytest.raises(ValueError):
        LossEvent(5, 4)


@given(st.integers(0, 4))
def test_backaction_masks_are_self_inverse(stage):
    m = loss_backaction(LossEvent(stage, 4)).prefix_mask
    assert m ^ m == 0


def test_dephasing_examples():
    assert dephasing_rule(1e6, 0.0) == 0.0
    x = 1e-3
    # series of (1 - exp(-x)) / 2
    assert dephasing_rule(1.0, x) == pytest.approx(x / 2 - x**2 / 4 + x**3 / 12, rel=1e-9)
    assert dephasing_rule(1.0, x) == pytest.approx(4.9975e-4, rel=1e-4)
    assert dephasing_rule(1.0, 1e6) == pytest.approx(0.5)
    assert dephasing_rule(math.inf, 10.0) == 0.0


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_dephasing_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    assert dephasing_rule(7.0, lo) <= dephasing_rule(7.0, hi) <= 0.5


def _path(w):
    return PhotonPath(("cir",) + ("sw", "cav", "cir") * w)


def test_lossless_path_always_survives():
    rng = np.random.default_rng(1)
    out = sample_loss_location(_path(4), NoiseBudget(0.0, 0.0), rng, size=1000)
    assert (out == -1).all()
    assert sample_loss_location(_path(4), NoiseBudget(0.0, 0.0), rng) is None


def test_certain_cavity_loss_is_stage_one():
    rng = np.random.default_rng(2)
    ev = sample_loss_location(PhotonPath(("cav",)), NoiseBudget(1.0, 0.0), rng)
    assert ev == LossEvent(1, 1)


def test_survival_frequency_matches_product_rule():
    budget = NoiseBudget(0.01, 0.0)
    path = _path(4)
    p = stage_distribution(path, budget)
    assert p[-1] == pytest.approx(0.99**4, abs=1e-15)
    assert p.sum() == pytest.approx(1.0)
    n = 1_000_000
    out = sample_loss_location(path, budget, np.random.default_rng(3), size=n)
    freq = np.mean(out == -1)
    sigma = math.sqrt(p[-1] * (1 - p[-1]) / n)
    assert abs(freq - 0.99**4) < 3 * sigma
    for stage in range(1, 5):
        ps = p[stage]
        assert abs(np.mean(out == stage) - ps) < 3 * math.sqrt(ps * (1 - ps) / n) + 1e-12


def test_peripheral_losses_map_to_stage_before_next_cavity():
    path = PhotonPath(("cir", "sw", "cav", "cir", "sw", "cav", "cir"))
    assert path.stages == (0, 0, 1, 1, 1, 2, 2)
    p = stage_distribution(path, NoiseBudget(0.0, 0.0, p_sw=0.1))
    assert p[0] == pytest.approx(0.1) and p[1] == pytest.approx(0.09) and p[2] == 0.0
