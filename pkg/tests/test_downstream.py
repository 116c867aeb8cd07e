import datetime as dt
import itertools

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from alise.data import BACKGROUND, Sits
from alise.downstream import (
    ProbeHead,
    auc_roc,
    change_map,
    f1_scores,
    gapfill,
    gf_change_map,
    probe_forward,
)


def brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def test_probe_zero_weights():
    head = ProbeHead(3, 4, 5)
    with torch.no_grad():
        head.linear.weight.zero_()
    logits = probe_forward(torch.randn(2, 3, 4, 6, 6), head)
    assert logits.shape == (2, 5, 6, 6)
    torch.testing.assert_close(logits, head.linear.bias.detach()[None, :, None, None].expand(2, 5, 6, 6))


def test_probe_shape_and_linearity():
    torch.manual_seed(0)
    head = ProbeHead(10, 64, 18)
    y = torch.randn(1, 10, 64, 4, 4)
    logits = head(y)
    assert logits.shape == (1, 18, 4, 4)
    b = head.linear.bias.detach()[None, :, None, None]
    torch.testing.assert_close(head(2 * y) - b, 2 * (logits - b), rtol=1e-5, atol=1e-5)
    with pytest.raises(ValueError):
        head(torch.randn(1, 9, 64, 4, 4))


def test_probe_parameter_count():
    head = ProbeHead(4, 16, 5)
    assert sum(p.numel() for p in head.parameters()) == (16 * 4 + 1) * 5


def test_probe_flattening_order():
    """Feature index n * d_model + d addresses query n, channel d."""
    head = ProbeHead(2, 3, 2)
    with torch.no_grad():
        head.linear.weight.zero_()
        head.linear.bias.zero_()
        head.linear.weight[0, 1 * 3 + 2] = 1.0
    y = torch.zeros(1, 2, 3, 1, 1)
    y[0, 1, 2] = 7.0
    assert head(y)[0, 0, 0, 0].item() == 7.0


def test_change_map_examples():
    y = torch.randn(2, 3, 4, 5, 5)
    assert torch.all(change_map(y, y) == 0)
    torch.testing.assert_close(change_map(y + 1, y), torch.ones(2, 5, 5))
    torch.testing.assert_close(change_map(y + 2, y), torch.full((2, 5, 5), 4.0))
    assert change_map(np.ones((3, 4, 2, 2)), np.zeros((3, 4, 2, 2))).shape == (2, 2)
    with pytest.raises(ValueError):
        change_map(y, y[:, :2])


def test_change_map_properties():
    g = torch.Generator().manual_seed(0)
    a, b = torch.randn(1, 3, 4, 5, 5, generator=g), torch.randn(1, 3, 4, 5, 5, generator=g)
    torch.testing.assert_close(change_map(a, b), change_map(b, a))
    torch.testing.assert_close(change_map(3 * a, 3 * b), 9 * change_map(a, b))
    assert torch.all(change_map(a, b) > 0)


def sits_from(values, days, valid=None, year=2019):
    values = np.asarray(values, dtype=np.float32)
    t = values.shape[0]
    dates = [dt.date(year, 1, 1) + dt.timedelta(days=int(d)) for d in days]
    valid = np.ones((t, 1, 1), bool) if valid is None else np.asarray(valid, bool).reshape(t, 1, 1)
    return Sits(values.reshape(t, -1, 1, 1), dates, valid)


def test_gapfill_examples():
    const = gapfill(sits_from([[3.0], [3.0], [3.0]], [10, 100, 200]))
    assert np.all(const.values == 3.0)
    lin = gapfill(sits_from([[0.0], [10.0]], [0, 10]))
    assert lin.values[1, 0, 0, 0] == pytest.approx(5.0)
    masked = gapfill(sits_from([[0.0], [99.0], [10.0]], [0, 5, 10], valid=[1, 0, 1]))
    assert masked.values[1, 0, 0, 0] == pytest.approx(5.0)
    assert masked.grid_days[1] == 5 and len(masked.grid_days) == 73


def test_gapfill_holds_edges_and_flags_missing():
    g = gapfill(sits_from([[1.0], [2.0]], [50, 100]))
    assert g.values[0, 0, 0, 0] == 1.0 and g.values[-1, 0, 0, 0] == 2.0
    empty = gapfill(sits_from([[1.0], [2.0]], [50, 100], valid=[0, 0]))
    assert empty.missing[0, 0] and np.all(empty.values == 0)


def test_gapfill_exact_on_grid():
    rng = np.random.default_rng(0)
    days = [0, 15, 40, 100, 260]
    vals = rng.normal(size=(5, 2))
    g = gapfill(sits_from(vals, days))
    for d, v in zip(days, vals):
        np.testing.assert_allclose(g.values[d // 5, :, 0, 0], v, rtol=1e-6)


def test_gf_change_map():
    s = sits_from(np.random.default_rng(1).normal(size=(4, 3)), [5, 80, 150, 300])
    assert gf_change_map(s, s)[0, 0] == 0
    delta = 0.5
    shifted = s.values.copy()
    shifted[:, 1] += delta
    s2 = Sits(shifted, s.dates, s.validity)
    # mean over grid dates and 3 channels
    assert gf_change_map(s, s2)[0, 0] == pytest.approx(delta**2 / 3, rel=1e-6)
    other = sits_from(np.random.default_rng(2).normal(size=(3, 3)), [20, 90, 250], year=2020)
    np.testing.assert_allclose(gf_change_map(s, other), gf_change_map(other, s))


def test_auc_examples():
    assert auc_roc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc_roc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert auc_roc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    assert brute_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    with pytest.raises(ValueError):
        auc_roc([0.1, 0.2], [1, 1])


labeled_scores = st.integers(2, 30).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.integers(-20, 20).map(float)),
        arrays(bool, n).filter(lambda l: 0 < l.sum() < len(l)),
    )
)


@settings(max_examples=100, deadline=None)
@given(labeled_scores)
def test_auc_matches_brute_force(data):
    scores, labels = data
    assert auc_roc(scores, labels) == pytest.approx(brute_auc(scores, labels), abs=1e-12)
    # strictly increasing transform
    assert auc_roc(np.exp(scores / 7) * 3 - 1, labels) == pytest.approx(auc_roc(scores, labels), abs=1e-12)


def test_f1_examples():
    truth = np.array([[0, 1], [1, 0]])
    f1, macro = f1_scores(truth, truth)
    assert np.all(f1 == 1) and macro == 1
    f1, macro = f1_scores(np.zeros_like(truth), truth)
    np.testing.assert_allclose(f1, [2 / 3, 0])
    assert macro == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        f1_scores(truth, np.full_like(truth, BACKGROUND))


def test_f1_ignores_background_and_absent_classes():
    truth = np.array([0, 0, 1, BACKGROUND, BACKGROUND])
    pred = np.array([0, 0, 1, 2, 2])
    f1, macro = f1_scores(pred, truth, n_classes=3)
    assert np.isnan(f1[2]) and macro == 1.0


def test_argmax_invariant_to_logit_shift():
    torch.manual_seed(0)
    head = ProbeHead(2, 4, 3)
    y = torch.randn(1, 2, 4, 3, 3)
    logits = head(y)
    assert torch.equal((logits + 5.0).argmax(1), logits.argmax(1))
