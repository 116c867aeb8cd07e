import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alise.data import (
    BACKGROUND,
    NormStats,
    Sits,
    SynthConfig,
    compute_stats,
    delta_t,
    read_sits,
    robust_normalize,
    select_consecutive,
    synth_generate,
    write_sits,
)


def small_cfg(**kw):
    base = dict(n_series=1, size=16, n_classes=3, min_dates=20, max_dates=20, n_years=2)
    base.update(kw)
    return SynthConfig(**base)


def toy_sits(t=10, c=3, h=4, w=4, seed=0):
    rng = np.random.default_rng(seed)
    dates = [dt.date(2018, 1, 1) + dt.timedelta(days=int(d)) for d in np.sort(rng.choice(700, t, replace=False))]
    return Sits(rng.normal(size=(t, c, h, w)).astype(np.float32), dates, rng.random((t, h, w)) > 0.2)


def test_synth_shape():
    (item,) = synth_generate(small_cfg(), seed=0)
    assert item.sits.values.shape == (20, 10, 16, 16)
    assert item.sits.validity.shape == (20, 16, 16)
    assert item.labels.shape == (2, 16, 16)


def test_synth_no_change():
    items = synth_generate(small_cfg(n_series=3, change_rate=0.0), seed=1)
    assert not any(it.change.any() for it in items)


def test_synth_all_change():
    items = synth_generate(small_cfg(n_series=3, change_rate=1.0, background_rate=0.0), seed=2)
    assert all(it.change.all() for it in items)


def test_synth_label_invariants():
    for it in synth_generate(small_cfg(n_series=5, n_classes=4), seed=3):
        fg = it.labels[it.labels != BACKGROUND]
        assert fg.max() < 4
        expected = (it.labels[0] != it.labels[1]) & (it.labels[0] != BACKGROUND) & (it.labels[1] != BACKGROUND)
        np.testing.assert_array_equal(it.change, expected)
        assert all(b > a for a, b in zip(it.sits.dates, it.sits.dates[1:]))


def test_synth_reproducible():
    a = synth_generate(small_cfg(n_series=2), seed=7)
    b = synth_generate(small_cfg(n_series=2), seed=7)
    for x, y in zip(a, b):
        assert x.sits.values.tobytes() == y.sits.values.tobytes()
        assert x.sits.dates == y.sits.dates
        np.testing.assert_array_equal(x.labels, y.labels)


@pytest.mark.parametrize("kw", [dict(n_classes=1), dict(size=3), dict(min_dates=19, max_dates=30)])
def test_synth_rejects(kw):
    with pytest.raises(ValueError):
        synth_generate(small_cfg(**kw), seed=0)


def test_delta_t_values():
    assert delta_t(["2014-03-03"])[0] == 0
    assert delta_t([dt.date(2014, 3, 4)])[0] == 1
    # 303 days left in 2014 after Mar 3, +1 to Jan 1st, then 2015 and leap 2016
    assert delta_t(["2017-01-01"])[0] == 303 + 1 + 365 + 366


def test_delta_t_before_reference():
    with pytest.raises(ValueError, match="reference"):
        delta_t(["2014-03-02"])


@given(st.dates(dt.date(2014, 3, 3), dt.date(2030, 12, 31)), st.dates(dt.date(2014, 3, 3), dt.date(2030, 12, 31)))
def test_delta_t_translation(d1, d2):
    a, b = delta_t([d1, d2])
    assert b - a == (d2 - d1).days


def test_normalize_trivial():
    s = toy_sits()
    median = np.array([0.1, 0.2, 0.3])
    stats = NormStats(median, np.array([1.0, 2.0, 0.5]))
    flat = Sits(np.broadcast_to(median[None, :, None, None], s.values.shape).copy(), s.dates, s.validity)
    assert np.all(robust_normalize(flat, stats).values == 0)
    shifted = flat.values.copy()
    shifted[:, 0] += 1.0
    out = robust_normalize(Sits(shifted, s.dates, s.validity), stats)
    np.testing.assert_allclose(out.values[:, 0], 1.0, rtol=0, atol=1e-6)


def test_normalize_zero_iqr():
    s = toy_sits()
    with pytest.raises(ValueError, match="channel 1"):
        robust_normalize(s, NormStats(np.zeros(3), np.array([1.0, 0.0, 1.0])))


def test_normalized_split_has_zero_median():
    items = synth_generate(small_cfg(n_series=4), seed=5)
    series = [it.sits for it in items]
    stats = compute_stats(series)
    normed = [robust_normalize(s, stats) for s in series]
    again = compute_stats(normed)
    np.testing.assert_allclose(again.median, 0.0, atol=1e-6)
    np.testing.assert_allclose(again.iqr, 1.0, atol=1e-5)


def test_normalize_affine():
    s = toy_sits(seed=4)
    scaled = Sits(s.values * 3.0 + 2.0, s.dates, s.validity)
    a = robust_normalize(s, compute_stats([s]))
    b = robust_normalize(scaled, compute_stats([scaled]))
    np.testing.assert_allclose(a.values, b.values, atol=1e-5)


def test_select_consecutive_identity_and_replay():
    s = toy_sits(t=10)
    full = select_consecutive(s, 10, seed=0)
    assert full.dates == s.dates
    one, two = select_consecutive(s, 4, seed=3), select_consecutive(s, 4, seed=3)
    assert one.dates == two.dates and one.t == 4
    start = s.dates.index(one.dates[0])
    np.testing.assert_array_equal(one.values, s.values[start:start + 4])
    np.testing.assert_array_equal(one.validity, s.validity[start:start + 4])
    with pytest.raises(ValueError):
        select_consecutive(s, 11, seed=0)


def test_select_consecutive_uniform():
    s = toy_sits(t=10)
    rng = np.random.default_rng(123)
    counts = np.zeros(7)
    for _ in range(10_000):
        counts[s.dates.index(select_consecutive(s, 4, rng).dates[0])] += 1
    np.testing.assert_allclose(counts / counts.sum(), 1 / 7, atol=0.02)


def test_round_trip(tmp_path):
    (item,) = synth_generate(small_cfg(), seed=9)
    back = read_sits(write_sits(tmp_path / "s", item))
    assert back.sits.values.tobytes() == item.sits.values.tobytes()
    assert back.sits.dates == item.sits.dates
    np.testing.assert_array_equal(back.sits.validity, item.sits.validity)
    np.testing.assert_array_equal(back.labels, item.labels)
    np.testing.assert_array_equal(back.change, item.change)
    assert back.seed == 9
    meta = (tmp_path / "s" / "meta.txt").read_text(encoding="utf-8")
    assert "shape=20,10,16,16" in meta


def test_round_trip_unlabeled(tmp_path):
    s = toy_sits()
    back = read_sits(write_sits(tmp_path / "u", s, seed=1))
    assert isinstance(back, Sits)
    assert back.values.tobytes() == s.values.tobytes()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_year_split(seed):
    (item,) = synth_generate(small_cfg(min_dates=40, max_dates=60), seed)
    y0, y1 = item.year(0), item.year(1)
    assert y0.t + y1.t == item.sits.t
    assert all(d.year == item.start_year for d in y0.dates)
