import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from lidaraug.remission import (
    RemissionSampler,
    RemissionTable,
    RemissionTableError,
    build_table,
    sample_remission,
)

from oracles import nearest_bin


def _cloud_at(ranges, remissions):
    ranges = np.asarray(ranges, dtype=float)
    cloud = np.zeros((ranges.size, 4), np.float32)
    cloud[:, 0] = ranges
    cloud[:, 3] = remissions
    return cloud


def _table(bins, width=1.0):
    t = RemissionTable(width, 16)
    for k, vals in bins.items():
        t.bins[k] = np.asarray(vals, np.float32)
        t.counts[k] = len(vals)
    return t


def test_singleton_bin():
    t = build_table([_cloud_at([5.0], [0.3])], 1.0, 16, np.random.default_rng(0))
    assert list(t.bins) == [5]
    assert t.bins[5].tolist() == [np.float32(0.3)]
    assert t.counts[5] == 1


def test_reservoir_holds_members_of_stream():
    rng = np.random.default_rng(1)
    vals = rng.random(1000).astype(np.float32)
    t = build_table([_cloud_at(np.full(1000, 7.5), vals)], 1.0, 10, rng)
    assert t.bins[7].size == 10 and t.counts[7] == 1000
    assert set(t.bins[7].tolist()) <= set(vals.tolist())


def test_reservoir_is_uniform():
    # every stream position should be kept with probability k/n
    hits = np.zeros(100)
    rng = np.random.default_rng(2)
    vals = np.arange(100, dtype=np.float32) / 100
    for _ in range(2000):
        t = build_table([_cloud_at(np.full(100, 3.2), vals)], 1.0, 10, rng)
        hits[np.rint(t.bins[3] * 100).astype(int)] += 1
    # expected 200 per position; binomial sd ~13.4
    assert np.abs(hits - 200).max() < 6 * 13.4


def test_counts_additive():
    rng = np.random.default_rng(3)
    a = _cloud_at(rng.uniform(1, 30, 500), rng.random(500))
    b = _cloud_at(rng.uniform(1, 30, 700), rng.random(700))
    t1 = build_table([a, b], 1.0, 8, np.random.default_rng(0))
    t2 = build_table([np.concatenate([a, b])], 1.0, 8, np.random.default_rng(0))
    assert t1.counts == t2.counts


def test_forced_and_nearest_bin_values():
    t = _table({5: [0.3]})
    assert sample_remission(t, 5.2, np.random.default_rng(0)) == np.float32(0.3)
    t = _table({5: [0.1], 30: [0.9, 0.8]})
    vals = t.sample(np.full(50, 20.0), np.random.default_rng(0))
    assert set(vals.tolist()) <= {np.float32(0.9), np.float32(0.8)}
    assert t.source_bins([20.0]).tolist() == [30]


@settings(max_examples=80)
@given(st.sets(st.integers(-2, 60), min_size=1, max_size=8),
       st.lists(st.floats(0, 70, allow_nan=False), min_size=1, max_size=30),
       st.sampled_from([0.5, 1.0, 2.5]))
def test_source_bin_matches_oracle(keys, ranges, width):
    t = _table({k: [0.5] for k in keys}, width)
    got = t.source_bins(ranges).tolist()
    assert got == [nearest_bin(keys, width, r) for r in ranges]


def test_two_value_frequencies():
    t = _table({4: [0.2, 0.8]})
    draws = t.sample(np.full(10000, 4.5), np.random.default_rng(4))
    frac = np.mean(draws == np.float32(0.2))
    assert 0.45 <= frac <= 0.55


def test_save_load_identity(tmp_path, table):
    table.save(tmp_path / "t.rmt")
    back = RemissionTable.load(tmp_path / "t.rmt")
    assert back.bin_width == table.bin_width and back.reservoir_size == table.reservoir_size
    assert back.counts == table.counts
    assert all(np.array_equal(back.bins[k], table.bins[k]) for k in table.bins)
    assert back.to_bytes() == table.to_bytes()


def test_truncated_and_bad_files(tmp_path, table):
    data = table.to_bytes()
    for cut in (3, 20, len(data) - 1):
        with pytest.raises(RemissionTableError):
            RemissionTable.from_bytes(data[:cut])
    with pytest.raises(RemissionTableError):
        RemissionTable.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(RemissionTableError):
        RemissionTable.from_bytes(data + b"\0")
    with pytest.raises(RemissionTableError):
        RemissionTable().save(tmp_path / "empty.rmt")
    with pytest.raises(RemissionTableError):
        build_table([np.zeros((0, 4), np.float32)])


def test_sampling_deterministic(table):
    r = np.linspace(1, 90, 200)
    a = table.sample(r, np.random.default_rng(7))
    b = table.sample(r, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_merge_keeps_counts_and_members():
    rng = np.random.default_rng(5)
    a = build_table([_cloud_at(np.full(300, 2.5), rng.random(300))], 1.0, 20, rng)
    b = build_table([_cloud_at(np.full(100, 2.5), rng.random(100))], 1.0, 20, rng)
    m = a.merge(b, rng)
    assert m.counts[2] == 400 and m.bins[2].size == 20
    assert set(m.bins[2].tolist()) <= set(a.bins[2].tolist()) | set(b.bins[2].tolist())


def test_estimator_api(fixture_scans):
    est = RemissionSampler(bin_width=2.0, reservoir_size=64, random_state=0)
    assert clone(est).get_params() == est.get_params()
    est.fit(fixture_scans[0])
    assert est.n_bins_ > 0
    out = est.transform(fixture_scans[0][:100])
    assert out.shape == (100, 4)
    assert set(out[:, 3].tolist()) <= set(est.table_.values().tolist())
    assert np.array_equal(out[:, :3], fixture_scans[0][:100, :3])
