"""Range-binned empirical remission distribution, learned without labels.

Each bin ``floor(range / bin_width)`` (euclidean range) keeps a uniform
reservoir (Algorithm R) of the remission values observed at that range.

Table file layout (little-endian)::

    magic        4s   b"RMTB"
    version      u32  1
    bin_width    f64
    reservoir    u32  reservoir capacity per bin
    n_bins       u32  number of non-empty bins
    n_bins x:
      bin_index  i64
      total      u64  observations seen by the bin
      n_stored   u32
      values     f32[n_stored]
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_point_cloud, check_random_state
from .sensor import euclidean_range

MAGIC = b"RMTB"
VERSION = 1


class RemissionTableError(ValueError):
    pass


@dataclass
class RemissionTable:
    bin_width: float = 1.0
    reservoir_size: int = 4096
    bins: dict[int, np.ndarray] = field(default_factory=dict)
    counts: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if self.reservoir_size < 1:
            raise ValueError("reservoir_size must be >= 1")

    @property
    def empty(self) -> bool:
        return not any(v.size for v in self.bins.values())

    def bin_index(self, ranges) -> np.ndarray:
        return np.floor(np.asarray(ranges, dtype=np.float64) / self.bin_width).astype(np.int64)

    def update(self, ranges, values, rng) -> None:
        """Stream observations into their bins' reservoirs."""
        ranges = np.asarray(ranges, dtype=np.float64)
        values = np.asarray(values, dtype=np.float32)
        if ranges.shape != values.shape:
            raise ValueError("ranges and values must have the same shape")
        idx = self.bin_index(ranges)
        order = np.argsort(idx, kind="stable")
        idx, values = idx[order], values[order]
        keys, starts = np.unique(idx, return_index=True)
        ends = np.append(starts[1:], idx.size)
        for key, s, e in zip(keys.tolist(), starts, ends):
            self._update_bin(key, values[s:e], rng)

    def _update_bin(self, key, stream, rng) -> None:
        k = self.reservoir_size
        seen = self.counts.get(key, 0)
        res = self.bins.get(key, np.empty(0, dtype=np.float32))
        # fill phase
        n_fill = max(0, min(k - res.size, stream.size))
        if n_fill:
            res = np.concatenate([res, stream[:n_fill]])
        rest = stream[n_fill:]
        if rest.size:
            if not res.flags.writeable:
                res = res.copy()
            # item with global index i replaces slot j ~ U{0..i} when j < k;
            # later items overwrite earlier ones at the same slot
            gidx = seen + n_fill + np.arange(rest.size, dtype=np.int64)
            slots = rng.integers(0, gidx + 1)
            hit = np.flatnonzero(slots < k)
            if hit.size:
                rev_slots = slots[hit][::-1]
                _, first = np.unique(rev_slots, return_index=True)
                last = hit[::-1][first]
                res[slots[last]] = rest[last]
        self.bins[key] = res
        self.counts[key] = seen + int(stream.size)

    def merge(self, other, rng) -> "RemissionTable":
        """Combine two tables built from disjoint data (weighted by counts)."""
        if other.bin_width != self.bin_width:
            raise ValueError("cannot merge tables with different bin widths")
        k = min(self.reservoir_size, other.reservoir_size)
        out = RemissionTable(self.bin_width, k)
        for key in sorted(set(self.bins) | set(other.bins)):
            a = self.bins.get(key, np.empty(0, np.float32))
            b = other.bins.get(key, np.empty(0, np.float32))
            ca, cb = self.counts.get(key, 0), other.counts.get(key, 0)
            if a.size + b.size <= k:
                vals = np.concatenate([a, b])
            else:
                n_a = int(rng.hypergeometric(ca, cb, k)) if ca and cb else (k if ca else 0)
                n_a = min(max(n_a, k - b.size), a.size)
                n_b = min(k - n_a, b.size)
                vals = np.concatenate([
                    rng.choice(a, n_a, replace=False) if n_a else a[:0],
                    rng.choice(b, n_b, replace=False) if n_b else b[:0],
                ])
            out.bins[key] = vals.astype(np.float32)
            out.counts[key] = ca + cb
        return out

    # ------------------------------------------------------------------
    # sampling

    def _nonempty_keys(self) -> np.ndarray:
        return np.array(sorted(k for k, v in self.bins.items() if v.size), dtype=np.int64)

    def source_bins(self, ranges) -> np.ndarray:
        """Bin each range is served from: its own, else the nearest non-empty one.

        Distance is measured from the range to bin centres; ties go to the
        smaller range.
        """
        keys = self._nonempty_keys()
        if keys.size == 0:
            raise RemissionTableError("remission table is empty")
        ranges = np.asarray(ranges, dtype=np.float64)
        b = self.bin_index(ranges)
        pos = np.searchsorted(keys, b)
        above = keys[np.minimum(pos, keys.size - 1)]
        below = keys[np.maximum(pos - 1, 0)]
        exact = above == b
        d_above = np.abs((above + 0.5) * self.bin_width - ranges)
        d_below = np.abs((below + 0.5) * self.bin_width - ranges)
        has_above = pos < keys.size
        has_below = pos > 0
        pick_above = has_above & (~has_below | (d_above < d_below))
        return np.where(exact, b, np.where(pick_above, above, below))

    def sample(self, ranges, rng) -> np.ndarray:
        """One remission value per range, uniform over the serving bin's reservoir."""
        ranges = np.atleast_1d(np.asarray(ranges, dtype=np.float64))
        src = self.source_bins(ranges)
        out = np.empty(ranges.shape, dtype=np.float32)
        if ranges.size == 0:
            return out
        keys, inverse = np.unique(src, return_inverse=True)
        sizes = np.array([self.bins[int(k)].size for k in keys], dtype=np.int64)
        picks = rng.integers(0, sizes[inverse])
        for i, key in enumerate(keys.tolist()):
            sel = inverse == i
            out[sel] = self.bins[key][picks[sel]]
        return out

    def values(self) -> np.ndarray:
        """Union of all stored reservoir values."""
        parts = [v for v in self.bins.values() if v.size]
        return np.concatenate(parts) if parts else np.empty(0, np.float32)

    # ------------------------------------------------------------------
    # persistence

    def to_bytes(self) -> bytes:
        if self.empty:
            raise RemissionTableError("refusing to save an empty remission table")
        buf = io.BytesIO()
        keys = self._nonempty_keys()
        buf.write(struct.pack("<4sIdII", MAGIC, VERSION, self.bin_width,
                              self.reservoir_size, keys.size))
        for key in keys.tolist():
            vals = self.bins[key]
            buf.write(struct.pack("<qQI", key, self.counts[key], vals.size))
            buf.write(vals.astype("<f4").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data) -> "RemissionTable":
        head = struct.calcsize("<4sIdII")
        if len(data) < head:
            raise RemissionTableError("truncated remission table header")
        magic, version, width, reservoir, n_bins = struct.unpack_from("<4sIdII", data, 0)
        if magic != MAGIC:
            raise RemissionTableError("not a remission table (bad magic)")
        if version != VERSION:
            raise RemissionTableError(f"unsupported remission table version {version}")
        table = cls(width, reservoir)
        pos = head
        rec = struct.calcsize("<qQI")
        for _ in range(n_bins):
            if pos + rec > len(data):
                raise RemissionTableError("truncated remission table")
            key, total, n = struct.unpack_from("<qQI", data, pos)
            pos += rec
            if pos + 4 * n > len(data):
                raise RemissionTableError("truncated remission table")
            table.bins[key] = np.frombuffer(data, "<f4", n, pos).astype(np.float32)
            table.counts[key] = total
            pos += 4 * n
        if pos != len(data):
            raise RemissionTableError("trailing bytes after remission table")
        return table

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "RemissionTable":
        return cls.from_bytes(Path(path).read_bytes())


def build_table(clouds, bin_width=1.0, reservoir_size=4096, rng=None) -> RemissionTable:
    """Stream point clouds into a new :class:`RemissionTable`."""
    rng = check_random_state(rng)
    table = RemissionTable(bin_width, reservoir_size)
    for cloud in clouds:
        cloud = check_point_cloud(cloud)
        table.update(euclidean_range(cloud[:, :3]), cloud[:, 3], rng)
    if table.empty:
        raise RemissionTableError("no points to build a remission table from")
    return table


def sample_remission(table, range_, rng) -> float:
    return float(table.sample([range_], rng)[0])


class RemissionSampler(BaseEstimator):
    """Estimator wrapper: ``fit`` on scans, ``sample`` remission for ranges.

    Parameters
    ----------
    bin_width : float, default=1.0
        Range bin width in meters.
    reservoir_size : int, default=4096
        Values kept per bin.
    random_state : int, Generator or None
    """

    def __init__(self, bin_width=1.0, reservoir_size=4096, random_state=None):
        self.bin_width = bin_width
        self.reservoir_size = reservoir_size
        self.random_state = random_state

    def fit(self, X, y=None):
        clouds = [X] if isinstance(X, np.ndarray) and X.ndim == 2 else X
        self.table_ = build_table(clouds, self.bin_width, self.reservoir_size,
                                  check_random_state(self.random_state))
        self.n_bins_ = len(self.table_._nonempty_keys())
        return self

    def sample(self, ranges, random_state=None):
        check_is_fitted(self, "table_")
        return self.table_.sample(ranges, check_random_state(random_state))

    def transform(self, X):
        """Replace the remission column of ``X`` with values sampled by range."""
        check_is_fitted(self, "table_")
        X = check_point_cloud(X).copy()
        X[:, 3] = self.table_.sample(euclidean_range(X[:, :3]),
                                     check_random_state(self.random_state))
        return X
