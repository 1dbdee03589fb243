"""Price and calendar ingestion, returns, realized measures and event design.

Timestamps are handled as ``numpy.datetime64[s]`` values interpreted as UTC.
"""

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .errors import (
    AlignmentError,
    ConfigError,
    DomainError,
    GapError,
    GridError,
    OrderingError,
    ParseError,
)

logger = logging.getLogger(__name__)

N_BINS = 288
BIN_MINUTES = 5
_MINUTE = np.timedelta64(60, "s")


def parse_timestamp(text):
    """Parse an ISO-8601 string into ``datetime64[s]`` (UTC)."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt, "s")


def format_timestamp(ts):
    return str(np.datetime64(ts, "s")) + "Z"


class PriceBar(NamedTuple):
    timestamp: np.datetime64
    close: float


@dataclass(frozen=True)
class PriceBars:
    """Column-oriented sequence of :class:`PriceBar`."""

    timestamps: np.ndarray
    close: np.ndarray

    def __len__(self):
        return len(self.close)

    def __getitem__(self, i):
        return PriceBar(self.timestamps[i], float(self.close[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


@dataclass(frozen=True)
class ReturnSeries:
    """Log returns in percent on a fixed minute grid."""

    timestamps: np.ndarray
    values: np.ndarray
    grid_step: int = 5

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise AlignmentError(
                f"{len(self.timestamps)} timestamps but {len(self.values)} values"
            )

    def __len__(self):
        return len(self.values)

    def slice(self, start=None, stop=None):
        return ReturnSeries(self.timestamps[start:stop], self.values[start:stop], self.grid_step)


@dataclass(frozen=True)
class RVSeries:
    timestamps: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.values)


class CalendarEntry(NamedTuple):
    event_id: str
    name: str
    country: str
    release: np.datetime64


@dataclass(frozen=True)
class EventCalendar:
    entries: tuple = ()

    def __post_init__(self):
        seen = {}
        for e in self.entries:
            key = (e.name, e.country)
            if seen.setdefault(key, e.event_id) != e.event_id:
                raise ConfigError(f"event {key} has two ids: {seen[key]!r}, {e.event_id!r}")

    def event_ids(self):
        """Distinct event ids in order of first appearance."""
        return list(dict.fromkeys(e.event_id for e in self.entries))

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class EventDesignMatrix:
    """Sparse 0/1 matrix of event-lag indicators, stored as (row, col) pairs."""

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    column_labels: tuple
    n_dropped: int = 0
    _by_col: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        if rows.shape != cols.shape:
            raise ConfigError("rows and cols differ in length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.n_rows):
            raise ConfigError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise ConfigError("column index out of range")
        if len(self.column_labels) != self.n_cols:
            raise ConfigError("one label per column required")
        key = rows * max(self.n_cols, 1) + cols
        if np.unique(key).size != key.size:
            raise ConfigError("duplicate (row, column) entry")
        order = np.lexsort((rows, cols))
        object.__setattr__(self, "rows", rows[order])
        object.__setattr__(self, "cols", cols[order])
        bounds = np.searchsorted(self.cols, np.arange(self.n_cols + 1))
        by_col = [self.rows[bounds[j]:bounds[j + 1]] for j in range(self.n_cols)]
        object.__setattr__(self, "_by_col", by_col)

    @property
    def nnz(self):
        return int(self.rows.size)

    def column_rows(self, j):
        """Row indices where column ``j`` is active (sorted)."""
        return self._by_col[j]

    def to_csr(self):
        data = np.ones(self.nnz)
        return sparse.csr_matrix((data, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols))

    def row_sum(self, coef):
        """``design @ coef`` without materialising the matrix."""
        out = np.zeros(self.n_rows)
        np.add.at(out, self.rows, np.asarray(coef, dtype=float)[self.cols])
        return out

    def row_columns(self, t):
        return self.cols[self.rows == t]

    def slice_rows(self, start, stop):
        keep = (self.rows >= start) & (self.rows < stop)
        return EventDesignMatrix(
            stop - start, self.n_cols, self.rows[keep] - start, self.cols[keep], self.column_labels
        )

    @classmethod
    def empty(cls, n_rows, n_cols=0, labels=None):
        labels = tuple(labels) if labels is not None else tuple(f"c{j}" for j in range(n_cols))
        return cls(n_rows, n_cols, np.zeros(0, np.int64), np.zeros(0, np.int64), labels)


# --------------------------------------------------------------------- loading


def load_prices(path, timestamp_col="timestamp", close_col="close"):
    """Read a ``timestamp,close`` CSV into :class:`PriceBars`.

    Raises ``ParseError`` (with the 1-based file line) for malformed rows and
    ``OrderingError`` for duplicated or decreasing timestamps.
    """
    ts, close = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        try:
            i_ts, i_close = header.index(timestamp_col), header.index(close_col)
        except ValueError:
            raise ParseError(f"header must contain {timestamp_col!r} and {close_col!r}", line=1) from None
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            try:
                t = parse_timestamp(row[i_ts])
                c = float(row[i_close])
            except (IndexError, ValueError) as exc:
                raise ParseError(str(exc), line=line) from None
            if not np.isfinite(c) or c <= 0:
                raise ParseError(f"close must be positive, got {row[i_close]!r}", line=line)
            if ts and t <= ts[-1]:
                kind = "duplicate" if t == ts[-1] else "decreasing"
                raise OrderingError(f"line {line}: {kind} timestamp {row[i_ts].strip()}")
            ts.append(t)
            close.append(c)
    return PriceBars(np.array(ts, dtype="datetime64[s]"), np.array(close, dtype=float))


def load_calendar(path):
    """Read an ``event_id,name,country,release`` CSV."""
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"event_id", "name", "country", "release"} - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"calendar header missing {sorted(missing)}", line=1)
        for row in reader:
            try:
                release = parse_timestamp(row["release"])
            except (TypeError, ValueError) as exc:
                raise ParseError(str(exc), line=reader.line_num) from None
            entries.append(CalendarEntry(row["event_id"].strip(), row["name"].strip(),
                                         row["country"].strip(), release))
    return EventCalendar(tuple(entries))


def write_calendar(calendar, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["event_id", "name", "country", "release"])
        for e in calendar.entries:
            w.writerow([e.event_id, e.name, e.country, format_timestamp(e.release)])


def load_returns(path):
    """Read a ``timestamp,return`` CSV written by :func:`write_returns`."""
    ts, vals = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if not row:
                continue
            try:
                ts.append(parse_timestamp(row[0]))
                vals.append(float(row[1]))
            except (IndexError, ValueError) as exc:
                raise ParseError(str(exc), line=reader.line_num) from None
    ts = np.array(ts, dtype="datetime64[s]")
    if ts.size > 1 and np.any(np.diff(ts) <= np.timedelta64(0, "s")):
        raise OrderingError(f"{path}: timestamps not strictly increasing")
    return ReturnSeries(ts, np.array(vals), infer_grid_step(ts))


def write_returns(series, path, value_name="return"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"timestamp,{value_name}\n")
        for t, v in zip(series.timestamps, series.values):
            fh.write(f"{format_timestamp(t)},{float(v)!r}\n")


def infer_grid_step(timestamps):
    """Smallest spacing between consecutive timestamps, in minutes."""
    if len(timestamps) < 2:
        return BIN_MINUTES
    step = np.diff(timestamps).min() // _MINUTE
    return int(step)


# ------------------------------------------------------------------- returns


def compute_log_returns(prices, grid_step=None):
    """Percent log returns ``100 * diff(log close)``; one fewer than bars."""
    close = np.asarray(prices.close, dtype=float)
    if close.size < 2:
        raise DomainError("need at least two price bars")
    if np.any(close <= 0) or not np.all(np.isfinite(close)):
        raise DomainError("prices must be positive and finite")
    ts = np.asarray(prices.timestamps, dtype="datetime64[s]")
    step = grid_step if grid_step is not None else infer_grid_step(ts)
    return ReturnSeries(ts[1:], 100.0 * np.diff(np.log(close)), step)


def compute_realized_volatility(one_min, allow_partial=False):
    """5-minute realized volatility from 1-minute percent returns.

    The window for timestamp ``t`` (on the 5-minute grid) holds the returns
    stamped ``t-4min .. t``.  A window with some but not all of its five
    returns raises ``GapError`` unless ``allow_partial``; windows with no
    returns at all (closed market) are simply absent.
    """
    if one_min.grid_step != 1:
        raise GridError(f"realized volatility needs a 1-minute grid, got {one_min.grid_step}")
    ts = np.asarray(one_min.timestamps, dtype="datetime64[s]")
    if ts.size and np.any(ts.astype(np.int64) % 60):
        raise GridError("1-minute timestamps must fall on whole minutes")
    minutes = ts.astype(np.int64) // 60
    # window end = next multiple of 5 at or after the stamp
    ends = -((-minutes) // BIN_MINUTES) * BIN_MINUTES
    uniq, inverse, counts = np.unique(ends, return_inverse=True, return_counts=True)
    bad = counts != BIN_MINUTES
    if bad.any() and not allow_partial:
        first = uniq[np.argmax(bad)]
        end = np.datetime64(int(first) * 60, "s")
        raise GapError(
            f"window ending {format_timestamp(end)} has {counts[np.argmax(bad)]} of 5 one-minute returns"
        )
    ss = np.bincount(inverse, weights=np.asarray(one_min.values, dtype=float) ** 2)
    rv = np.sqrt(ss)
    keep = ~bad if allow_partial else np.ones(uniq.size, bool)
    out_ts = (uniq[keep] * 60).astype("datetime64[s]")
    return RVSeries(out_ts, rv[keep])


# ----------------------------------------------------------------- seasonality


def seasonal_index(timestamp):
    """Time-of-day bin in ``[0, 287]`` of a timestamp on the 5-minute grid."""
    bins = seasonal_bins(np.atleast_1d(np.datetime64(timestamp, "s")))
    return int(bins[0])


def seasonal_bins(timestamps):
    """Vectorised :func:`seasonal_index`."""
    secs = np.asarray(timestamps, dtype="datetime64[s]").astype(np.int64)
    if np.any(secs % (BIN_MINUTES * 60)):
        i = int(np.argmax(secs % (BIN_MINUTES * 60) != 0))
        raise GridError(f"timestamp {format_timestamp(np.datetime64(int(secs[i]), 's'))} is off the 5-minute grid")
    return ((secs % 86400) // (BIN_MINUTES * 60)).astype(np.int64)


# ---------------------------------------------------------------------- events


def align_events(calendar, grid, n_lags=6, grid_step=None):
    """Build the event-lag design matrix on the return grid.

    Each release maps to the first grid timestamp at or after it.  Lag ``l``
    (1-based) sets column ``(event, l)`` at that index plus ``l - 1``.  Lags
    that would run past the sample end or across a session gap are dropped.
    Releases outside the span of the grid are dropped and counted in
    ``n_dropped``.
    """
    if n_lags < 1:
        raise ConfigError(f"n_lags must be >= 1, got {n_lags}")
    grid = np.asarray(grid, dtype="datetime64[s]")
    if grid.size == 0:
        raise ConfigError("empty grid")
    step = np.timedelta64((grid_step or infer_grid_step(grid)) * 60, "s")
    ids = calendar.event_ids()
    col_of = {eid: k for k, eid in enumerate(ids)}
    labels = tuple(f"{eid}:{lag}" for eid in ids for lag in range(1, n_lags + 1))
    T = grid.size

    rows, cols = [], []
    n_off, n_cut = 0, 0
    for e in calendar.entries:
        if e.release <= grid[0] - step or e.release > grid[-1]:
            n_off += 1
            continue
        idx = int(np.searchsorted(grid, e.release, side="left"))
        base = col_of[e.event_id] * n_lags
        for lag in range(n_lags):
            t = idx + lag
            if t >= T or grid[t] - grid[idx] != lag * step:
                n_cut += n_lags - lag
                break
            rows.append(t)
            cols.append(base + lag)
    if n_off:
        logger.info("align_events: %d releases outside the sample dropped", n_off)
    if n_cut:
        logger.info("align_events: %d lags cut at sample end or session gaps", n_cut)
    rows = np.array(rows, dtype=np.int64)
    cols = np.array(cols, dtype=np.int64)
    if rows.size:
        key = rows * len(labels) + cols
        _, first = np.unique(key, return_index=True)
        rows, cols = rows[np.sort(first)], cols[np.sort(first)]
    return EventDesignMatrix(T, len(labels), rows, cols, labels, n_dropped=n_off)


def write_design_triplets(design, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("row,col,label\n")
        for r, c in zip(design.rows, design.cols):
            fh.write(f"{r},{c},{design.column_labels[c]}\n")


def read_design_triplets(path, n_rows, column_labels):
    rows, cols = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(int(row["row"]))
            cols.append(int(row["col"]))
    return EventDesignMatrix(n_rows, len(column_labels), np.array(rows, np.int64),
                             np.array(cols, np.int64), tuple(column_labels))


# ----------------------------------------------------------------- correlation


def realized_correlation(a, b, window=5, end=None):
    """Sample correlation of the last ``window`` 1-minute return pairs.

    With ``end`` given, uses the returns stamped strictly before ``end``.
    A zero-variance window yields 0.
    """
    ta = np.asarray(a.timestamps, dtype="datetime64[s]")
    tb = np.asarray(b.timestamps, dtype="datetime64[s]")
    if ta.shape != tb.shape or np.any(ta != tb):
        raise AlignmentError("return series timestamps differ")
    stop = len(ta) if end is None else int(np.searchsorted(ta, np.datetime64(end, "s"), side="left"))
    if stop < window:
        raise AlignmentError(f"need {window} returns before the allocation time, have {stop}")
    xa = np.asarray(a.values[stop - window:stop], dtype=float)
    xb = np.asarray(b.values[stop - window:stop], dtype=float)
    return _corr(xa, xb)


def _corr(xa, xb):
    da, db = xa - xa.mean(), xb - xb.mean()
    den = np.sqrt(np.dot(da, da) * np.dot(db, db))
    if den <= 0:
        return 0.0
    return float(np.clip(np.dot(da, db) / den, -1.0, 1.0))


def realized_correlation_series(a, b, window=5):
    """Correlation over each 5-minute window, stamped at the window end.

    Same window convention as :func:`compute_realized_volatility`; windows
    with missing minutes are skipped.
    """
    ta = np.asarray(a.timestamps, dtype="datetime64[s]")
    tb = np.asarray(b.timestamps, dtype="datetime64[s]")
    if ta.shape != tb.shape or np.any(ta != tb):
        raise AlignmentError("return series timestamps differ")
    minutes = ta.astype(np.int64) // 60
    ends = -((-minutes) // window) * window
    uniq, start, counts = np.unique(ends, return_index=True, return_counts=True)
    out_t, out_c = [], []
    va, vb = np.asarray(a.values, float), np.asarray(b.values, float)
    for u, s, c in zip(uniq, start, counts):
        if c != window:
            continue
        out_t.append(u * 60)
        out_c.append(_corr(va[s:s + c], vb[s:s + c]))
    return np.array(out_t, dtype="datetime64[s]"), np.array(out_c)
