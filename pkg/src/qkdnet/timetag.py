"""Time-tag streams: the ``QTT1`` binary codec, slot binning, coincidences, histograms.

File layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"QTT1"
    4       2     format version (u16, currently 1)
    6       8     sync rate in millihertz (u64)
    14      4     tag resolution in ps (u32, always 64)
    18      8*n   records (u64 each)

Record bits: 0-15 offset within the sync period in resolution units,
16-55 sync pulse counter, 56-57 party id (0 = Alice, 1 = Bob), 58-63 zero.
Records are sorted by (sync counter, offset).
"""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, FormatError
from .states import OUTCOMES, Outcome

MAGIC = b"QTT1"
VERSION = 1
RESOLUTION_PS = 64
HEADER = struct.Struct("<4sHQI")
HEADER_SIZE = HEADER.size  # 18
RECORD_SIZE = 8

PARTY_A = 0
PARTY_B = 1

_OFFSET_BITS = 16
_SYNC_BITS = 40
_SYNC_MASK = (1 << _SYNC_BITS) - 1
_OFFSET_MASK = (1 << _OFFSET_BITS) - 1
_KEY_MASK = (1 << 56) - 1
MAX_SYNC = _SYNC_MASK


@dataclass(frozen=True)
class AnalyzerMap:
    """Passive analyzer: polarization outcome -> time slot within the sync period.

    Slot ``k`` is centered at ``delay + offsets[k]`` (seconds) and is
    ``slot_width`` wide; outcomes are ordered H, V, D, A.
    """

    offsets: tuple = (0.0, 2.5e-9, 5.0e-9, 7.5e-9)
    slot_width: float = 1e-9
    delay: float = 1e-9

    def centers(self) -> np.ndarray:
        return self.delay + np.asarray(self.offsets, dtype=float)

    def windows(self) -> np.ndarray:
        """``(4, 2)`` array of half-open ``[start, stop)`` windows in seconds."""
        c = self.centers()
        return np.stack([c - self.slot_width / 2, c + self.slot_width / 2], axis=1)

    def validate(self, period: float | None = None):
        if len(self.offsets) != 4:
            raise ConfigError(f"analyzer needs 4 slot offsets, got {len(self.offsets)}")
        if not self.slot_width > 0:
            raise ConfigError(f"slot width must be positive, got {self.slot_width}")
        w = self.windows()
        if np.any(np.diff(self.centers()) <= 0):
            raise ConfigError("analyzer slot offsets must be strictly increasing")
        if np.any(w[1:, 0] < w[:-1, 1]):
            raise ConfigError("analyzer slot windows overlap")
        if period is not None and (w[0, 0] < 0 or w[-1, 1] > period):
            raise ConfigError(
                f"analyzer windows [{w[0, 0]:.3g}, {w[-1, 1]:.3g}) s do not fit the "
                f"{period:.4g} s sync period"
            )


@dataclass(frozen=True, eq=False)
class TagStream:
    """Sorted detector events of one or both parties.

    ``offset`` is in units of ``resolution_ps``; ``sync_rate_millihz`` is the
    pump repetition rate in mHz as stored in the file header.
    """

    sync: np.ndarray
    offset: np.ndarray
    party: np.ndarray
    sync_rate_millihz: int
    resolution_ps: int = RESOLUTION_PS
    version: int = VERSION

    def __post_init__(self):
        for name, dtype in (("sync", np.uint64), ("offset", np.uint16), ("party", np.uint8)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.sync.shape == self.offset.shape == self.party.shape):
            raise ValueError("sync, offset and party arrays must have equal length")

    @classmethod
    def from_events(cls, sync, offset, party, sync_rate_hz: float, **kw) -> "TagStream":
        """Build a stream from unsorted events."""
        sync = np.asarray(sync, dtype=np.uint64)
        offset = np.asarray(offset, dtype=np.uint16)
        party = np.asarray(party, dtype=np.uint8)
        order = np.lexsort((party, offset, sync))
        return cls(sync[order], offset[order], party[order],
                   int(round(sync_rate_hz * 1000)), **kw)

    @classmethod
    def empty(cls, sync_rate_hz: float) -> "TagStream":
        return cls.from_events([], [], [], sync_rate_hz)

    def __len__(self):
        return int(self.sync.shape[0])

    def __eq__(self, other):
        if not isinstance(other, TagStream):
            return NotImplemented
        return (self.header() == other.header()
                and np.array_equal(self.sync, other.sync)
                and np.array_equal(self.offset, other.offset)
                and np.array_equal(self.party, other.party))

    def header(self) -> tuple:
        return (self.version, self.sync_rate_millihz, self.resolution_ps)

    @property
    def sync_rate_hz(self) -> float:
        return self.sync_rate_millihz / 1000

    @property
    def period(self) -> float:
        return 1000 / self.sync_rate_millihz

    @property
    def n_bins(self) -> int:
        """Number of resolution bins covering one sync period."""
        return -(-10**15 // (self.resolution_ps * self.sync_rate_millihz))

    def select(self, party=None, sync_range=None) -> "TagStream":
        mask = np.ones(len(self), dtype=bool)
        if party is not None:
            mask &= self.party == party
        if sync_range is not None:
            lo, hi = sync_range
            mask &= (self.sync >= lo) & (self.sync < hi)
        return TagStream(self.sync[mask], self.offset[mask], self.party[mask],
                         self.sync_rate_millihz, self.resolution_ps, self.version)

    def offsets_seconds(self) -> np.ndarray:
        """Bin-center arrival time within the sync period."""
        return (self.offset.astype(np.float64) + 0.5) * self.resolution_ps * 1e-12

    def records(self) -> np.ndarray:
        return (self.offset.astype(np.uint64)
                | (self.sync << np.uint64(_OFFSET_BITS))
                | (self.party.astype(np.uint64) << np.uint64(56)))

    @staticmethod
    def concatenate(streams, assume_ordered: bool = False) -> "TagStream":
        """Merge streams; ``assume_ordered`` skips the sort for consecutive, sorted chunks."""
        streams = list(streams)
        if not streams:
            raise ValueError("nothing to concatenate")
        head = streams[0]
        for s in streams[1:]:
            if s.header() != head.header():
                raise FormatError("cannot merge streams with different headers")
        sync = np.concatenate([s.sync for s in streams])
        offset = np.concatenate([s.offset for s in streams])
        party = np.concatenate([s.party for s in streams])
        if not assume_ordered:
            order = np.lexsort((party, offset, sync))
            sync, offset, party = sync[order], offset[order], party[order]
        return TagStream(sync, offset, party,
                         head.sync_rate_millihz, head.resolution_ps, head.version)


def _check_records(rec: np.ndarray, sync_rate_millihz: int, resolution_ps: int, base: int):
    """Raise FormatError at the first invalid record; ``base`` is the byte offset of ``rec[0]``."""
    if rec.size == 0:
        return
    reserved = (rec >> np.uint64(58)) != 0
    if reserved.any():
        k = int(np.argmax(reserved))
        raise FormatError(f"reserved bits set in record {k}", base + RECORD_SIZE * k)
    off = (rec & np.uint64(_OFFSET_MASK)).astype(np.int64)
    # offset * res < period  <=>  offset * res * rate_mHz < 1e15 ps*mHz
    limit = -(-10**15 // (resolution_ps * sync_rate_millihz))
    bad = off >= limit
    if bad.any():
        k = int(np.argmax(bad))
        raise FormatError(f"record {k} offset {off[k]} exceeds the sync period", base + RECORD_SIZE * k)
    key = rec & np.uint64(_KEY_MASK)
    unsorted = key[1:] < key[:-1]
    if unsorted.any():
        k = int(np.argmax(unsorted)) + 1
        raise FormatError(f"record {k} is out of (sync, offset) order", base + RECORD_SIZE * k)


def encode(stream: TagStream) -> bytes:
    if stream.sync_rate_millihz <= 0:
        raise FormatError("sync rate must be positive")
    if len(stream) and int(stream.sync.max()) > MAX_SYNC:
        raise FormatError(f"sync counter exceeds {_SYNC_BITS} bits")
    if len(stream) and int(stream.party.max()) > 3:
        raise FormatError("party id exceeds 2 bits")
    rec = stream.records()
    _check_records(rec, stream.sync_rate_millihz, stream.resolution_ps, HEADER_SIZE)
    head = HEADER.pack(MAGIC, stream.version, stream.sync_rate_millihz, stream.resolution_ps)
    return head + rec.astype("<u8").tobytes()


def decode(data: bytes) -> TagStream:
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise FormatError(f"truncated header ({len(data)} of {HEADER_SIZE} bytes)", len(data))
    magic, version, rate, res = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}", 4)
    if rate == 0:
        raise FormatError("sync rate must be positive", 6)
    if res != RESOLUTION_PS:
        raise FormatError(f"unsupported resolution {res} ps, expected {RESOLUTION_PS}", 14)
    body = len(data) - HEADER_SIZE
    if body % RECORD_SIZE:
        raise FormatError("truncated record", HEADER_SIZE + (body // RECORD_SIZE) * RECORD_SIZE)
    rec = np.frombuffer(data, dtype="<u8", offset=HEADER_SIZE).astype(np.uint64)
    _check_records(rec, rate, res, HEADER_SIZE)
    return TagStream(
        (rec >> np.uint64(_OFFSET_BITS)) & np.uint64(_SYNC_MASK),
        (rec & np.uint64(_OFFSET_MASK)).astype(np.uint16),
        ((rec >> np.uint64(56)) & np.uint64(3)).astype(np.uint8),
        rate, res, version,
    )


def write_tags(path, stream: TagStream):
    Path(path).write_bytes(encode(stream))


def read_tags(path) -> TagStream:
    return decode(Path(path).read_bytes())


# -- binning and coincidences -------------------------------------------------

@dataclass(frozen=True, eq=False)
class BinnedEvents:
    """Events that fell inside an analyzer slot, with their outcome index."""

    sync: np.ndarray
    outcome: np.ndarray
    discarded: int = 0


def classify_offsets(offsets_s, analyzer: AnalyzerMap) -> np.ndarray:
    """Outcome index (0-3) of each arrival time, or -1 when outside every slot."""
    analyzer.validate()
    t = np.asarray(offsets_s, dtype=float)
    out = np.full(t.shape, -1, dtype=np.int8)
    for k, (lo, hi) in enumerate(analyzer.windows()):
        out[(t >= lo) & (t < hi)] = k
    return out


def bin_outcomes(stream: TagStream, analyzer: AnalyzerMap, party=None) -> BinnedEvents:
    analyzer.validate(stream.period)
    s = stream if party is None else stream.select(party=party)
    out = classify_offsets(s.offsets_seconds(), analyzer)
    keep = out >= 0
    return BinnedEvents(s.sync[keep].astype(np.int64), out[keep],
                        int(np.count_nonzero(~keep)))


@dataclass(frozen=True, eq=False)
class CoincidenceTable:
    """``counts[a, b]``: coincidences with Alice outcome ``a`` and Bob outcome ``b``."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), dtype=np.int64))
    ambiguous_pulses: int = 0
    discarded_a: int = 0
    discarded_b: int = 0

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (4, 4):
            raise ValueError(f"coincidence table must be 4x4, got {c.shape}")
        if np.any(c < 0):
            raise ValueError("coincidence counts must be non-negative")
        object.__setattr__(self, "counts", c)

    def __getitem__(self, key):
        a, b = key
        return self.counts[Outcome.parse(a), Outcome.parse(b)]

    @property
    def total(self):
        return self.counts.sum()

    def __add__(self, other: "CoincidenceTable") -> "CoincidenceTable":
        return CoincidenceTable(self.counts + other.counts,
                                self.ambiguous_pulses + other.ambiguous_pulses,
                                self.discarded_a + other.discarded_a,
                                self.discarded_b + other.discarded_b)

    def to_dict(self) -> dict:
        names = [o.name for o in OUTCOMES]
        return {
            "counts": {a: {b: _num(self.counts[i, j]) for j, b in enumerate(names)}
                       for i, a in enumerate(names)},
            "ambiguous_pulses": int(self.ambiguous_pulses),
            "discarded_a": int(self.discarded_a),
            "discarded_b": int(self.discarded_b),
        }


def _num(x):
    x = x.item() if hasattr(x, "item") else x
    return int(x) if float(x).is_integer() else float(x)


def coincidences(a: BinnedEvents, b: BinnedEvents) -> CoincidenceTable:
    """Tally same-pulse outcome pairs; pulses where either side clicked more than once are dropped."""
    table, ambiguous = kernels.pulse_coincidences(
        np.ascontiguousarray(a.sync, dtype=np.int64), np.ascontiguousarray(a.outcome, dtype=np.int8),
        np.ascontiguousarray(b.sync, dtype=np.int64), np.ascontiguousarray(b.outcome, dtype=np.int8),
    )
    return CoincidenceTable(table, int(ambiguous), a.discarded, b.discarded)


def coincidence_table(stream_a: TagStream, stream_b: TagStream, analyzer: AnalyzerMap,
                      party_a=PARTY_A, party_b=PARTY_B) -> CoincidenceTable:
    return coincidences(bin_outcomes(stream_a, analyzer, party_a),
                        bin_outcomes(stream_b, analyzer, party_b))


# -- histograms ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Histogram2D:
    counts: np.ndarray
    resolution_ps: int = RESOLUTION_PS

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, nonzero_only: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_a_ps", "bin_b_ps", "count"])
        n = self.counts.shape[0]
        for i in range(n):
            for j in range(n):
                c = int(self.counts[i, j])
                if c or not nonzero_only:
                    w.writerow([i * self.resolution_ps, j * self.resolution_ps, c])
        return buf.getvalue()

    def box_counts(self, analyzer: AnalyzerMap) -> np.ndarray:
        """Counts summed over each of the 16 slot-intersection boxes."""
        centers = (np.arange(self.counts.shape[0]) + 0.5) * self.resolution_ps * 1e-12
        slot = classify_offsets(centers, analyzer)
        boxes = np.zeros((4, 4), dtype=np.int64)
        for i in range(4):
            for j in range(4):
                boxes[i, j] = self.counts[np.ix_(slot == i, slot == j)].sum()
        return boxes


def _check_compatible(a: TagStream, b: TagStream):
    if a.sync_rate_millihz != b.sync_rate_millihz or a.resolution_ps != b.resolution_ps:
        raise FormatError(
            f"stream headers differ: sync {a.sync_rate_millihz} vs {b.sync_rate_millihz} mHz, "
            f"resolution {a.resolution_ps} vs {b.resolution_ps} ps"
        )


def histogram2d(a: TagStream, b: TagStream, party_a=PARTY_A, party_b=PARTY_B) -> Histogram2D:
    """Tally every same-pulse (Alice, Bob) event pair by their offset bins."""
    _check_compatible(a, b)
    sa, sb = a.select(party=party_a), b.select(party=party_b)
    counts = kernels.pulse_histogram2d(
        sa.sync.astype(np.int64), sa.offset.astype(np.int64),
        sb.sync.astype(np.int64), sb.offset.astype(np.int64), a.n_bins,
    )
    return Histogram2D(np.asarray(counts), a.resolution_ps)


def histogram1d(stream: TagStream, party=None, pulses=None) -> np.ndarray:
    """Offset histogram, optionally restricted to a set of sync indices."""
    s = stream if party is None else stream.select(party=party)
    off = s.offset.astype(np.int64)
    if pulses is not None:
        off = off[np.isin(s.sync, np.asarray(pulses, dtype=np.uint64))]
    return np.bincount(off, minlength=stream.n_bins)


def shared_pulses(a: TagStream, b: TagStream, party_a=PARTY_A, party_b=PARTY_B) -> np.ndarray:
    """Sync indices at which both parties registered at least one event."""
    return np.intersect1d(a.select(party=party_a).sync, b.select(party=party_b).sync)


def split_windows(stream: TagStream, window_s: float):
    """Yield ``(start_sync, stop_sync, substream)`` for consecutive windows covering the stream."""
    per = max(1, int(round(window_s * stream.sync_rate_hz)))
    if len(stream) == 0:
        return
    last = int(stream.sync.max())
    for w in range(last // per + 1):
        lo, hi = w * per, (w + 1) * per
        yield lo, hi, stream.select(sync_range=(lo, hi))


def seconds_to_sync(seconds: float, sync_rate_hz: float) -> int:
    return int(math.floor(seconds * sync_rate_hz))
