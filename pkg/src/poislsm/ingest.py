"""Trip-record ingestion: filter an event log and bin it into a count tensor.

Each record is a pair of node ids, a start timestamp (UTC seconds), and a
duration. Records are kept when the duration lies inside the configured
range and the start time falls in the half-open window; each kept event
increments the symmetric pair count in its start-time bin (round trips land
on the diagonal once). Node identity is defined by the surviving records
only, indexed in sorted-id order.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

from .errors import IngestError, NumericsWarning
from .types import CountTensor


@dataclass(frozen=True)
class TripRecord:
    start_node: str
    end_node: str
    start_time: float
    duration: float


@dataclass(frozen=True)
class IngestConfig:
    window: Tuple[float, float]
    min_duration: float = 60.0
    max_duration: float = 10800.0
    bin_width: float = 3600.0

    def __post_init__(self):
        if not 0 < self.min_duration < self.max_duration:
            raise ValueError("need 0 < min_duration < max_duration")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        start, end = self.window
        if not end > start:
            raise ValueError("window must be non-empty")
        length = end - start
        n_bins = length / self.bin_width
        if abs(n_bins - round(n_bins)) > 1e-9:
            raise ValueError("bin_width must divide the window length")

    @property
    def n_bins(self) -> int:
        return int(round((self.window[1] - self.window[0]) / self.bin_width))

    def to_dict(self):
        return {
            "window": list(self.window),
            "min_duration": self.min_duration,
            "max_duration": self.max_duration,
            "bin_width": self.bin_width,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            window=(float(d["window"][0]), float(d["window"][1])),
            min_duration=float(d.get("min_duration", 60.0)),
            max_duration=float(d.get("max_duration", 10800.0)),
            bin_width=float(d.get("bin_width", 3600.0)),
        )


def ingest_trips(records: Iterable[TripRecord], cfg: IngestConfig):
    """Bin filtered trip records into a symmetric count tensor.

    Returns ``(tensor, node_index)`` where ``node_index`` maps node id to a
    row index in sorted-id order. The sum of upper-triangle-plus-diagonal
    entries equals the number of surviving records.
    """
    start, end = cfg.window
    kept = []
    for rec in records:
        if rec.duration < cfg.min_duration or rec.duration > cfg.max_duration:
            continue
        if not start <= rec.start_time < end:
            continue
        kept.append(rec)
    if not kept:
        raise IngestError("no records survive the duration/window filters")
    ids = sorted({r.start_node for r in kept} | {r.end_node for r in kept})
    node_index = {node: i for i, node in enumerate(ids)}
    n, T = len(ids), cfg.n_bins
    counts = np.zeros((T, n, n), dtype=np.int64)
    for rec in kept:
        t = int((rec.start_time - start) // cfg.bin_width)
        i = node_index[rec.start_node]
        j = node_index[rec.end_node]
        if i == j:
            counts[t, i, i] += 1
        else:
            counts[t, i, j] += 1
            counts[t, j, i] += 1
    return CountTensor(counts), node_index


#: Expected header of a trip-log CSV.
TRIPS_HEADER = ("start_id", "end_id", "start_time", "duration_s")


def read_trips_csv(path):
    """Parse a trip log; malformed rows are skipped with a counted warning.

    Returns ``(records, n_malformed)``.
    """
    records = []
    malformed = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(TRIPS_HEADER):
            raise IngestError(
                f"unexpected trip CSV header {header!r}; expected {','.join(TRIPS_HEADER)}"
            )
        for row in reader:
            if len(row) != 4:
                malformed += 1
                continue
            sid, eid, ts, dur = (c.strip() for c in row)
            try:
                t = float(ts)
                d = float(dur)
            except ValueError:
                malformed += 1
                continue
            if not sid or not eid or not np.isfinite(t) or not np.isfinite(d) or d <= 0:
                malformed += 1
                continue
            records.append(TripRecord(start_node=sid, end_node=eid, start_time=t, duration=d))
    if malformed:
        warnings.warn(f"skipped {malformed} malformed trip rows", NumericsWarning)
    return records, malformed


def ingest_csv(path, cfg: IngestConfig):
    """Read a trip-log CSV and bin it; returns (tensor, node_index, stats)."""
    records, malformed = read_trips_csv(path)
    tensor, node_index = ingest_trips(records, cfg)
    stats = {
        "rows": len(records) + malformed,
        "malformed": malformed,
        "kept": int(np.sum(np.triu(tensor.counts).sum(axis=0))),
        "n": tensor.n,
        "T": tensor.T,
    }
    return tensor, node_index, stats
