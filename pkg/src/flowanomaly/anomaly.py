"""Score records against a model, filter the significant ones, and localize.

A record's deviation ratio is its residual travel time normalized by
sigma*sqrt(distance); records above a cutoff form the significant set. Within
that set, a record is contained by another when its stop sequence is a
contiguous stretch of the other's and its times nest strictly inside.
Containment counts rank the records, and the innermost contained records
pin down which segments were congested and when.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Sequence

from .core import FlowRecord, NetworkGraph, Path, Segment, resolve_paths
from .errors import EmptyInput, ZeroVariance
from .models import Model, expected_time

PROVENANCE_WITNESS = "innermost-witness"
PROVENANCE_SELF = "self-path"


@dataclass(frozen=True)
class DetectConfig:
    """Cutoff selection: a quantile of the ratio values, or an absolute override."""

    delta_quantile: float = 0.01
    delta_override: float | None = None

    def __post_init__(self):
        if not 0.0 < self.delta_quantile < 1.0:
            raise ValueError("delta_quantile must be in (0, 1)")


@dataclass(frozen=True)
class ScoredRecord:
    record: FlowRecord
    path: Path
    alpha: float
    expected_s: float


@dataclass(frozen=True)
class AnomalyReport:
    scored: ScoredRecord
    containment_count: int
    congested_segments: tuple[tuple[Segment, float, float], ...]
    provenance: str


def score(
    model: Model, records: Sequence[FlowRecord], network: NetworkGraph
) -> list[ScoredRecord]:
    """Attach a deviation ratio to every record."""
    if model.sigma2 <= 0:
        raise ZeroVariance("sigma = 0: ratios are undefined (degenerate training)")
    sigma = math.sqrt(model.sigma2)
    paths = resolve_paths(network, records)
    out = []
    for r, p in zip(records, paths):
        expect = expected_time(model, p, r.distance_m)
        alpha = (r.observed_s - expect) / (sigma * math.sqrt(r.distance_m))
        out.append(ScoredRecord(record=r, path=p, alpha=alpha, expected_s=expect))
    return out


def filter_significant(
    scored: Sequence[ScoredRecord], cfg: DetectConfig
) -> tuple[list[ScoredRecord], float]:
    """Keep records whose ratio exceeds the cutoff; also return the cutoff.

    With a quantile q the cutoff is the nearest-rank (1-q) quantile of all
    ratios, and only records strictly above it pass (so an all-tied set
    filters to nothing).
    """
    if not scored:
        raise EmptyInput("filter_significant needs scored records")
    if cfg.delta_override is not None:
        delta = cfg.delta_override
    else:
        alphas = sorted(s.alpha for s in scored)
        n = len(alphas)
        # tiny slack keeps ceil() from tipping up on exact-integer products
        rank = min(n, max(1, math.ceil((1.0 - cfg.delta_quantile) * n - 1e-9)))
        delta = alphas[rank - 1]
    return [s for s in scored if s.alpha > delta], delta


def contains(r_outer: ScoredRecord, r_inner: ScoredRecord) -> bool:
    """True when the outer record's trip spatially and temporally covers the inner's.

    The inner node sequence must be a contiguous run of the outer's, the outer
    must start strictly earlier and end strictly later.
    """
    if not (
        r_outer.record.t_start < r_inner.record.t_start
        and r_outer.record.t_end > r_inner.record.t_end
    ):
        return False
    inner = r_inner.path.nodes
    outer = r_outer.path.nodes
    n, m = len(inner), len(outer)
    if n > m:
        return False
    first = inner[0]
    for i in range(m - n + 1):
        if outer[i] == first and outer[i : i + n] == inner:
            return True
    return False


def containment_counts(filtered: Sequence[ScoredRecord]) -> dict[str, int]:
    """For each record, how many other significant records contain it."""
    counts = {s.record.record_id: 0 for s in filtered}
    for inner in filtered:
        for outer in filtered:
            if outer is not inner and contains(outer, inner):
                counts[inner.record.record_id] += 1
    return counts


def _congestion_entries(
    r_outer: ScoredRecord, witnesses: list[ScoredRecord]
) -> tuple[list[tuple[Segment, float, float]], str]:
    """Segments-with-windows from the witnesses, or the record's own path."""
    if not witnesses:
        w0, w1 = r_outer.record.t_start, r_outer.record.t_end
        return [(seg, w0, w1) for seg in r_outer.path.segments], PROVENANCE_SELF
    witnesses = sorted(witnesses, key=lambda s: (s.record.t_start, s.record.record_id))
    entries: list[tuple[Segment, float, float]] = []
    seen = set()
    for w in witnesses:
        for seg in w.path.segments:
            key = (seg.key, w.record.t_start, w.record.t_end)
            if key not in seen:
                seen.add(key)
                entries.append((seg, w.record.t_start, w.record.t_end))
    return entries, PROVENANCE_WITNESS


def localize(
    r_outer: ScoredRecord, filtered: Sequence[ScoredRecord]
) -> tuple[list[tuple[Segment, float, float]], str]:
    """Locate the congested stretch of one significant record.

    The innermost records nested inside r_outer (those containing no further
    significant record) witness the congestion; their segments are returned,
    each stamped with its witness's time window. A record with nothing nested
    inside falls back to its own path and window.
    """
    inners = [s for s in filtered if contains(r_outer, s)]
    witnesses = [
        s for s in inners if not any(contains(s, t) for t in filtered if t is not s)
    ]
    return _congestion_entries(r_outer, witnesses)


def rank_anomalies(
    filtered: Sequence[ScoredRecord], counts: dict[str, int]
) -> list[AnomalyReport]:
    """Order the significant records and localize each one.

    Sorted by containment count descending, ratio descending, record id
    ascending. Pairwise containment is computed once and reused, so the whole
    ranking is quadratic in the filtered set size.
    """
    n = len(filtered)
    contains_mat = [[False] * n for _ in range(n)]
    for i, outer in enumerate(filtered):
        row = contains_mat[i]
        for j, inner in enumerate(filtered):
            if i != j and contains(outer, inner):
                row[j] = True
    has_inner = [any(contains_mat[i]) for i in range(n)]

    order = sorted(
        range(n),
        key=lambda i: (
            -counts[filtered[i].record.record_id],
            -filtered[i].alpha,
            filtered[i].record.record_id,
        ),
    )
    reports = []
    for i in order:
        outer = filtered[i]
        witnesses = [filtered[j] for j in range(n)
                     if contains_mat[i][j] and not has_inner[j]]
        entries, provenance = _congestion_entries(outer, witnesses)
        reports.append(
            AnomalyReport(
                scored=outer,
                containment_count=counts[outer.record.record_id],
                congested_segments=tuple(entries),
                provenance=provenance,
            )
        )
    return reports


@dataclass(frozen=True)
class DailyStats:
    date: str
    mean_count: float
    median_count: float
    mean_alpha: float
    median_alpha: float


def _utc_date(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).date().isoformat()


def daily_series(reports: Sequence[AnomalyReport]) -> list[DailyStats]:
    """Per-day mean/median of containment counts and ratios, date-sorted.

    Days without reports are absent, not zero-filled.
    """
    by_day: dict[str, list[AnomalyReport]] = {}
    for rep in reports:
        by_day.setdefault(_utc_date(rep.scored.record.t_start), []).append(rep)
    rows = []
    for day in sorted(by_day):
        counts = [r.containment_count for r in by_day[day]]
        alphas = [r.scored.alpha for r in by_day[day]]
        rows.append(
            DailyStats(
                date=day,
                mean_count=statistics.fmean(counts),
                median_count=float(statistics.median(counts)),
                mean_alpha=statistics.fmean(alphas),
                median_alpha=float(statistics.median(alphas)),
            )
        )
    return rows
