"""Reading and writing the delimited record-file format.

Rows are `record_id,service_id,board_stop,alight_stop,board_time,alight_time,
distance_m` with a mandatory header. Times are epoch seconds or ISO-8601 with
a UTC offset; distances are meters. Malformed rows are skipped and reported
with their line numbers, never silently dropped.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime
from typing import IO, Iterable, Sequence

from .core import FlowRecord
from .errors import AllRowsRejected, UnreadableInput

RECORD_HEADER = (
    "record_id",
    "service_id",
    "board_stop",
    "alight_stop",
    "board_time",
    "alight_time",
    "distance_m",
)


@dataclass(frozen=True)
class RejectedRow:
    line_no: int
    reason: str


def parse_timestamp(text: str) -> float:
    """Epoch seconds from a float literal or an offset-carrying ISO-8601 string."""
    token = text.strip()
    try:
        return float(token)
    except ValueError:
        pass
    if token.endswith(("Z", "z")):
        token = token[:-1] + "+00:00"
    try:
        stamp = datetime.fromisoformat(token)
    except ValueError as exc:
        raise ValueError(f"unparseable time {text!r}") from exc
    if stamp.tzinfo is None:
        raise ValueError(f"time {text!r} has no UTC offset")
    return stamp.timestamp()


def _check_token(name: str, value: str) -> str:
    token = value.strip()
    if not token:
        raise ValueError(f"{name} is empty")
    if any(ch.isspace() for ch in token) or "," in token:
        raise ValueError(f"{name} {value!r} contains whitespace or a comma")
    return token


def _parse_row(row: Sequence[str]) -> FlowRecord:
    if len(row) != len(RECORD_HEADER):
        raise ValueError(f"expected {len(RECORD_HEADER)} fields, got {len(row)}")
    record_id = _check_token("record_id", row[0])
    service_id = _check_token("service_id", row[1])
    board = _check_token("board_stop", row[2])
    alight = _check_token("alight_stop", row[3])
    t_start = parse_timestamp(row[4])
    t_end = parse_timestamp(row[5])
    distance = float(row[6])
    return FlowRecord(
        record_id=record_id,
        service_id=service_id,
        origin=board,
        destination=alight,
        t_start=t_start,
        t_end=t_end,
        distance_m=distance,
    )


def parse_records(
    source: str | IO[str],
) -> tuple[list[FlowRecord], list[RejectedRow]]:
    """Parse a record file or stream; invalid rows land in the reject list."""
    if isinstance(source, str):
        try:
            fh: IO[str] = open(source, "r", encoding="utf-8", newline="")
        except OSError as exc:
            raise UnreadableInput(f"cannot open {source!r}: {exc}") from exc
        close = True
    else:
        fh = source
        close = False
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UnreadableInput("input has no header row")
        if tuple(h.strip() for h in header) != RECORD_HEADER:
            raise UnreadableInput(
                f"bad header {header!r}; expected {','.join(RECORD_HEADER)}"
            )
        records: list[FlowRecord] = []
        rejects: list[RejectedRow] = []
        n_rows = 0
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            n_rows += 1
            try:
                records.append(_parse_row(row))
            except ValueError as exc:
                rejects.append(RejectedRow(line_no=line_no, reason=str(exc)))
        if n_rows and not records:
            raise AllRowsRejected(n_rows)
        return records, rejects
    finally:
        if close:
            fh.close()


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_records(records: Iterable[FlowRecord], dest: str | IO[str]) -> None:
    """Write records in the same format parse_records reads, bit-exact floats."""
    buf = io.StringIO()
    buf.write(",".join(RECORD_HEADER) + "\n")
    for r in records:
        buf.write(
            f"{r.record_id},{r.service_id},{r.origin},{r.destination},"
            f"{_fmt(r.t_start)},{_fmt(r.t_end)},{_fmt(r.distance_m)}\n"
        )
    if isinstance(dest, str):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(buf.getvalue())
    else:
        dest.write(buf.getvalue())
