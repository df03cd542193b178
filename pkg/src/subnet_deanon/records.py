"""Log record types and their line-delimited CSV encodings.

File schemas (no header line, decimal integers):

    receipts.csv       tick,sender_node,validator,epoch,slot,subnet
    subscriptions.csv  node,subnet,start_tick,end_tick,kind
    connections.csv    peer,start_tick,end_tick
    ground_truth.csv   node,validator
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

from .errors import DeanonError
from .protocol import SLOTS_PER_EPOCH, SUBNET_COUNT


class ReceiptRecord(NamedTuple):
    tick: int
    sender: int
    validator: int
    epoch: int
    slot: int
    subnet: int

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.validator, self.epoch, self.slot)


class SubscriptionEvent(NamedTuple):
    node: int
    subnet: int
    start_tick: int
    end_tick: int
    kind: str  # "static" | "dynamic"


class ConnectionEvent(NamedTuple):
    peer: int
    start_tick: int
    end_tick: int


def _write_rows(path: Path, rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(rows)


def _int_rows(path: Path, width: int) -> Iterator[tuple[int, list[str]]]:
    with open(path, newline="", encoding="ascii") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != width:
                raise DeanonError("parse-error", f"{path.name} line {lineno}: expected {width} fields")
            yield lineno, row


def _ints(path: Path, lineno: int, fields: list[str]) -> list[int]:
    try:
        return [int(f) for f in fields]
    except ValueError:
        raise DeanonError("parse-error", f"{path.name} line {lineno}") from None


def check_receipt(rec: ReceiptRecord, where: str = "") -> None:
    if not 0 <= rec.subnet < SUBNET_COUNT or not 0 <= rec.slot < SLOTS_PER_EPOCH:
        raise DeanonError("schema-violation", where or repr(rec))


def write_receipts(path: Path, records: Iterable[ReceiptRecord]) -> None:
    _write_rows(path, records)


def read_receipts(path: Path) -> list[ReceiptRecord]:
    path = Path(path)
    out = []
    for lineno, row in _int_rows(path, 6):
        rec = ReceiptRecord(*_ints(path, lineno, row))
        check_receipt(rec, f"{path.name} line {lineno}")
        out.append(rec)
    return out


def write_subscriptions(path: Path, events: Iterable[SubscriptionEvent]) -> None:
    _write_rows(path, events)


def read_subscriptions(path: Path) -> list[SubscriptionEvent]:
    path = Path(path)
    out = []
    for lineno, row in _int_rows(path, 5):
        node, subnet, start, end = _ints(path, lineno, row[:4])
        kind = row[4].strip()
        if kind not in ("static", "dynamic") or not 0 <= subnet < SUBNET_COUNT or start >= end:
            raise DeanonError("schema-violation", f"{path.name} line {lineno}")
        out.append(SubscriptionEvent(node, subnet, start, end, kind))
    return out


def write_connections(path: Path, events: Iterable[ConnectionEvent]) -> None:
    _write_rows(path, events)


def read_connections(path: Path) -> list[ConnectionEvent]:
    path = Path(path)
    out = []
    for lineno, row in _int_rows(path, 3):
        ev = ConnectionEvent(*_ints(path, lineno, row))
        if ev.start_tick >= ev.end_tick:
            raise DeanonError("schema-violation", f"{path.name} line {lineno}")
        out.append(ev)
    return out


def write_ground_truth(path: Path, truth: dict[int, set[int]]) -> None:
    _write_rows(path, ((node, v) for node in sorted(truth) for v in sorted(truth[node])))


def read_ground_truth(path: Path, nodes: Iterable[int] = ()) -> dict[int, set[int]]:
    """Read ``node,validator`` pairs; ``nodes`` seeds entries for validator-free nodes."""
    path = Path(path)
    truth: dict[int, set[int]] = {n: set() for n in nodes}
    for lineno, row in _int_rows(path, 2):
        node, v = _ints(path, lineno, row)
        truth.setdefault(node, set()).add(v)
    return truth
