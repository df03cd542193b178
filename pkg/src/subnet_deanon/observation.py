"""Observer-side log store and per-peer aggregation.

Only the first copy of each attestation is kept. Peers are analysed over
their *qualified window*: connection intervals of at least one epoch, kept
only if they add up to more than 32 epochs.

Advertised subscriptions reach the observer with a lag. Whatever a peer is
subscribed to when a connection session starts is known immediately (the
metadata exchange on connect), later changes become visible
``knowledge_delay`` ticks after they happen. Dynamic subscriptions are never
advertised.
"""
from __future__ import annotations

from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .protocol import SLOTS_PER_EPOCH, SUBNET_COUNT, expected_attestations
from .records import (ConnectionEvent, ReceiptRecord, SubscriptionEvent, check_receipt,
                      read_connections, read_receipts, read_subscriptions)

LONG_CONNECTION_EPOCHS = 32

Interval = tuple[int, int]


def normalize_intervals(intervals: Iterable[Interval]) -> list[Interval]:
    """Sort and merge overlapping or touching half-open intervals."""
    out: list[list[int]] = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def _overlap(xs: list[Interval], ys: list[Interval]) -> int:
    total = 0
    for a, b in xs:
        for c, d in ys:
            lo, hi = max(a, c), min(b, d)
            if hi > lo:
                total += hi - lo
    return total


@dataclass
class ObservationStore:
    ticks_per_slot: int = 12
    receipts: dict[tuple[int, int, int], ReceiptRecord] = field(default_factory=dict)
    subscriptions: dict[int, list[SubscriptionEvent]] = field(default_factory=dict)
    connections: dict[int, list[Interval]] = field(default_factory=dict)
    by_sender: dict[int, list[ReceiptRecord]] = field(default_factory=dict)

    @property
    def ticks_per_epoch(self) -> int:
        return self.ticks_per_slot * SLOTS_PER_EPOCH

    @property
    def peers(self) -> list[int]:
        return sorted(set(self.connections) | set(self.by_sender))


def ingest_receipts(records: Iterable[ReceiptRecord],
                    subscriptions: Iterable[SubscriptionEvent] = (),
                    connections: Iterable[ConnectionEvent] = (),
                    ticks_per_slot: int = 12) -> ObservationStore:
    """Build a store keeping the earliest receipt of each attestation.

    Ties at equal tick go to the smallest sender id.
    """
    first: dict[tuple[int, int, int], ReceiptRecord] = {}
    for rec in records:
        rec = ReceiptRecord(*rec)
        check_receipt(rec)
        cur = first.get(rec.key)
        if cur is None or (rec.tick, rec.sender) < (cur.tick, cur.sender):
            first[rec.key] = rec
    by_sender: dict[int, list[ReceiptRecord]] = defaultdict(list)
    for rec in first.values():
        by_sender[rec.sender].append(rec)
    subs: dict[int, list[SubscriptionEvent]] = defaultdict(list)
    for ev in subscriptions:
        subs[ev.node].append(SubscriptionEvent(*ev))
    conns: dict[int, list[Interval]] = defaultdict(list)
    for ev in connections:
        conns[ev.peer].append((ev.start_tick, ev.end_tick))
    return ObservationStore(
        ticks_per_slot=ticks_per_slot,
        receipts=dict(sorted(first.items())),
        subscriptions={p: sorted(evs, key=lambda e: (e.start_tick, e.subnet, e.end_tick, e.kind))
                       for p, evs in sorted(subs.items())},
        connections={p: normalize_intervals(iv) for p, iv in sorted(conns.items())},
        by_sender={p: sorted(rs) for p, rs in sorted(by_sender.items())},
    )


def load_store(log_dir: str | Path, ticks_per_slot: int = 12) -> ObservationStore:
    log_dir = Path(log_dir)
    return ingest_receipts(read_receipts(log_dir / "receipts.csv"),
                           read_subscriptions(log_dir / "subscriptions.csv"),
                           read_connections(log_dir / "connections.csv"),
                           ticks_per_slot)


def long_connection_windows(peer: int, store: ObservationStore) -> list[Interval] | None:
    """Connection intervals kept for analysis, or ``None`` if the peer does not qualify."""
    tpe = store.ticks_per_epoch
    kept = [(a, b) for a, b in store.connections.get(peer, []) if b - a >= tpe]
    if sum(b - a for a, b in kept) > LONG_CONNECTION_EPOCHS * tpe:
        return kept
    return None


def window_epochs(window: list[Interval], ticks_per_epoch: int) -> list[Interval]:
    """Complete epochs inside each tick interval, as half-open epoch ranges."""
    return [(-(-a // ticks_per_epoch), b // ticks_per_epoch) for a, b in window]


def advertised_intervals(peer: int, store: ObservationStore,
                         knowledge_delay: int = 0) -> dict[int, list[Interval]]:
    """subnet -> tick intervals during which the observer believes ``peer`` is a backbone."""
    events = store.subscriptions.get(peer, [])
    sessions = store.connections.get(peer)
    if not sessions and events:
        sessions = [(min(e.start_tick for e in events), max(e.end_tick for e in events))]
    known: dict[int, list[Interval]] = defaultdict(list)
    for ev in events:
        if ev.kind != "static":
            continue
        for cs, ce in sessions:
            ks = ev.start_tick if ev.start_tick <= cs else ev.start_tick + knowledge_delay
            ke = ev.end_tick if ev.end_tick <= cs else ev.end_tick + knowledge_delay
            lo, hi = max(cs, ks), min(ce, ke)
            if hi > lo:
                known[ev.subnet].append((lo, hi))
    return {s: normalize_intervals(iv) for s, iv in sorted(known.items())}


def average_subscription_count(peer: int, window: list[Interval], store: ObservationStore,
                               knowledge_delay: int = 0) -> float:
    """Time-weighted mean number of advertised static subnets over ``window``."""
    length = sum(b - a for a, b in window)
    if length <= 0:
        return 0.0
    adv = advertised_intervals(peer, store, knowledge_delay)
    covered = sum(_overlap(iv, window) for iv in adv.values())
    return min(float(SUBNET_COUNT), covered / length)


def _contains(intervals: list[Interval], starts: list[int], t: int) -> bool:
    i = bisect_right(starts, t) - 1
    return i >= 0 and t < intervals[i][1]


def window_receipts(peer: int, window: list[Interval], store: ObservationStore) -> list[ReceiptRecord]:
    """First receipts from ``peer`` whose epoch touches a retained interval."""
    tpe = store.ticks_per_epoch
    epochs: set[int] = set()
    for a, b in window:
        epochs.update(range(a // tpe, (b - 1) // tpe + 1))
    return [r for r in store.by_sender.get(peer, []) if r.tick // tpe in epochs]


def per_validator_counts(peer: int, store: ObservationStore, window: list[Interval] | None = None,
                         knowledge_delay: int = 0) -> dict[int, list[int]]:
    """validator -> [backbone_count, nonbackbone_count] over the qualified window."""
    if window is None:
        window = long_connection_windows(peer, store) or []
    adv = advertised_intervals(peer, store, knowledge_delay)
    starts = {s: [a for a, _ in iv] for s, iv in adv.items()}
    counts: dict[int, list[int]] = {}
    for r in window_receipts(peer, window, store):
        c = counts.setdefault(r.validator, [0, 0])
        if r.subnet in adv and _contains(adv[r.subnet], starts[r.subnet], r.tick):
            c[0] += 1
        else:
            c[1] += 1
    return dict(sorted(counts.items()))


@dataclass
class PeerProfile:
    peer: int
    per_validator: dict[int, list[int]]
    n_sub_avg: float
    window: list[Interval]
    expected: int
    total_connection_epochs: float


def build_profile(peer: int, store: ObservationStore, knowledge_delay: int = 0) -> PeerProfile | None:
    window = long_connection_windows(peer, store)
    if window is None:
        return None
    tpe = store.ticks_per_epoch
    return PeerProfile(
        peer=peer,
        per_validator=per_validator_counts(peer, store, window, knowledge_delay),
        n_sub_avg=average_subscription_count(peer, window, store, knowledge_delay),
        window=window,
        expected=expected_attestations(window_epochs(window, tpe)),
        total_connection_epochs=sum(b - a for a, b in window) / tpe,
    )


def misclassification_audit(peer: int, store: ObservationStore, window: list[Interval],
                            knowledge_delay: int = 0) -> dict[int, list[int]]:
    """validator -> [non-backbone receipts inside a dynamic subscription, inside a knowledge lag].

    Uses the dynamic events and true static timelines present in the log,
    which only a simulator can supply; real exports simply yield zeros.
    """
    adv = advertised_intervals(peer, store, knowledge_delay)
    adv_starts = {s: [a for a, _ in iv] for s, iv in adv.items()}
    dyn: dict[int, list[Interval]] = defaultdict(list)
    true_static: dict[int, list[Interval]] = defaultdict(list)
    for ev in store.subscriptions.get(peer, []):
        (dyn if ev.kind == "dynamic" else true_static)[ev.subnet].append((ev.start_tick, ev.end_tick))
    dyn = {s: normalize_intervals(iv) for s, iv in dyn.items()}
    true_static = {s: normalize_intervals(iv) for s, iv in true_static.items()}
    out: dict[int, list[int]] = {}
    for r in window_receipts(peer, window, store):
        if r.subnet in adv and _contains(adv[r.subnet], adv_starts[r.subnet], r.tick):
            continue
        c = out.setdefault(r.validator, [0, 0])
        iv = dyn.get(r.subnet)
        if iv and _contains(iv, [a for a, _ in iv], r.tick):
            c[0] += 1
        iv = true_static.get(r.subnet)
        if iv and _contains(iv, [a for a, _ in iv], r.tick):
            c[1] += 1
    return out
