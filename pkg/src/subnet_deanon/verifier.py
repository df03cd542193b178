"""Plausibility checks for located validator sets.

A hosted set is *consistent* when one of four rules holds (checked in this
order, the first match is reported):

    G1  labels cover >= 30% of the set and >= 90% of those labels agree
    G2  >= 90% of the set share one deposit address
    G3  >= 90% of the set exclusively use one fee recipient
    G4  the sorted ids form at most ceil(n/10) runs of consecutive ids

It is *inconsistent* (I1) when labels cover >= 10% of the set but fewer than
90% of them agree, unless every labelled validator belongs to an exception
class. Singletons are trivially consistent; everything else is unknown.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .deanonymizer import DeanonReport
from .errors import DeanonError

MULTIPLE = "multiple"
DEFAULT_EXCEPTION_CLASSES = frozenset({"ens", "rocketpool"})
SERVICE_PROVIDER_MIN_SIZE = 20


@dataclass
class EntityLabelSet:
    entity: dict[int, str] = field(default_factory=dict)
    entity_class: dict[int, str] = field(default_factory=dict)
    deposit_address: dict[int, str] = field(default_factory=dict)
    fee_recipient: dict[int, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ConsistencyVerdict:
    verdict: str  # consistent | inconsistent | unknown
    rule: str  # G1 | G2 | G3 | G4 | single | I1 | none


def load_labels(path: str | Path) -> EntityLabelSet:
    """Read ``validator,entity,entity_class,deposit_address,fee_recipient`` rows."""
    labels = EntityLabelSet()
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 5:
                raise DeanonError("parse-error", f"{Path(path).name} line {lineno}")
            try:
                v = int(row[0])
            except ValueError:
                raise DeanonError("parse-error", f"{Path(path).name} line {lineno}") from None
            for mapping, value in zip((labels.entity, labels.entity_class,
                                       labels.deposit_address, labels.fee_recipient), row[1:]):
                if value:
                    mapping[v] = value
    return labels


def write_labels(path: str | Path, labels: EntityLabelSet, validators: Iterable[int]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for v in validators:
            w.writerow([v, labels.entity.get(v, ""), labels.entity_class.get(v, ""),
                        labels.deposit_address.get(v, ""), labels.fee_recipient.get(v, "")])


def group_consecutive(ids: Sequence[int]) -> list[list[int]]:
    groups: list[list[int]] = []
    for v in ids:
        if groups and v == groups[-1][-1] + 1:
            groups[-1].append(v)
        else:
            groups.append([v])
    return groups


def _canonical(name: str, allow_groups: Sequence[frozenset[str]]) -> str:
    for group in allow_groups:
        if name in group:
            return min(group)
    return name


def check_consistency(hosted: Iterable[int], labels: EntityLabelSet,
                      exception_classes: frozenset[str] = DEFAULT_EXCEPTION_CLASSES,
                      allow_groups: Sequence[frozenset[str]] = ()) -> ConsistencyVerdict:
    """Classify one hosted set.

    ``allow_groups`` lists entity names known to share node operators; labels
    inside one group count as identical for G1.
    """
    ids = sorted(set(hosted))
    n = len(ids)
    if n == 0:
        raise DeanonError("empty-set")
    if n == 1:
        return ConsistencyVerdict("consistent", "single")

    names = [_canonical(labels.entity[v], allow_groups) for v in ids if v in labels.entity]
    modal_share = Counter(names).most_common(1)[0][1] / len(names) if names else 0.0
    coverage = len(names) / n
    if coverage >= 0.3 and modal_share >= 0.9:
        return ConsistencyVerdict("consistent", "G1")

    deposits = Counter(labels.deposit_address[v] for v in ids if v in labels.deposit_address)
    if deposits and deposits.most_common(1)[0][1] >= 0.9 * n:
        return ConsistencyVerdict("consistent", "G2")

    fees = Counter(labels.fee_recipient[v] for v in ids
                   if labels.fee_recipient.get(v, MULTIPLE) != MULTIPLE)
    if fees and fees.most_common(1)[0][1] >= 0.9 * n:
        return ConsistencyVerdict("consistent", "G3")

    if len(group_consecutive(ids)) <= math.ceil(n / 10):
        return ConsistencyVerdict("consistent", "G4")

    if coverage >= 0.1 and modal_share < 0.9:
        classes = {labels.entity_class.get(v, "") for v in ids if v in labels.entity}
        if not classes <= exception_classes:
            return ConsistencyVerdict("inconsistent", "I1")
    return ConsistencyVerdict("unknown", "none")


def verify_report(report: DeanonReport, labels: EntityLabelSet,
                  **kwargs) -> dict[int, ConsistencyVerdict]:
    return {p: check_consistency(h, labels, **kwargs)
            for p, h in sorted(report.deanonymized().items())}


@dataclass
class ServiceProviders:
    peers: tuple[int, ...]
    overlap: np.ndarray  # (i, j) = |H_i & H_j| / |H_j|, peers sorted by set size desc


def detect_service_providers(report: DeanonReport, verdicts: dict[int, ConsistencyVerdict],
                             min_size: int = SERVICE_PROVIDER_MIN_SIZE) -> ServiceProviders:
    hosted = report.deanonymized()
    peers = sorted((p for p, v in verdicts.items()
                    if v.verdict == "inconsistent" and len(hosted.get(p, ())) >= min_size),
                   key=lambda p: (-len(hosted[p]), p))
    m = np.zeros((len(peers), len(peers)))
    for i, a in enumerate(peers):
        for j, b in enumerate(peers):
            m[i, j] = len(hosted[a] & hosted[b]) / len(hosted[b])
    return ServiceProviders(tuple(peers), m)


def uniqueness_report(reports: Sequence[DeanonReport]) -> dict[int, set[int]]:
    """validator -> every peer it was located on, across all reports."""
    out: dict[int, set[int]] = {}
    for report in reports:
        for peer, hosted in report.deanonymized().items():
            for v in hosted:
                out.setdefault(v, set()).add(peer)
    return dict(sorted(out.items()))


def cross_observer_agreement(reports: Sequence[DeanonReport]) -> tuple[float, float]:
    """(exact-match rate, mean Jaccard overlap) over peers located by >= 2 observers."""
    if len(reports) < 2:
        raise DeanonError("insufficient-observers")
    sets: dict[int, list[frozenset[int]]] = {}
    for report in reports:
        for peer, hosted in report.deanonymized().items():
            sets.setdefault(peer, []).append(hosted)
    shared = {p: ss for p, ss in sets.items() if len(ss) >= 2}
    if not shared:
        return float("nan"), float("nan")
    exact = sum(all(s == ss[0] for s in ss) for ss in shared.values()) / len(shared)
    overlaps = [len(a & b) / len(a | b) for ss in shared.values() for a, b in combinations(ss, 2)]
    return exact, float(np.mean(overlaps))


def write_verdicts(path: str | Path, verdicts: dict[int, ConsistencyVerdict]) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for peer, v in sorted(verdicts.items()):
            w.writerow([peer, v.verdict, v.rule])
