"""Per-peer validator location from the observer's first receipts.

A validator ``v`` is placed on peer ``p`` when all four conditions hold:

* C1: the share of ``v``'s receipts from ``p`` that arrived outside ``p``'s
  advertised subnets exceeds ``slack * (64 - n_sub) / 64``;
* C2: ``p`` is not subscribed to every subnet;
* C3: ``p`` delivered at least ``expected / divisor`` of ``v``'s attestations;
* C4: ``v``'s receipt count exceeds the peer's per-validator mean by
  ``sigma`` population standard deviations.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import HeuristicParams
from .errors import DeanonError
from .observation import ObservationStore, PeerProfile, build_profile, misclassification_audit
from .protocol import SUBNET_COUNT

DEANONYMIZED = "deanonymized"
NO_VALIDATORS = "no_validators"
ALL_SUBNETS = "all_subnets"
REST = "rest"
CATEGORIES = (DEANONYMIZED, NO_VALIDATORS, ALL_SUBNETS, REST)


def c1_threshold(n_sub_avg: float, slack: float = 0.9) -> float:
    if not 0 <= n_sub_avg <= SUBNET_COUNT:
        raise DeanonError("invalid-nsub", str(n_sub_avg))
    # exact rational arithmetic so that e.g. n_sub=2 gives 0.871875, not ...0001
    exact = Fraction(repr(float(slack))) * (SUBNET_COUNT - Fraction(n_sub_avg)) / SUBNET_COUNT
    return float(exact)


@dataclass(frozen=True)
class ConditionVector:
    c1: bool
    c2: bool
    c3: bool
    c4: bool
    nonbackbone_ratio: float
    expected: int
    received: int
    mean_peer: float
    std_peer: float
    backbone: int = 0
    nonbackbone: int = 0
    threshold: float = 0.0

    @property
    def hosted(self) -> bool:
        return self.c1 and self.c2 and self.c3 and self.c4


def evaluate_conditions(profile: PeerProfile,
                        params: HeuristicParams = HeuristicParams()) -> dict[int, ConditionVector]:
    counts = profile.per_validator
    if not counts:
        return {}
    received = np.array([b + nb for b, nb in counts.values()], dtype=float)
    mean, std = float(received.mean()), float(received.std())
    # tiny populations cannot support a dispersion test
    c4_active = len(counts) >= params.c4_min_population
    threshold = c1_threshold(min(profile.n_sub_avg, SUBNET_COUNT), params.c1_slack)
    c2 = profile.n_sub_avg < SUBNET_COUNT
    out = {}
    for v, (bb, nb) in counts.items():
        total = bb + nb
        ratio = nb / total if total else 0.0
        out[v] = ConditionVector(
            c1=ratio > threshold,
            c2=c2,
            c3=total >= profile.expected / params.c3_divisor,
            c4=(total > mean + params.c4_sigma * std) if c4_active else True,
            nonbackbone_ratio=ratio, expected=profile.expected, received=total,
            mean_peer=mean, std_peer=std, backbone=bb, nonbackbone=nb, threshold=threshold,
        )
    return out


def classify_peer(profile: PeerProfile | None,
                  conditions: dict[int, ConditionVector]) -> tuple[str, frozenset[int]]:
    if profile is None:
        raise DeanonError("not-qualified")
    if profile.n_sub_avg >= SUBNET_COUNT:
        return ALL_SUBNETS, frozenset()
    if not any(nb for _, nb in profile.per_validator.values()):
        return NO_VALIDATORS, frozenset()
    hosted = frozenset(v for v, cv in conditions.items() if cv.hosted)
    return (DEANONYMIZED, hosted) if hosted else (REST, frozenset())


@dataclass(frozen=True)
class PeerResult:
    category: str
    hosted: frozenset[int] = frozenset()


@dataclass
class DeanonReport:
    observer: str
    per_peer: dict[int, PeerResult] = field(default_factory=dict)
    conditions: dict[int, dict[int, ConditionVector]] = field(default_factory=dict)
    audit: dict[int, dict[int, list[int]]] = field(default_factory=dict)

    def deanonymized(self) -> dict[int, frozenset[int]]:
        return {p: r.hosted for p, r in self.per_peer.items() if r.category == DEANONYMIZED}

    def located_validators(self, exclude: frozenset[int] | set[int] = frozenset()) -> set[int]:
        return {v for p, hosted in self.deanonymized().items() if p not in exclude for v in hosted}


def deanonymize(store: ObservationStore, params: HeuristicParams = HeuristicParams(),
                observer: str = "obs0", audit: bool = True) -> DeanonReport:
    """Run the full heuristic pipeline over every peer in ``store``."""
    delay = params.knowledge_delay_slots * store.ticks_per_slot
    report = DeanonReport(observer)
    for peer in store.peers:
        profile = build_profile(peer, store, delay)
        if profile is None:
            continue
        conditions = evaluate_conditions(profile, params)
        report.per_peer[peer] = PeerResult(*classify_peer(profile, conditions))
        report.conditions[peer] = conditions
        if audit:
            report.audit[peer] = misclassification_audit(peer, store, profile.window, delay)
    return report


def write_report(path: str | Path, report: DeanonReport) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for peer, r in sorted(report.per_peer.items()):
            w.writerow([peer, r.category, len(r.hosted), *sorted(r.hosted)])


def read_report(path: str | Path, observer: str = "obs0") -> DeanonReport:
    report = DeanonReport(observer)
    with open(path, newline="", encoding="ascii") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                peer, category, n = int(row[0]), row[1], int(row[2])
                hosted = frozenset(int(x) for x in row[3:])
            except (ValueError, IndexError):
                raise DeanonError("parse-error", f"{Path(path).name} line {lineno}") from None
            if category not in CATEGORIES or n != len(hosted):
                raise DeanonError("schema-violation", f"{Path(path).name} line {lineno}")
            report.per_peer[peer] = PeerResult(category, hosted)
    return report


DIAGNOSTIC_FIELDS = ("peer", "validator", "backbone", "nonbackbone", "ratio", "threshold",
                     "expected", "received", "mean_peer", "std_peer", "c1", "c2", "c3", "c4",
                     "hosted", "nb_dynamic", "nb_delayed", "flip_dynamic", "flip_delayed")


def misclassification_flags(cv: ConditionVector, nb_dynamic: int, nb_delayed: int) -> tuple[bool, bool]:
    """Would C1 fail if the dynamic-window (resp. lagged) receipts were counted as backbone?"""
    if not cv.c1 or not cv.received:
        return False, False
    return ((cv.nonbackbone - nb_dynamic) / cv.received <= cv.threshold,
            (cv.nonbackbone - nb_delayed) / cv.received <= cv.threshold)


def write_conditions(path: str | Path, report: DeanonReport) -> None:
    """Audit file: one line per (peer, validator) evaluated, with a header."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAGNOSTIC_FIELDS)
        for peer, conds in sorted(report.conditions.items()):
            audit = report.audit.get(peer, {})
            for v, cv in sorted(conds.items()):
                dyn, lag = audit.get(v, (0, 0))
                flip_dyn, flip_lag = misclassification_flags(cv, dyn, lag)
                w.writerow([peer, v, cv.backbone, cv.nonbackbone, f"{cv.nonbackbone_ratio:.6f}",
                            f"{cv.threshold:.6f}", cv.expected, cv.received, f"{cv.mean_peer:.6f}",
                            f"{cv.std_peer:.6f}", int(cv.c1), int(cv.c2), int(cv.c3), int(cv.c4),
                            int(cv.hosted), dyn, lag, int(flip_dyn), int(flip_lag)])


def read_conditions(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="ascii") as fh:
        return list(csv.DictReader(fh))
