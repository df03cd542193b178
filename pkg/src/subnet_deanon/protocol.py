"""Consensus duty model: epochs, slots, committees, subnets and aggregators.

Everything here is a pure function of its arguments. Randomness comes from
numpy's PCG64 generator seeded through ``SeedSequence`` so that a schedule is
fully determined by ``(validators, epoch, seed)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DeanonError

SLOTS_PER_EPOCH = 32
SUBNET_COUNT = 64
MAX_COMMITTEES_PER_SLOT = 64
TARGET_AGGREGATORS = 16

# Stream tags keep the generators used by different stages independent.
_SCHEDULE_STREAM = 1
_AGGREGATOR_STREAM = 2


def make_rng(*key: int) -> np.random.Generator:
    """Return the artifact's PRNG (PCG64) for an integer key path."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


@dataclass(frozen=True, order=True)
class SlotRef:
    epoch: int
    slot: int

    def __post_init__(self):
        if self.epoch < 0 or not 0 <= self.slot < SLOTS_PER_EPOCH:
            raise DeanonError("invalid-slot", f"{self.epoch}/{self.slot}")

    @property
    def absolute(self) -> int:
        return self.epoch * SLOTS_PER_EPOCH + self.slot

    @classmethod
    def from_absolute(cls, absolute: int) -> SlotRef:
        return cls(*divmod(absolute, SLOTS_PER_EPOCH))


@dataclass(frozen=True)
class Duty:
    slot: SlotRef
    committee: int
    subnet: int


@dataclass
class DutySchedule:
    epoch: int
    committees_per_slot: int
    attestation_duty: dict[int, Duty]
    aggregators: dict[tuple[int, int], frozenset[int]] = field(default_factory=dict)

    def committee(self, slot: int, committee: int) -> list[int]:
        return sorted(
            v for v, d in self.attestation_duty.items()
            if d.slot.slot == slot and d.committee == committee
        )

    def aggregation_duties(self) -> list[tuple[int, Duty]]:
        """(validator, duty) for every aggregator in the epoch, in a stable order."""
        out = []
        for (slot, committee), members in sorted(self.aggregators.items()):
            for v in sorted(members):
                out.append((v, self.attestation_duty[v]))
        return out


def subnet_for(slot: SlotRef | int, committee_index: int,
               committees_per_slot: int = MAX_COMMITTEES_PER_SLOT) -> int:
    """Subnet carrying a committee's attestations.

    With the default 64 committees per slot this is the identity on the
    committee index. Fewer committees per slot are spread over the subnets by
    slot position so that an epoch still touches every subnet.
    """
    if not 0 <= committee_index < MAX_COMMITTEES_PER_SLOT:
        raise DeanonError("invalid-committee", str(committee_index))
    slot_in_epoch = slot.slot if isinstance(slot, SlotRef) else int(slot) % SLOTS_PER_EPOCH
    return (committees_per_slot * slot_in_epoch + committee_index) % SUBNET_COUNT


def select_aggregators(committee: Iterable[int], seed: int | Sequence[int],
                       target: int = TARGET_AGGREGATORS) -> frozenset[int]:
    """Pick each member independently with probability ``min(1, target/|committee|)``."""
    members = sorted(committee)
    if not members:
        raise DeanonError("empty-committee")
    p = min(1.0, target / len(members))
    if p >= 1.0:
        return frozenset(members)
    key = [seed] if isinstance(seed, (int, np.integer)) else list(seed)
    draws = make_rng(_AGGREGATOR_STREAM, *key).random(len(members))
    return frozenset(v for v, u in zip(members, draws) if u < p)


def build_duty_schedule(validators: Iterable[int], epoch: int, seed: int,
                        committees_per_slot: int = MAX_COMMITTEES_PER_SLOT,
                        target_aggregators: int = TARGET_AGGREGATORS) -> DutySchedule:
    """Assign every validator one (slot, committee) for ``epoch``.

    Validators are shuffled, cut into 32 slot groups whose sizes differ by at
    most one, and each slot group is cut the same way into committees. Every
    slot gets the same number of committees, ``committees_per_slot`` or fewer
    when there are not enough validators to fill them, and that number drives
    the subnet mapping so that each epoch still spreads over all 64 subnets.
    """
    ids = np.array(sorted(set(validators)), dtype=np.int64)
    if ids.size == 0:
        raise DeanonError("empty-validator-set")
    if not 1 <= committees_per_slot <= MAX_COMMITTEES_PER_SLOT:
        raise DeanonError("invalid-committee", f"committees_per_slot={committees_per_slot}")

    per_slot = max(1, min(committees_per_slot, ids.size // SLOTS_PER_EPOCH))
    shuffled = make_rng(_SCHEDULE_STREAM, seed, epoch).permutation(ids)
    duties: dict[int, Duty] = {}
    aggregators: dict[tuple[int, int], frozenset[int]] = {}
    for slot, slot_group in enumerate(np.array_split(shuffled, SLOTS_PER_EPOCH)):
        if slot_group.size == 0:
            continue
        ref = SlotRef(epoch, slot)
        for c, members in enumerate(np.array_split(slot_group, min(per_slot, slot_group.size))):
            duty = Duty(ref, c, subnet_for(ref, c, per_slot))
            for v in members.tolist():
                duties[v] = duty
            aggregators[(slot, c)] = select_aggregators(
                members.tolist(), (seed, epoch, slot, c), target_aggregators)
    return DutySchedule(epoch, per_slot, duties, aggregators)


def expected_attestations(window: Iterable[tuple[int, int]]) -> int:
    """Number of complete epochs in a set of half-open ``[start, stop)`` epoch ranges.

    One attestation is expected per validator per epoch, so this is the C3
    denominator. Ranges are assumed disjoint.
    """
    return sum(max(0, stop - start) for start, stop in window)
