"""Independent brute-force evaluators used as test oracles.

They share no code with the package and favour obviousness over speed:
integer arithmetic instead of float thresholds, tick-by-tick scans instead
of interval algebra.
"""
from itertools import groupby


def consistency_oracle(ids, entity, entity_class, deposit, fee, exceptions=("ens", "rocketpool")):
    """(verdict, rule) by trying every rule literally, in order."""
    ids = sorted(set(ids))
    n = len(ids)
    if n == 1:
        return "consistent", "single"
    labelled = [v for v in ids if v in entity]
    m = len(labelled)
    if 10 * m >= 3 * n:
        for name in set(entity[v] for v in labelled):
            if 10 * sum(entity[v] == name for v in labelled) >= 9 * m:
                return "consistent", "G1"
    for addr in set(deposit.values()):
        if 10 * sum(deposit.get(v) == addr for v in ids) >= 9 * n:
            return "consistent", "G2"
    for addr in set(fee.values()) - {"multiple"}:
        if 10 * sum(fee.get(v) == addr for v in ids) >= 9 * n:
            return "consistent", "G3"
    runs = 1 + sum(b != a + 1 for a, b in zip(ids, ids[1:]))
    if 10 * runs <= n + 9:  # runs <= ceil(n / 10)
        return "consistent", "G4"
    if 10 * m >= n:
        best = max((sum(entity[v] == name for v in labelled) for name in set(entity[v] for v in labelled)),
                   default=0)
        if 10 * best < 9 * m and not all(entity_class.get(v, "") in exceptions for v in labelled):
            return "inconsistent", "I1"
    return "unknown", "none"


def qualifies_oracle(intervals, ticks_per_epoch, min_epochs=32):
    """Tick-by-tick: mark connected ticks, keep maximal runs of >= 1 epoch, compare the total."""
    if not intervals:
        return False, []
    end = max(b for _, b in intervals)
    on = [False] * end
    for a, b in intervals:
        for t in range(a, b):
            on[t] = True
    runs, t = [], 0
    for state, group in groupby(on):
        length = len(list(group))
        if state and length >= ticks_per_epoch:
            runs.append((t, t + length))
        t += length
    total = sum(b - a for a, b in runs)
    return total > min_epochs * ticks_per_epoch, runs
