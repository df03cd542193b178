"""
Committees, subnets and aggregators
===================================

Every epoch the validator set is shuffled into 32 slots and each slot into
committees. A committee publishes on one of 64 subnets and a few of its
members are picked as aggregators.
"""
from collections import Counter

import numpy as np

from subnet_deanon.protocol import build_duty_schedule, select_aggregators, subnet_for

sched = build_duty_schedule(range(64), epoch=0, seed=7)
print("validators per slot:", sorted(Counter(d.slot.slot for d in sched.attestation_duty.values()).values()))
print("validator 5 attests at", sched.attestation_duty[5])

# with 64 committees per slot the committee index is the subnet
print("subnets of committees 0..5:", [subnet_for(0, c) for c in range(6)])

# aggregator selection keeps 16 members on average whatever the committee size
counts = [len(select_aggregators(range(1600), (1, t))) for t in range(2000)]
print(f"aggregators per 1600-member committee: mean {np.mean(counts):.2f}, sd {np.std(counts):.2f}")

# a validator in a committee of 480 aggregates about once every 30 epochs
duties = Counter()
for epoch in range(300):
    s = build_duty_schedule(range(32 * 480), epoch, seed=1, committees_per_slot=1)
    duties.update(v for v, _ in s.aggregation_duties())
print(f"aggregation duties per validator-epoch: {sum(duties.values()) / (32 * 480 * 300):.4f} (1/30 = 0.0333)")
