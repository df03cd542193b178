"""
What one peer tells the observer
================================

A peer relays every message of the two subnets it is subscribed to and, in
addition, publishes the attestations of the validators it hosts. Those own
attestations are the only traffic it sends on other subnets.
"""
from collections import Counter

from subnet_deanon.config import ScenarioConfig
from subnet_deanon.gossip import build_topology, run_epochs

cfg = ScenarioConfig(node_count=100, validator_count=2048, epochs=33, observer_peer_cap=100,
                     latency_jitter=2, knowledge_delay_slots=0, dynamic_subscriptions=False,
                     fanout_inclusion_prob=1.0, nodes={"0": {"hosted": 4}})
net = build_topology(cfg)
logs = run_epochs(net)

peer = 0
backbones = net.static_subs[peer]
hosted = net.nodes[peer].hosted_validators
stream = [r for r in logs.receipts[0] if r.sender == peer]
print(f"peer {peer}: subnets {sorted(backbones)}, hosts {sorted(hosted)}")
print(f"receipts per epoch: {len(stream) / cfg.epochs:.2f}, "
      f"predicted {len(hosted) + cfg.validator_count * len(backbones) / 64:.2f}")

off = Counter(r.validator for r in stream if r.subnet not in backbones)
print("validators seen outside the peer's subnets:", dict(off))
