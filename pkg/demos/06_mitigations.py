"""
Mitigations
===========

Subscribing to every subnet removes the non-backbone signal entirely.
Publishing through two relay nodes keeps each relay locatable, but the
validator now maps to two peers. The price of subscribing everywhere is
paid in message volume.
"""
import tempfile

from subnet_deanon.config import load_config
from subnet_deanon.gossip import build_topology, message_complexity
from subnet_deanon.scenario import run_scenario
from subnet_deanon.verifier import uniqueness_report

base = load_config("demos/configs/ideal.json")
peers = sorted(build_topology(base).observer_peers[0])

with tempfile.TemporaryDirectory() as out:
    everywhere = base.__class__(**{**base.__dict__, "nodes": {str(p): {"subscribes_all": True} for p in peers}})
    result = run_scenario(everywhere, out)
    print("all peers on 64 subnets:", result.summary["observers"][0]["categories"],
          f"recall {result.scorecards[0].overall_recall:.3f}")

    client = next(n for n in range(base.node_count) if n not in peers)
    nodes = {str(client): {"hosted": 20, "relay_clients": peers[:2]}, **{str(p): {"hosted": 0} for p in peers[:2]}}
    relayed = base.__class__(**{**base.__dict__, "epochs": 96, "nodes": nodes})
    result = run_scenario(relayed, out)
    mapping = uniqueness_report(result.reports)
    hosted = result.network.nodes[client].hosted_validators
    sizes = sorted(len(mapping.get(v, ())) for v in hosted)
    print(f"client behind relays {peers[:2]}: peers per validator {sizes}, "
          f"relay precision {[result.scorecards[0].per_peer[p][0] for p in peers[:2]]}")

for subnets in (2, 8, 64):
    print(f"{subnets:>2} subnets per node: {message_complexity(10_000, 1_000_000, 8, subnets):.3g} messages per epoch")
