"""
Checking located sets against public labels
===========================================

A located set is plausible when its validators share an entity label, a
deposit address, a fee recipient, or form a few runs of consecutive ids.
Large implausible sets that overlap each other point at relays serving
many unrelated validators rather than at a single operator.
"""
import numpy as np

from subnet_deanon.deanonymizer import DEANONYMIZED, DeanonReport, PeerResult
from subnet_deanon.verifier import EntityLabelSet, check_consistency, detect_service_providers, verify_report

rng = np.random.default_rng(0)
labels = EntityLabelSet(
    entity={v: f"pool{v // 100}" for v in range(0, 1000) if rng.random() < 0.5},
    deposit_address={v: f"dep{v // 50}" for v in range(1000)},
)
print("one pool's block:      ", check_consistency(range(200, 240), labels))
print("strided across pools:  ", check_consistency(range(0, 1000, 37), labels))
print("single validator:      ", check_consistency([5], labels))

shared = set(range(3, 1000, 31))
report = DeanonReport("obs0", {
    1: PeerResult(DEANONYMIZED, frozenset(range(300, 330))),
    2: PeerResult(DEANONYMIZED, frozenset(shared)),
    3: PeerResult(DEANONYMIZED, frozenset(list(shared)[:25])),
    4: PeerResult(DEANONYMIZED, frozenset(range(7, 1000, 53))),
})
verdicts = verify_report(report, labels)
for peer, verdict in verdicts.items():
    print(f"peer {peer}: {len(report.per_peer[peer].hosted):>3} validators -> {verdict.verdict} ({verdict.rule})")
sp = detect_service_providers(report, verdicts)
print("service providers:", sp.peers)
print("overlap (row i, column j = |Hi & Hj| / |Hj|):")
print(np.round(sp.overlap, 2))
