"""
Locating validators under ideal information
===========================================

Simulate a small network with one observer, then run the full pipeline:
first-receipt deduplication, the long-connection filter, conditions C1-C4
and peer categorization. Ground truth is known, so the result is scored.
"""
import tempfile

from subnet_deanon.config import load_config
from subnet_deanon.scenario import run_scenario

cfg = load_config("demos/configs/ideal.json")
with tempfile.TemporaryDirectory() as out:
    result = run_scenario(cfg, out)
    report, card = result.reports[0], result.scorecards[0]
    obs = result.summary["observers"][0]
    print("categories:", obs["categories"])
    print(f"validators located: {obs['validators_located']} of {cfg.validator_count}")
    print(f"precision {card.micro_precision:.4f}, recall {card.micro_recall:.4f}")
    print("validators per deanonymized peer (CDF):", card.cdf[:8], "...")

    # the evidence for one located peer
    peer, hosted = next(iter(report.deanonymized().items()))
    v = min(hosted)
    cv = report.conditions[peer][v]
    print(f"peer {peer}, validator {v}: {cv.nonbackbone}/{cv.received} non-backbone "
          f"(threshold {cv.threshold}), expected {cv.expected}, peer mean {cv.mean_peer:.2f} sd {cv.std_peer:.2f}")
