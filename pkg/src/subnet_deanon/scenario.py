"""End-to-end scenario runs, ground-truth scoring and run-directory layout.

A run directory looks like::

    seed<seed>-<config digest>/
        config.json  ground_truth.csv  labels.csv  summary.json
        obs0/  receipts.csv subscriptions.csv connections.csv
               deanon_report.csv conditions.csv verdicts.csv
               service_providers.csv scorecard.csv false_positives.csv
        obs1/  ...

``run_scenario`` produces all of it in one process. The ``stage_*``
functions rebuild the same files from what is already on disk; the CLI is a
thin wrapper around them.
"""
from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

from .config import HeuristicParams, ScenarioConfig, load_config
from .deanonymizer import (ALL_SUBNETS, CATEGORIES, DeanonReport, deanonymize,
                           misclassification_flags, read_conditions, read_report,
                           write_conditions, write_report)
from .errors import DeanonError
from .gossip import Network, ObservationLogs, build_topology, estimate_message_complexity, run_epochs
from .observation import ingest_receipts, load_store
from .protocol import make_rng
from .records import (read_ground_truth, write_connections, write_ground_truth, write_receipts,
                      write_subscriptions)
from .verifier import (ConsistencyVerdict, EntityLabelSet, ServiceProviders, cross_observer_agreement,
                       detect_service_providers, load_labels, uniqueness_report, verify_report,
                       write_labels, write_verdicts)

log = logging.getLogger(__name__)

_LABEL_STREAM = 30


# -- scoring ---------------------------------------------------------------

@dataclass
class ScoreCard:
    per_peer: dict[int, tuple[float, float]]
    micro_precision: float
    micro_recall: float
    overall_recall: float
    confusion: dict[str, dict[str, int]]
    cdf: list[tuple[int, float]]
    false_positives: list[tuple[int, int, str]] = field(default_factory=list)


def validators_per_peer_cdf(report: DeanonReport) -> list[tuple[int, float]]:
    sizes = sorted(len(h) for h in report.deanonymized().values())
    if not sizes:
        return []
    counts = Counter(sizes)
    points, running = [], 0
    for size in sorted(counts):
        running += counts[size]
        points.append((size, running / len(sizes)))
    return points


def score_against_ground_truth(report: DeanonReport, truth: dict[int, set[int]],
                               flags: dict[tuple[int, int], tuple[bool, bool]] | None = None) -> ScoreCard:
    """Compare located sets to the true origin sets of every analysed peer.

    ``micro_recall`` counts only peers that are not subscribed to all
    subnets; ``overall_recall`` counts every analysed peer.
    """
    per_peer = {}
    hit = located = eligible = everything = 0
    confusion: dict[str, dict[str, int]] = {t: dict.fromkeys(CATEGORIES, 0) for t in ("hosts", "empty")}
    false_positives = []
    for peer, result in sorted(report.per_peer.items()):
        if peer not in truth:
            raise DeanonError("truth-gap", str(peer))
        true_set, hosted = truth[peer], result.hosted
        tp = len(hosted & true_set)
        per_peer[peer] = (tp / len(hosted) if hosted else 1.0,
                          tp / len(true_set) if true_set else 1.0)
        hit += tp
        located += len(hosted)
        everything += len(true_set)
        if result.category != ALL_SUBNETS:
            eligible += len(true_set)
        confusion["hosts" if true_set else "empty"][result.category] += 1
        for v in sorted(hosted - true_set):
            dyn, lag = (flags or {}).get((peer, v), (False, False))
            cause = "dynamic-subscription" if dyn else "knowledge-delay" if lag else "unexplained"
            false_positives.append((peer, v, cause))
    return ScoreCard(
        per_peer=per_peer,
        micro_precision=hit / located if located else 1.0,
        micro_recall=hit / eligible if eligible else 1.0,
        overall_recall=hit / everything if everything else 1.0,
        confusion=confusion,
        cdf=validators_per_peer_cdf(report),
        false_positives=false_positives,
    )


def report_flags(report: DeanonReport) -> dict[tuple[int, int], tuple[bool, bool]]:
    flags = {}
    for peer, conds in report.conditions.items():
        audit = report.audit.get(peer, {})
        for v, cv in conds.items():
            if cv.hosted:
                flags[(peer, v)] = misclassification_flags(cv, *audit.get(v, (0, 0)))
    return flags


def flags_from_conditions(path: Path) -> dict[tuple[int, int], tuple[bool, bool]]:
    return {(int(r["peer"]), int(r["validator"])): (r["flip_dynamic"] == "1", r["flip_delayed"] == "1")
            for r in read_conditions(path) if r["hosted"] == "1"}


# -- labels ----------------------------------------------------------------

def synthesize_labels(config: ScenarioConfig, network: Network) -> EntityLabelSet:
    """Entity labels, deposit addresses and fee recipients for every validator.

    By default each hosting node's validators form one entity; explicit
    ``entity_sizes`` lay entities over consecutive ids instead (optionally
    shuffled).
    """
    opts = config.labels
    rng = make_rng(_LABEL_STREAM, network.seed)
    entity_of: dict[int, int] = {}
    if opts.get("entity_sizes"):
        ids = list(range(config.validator_count))
        if opts.get("shuffle"):
            ids = rng.permutation(ids).tolist()
        pos = 0
        for e, size in enumerate(opts["entity_sizes"]):
            for v in ids[pos:pos + size]:
                entity_of[v] = e
            pos += size
    else:
        hosts = sorted((min(n.hosted_validators), n) for n in network.nodes if n.hosted_validators)
        for e, (_, node) in enumerate(hosts):
            for v in node.hosted_validators:
                entity_of[v] = e
    n_entities = max(entity_of.values(), default=-1) + 1
    classes = opts.get("entity_classes") or []
    coverage, noise = opts.get("coverage", 0.6), opts.get("noise", 0.0)
    dep_shared, fee_shared = opts.get("deposit_shared", 0.5), opts.get("fee_shared", 0.5)

    labels = EntityLabelSet()
    for v in sorted(entity_of):
        e = entity_of[v]
        u = rng.random(5)
        if u[0] < coverage:
            name = e
            if u[1] < noise and n_entities > 1:
                name = int(rng.integers(0, n_entities - 1))
                name += name >= e
            labels.entity[v] = f"E{name}"
            labels.entity_class[v] = classes[name] if name < len(classes) else "pool"
        labels.deposit_address[v] = f"dep-E{e}" if u[2] < dep_shared else f"dep-v{v}"
        if u[3] < fee_shared:
            labels.fee_recipient[v] = f"fee-E{e}"
        else:
            labels.fee_recipient[v] = f"fee-v{v}" if u[4] < 0.5 else "multiple"
    return labels


# -- run directory ---------------------------------------------------------

def run_dir_for(config: ScenarioConfig, out_dir: str | Path) -> Path:
    return Path(out_dir) / f"seed{config.seed}-{config.digest()}"


def observer_dirs(run_dir: Path) -> list[Path]:
    return sorted((p for p in Path(run_dir).glob("obs*") if p.is_dir()),
                  key=lambda p: int(p.name[3:]))


def _write_logs(run_dir: Path, config: ScenarioConfig, network: Network, logs: ObservationLogs,
                labels: EntityLabelSet) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(config.to_json())
    write_ground_truth(run_dir / "ground_truth.csv", logs.ground_truth)
    write_labels(run_dir / "labels.csv", labels, range(config.validator_count))
    for k in range(len(logs.observer_ids)):
        d = run_dir / f"obs{k}"
        d.mkdir(exist_ok=True)
        write_receipts(d / "receipts.csv", logs.receipts[k])
        write_subscriptions(d / "subscriptions.csv", logs.subscriptions[k])
        write_connections(d / "connections.csv", logs.connections[k])


def _write_service_providers(path: Path, sp: ServiceProviders, report: DeanonReport) -> None:
    hosted = report.deanonymized()
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i, peer in enumerate(sp.peers):
            w.writerow([peer, len(hosted[peer]), *(f"{x:.6f}" for x in sp.overlap[i])])


def _read_service_providers(path: Path) -> list[int]:
    with open(path, newline="", encoding="ascii") as fh:
        return [int(row[0]) for row in csv.reader(fh) if row]


def _write_scorecard(d: Path, card: ScoreCard, report: DeanonReport, truth: dict[int, set[int]]) -> None:
    with open(d / "scorecard.csv", "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("peer", "category", "hosted", "truth", "correct", "precision", "recall"))
        for peer, (prec, rec) in card.per_peer.items():
            r = report.per_peer[peer]
            w.writerow((peer, r.category, len(r.hosted), len(truth[peer]),
                        len(r.hosted & truth[peer]), f"{prec:.6f}", f"{rec:.6f}"))
    with open(d / "false_positives.csv", "w", newline="", encoding="ascii") as fh:
        csv.writer(fh, lineterminator="\n").writerows(card.false_positives)


def _summary(config: ScenarioConfig, reports: list[DeanonReport], cards: list[ScoreCard],
             verdicts: list[dict[int, ConsistencyVerdict]], providers: list[list[int]]) -> dict:
    observers = []
    for report, card, ver, sp in zip(reports, cards, verdicts, providers):
        observers.append({
            "observer": report.observer,
            "qualified_peers": len(report.per_peer),
            "categories": dict(Counter(r.category for r in report.per_peer.values()).most_common()),
            "validators_located": len(report.located_validators()),
            "validators_located_excl_service_providers": len(report.located_validators(set(sp))),
            "service_providers": sp,
            "verdicts": dict(sorted(Counter(v.verdict for v in ver.values()).items())),
            "micro_precision": card.micro_precision,
            "micro_recall": card.micro_recall,
            "overall_recall": card.overall_recall,
            "confusion": card.confusion,
            "false_positives": len(card.false_positives),
            "false_positive_causes": dict(sorted(Counter(c for *_, c in card.false_positives).items())),
            "validators_per_peer_cdf": card.cdf,
        })
    uniq = uniqueness_report(reports)
    summary = {
        "seed": config.seed,
        "config_digest": config.digest(),
        "message_complexity": estimate_message_complexity(config),
        "observers": observers,
        "non_unique_validators": sum(len(p) > 1 for p in uniq.values()),
    }
    if len(reports) >= 2:
        exact, overlap = cross_observer_agreement(reports)
        summary["cross_observer"] = {"exact_match_rate": exact, "mean_overlap": overlap}
    return summary


def _write_summary(run_dir: Path, summary: dict) -> None:
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


@dataclass
class RunResult:
    run_dir: Path
    config: ScenarioConfig
    network: Network
    logs: ObservationLogs
    reports: list[DeanonReport]
    scorecards: list[ScoreCard]
    verdicts: list[dict[int, ConsistencyVerdict]]
    service_providers: list[ServiceProviders]
    labels: EntityLabelSet
    summary: dict


def run_scenario(config: ScenarioConfig, out_dir: str | Path,
                 params: HeuristicParams | None = None) -> RunResult:
    """Simulate, analyse, verify and score ``config``; write everything to a run directory."""
    problems = [p for p in config.validate() if not p.startswith("epochs < 33")]
    if problems:
        raise DeanonError("invalid-config", "; ".join(problems))
    params = params or config.heuristics
    run_dir = run_dir_for(config, out_dir)
    network = build_topology(config)
    logs = run_epochs(network)
    labels = synthesize_labels(config, network)
    _write_logs(run_dir, config, network, logs, labels)
    log.info("simulated %d observers into %s", len(logs.observer_ids), run_dir)

    reports, cards, verdicts, providers = [], [], [], []
    for k in range(len(logs.observer_ids)):
        d = run_dir / f"obs{k}"
        store = ingest_receipts(logs.receipts[k], logs.subscriptions[k], logs.connections[k],
                                config.ticks_per_slot)
        report = deanonymize(store, params, observer=f"obs{k}")
        write_report(d / "deanon_report.csv", report)
        write_conditions(d / "conditions.csv", report)
        ver = verify_report(report, labels)
        sp = detect_service_providers(report, ver)
        write_verdicts(d / "verdicts.csv", ver)
        _write_service_providers(d / "service_providers.csv", sp, report)
        card = score_against_ground_truth(report, logs.ground_truth, report_flags(report))
        _write_scorecard(d, card, report, logs.ground_truth)
        reports.append(report)
        cards.append(card)
        verdicts.append(ver)
        providers.append(sp)
    summary = _summary(config, reports, cards, verdicts, [list(sp.peers) for sp in providers])
    _write_summary(run_dir, summary)
    return RunResult(run_dir, config, network, logs, reports, cards, verdicts, providers, labels, summary)


# -- file-based stages (CLI) -------------------------------------------------

def stage_simulate(config: ScenarioConfig, out_dir: str | Path) -> Path:
    config.check()
    network = build_topology(config)
    logs = run_epochs(network)
    run_dir = run_dir_for(config, out_dir)
    _write_logs(run_dir, config, network, logs, synthesize_labels(config, network))
    return run_dir


def _params(run_dir: Path, **overrides) -> tuple[ScenarioConfig, HeuristicParams]:
    config = load_config(Path(run_dir) / "config.json")
    params = replace(config.heuristics, **{k: v for k, v in overrides.items() if v is not None})
    return config, params


def stage_analyze(run_dir: str | Path, **overrides) -> list[DeanonReport]:
    run_dir = Path(run_dir)
    config, params = _params(run_dir, **overrides)
    reports = []
    for d in observer_dirs(run_dir):
        report = deanonymize(load_store(d, config.ticks_per_slot), params, observer=d.name)
        write_report(d / "deanon_report.csv", report)
        write_conditions(d / "conditions.csv", report)
        reports.append(report)
    return reports


def _load_reports(run_dir: Path) -> list[DeanonReport]:
    return [read_report(d / "deanon_report.csv", d.name) for d in observer_dirs(run_dir)]


def stage_verify(run_dir: str | Path, labels_path: str | Path) -> list[ServiceProviders]:
    run_dir = Path(run_dir)
    labels = load_labels(labels_path)
    out = []
    for d, report in zip(observer_dirs(run_dir), _load_reports(run_dir)):
        ver = verify_report(report, labels)
        sp = detect_service_providers(report, ver)
        write_verdicts(d / "verdicts.csv", ver)
        _write_service_providers(d / "service_providers.csv", sp, report)
        out.append(sp)
    return out


def stage_score(run_dir: str | Path) -> list[ScoreCard]:
    run_dir = Path(run_dir)
    config = load_config(run_dir / "config.json")
    truth = read_ground_truth(run_dir / "ground_truth.csv", range(config.node_count))
    cards = []
    for d, report in zip(observer_dirs(run_dir), _load_reports(run_dir)):
        card = score_against_ground_truth(report, truth, flags_from_conditions(d / "conditions.csv"))
        _write_scorecard(d, card, report, truth)
        cards.append(card)
    return cards


def stage_report(run_dir: str | Path) -> dict:
    """Assemble ``summary.json`` from the per-observer files already on disk."""
    run_dir = Path(run_dir)
    config = load_config(run_dir / "config.json")
    truth = read_ground_truth(run_dir / "ground_truth.csv", range(config.node_count))
    reports = _load_reports(run_dir)
    dirs = observer_dirs(run_dir)
    cards = [score_against_ground_truth(r, truth, flags_from_conditions(d / "conditions.csv"))
             for d, r in zip(dirs, reports)]
    verdicts = []
    for d in dirs:
        with open(d / "verdicts.csv", newline="", encoding="ascii") as fh:
            verdicts.append({int(p): ConsistencyVerdict(v, r) for p, v, r in csv.reader(fh)})
    providers = [_read_service_providers(d / "service_providers.csv") for d in dirs]
    summary = _summary(config, reports, cards, verdicts, providers)
    _write_summary(run_dir, summary)
    return summary
