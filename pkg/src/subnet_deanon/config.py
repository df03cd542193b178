"""Scenario configuration.

A scenario is one JSON object whose keys are exactly the field names of
:class:`ScenarioConfig` (plus nested ``nodes`` overrides and ``labels``).
Unknown keys are rejected so that runs stay reproducible.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import DeanonError
from .protocol import MAX_COMMITTEES_PER_SLOT, SLOTS_PER_EPOCH, SUBNET_COUNT, TARGET_AGGREGATORS

NODE_KEYS = {"hosted", "static_subnet_count", "subscribes_all", "relay_clients"}
LABEL_KEYS = {"coverage", "noise", "shuffle", "entity_sizes", "entity_classes",
              "deposit_shared", "fee_shared"}


@dataclass(frozen=True)
class HeuristicParams:
    c1_slack: float = 0.9
    c3_divisor: float = 10.0
    c4_sigma: float = 2.0
    c4_min_population: int = 10
    knowledge_delay_slots: int = 1


@dataclass
class ScenarioConfig:
    node_count: int
    validator_count: int
    epochs: int
    seed: int = 0

    # topology
    observers: int = 1
    observer_peer_cap: int = 1000
    mesh_degree: int = 8
    fanout_size: int | None = None
    ticks_per_slot: int = 12
    committees_per_slot: int = MAX_COMMITTEES_PER_SLOT
    target_aggregators: int = TARGET_AGGREGATORS
    static_subnet_count: int = 2
    hosting_fraction: float = 0.5
    nodes: dict[str, dict[str, Any]] = field(default_factory=dict)

    # noise knobs
    drop_prob: float = 0.0
    fanout_inclusion_prob: float = 0.9
    knowledge_delay_slots: int = 1
    origin_first_prob: float = 1.0
    origin_delay_ticks: int = 3
    dynamic_subscriptions: bool = True
    latency_jitter: int = 0
    disconnect_prob: float = 0.0

    # heuristic parameters
    c1_slack: float = 0.9
    c3_divisor: float = 10.0
    c4_sigma: float = 2.0
    c4_min_population: int = 10

    labels: dict[str, Any] = field(default_factory=dict)

    @property
    def fanout(self) -> int:
        return self.mesh_degree if self.fanout_size is None else self.fanout_size

    @property
    def ticks_per_epoch(self) -> int:
        return self.ticks_per_slot * SLOTS_PER_EPOCH

    @property
    def heuristics(self) -> HeuristicParams:
        return HeuristicParams(self.c1_slack, self.c3_divisor, self.c4_sigma,
                               self.c4_min_population, self.knowledge_delay_slots)

    def node_override(self, node: int) -> dict[str, Any]:
        return self.nodes.get(str(node), {})

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]

    def validate(self) -> list[str]:
        """Return an itemized list of problems (empty when the config is usable)."""
        problems = []
        for name in ("node_count", "validator_count", "epochs"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.observers < 1:
            problems.append("observers must be >= 1")
        if self.mesh_degree < 1:
            problems.append("mesh_degree must be >= 1")
        if self.fanout < 1:
            problems.append("fanout_size must be >= 1")
        if self.ticks_per_slot < 1:
            problems.append("ticks_per_slot must be >= 1")
        if not 1 <= self.committees_per_slot <= MAX_COMMITTEES_PER_SLOT:
            problems.append("committees_per_slot must be in [1, 64]")
        if not 0 <= self.static_subnet_count <= SUBNET_COUNT:
            problems.append("static_subnet_count must be in [0, 64]")
        for name in ("hosting_fraction", "drop_prob", "fanout_inclusion_prob",
                     "origin_first_prob", "disconnect_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must be a probability")
        for name in ("knowledge_delay_slots", "origin_delay_ticks", "latency_jitter"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        if not 0 < self.c1_slack <= 1 or self.c3_divisor <= 0 or self.c4_sigma < 0:
            problems.append("heuristic parameters out of range")
        for key, override in self.nodes.items():
            if not key.isdigit() or int(key) >= self.node_count:
                problems.append(f"nodes: unknown node {key!r}")
                continue
            unknown = set(override) - NODE_KEYS
            if unknown:
                problems.append(f"nodes.{key}: unknown keys {sorted(unknown)}")
            for peer in override.get("relay_clients", []):
                if not 0 <= peer < self.node_count:
                    problems.append(f"nodes.{key}.relay_clients: unknown node {peer}")
            hosted = override.get("hosted")
            if isinstance(hosted, list) and any(not 0 <= v < self.validator_count for v in hosted):
                problems.append(f"nodes.{key}.hosted: validator out of range")
        unknown = set(self.labels) - LABEL_KEYS
        if unknown:
            problems.append(f"labels: unknown keys {sorted(unknown)}")
        if self.epochs < 33:
            problems.append("epochs < 33: no peer can pass the long-connection filter")
        return problems

    def check(self) -> ScenarioConfig:
        problems = [p for p in self.validate() if not p.startswith("epochs < 33")]
        if problems:
            raise DeanonError("invalid-config", "; ".join(problems))
        return self


def config_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(data) - known
    if unknown:
        raise DeanonError("invalid-config", f"unknown keys {sorted(unknown)}")
    try:
        return ScenarioConfig(**data)
    except TypeError as exc:
        raise DeanonError("invalid-config", str(exc)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))
