"""Locating validators behind gossip peers from an observer's first receipts."""
from .config import HeuristicParams, ScenarioConfig, config_from_dict, load_config
from .deanonymizer import (ConditionVector, DeanonReport, PeerResult, c1_threshold, classify_peer,
                           deanonymize, evaluate_conditions)
from .errors import DeanonError
from .gossip import (NodeConfig, ObservationLogs, assign_static_subscriptions, build_mesh,
                     build_topology, message_complexity, run_epochs, schedule_dynamic_subscriptions)
from .observation import (ObservationStore, PeerProfile, build_profile, ingest_receipts,
                          long_connection_windows, per_validator_counts)
from .protocol import (SLOTS_PER_EPOCH, SUBNET_COUNT, Duty, DutySchedule, SlotRef,
                       build_duty_schedule, expected_attestations, select_aggregators, subnet_for)
from .records import ConnectionEvent, ReceiptRecord, SubscriptionEvent
from .scenario import ScoreCard, run_scenario, score_against_ground_truth, validators_per_peer_cdf
from .verifier import (ConsistencyVerdict, EntityLabelSet, check_consistency,
                       cross_observer_agreement, detect_service_providers, uniqueness_report)

__version__ = "0.1.0"

__all__ = [
    "assign_static_subscriptions",
    "build_duty_schedule",
    "build_mesh",
    "build_profile",
    "build_topology",
    "c1_threshold",
    "check_consistency",
    "classify_peer",
    "ConditionVector",
    "config_from_dict",
    "ConnectionEvent",
    "ConsistencyVerdict",
    "cross_observer_agreement",
    "DeanonError",
    "DeanonReport",
    "deanonymize",
    "detect_service_providers",
    "Duty",
    "DutySchedule",
    "EntityLabelSet",
    "evaluate_conditions",
    "expected_attestations",
    "HeuristicParams",
    "ingest_receipts",
    "load_config",
    "long_connection_windows",
    "message_complexity",
    "NodeConfig",
    "ObservationLogs",
    "ObservationStore",
    "PeerProfile",
    "PeerResult",
    "per_validator_counts",
    "ReceiptRecord",
    "run_epochs",
    "run_scenario",
    "ScenarioConfig",
    "schedule_dynamic_subscriptions",
    "score_against_ground_truth",
    "ScoreCard",
    "select_aggregators",
    "SlotRef",
    "SLOTS_PER_EPOCH",
    "SUBNET_COUNT",
    "subnet_for",
    "SubscriptionEvent",
    "uniqueness_report",
    "validators_per_peer_cdf",
]
