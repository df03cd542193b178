import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subnet_deanon.config import ScenarioConfig, config_from_dict, load_config
from subnet_deanon.errors import DeanonError
from subnet_deanon.records import (ConnectionEvent, ReceiptRecord, SubscriptionEvent, read_connections,
                                   read_ground_truth, read_receipts, read_subscriptions,
                                   write_connections, write_ground_truth, write_receipts,
                                   write_subscriptions)

receipts = st.builds(ReceiptRecord, st.integers(0, 10**6), st.integers(0, 999), st.integers(0, 10**5),
                     st.integers(0, 500), st.integers(0, 31), st.integers(0, 63))


@settings(max_examples=30, deadline=None)
@given(st.lists(receipts, max_size=40))
def test_receipt_roundtrip(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("r") / "receipts.csv"
    write_receipts(path, recs)
    assert read_receipts(path) == recs


def test_subscription_and_connection_roundtrip(tmp_path):
    subs = [SubscriptionEvent(1, 12, 0, 400, "static"), SubscriptionEvent(1, 7, 96, 132, "dynamic")]
    conns = [ConnectionEvent(4, 0, 1000), ConnectionEvent(4, 1200, 5000)]
    write_subscriptions(tmp_path / "s.csv", subs)
    write_connections(tmp_path / "c.csv", conns)
    assert read_subscriptions(tmp_path / "s.csv") == subs
    assert read_connections(tmp_path / "c.csv") == conns


def test_ground_truth_roundtrip_keeps_empty_nodes(tmp_path):
    write_ground_truth(tmp_path / "g.csv", {0: {3, 1}, 1: set(), 2: {7}})
    assert read_ground_truth(tmp_path / "g.csv", range(3)) == {0: {1, 3}, 1: set(), 2: {7}}


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "receipts.csv"
    path.write_text("1,2,3,0,0,5\n1,x,3,0,0,5\n")
    with pytest.raises(DeanonError) as exc:
        read_receipts(path)
    assert exc.value.code == "parse-error" and "line 2" in exc.value.detail


def test_out_of_range_subnet_is_schema_violation(tmp_path):
    path = tmp_path / "receipts.csv"
    path.write_text("1,2,3,0,0,64\n")
    with pytest.raises(DeanonError, match="schema-violation"):
        read_receipts(path)


def test_bad_subscription_kind(tmp_path):
    path = tmp_path / "subscriptions.csv"
    path.write_text("1,2,0,10,sometimes\n")
    with pytest.raises(DeanonError, match="schema-violation"):
        read_subscriptions(path)


def test_config_json_roundtrip(tmp_path):
    cfg = ScenarioConfig(node_count=10, validator_count=50, epochs=40, seed=3,
                         nodes={"2": {"subscribes_all": True}}, labels={"coverage": 0.5})
    path = tmp_path / "config.json"
    path.write_text(cfg.to_json())
    again = load_config(path)
    assert again == cfg and again.digest() == cfg.digest()
    assert cfg.digest() != ScenarioConfig(node_count=10, validator_count=50, epochs=40, seed=4).digest()


def test_config_rejects_unknown_keys():
    with pytest.raises(DeanonError, match="invalid-config"):
        config_from_dict({"node_count": 2, "validator_count": 1, "epochs": 40, "colour": "red"})


def test_validation_is_itemized():
    cfg = ScenarioConfig(node_count=0, validator_count=10, epochs=10, drop_prob=1.5,
                         nodes={"7": {}}, labels={"bogus": 1})
    problems = cfg.validate()
    assert any("node_count" in p for p in problems)
    assert any("drop_prob" in p for p in problems)
    assert any("unknown node" in p for p in problems)
    assert any("labels" in p for p in problems)
    assert any(p.startswith("epochs < 33") for p in problems)
    with pytest.raises(DeanonError) as exc:
        cfg.check()
    assert "drop_prob" in exc.value.detail


def test_short_runs_are_allowed_with_warning():
    cfg = ScenarioConfig(node_count=4, validator_count=4, epochs=2)
    assert cfg.validate() == ["epochs < 33: no peer can pass the long-connection filter"]
    assert cfg.check() is cfg


def test_heuristics_follow_config():
    cfg = config_from_dict(json.loads('{"node_count": 3, "validator_count": 3, "epochs": 40,'
                                      ' "c4_sigma": 3, "knowledge_delay_slots": 2}'))
    assert cfg.heuristics.c4_sigma == 3 and cfg.heuristics.knowledge_delay_slots == 2
    assert cfg.fanout == cfg.mesh_degree == 8
