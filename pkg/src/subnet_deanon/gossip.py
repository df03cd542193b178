"""Discrete-event simulation of the attestation subnets.

The network has ``node_count`` regular nodes (ids ``0..n-1``) and one or more
observers (ids ``n, n+1, ...``). Observers subscribe to every subnet, accept
a mesh link from every connected peer, never forward, and log every copy of
every attestation they receive.

Time is counted in integer ticks; one hop costs one tick (plus optional
jitter) and every attestation of a slot is published at the first tick of
that slot. Messages do not interact, so each one is propagated with its own
small event heap and the observer streams are merged by tick at the end.
"""
from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .config import ScenarioConfig
from .errors import DeanonError
from .protocol import SLOTS_PER_EPOCH, SUBNET_COUNT, DutySchedule, build_duty_schedule, make_rng
from .records import ConnectionEvent, ReceiptRecord, SubscriptionEvent

_STATIC_STREAM = 10
_HOSTING_STREAM = 11
_MESH_STREAM = 12
_PEERING_STREAM = 13
_SESSION_STREAM = 14
_DYNAMIC_STREAM = 15
_FANOUT_STREAM = 16
_LINK_STREAM = 17
_OBSERVER_STREAM = 18

_BLOCK = 1 << 14


class _Uniforms:
    """Buffered U[0,1) draws from one PCG64 stream."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._buf: list[float] = []
        self._i = 0

    def __call__(self) -> float:
        if self._i == len(self._buf):
            self._buf = self._rng.random(_BLOCK).tolist()
            self._i = 0
        self._i += 1
        return self._buf[self._i - 1]


@dataclass(frozen=True)
class NodeConfig:
    node: int
    hosted_validators: frozenset[int] = frozenset()
    static_subnet_count: int = 2
    subscribes_all: bool = False
    # When non-empty, the node's validator client publishes through these
    # nodes instead of through the node itself.
    relay_clients: frozenset[int] = frozenset()

    @property
    def endpoint(self) -> tuple[str, int]:
        n = self.node
        return f"10.{(n >> 16) & 255}.{(n >> 8) & 255}.{n & 255}", 9000


def assign_static_subscriptions(node: NodeConfig, seed: int) -> frozenset[int]:
    if node.subscribes_all:
        return frozenset(range(SUBNET_COUNT))
    if node.static_subnet_count > SUBNET_COUNT:
        raise DeanonError("too-many-subnets", str(node.static_subnet_count))
    if node.static_subnet_count <= 0:
        return frozenset()
    picks = make_rng(_STATIC_STREAM, seed, node.node).choice(
        SUBNET_COUNT, size=node.static_subnet_count, replace=False)
    return frozenset(picks.tolist())


def build_mesh(members: Iterable[int], degree: int, rng: np.random.Generator,
               subnet: int = -1) -> dict[int, list[int]]:
    """Connected random overlay on ``members`` with every degree <= ``degree``.

    A ring guarantees connectivity; random chords then top nodes up towards
    ``degree``. Member sets no larger than ``degree + 1`` become a clique.
    """
    nodes = sorted(members)
    adj: dict[int, set[int]] = {m: set() for m in nodes}
    if len(nodes) <= 1:
        return {m: [] for m in nodes}
    if len(nodes) <= degree + 1:
        return {m: [o for o in nodes if o != m] for m in nodes}
    if degree < 2:
        raise DeanonError("topology-infeasible", f"subnet {subnet}: {len(nodes)} members, degree {degree}")
    order = rng.permutation(nodes).tolist()
    for a, b in zip(order, order[1:] + order[:1]):
        adj[a].add(b)
        adj[b].add(a)
    for m in order:
        for c in rng.permutation(nodes).tolist():
            if len(adj[m]) >= degree:
                break
            if c != m and c not in adj[m] and len(adj[c]) < degree:
                adj[m].add(c)
                adj[c].add(m)
    return {m: sorted(adj[m]) for m in nodes}


def _split_sizes(total: int, parts: int, rng: np.random.Generator) -> list[int]:
    """Random positive sizes summing to ``total`` (flat Dirichlet, largest remainder)."""
    if parts <= 0:
        return []
    if total <= parts:
        return [1] * total + [0] * (parts - total)
    shares = rng.dirichlet(np.ones(parts)) * (total - parts)
    sizes = np.floor(shares).astype(int)
    for i in np.argsort(-(shares - sizes), kind="stable")[: (total - parts) - sizes.sum()]:
        sizes[i] += 1
    return (sizes + 1).tolist()


def _assign_hosting(config: ScenarioConfig, seed: int) -> dict[int, frozenset[int]]:
    hosted: dict[int, list[int]] = defaultdict(list)
    taken: set[int] = set()
    for n in range(config.node_count):
        h = config.node_override(n).get("hosted")
        if isinstance(h, list):
            hosted[n].extend(h)
            taken.update(h)
    remaining = [v for v in range(config.validator_count) if v not in taken]
    pos = 0
    for n in range(config.node_count):
        h = config.node_override(n).get("hosted")
        if isinstance(h, int):
            hosted[n].extend(remaining[pos:pos + h])
            pos += h
    remaining = remaining[pos:]
    free = [n for n in range(config.node_count) if "hosted" not in config.node_override(n)]
    if remaining:
        if not free:
            raise DeanonError("invalid-config", f"{len(remaining)} validators have no host")
        rng = make_rng(_HOSTING_STREAM, seed)
        k = min(len(free), len(remaining), max(1, round(config.hosting_fraction * len(free))))
        hosts = rng.choice(free, size=k, replace=False).tolist()
        pos = 0
        for host, size in zip(hosts, _split_sizes(len(remaining), k, rng)):
            hosted[host].extend(remaining[pos:pos + size])
            pos += size
    return {n: frozenset(vs) for n, vs in hosted.items() if vs}


def _sessions(config: ScenarioConfig, end_tick: int, seed: int, observer: int, peer: int):
    if config.disconnect_prob <= 0:
        return [(0, end_tick)]
    rng = make_rng(_SESSION_STREAM, seed, observer, peer)
    tpe = config.ticks_per_epoch
    out, start, t = [], 0, 0
    while t < end_tick:
        if rng.random() < config.disconnect_prob:
            cut = t + int(rng.integers(0, tpe))
            if cut > start:
                out.append((start, min(cut, end_tick)))
            start = cut + int(rng.integers(1, 5)) * tpe + int(rng.integers(0, tpe))
            t = start - start % tpe + tpe
        else:
            t += tpe
    if start < end_tick:
        out.append((start, end_tick))
    return out


@dataclass
class Network:
    config: ScenarioConfig
    seed: int
    nodes: list[NodeConfig]
    observer_ids: list[int]
    static_subs: list[frozenset[int]]
    members: list[list[int]]
    mesh: list[dict[int, list[int]]]
    observer_peers: list[frozenset[int]]
    sessions: dict[tuple[int, int], list[tuple[int, int]]]
    publishers: dict[int, tuple[int, ...]] = field(default_factory=dict)

    @property
    def end_tick(self) -> int:
        return self.config.epochs * self.config.ticks_per_epoch

    def ground_truth(self) -> dict[int, set[int]]:
        """node -> validators whose attestations originate at that node."""
        truth: dict[int, set[int]] = {n.node: set() for n in self.nodes}
        for v, pubs in self.publishers.items():
            for p in pubs:
                truth[p].add(v)
        return truth


def build_topology(config: ScenarioConfig, seed: int | None = None) -> Network:
    config.check()
    seed = config.seed if seed is None else seed
    hosting = _assign_hosting(config, seed)
    nodes = []
    for n in range(config.node_count):
        o = config.node_override(n)
        nodes.append(NodeConfig(
            node=n,
            hosted_validators=hosting.get(n, frozenset()),
            static_subnet_count=o.get("static_subnet_count", config.static_subnet_count),
            subscribes_all=bool(o.get("subscribes_all", False)),
            relay_clients=frozenset(o.get("relay_clients", ())),
        ))
    static_subs = [assign_static_subscriptions(nc, seed) for nc in nodes]
    members = [sorted(n for n in range(config.node_count) if s in static_subs[n])
               for s in range(SUBNET_COUNT)]
    mesh = [build_mesh(members[s], config.mesh_degree, make_rng(_MESH_STREAM, seed, s), s)
            for s in range(SUBNET_COUNT)]

    observer_ids = [config.node_count + k for k in range(config.observers)]
    observer_peers, sessions = [], {}
    end_tick = config.epochs * config.ticks_per_epoch
    for k in range(config.observers):
        cap = min(config.observer_peer_cap, config.node_count)
        peers = make_rng(_PEERING_STREAM, seed, k).choice(config.node_count, size=cap, replace=False)
        observer_peers.append(frozenset(peers.tolist()))
        for p in sorted(observer_peers[-1]):
            sessions[(k, p)] = _sessions(config, end_tick, seed, k, p)

    publishers = {}
    for nc in nodes:
        pubs = tuple(sorted(nc.relay_clients)) if nc.relay_clients else (nc.node,)
        for v in nc.hosted_validators:
            publishers[v] = pubs
    return Network(config, seed, nodes, observer_ids, static_subs, members, mesh,
                   observer_peers, sessions, publishers)


def schedule_dynamic_subscriptions(node: int, schedule: DutySchedule, validators: Iterable[int],
                                   ticks_per_slot: int = 12) -> list[SubscriptionEvent]:
    """One dynamic subscription per aggregation duty of ``validators``.

    The subscription opens one slot before the duty slot and closes at the
    end of the slot after it.
    """
    mine = set(validators)
    events = []
    for v, duty in schedule.aggregation_duties():
        if v not in mine:
            continue
        first = max(0, duty.slot.absolute - 1)
        events.append(SubscriptionEvent(node, duty.subnet, first * ticks_per_slot,
                                        (duty.slot.absolute + 2) * ticks_per_slot, "dynamic"))
    return events


def message_complexity(n_nodes: float, n_validators: float, mesh_peers: float,
                       avg_subscribed_subnets: float) -> float:
    return n_nodes * n_validators * mesh_peers * (avg_subscribed_subnets / SUBNET_COUNT)


def estimate_message_complexity(config: ScenarioConfig) -> float:
    """Per-epoch attestation message estimate for ``config``'s subnet layout."""
    counts = []
    for n in range(config.node_count):
        o = config.node_override(n)
        counts.append(SUBNET_COUNT if o.get("subscribes_all")
                      else o.get("static_subnet_count", config.static_subnet_count))
    return message_complexity(config.node_count, config.validator_count, config.mesh_degree,
                              sum(counts) / len(counts))


@dataclass
class ObservationLogs:
    ticks_per_slot: int
    observer_ids: list[int]
    receipts: list[list[ReceiptRecord]]
    subscriptions: list[list[SubscriptionEvent]]
    connections: list[list[ConnectionEvent]]
    ground_truth: dict[int, set[int]]
    dynamic_events: list[SubscriptionEvent] = field(default_factory=list)


@dataclass
class _Dynamic:
    node: int
    subnet: int
    start: int
    end: int
    neighbors: list[int]


def _dynamic_events(net: Network, schedules: list[DutySchedule]) -> list[_Dynamic]:
    cfg = net.config
    served: dict[int, list[int]] = defaultdict(list)
    for v, pubs in net.publishers.items():
        for p in pubs:
            served[p].append(v)
    out = []
    for sched in schedules:
        rng = make_rng(_DYNAMIC_STREAM, net.seed, sched.epoch)
        for node in sorted(served):
            for ev in schedule_dynamic_subscriptions(node, sched, served[node], cfg.ticks_per_slot):
                if ev.subnet in net.static_subs[node]:
                    continue
                cands = [m for m in net.members[ev.subnet] if m != node]
                k = min(cfg.mesh_degree, len(cands))
                nbrs = sorted(rng.choice(cands, size=k, replace=False).tolist()) if k else []
                out.append(_Dynamic(node, ev.subnet, ev.start_tick, ev.end_tick, nbrs))
    return out


def run_epochs(network: Network, epochs: int | None = None, seed: int | None = None) -> ObservationLogs:
    """Publish and relay every attestation for ``epochs`` epochs.

    Returns the full (not deduplicated) receipt stream of every observer with
    the subscription and connection timelines of its peers.
    """
    cfg = network.config
    epochs = cfg.epochs if epochs is None else epochs
    seed = network.seed if seed is None else seed
    if epochs < 1:
        raise DeanonError("invalid-config", "epochs must be >= 1")
    T = cfg.ticks_per_slot
    end_tick = epochs * SLOTS_PER_EPOCH * T
    validators = sorted(network.publishers)
    schedules = [build_duty_schedule(validators, e, seed, cfg.committees_per_slot,
                                     cfg.target_aggregators) for e in range(epochs)]
    dynamics = _dynamic_events(network, schedules) if cfg.dynamic_subscriptions else []
    dyn_by_slot: dict[int, list[_Dynamic]] = defaultdict(list)
    for d in dynamics:
        for a in range(d.start // T, (d.end + T - 1) // T):
            dyn_by_slot[a].append(d)

    n_obs = len(network.observer_ids)
    obs_base = cfg.node_count
    # peer -> [(observer index, sessions)]
    obs_links: dict[int, list[tuple[int, list[tuple[int, int]]]]] = defaultdict(list)
    for (k, p), sess in sorted(network.sessions.items()):
        obs_links[p].append((k, sess))

    def connected(sess: list[tuple[int, int]], t: int) -> bool:
        for a, b in sess:
            if a <= t < b:
                return True
        return False

    receipts: list[list[ReceiptRecord]] = [[] for _ in range(n_obs)]
    drop_p, jitter = cfg.drop_prob, cfg.latency_jitter
    q_in, q_first = cfg.fanout_inclusion_prob, cfg.origin_first_prob

    for sched in schedules:
        e = sched.epoch
        fan_rng = make_rng(_FANOUT_STREAM, seed, e)
        link_u = _Uniforms(make_rng(_LINK_STREAM, seed, e))
        obs_u = _Uniforms(make_rng(_OBSERVER_STREAM, seed, e))
        jit_rng = make_rng(_LINK_STREAM + 100, seed, e) if jitter else None
        jit_buf: list[int] = []
        fanouts: dict[tuple[int, int], list[int]] = {}
        obs_in_fanout: dict[tuple[int, int, int], bool] = {}
        adj_cache: dict[tuple[int, int], tuple[dict[int, list[int]], frozenset[int]]] = {}

        def latency() -> int:
            nonlocal jit_buf
            if not jitter:
                return 1
            if not jit_buf:
                jit_buf = jit_rng.integers(0, jitter + 1, _BLOCK).tolist()
            return 1 + jit_buf.pop()

        def subnet_view(abs_slot: int, s: int):
            key = (abs_slot, s)
            if key not in adj_cache:
                adj = network.mesh[s]
                active = [d for d in dyn_by_slot.get(abs_slot, ()) if d.subnet == s]
                if active:
                    adj = {m: list(nb) for m, nb in adj.items()}
                    for d in active:
                        adj.setdefault(d.node, [])
                        for m in d.neighbors:
                            if m not in adj[d.node]:
                                adj[d.node].append(m)
                                adj[m].append(d.node)
                adj_cache[key] = (adj, frozenset(adj))
            return adj_cache[key]

        duties = sorted(((d.slot.absolute, v, d) for v, d in sched.attestation_duty.items()))
        for abs_slot, v, duty in duties:
            s = duty.subnet
            t0 = abs_slot * T
            adj, members = subnet_view(abs_slot, s)
            heap: list[tuple[int, int, int]] = []
            seen: set[int] = set()
            origins = network.publishers[v]
            seen.update(origins)

            def send(src: int, dst: int, t: int) -> None:
                if dst in seen:
                    return
                if drop_p and link_u() < drop_p:
                    return
                heapq.heappush(heap, (t + latency(), dst, src))

            def send_observers(src: int, t: int, origin: bool) -> None:
                for k, sess in obs_links.get(src, ()):
                    if not connected(sess, t):
                        continue
                    if origin and src not in members:
                        key = (src, s, k)
                        if key not in obs_in_fanout:
                            obs_in_fanout[key] = obs_u() < q_in
                        if not obs_in_fanout[key]:
                            continue
                    if drop_p and link_u() < drop_p:
                        continue
                    if origin:
                        lat = 1 if q_first >= 1 or obs_u() < q_first else 1 + cfg.origin_delay_ticks
                    else:
                        lat = latency()
                    heapq.heappush(heap, (t + lat, obs_base + k, src))

            for o in origins:
                # a client with several relay nodes reaches each over its own link
                start = t0 + latency() if len(origins) > 1 else t0
                if o in members:
                    targets = adj[o]
                else:
                    key = (o, s)
                    if key not in fanouts:
                        cands = [m for m in network.members[s] if m != o]
                        k = min(cfg.fanout, len(cands))
                        fanouts[key] = sorted(fan_rng.choice(cands, size=k, replace=False).tolist()) if k else []
                    targets = fanouts[key]
                for dst in targets:
                    send(o, dst, start)
                send_observers(o, start, origin=True)

            while heap:
                t, dst, src = heapq.heappop(heap)
                if dst >= obs_base:
                    if t < end_tick:
                        receipts[dst - obs_base].append(
                            ReceiptRecord(t, src, v, e, duty.slot.slot, s))
                    continue
                if dst in seen:
                    continue
                seen.add(dst)
                if dst not in members:
                    continue
                for nb in adj[dst]:
                    if nb != src:
                        send(dst, nb, t)
                send_observers(dst, t, origin=False)

    subscriptions, connections = [], []
    dyn_events = sorted(SubscriptionEvent(d.node, d.subnet, d.start, min(d.end, end_tick), "dynamic")
                        for d in dynamics if d.start < end_tick)
    for k in range(n_obs):
        receipts[k].sort()
        peers = sorted(network.observer_peers[k])
        peer_set = set(peers)
        subs = [SubscriptionEvent(p, s, 0, end_tick, "static")
                for p in peers for s in sorted(network.static_subs[p])]
        subs += [ev for ev in dyn_events if ev.node in peer_set]
        subscriptions.append(sorted(subs, key=lambda ev: (ev.start_tick, ev.node, ev.subnet, ev.end_tick, ev.kind)))
        conns = [ConnectionEvent(p, a, min(b, end_tick)) for p in peers
                 for a, b in network.sessions[(k, p)] if a < end_tick]
        connections.append(sorted(conns, key=lambda c: (c.start_tick, c.peer)))
    return ObservationLogs(T, list(network.observer_ids), receipts, subscriptions, connections,
                           network.ground_truth(), dyn_events)
