"""Synthetic transaction graphs with known stolen-value ground truth.

Each generator replays a sequence of transfers in time order while keeping
exact (rational) balances per node.  Mixed balances are spent pro rata, so
every transfer carries the sender's current stolen fraction.  A node is in
the ground truth when it has received at least one satoshi of stolen value;
the root always is.

Config files are ``key = value`` lines (``#`` starts a comment)::

    kind = fan_out_fan_in
    seed = 7
    splits = 100
    hops = 5

Parameters per kind (defaults in :data:`DEFAULTS`):

``long_chain``      length, amount
``peel_chain``      length, amount, peel
``fan_out_fan_in``  splits, rejoin, hops, amount
``dust_attack``     victims, dust, amount, background
``random_dag``      nodes, edge_prob, max_weight
``random_cyclic``   nodes, edge_prob, max_weight
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError
from .graph import GraphBuilder, TxGraph
from .ingest import apportion
from .taint import TaintScores

KINDS = ("peel_chain", "fan_out_fan_in", "long_chain", "dust_attack", "random_dag", "random_cyclic")

DEFAULTS: dict[str, dict[str, int | float]] = {
    "long_chain": {"length": 5, "amount": 100_000_000},
    "peel_chain": {"length": 10, "amount": 100_000_000, "peel": 1_000_000},
    "fan_out_fan_in": {"splits": 100, "rejoin": 1, "hops": 5, "amount": 100_000_000},
    "dust_attack": {"victims": 50, "dust": 1, "amount": 100_000_000, "background": 1_000_000},
    "random_dag": {"nodes": 12, "edge_prob": 0.3, "max_weight": 100},
    "random_cyclic": {"nodes": 12, "edge_prob": 0.3, "max_weight": 100},
}

ROOT_LABEL = "thief"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    params: dict[str, int | float] = field(default_factory=dict)
    seed: int = 0

    def resolved(self) -> dict[str, int | float]:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {self.kind}: {', '.join(sorted(unknown))}")
        return {**DEFAULTS[self.kind], **self.params}


@dataclass
class Scenario:
    spec: ScenarioSpec
    graph: TxGraph
    root: int
    ground_truth: frozenset[int]
    stolen: dict[int, Fraction]  # stolen satoshi received (root: initial stolen balance)

    def ground_truth_labels(self) -> list[str]:
        return sorted(self.graph.labels[i] for i in self.ground_truth)


class _FlowLedger:
    """Replays transfers with exact pro-rata accounting of stolen value."""

    def __init__(self) -> None:
        self.builder = GraphBuilder()
        self.balance: dict[str, Fraction] = {}
        self.tainted: dict[str, Fraction] = {}
        self.received: dict[str, Fraction] = {}

    def fund(self, label: str, value: int, stolen: bool = False) -> None:
        self.builder.add_node(label)
        self.balance[label] = self.balance.get(label, Fraction(0)) + value
        self.tainted.setdefault(label, Fraction(0))
        if stolen:
            self.tainted[label] += value
            self.received[label] = self.received.get(label, Fraction(0)) + value

    def send(self, src: str, dst: str, value: int) -> None:
        bal = self.balance.get(src, Fraction(0))
        if value < 1 or value > bal:
            raise ConfigError(f"transfer {src}->{dst} of {value} exceeds balance {bal}")
        part = value * self.tainted[src] / bal
        self.balance[src] = bal - value
        self.tainted[src] -= part
        self.balance[dst] = self.balance.get(dst, Fraction(0)) + value
        self.tainted[dst] = self.tainted.get(dst, Fraction(0)) + part
        self.received[dst] = self.received.get(dst, Fraction(0)) + part
        self.builder.add_transfer(src, dst, value)

    def finish(self, spec: ScenarioSpec, root_label: str) -> Scenario:
        g = self.builder.finalize()
        stolen = {g.id_of(label): amount for label, amount in self.received.items() if amount > 0}
        truth = frozenset(i for i, amount in stolen.items() if amount >= 1) | {g.id_of(root_label)}
        return Scenario(spec, g, g.id_of(root_label), truth, stolen)


def _positive_int(params: dict, *names: str) -> None:
    for name in names:
        value = params[name]
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ConfigError(f"{name} must be a positive integer, got {value!r}")


def _long_chain(spec: ScenarioSpec, p: dict) -> Scenario:
    _positive_int(p, "length", "amount")
    ledger = _FlowLedger()
    ledger.fund(ROOT_LABEL, p["amount"], stolen=True)
    prev = ROOT_LABEL
    for i in range(1, p["length"] + 1):
        ledger.send(prev, f"chain_{i}", p["amount"])
        prev = f"chain_{i}"
    return ledger.finish(spec, ROOT_LABEL)


def _peel_chain(spec: ScenarioSpec, p: dict) -> Scenario:
    _positive_int(p, "length", "amount", "peel")
    if p["amount"] <= p["length"] * p["peel"]:
        raise ConfigError("peel_chain needs amount > length * peel")
    ledger = _FlowLedger()
    ledger.fund(ROOT_LABEL, p["amount"], stolen=True)
    prev, remaining = ROOT_LABEL, p["amount"]
    for i in range(1, p["length"] + 1):
        remaining -= p["peel"]
        ledger.send(prev, f"peel_{i}", p["peel"])
        ledger.send(prev, f"hop_{i}", remaining)
        prev = f"hop_{i}"
    return ledger.finish(spec, ROOT_LABEL)


def _fan_out_fan_in(spec: ScenarioSpec, p: dict) -> Scenario:
    _positive_int(p, "splits", "rejoin", "hops", "amount")
    if p["amount"] < p["splits"]:
        raise ConfigError("fan_out_fan_in needs amount >= splits")
    if p["rejoin"] > p["splits"]:
        raise ConfigError("fan_out_fan_in needs rejoin <= splits")
    ledger = _FlowLedger()
    ledger.fund(ROOT_LABEL, p["amount"], stolen=True)
    parts = apportion(p["amount"], [1] * p["splits"])
    for b, part in enumerate(parts):
        ledger.send(ROOT_LABEL, f"split_{b}_1", part)
    for b, part in enumerate(parts):
        for h in range(1, p["hops"]):
            ledger.send(f"split_{b}_{h}", f"split_{b}_{h + 1}", part)
        ledger.send(f"split_{b}_{p['hops']}", f"rejoin_{b % p['rejoin']}", part)
    return ledger.finish(spec, ROOT_LABEL)


def _dust_attack(spec: ScenarioSpec, p: dict) -> Scenario:
    _positive_int(p, "victims", "dust", "amount")
    if p["background"] < 0:
        raise ConfigError("background must be >= 0")
    if p["amount"] <= p["victims"] * p["dust"]:
        raise ConfigError("dust_attack needs amount > victims * dust")
    ledger = _FlowLedger()
    ledger.fund(ROOT_LABEL, p["amount"], stolen=True)
    if p["background"]:
        ledger.fund("clean_source", p["background"] * p["victims"])
        for v in range(p["victims"]):
            ledger.send("clean_source", f"victim_{v}", p["background"])
    for v in range(p["victims"]):
        ledger.send(ROOT_LABEL, f"victim_{v}", p["dust"])
    ledger.send(ROOT_LABEL, "stash", p["amount"] - p["victims"] * p["dust"])
    return ledger.finish(spec, ROOT_LABEL)


def _random_graph(spec: ScenarioSpec, p: dict, acyclic: bool) -> Scenario:
    _positive_int(p, "nodes", "max_weight")
    if not 0.0 <= float(p["edge_prob"]) <= 1.0:
        raise ConfigError("edge_prob must lie in [0, 1]")
    rng = random.Random(spec.seed)
    n = p["nodes"]
    labels = [ROOT_LABEL] + [f"n{i}" for i in range(1, n)]
    edges = [
        (i, j, rng.randint(1, p["max_weight"]))
        for i in range(n)
        for j in range(n)
        if i != j and (not acyclic or i < j) and rng.random() < p["edge_prob"]
    ]
    if not acyclic:
        rng.shuffle(edges)
    # Everyone starts solvent for all their sends; the root's float is stolen.
    out_total = [0] * n
    for i, _, w in edges:
        out_total[i] += w
    ledger = _FlowLedger()
    for i, label in enumerate(labels):
        ledger.fund(label, max(out_total[i], 1), stolen=(i == 0))
    for i, j, w in edges:
        ledger.send(labels[i], labels[j], w)
    return ledger.finish(spec, ROOT_LABEL)


def generate(spec: ScenarioSpec) -> Scenario:
    """Build the scenario graph, its thief root and the stolen-value ground truth."""
    p = spec.resolved()
    if spec.kind == "long_chain":
        return _long_chain(spec, p)
    if spec.kind == "peel_chain":
        return _peel_chain(spec, p)
    if spec.kind == "fan_out_fan_in":
        return _fan_out_fan_in(spec, p)
    if spec.kind == "dust_attack":
        return _dust_attack(spec, p)
    return _random_graph(spec, p, acyclic=spec.kind == "random_dag")


def evaluate(scenario: Scenario, scores: TaintScores, k: int) -> dict[str, float]:
    """Share of stolen value held by ground-truth nodes in the top ``k``, and collateral count."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    top = scores.ranking()[:k].tolist()
    total = sum(scenario.stolen.get(i, Fraction(0)) for i in scenario.ground_truth)
    captured = sum(scenario.stolen.get(i, Fraction(0)) for i in top if i in scenario.ground_truth)
    return {
        "captured_fraction": float(captured / total) if total else 0.0,
        "collateral": sum(1 for i in top if i not in scenario.ground_truth),
        "k": len(top),
    }


def large_random_graph(nodes: int, edges: int, seed: int = 0) -> TxGraph:
    """Random graph with exactly ``edges`` distinct links and heavy-tailed degrees.

    Endpoints are drawn from a Zipf-like popularity ranking so a few hubs
    collect most links; node 0 fans out to 16 nodes so it reaches the bulk.
    """
    if nodes < 2 or edges < 1 or edges > nodes * (nodes - 1):
        raise ConfigError("need nodes >= 2 and 1 <= edges <= nodes * (nodes - 1)")
    rng = np.random.default_rng(seed)
    popularity = 1.0 / np.arange(1, nodes + 1) ** 0.6
    popularity /= popularity.sum()
    perm_src, perm_dst = rng.permutation(nodes), rng.permutation(nodes)
    # key = src * nodes + dst; keys below `nodes` are the root's seed links.
    seeds = np.sort(rng.choice(np.arange(1, nodes), size=min(16, nodes - 1, edges), replace=False))
    keys = np.zeros(0, dtype=np.int64)
    while len(keys) + len(seeds) < edges:
        need = int((edges - len(keys)) * 1.1) + 16
        s = perm_src[rng.choice(nodes, size=need, p=popularity)]
        d = perm_dst[rng.choice(nodes, size=need, p=popularity)]
        fresh = s[s != d] * nodes + d[s != d]
        keys = np.union1d(keys, np.setdiff1d(fresh, seeds))
    keys = np.concatenate([seeds, rng.permutation(keys)[: edges - len(seeds)]])
    weights = rng.integers(1, 10**8, size=edges, dtype=np.int64)
    labels = [f"a{i}" for i in range(nodes)]
    return TxGraph.from_arrays(labels, keys // nodes, keys % nodes, weights)


# -- config files -----------------------------------------------------------


def parse_value(raw: str) -> int | float | str:
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def parse_config(lines: Iterable[str]) -> ScenarioSpec:
    values: dict[str, int | float | str] = {}
    for line_no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {line_no}: expected 'key = value'")
        values[key.strip()] = parse_value(raw.strip())
    kind = values.pop("kind", None)
    if not isinstance(kind, str):
        raise ConfigError("config must set 'kind'")
    seed = values.pop("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    spec = ScenarioSpec(kind, values, seed)  # type: ignore[arg-type]
    spec.resolved()
    return spec


def load_config(path: str | Path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh)
