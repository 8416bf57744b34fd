"""Transaction-record ingestion, co-spend clustering and graph construction.

Records are JSON lines::

    {"tx_id": "...", "timestamp": 1308614400,
     "inputs":  [{"address": "1A...", "value": 5000000000}, ...],
     "outputs": [{"address": "1B...", "value": 4990000000}, ...]}

``timestamp`` is optional (unix seconds or ISO-8601).  Values are integer
satoshi by default or decimal BTC with ``unit="btc"``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from typing import Iterable, Sequence

from .errors import ConfigError, MalformedRecordError
from .graph import SATOSHI_PER_BTC, GraphBuilder, TxGraph

log = logging.getLogger(__name__)

UNITS = ("satoshi", "btc")
PAIRING_RULES = ("proportional", "full-mesh-equal")


@dataclass(frozen=True)
class TransactionRecord:
    tx_id: str
    inputs: tuple[tuple[str, int], ...]
    outputs: tuple[tuple[str, int], ...]
    timestamp: int | None = None


@dataclass
class ParseResult:
    records: list[TransactionRecord] = field(default_factory=list)
    errors: list[MalformedRecordError] = field(default_factory=list)
    zero_values_dropped: int = 0
    lines_read: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def _to_satoshi(raw, unit: str) -> int:
    if isinstance(raw, bool):
        raise ValueError("boolean is not a value")
    if unit == "satoshi":
        if isinstance(raw, int):
            return raw
        d = Decimal(str(raw))
        if d != d.to_integral_value():
            raise ValueError(f"fractional satoshi value {raw!r}")
        return int(d)
    try:
        d = Decimal(str(raw)) * SATOSHI_PER_BTC
    except InvalidOperation:
        raise ValueError(f"not a number: {raw!r}") from None
    if d != d.to_integral_value():
        raise ValueError(f"BTC value {raw!r} has sub-satoshi precision")
    return int(d)


def _parse_timestamp(raw) -> int | None:
    if raw is None:
        return None
    if isinstance(raw, bool):
        raise ValueError("boolean timestamp")
    if isinstance(raw, (int, Decimal)):
        return int(raw)
    if isinstance(raw, str):
        if raw.lstrip("-").isdigit():
            return int(raw)
        dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    raise ValueError(f"unsupported timestamp {raw!r}")


def _parse_side(entries, unit: str, what: str) -> tuple[list[tuple[str, int]], int]:
    if not isinstance(entries, list):
        raise ValueError(f"'{what}' must be an array")
    kept, zeros = [], 0
    for entry in entries:
        if not isinstance(entry, dict):
            raise ValueError(f"'{what}' entries must be objects")
        address = entry.get("address")
        if not isinstance(address, str) or not address:
            raise ValueError(f"'{what}' entry without address")
        if "value" not in entry:
            raise ValueError(f"'{what}' entry for {address} without value")
        value = _to_satoshi(entry["value"], unit)
        if value < 0:
            raise ValueError(f"negative value for {address}")
        if value == 0:
            zeros += 1
            continue
        kept.append((address, value))
    return kept, zeros


def parse_record(line: str, unit: str = "satoshi") -> tuple[TransactionRecord | None, int]:
    """Parse one JSON line; returns the record (``None`` if nothing remains) and zero-drop count."""
    # Decimal keeps BTC amounts such as 0.1 exact.
    obj = json.loads(line, parse_float=Decimal)
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    tx_id = obj.get("tx_id")
    if not isinstance(tx_id, str) or not tx_id:
        raise ValueError("missing 'tx_id'")
    if "outputs" not in obj:
        raise ValueError("missing 'outputs'")
    inputs, z_in = _parse_side(obj.get("inputs", []), unit, "inputs")
    outputs, z_out = _parse_side(obj["outputs"], unit, "outputs")
    if not obj["outputs"]:
        raise ValueError("transaction has no outputs")
    zeros = z_in + z_out
    if not outputs:
        return None, zeros
    record = TransactionRecord(
        tx_id, tuple(inputs), tuple(outputs), _parse_timestamp(obj.get("timestamp"))
    )
    return record, zeros


def parse_records(lines: Iterable[str], unit: str = "satoshi", strict: bool = False) -> ParseResult:
    """Parse line-delimited records.

    Blank lines are ignored.  Malformed lines are collected in
    ``result.errors`` and skipped, unless ``strict`` is set, in which case
    the first one is raised.
    """
    if unit not in UNITS:
        raise ConfigError(f"unit must be one of {UNITS}, got {unit!r}")
    result = ParseResult()
    for line_no, line in enumerate(lines, 1):
        result.lines_read = line_no
        if not line.strip():
            continue
        try:
            record, zeros = parse_record(line, unit)
        except (ValueError, TypeError, InvalidOperation) as exc:
            err = MalformedRecordError(str(exc), line_no)
            if strict:
                raise err from exc
            result.errors.append(err)
            continue
        result.zero_values_dropped += zeros
        if record is not None:
            result.records.append(record)
    if result.errors:
        log.warning("skipped %d malformed line(s); first: %s", len(result.errors), result.errors[0])
    if result.zero_values_dropped:
        log.warning("dropped %d zero-value input/output entries", result.zero_values_dropped)
    return result


def filter_window(
    records: Iterable[TransactionRecord], window: tuple[int, int] | None
) -> list[TransactionRecord]:
    """Keep records with ``start <= timestamp <= end``; undated records are dropped."""
    if window is None:
        return list(records)
    start, end = window
    if start > end:
        raise ConfigError(f"empty time window [{start}, {end}]")
    return [r for r in records if r.timestamp is not None and start <= r.timestamp <= end]


class ClusterMap:
    """Union-find over address strings with path compression and union by size.

    Representatives are chosen deterministically (the lexicographically
    smallest address in a cluster) so the partition *and* its labels do not
    depend on record order.
    """

    def __init__(self) -> None:
        self._parent: dict[str, str] = {}
        self._size: dict[str, int] = {}
        self._min: dict[str, str] = {}

    def add(self, address: str) -> None:
        if address not in self._parent:
            self._parent[address] = address
            self._size[address] = 1
            self._min[address] = address

    def _find(self, a: str) -> str:
        parent = self._parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, a: str, b: str) -> None:
        self.add(a)
        self.add(b)
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]
        self._min[ra] = min(self._min[ra], self._min[rb])

    def representative(self, address: str) -> str:
        """Canonical address of ``address``'s cluster; unknown addresses are singletons."""
        if address not in self._parent:
            return address
        return self._min[self._find(address)]

    def clusters(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for a in self._parent:
            out.setdefault(self.representative(a), []).append(a)
        return {rep: sorted(members) for rep, members in sorted(out.items())}

    def __len__(self) -> int:
        return len(self._parent)

    def __contains__(self, address: object) -> bool:
        return address in self._parent


def cluster_inputs(records: Iterable[TransactionRecord]) -> ClusterMap:
    """Merge all input addresses of each transaction (common-input ownership)."""
    cmap = ClusterMap()
    for rec in records:
        if not rec.inputs:
            continue
        first = rec.inputs[0][0]
        cmap.add(first)
        for address, _ in rec.inputs[1:]:
            cmap.union(first, address)
    return cmap


def apportion(total: int, shares: Sequence[int]) -> list[int]:
    """Split integer ``total`` proportionally to ``shares`` (largest remainder).

    The parts sum to exactly ``total``; remainder ties go to the earlier share.
    """
    denom = sum(shares)
    if denom <= 0:
        raise ValueError("shares must have a positive sum")
    parts = []
    rems = []
    for i, s in enumerate(shares):
        q, r = divmod(total * s, denom)
        parts.append(q)
        rems.append((-r, i))
    leftover = total - sum(parts)
    for _, i in sorted(rems)[:leftover]:
        parts[i] += 1
    return parts


def _merge(pairs: Iterable[tuple[str, int]]) -> list[tuple[str, int]]:
    merged: dict[str, int] = {}
    for address, value in pairs:
        merged[address] = merged.get(address, 0) + value
    return list(merged.items())


def transaction_transfers(
    record: TransactionRecord,
    cluster_map: ClusterMap | None = None,
    pairing: str = "proportional",
) -> list[tuple[str, str, int]]:
    """Turn one transaction into ``(src, dst, satoshi)`` transfers.

    Addresses are first mapped to cluster representatives and merged, then
    every output value is split over the inputs (by input value for
    ``proportional``, evenly for ``full-mesh-equal``).  Fees are ignored,
    self-transfers and zero-satoshi shares are dropped, and repeated
    ``(src, dst)`` pairs within the transaction are summed.
    """
    if pairing not in PAIRING_RULES:
        raise ConfigError(f"pairing must be one of {PAIRING_RULES}, got {pairing!r}")
    rep = cluster_map.representative if cluster_map is not None else (lambda a: a)
    inputs = _merge((rep(a), v) for a, v in record.inputs)
    outputs = _merge((rep(a), v) for a, v in record.outputs)
    if not inputs:
        return []
    weights = [v for _, v in inputs] if pairing == "proportional" else [1] * len(inputs)
    transfers: dict[tuple[str, str], int] = {}
    for dst, value in outputs:
        for (src, _), part in zip(inputs, apportion(value, weights)):
            if part and src != dst:
                transfers[(src, dst)] = transfers.get((src, dst), 0) + part
    return [(s, d, v) for (s, d), v in transfers.items()]


def build_graph(
    records: Iterable[TransactionRecord],
    cluster_map: ClusterMap | None = None,
    window: tuple[int, int] | None = None,
    pairing: str = "proportional",
) -> TxGraph:
    """Aggregate transactions into a finalized :class:`TxGraph`.

    Every address (or cluster) that appears in a kept record becomes a node,
    including coinbase recipients and change-only participants.
    """
    builder = GraphBuilder()
    rep = cluster_map.representative if cluster_map is not None else (lambda a: a)
    for rec in filter_window(records, window):
        for address, _ in rec.inputs:
            builder.add_node(rep(address))
        for address, _ in rec.outputs:
            builder.add_node(rep(address))
        for src, dst, value in transaction_transfers(rec, cluster_map, pairing):
            builder.add_transfer(src, dst, value)
    return builder.finalize()
