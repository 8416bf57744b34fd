"""Weighted directed transaction graph over address (or cluster) nodes.

Nodes carry dense integer ids in ``[0, node_count)`` and a string label.
Parallel transfers between the same ordered pair are folded into a single
edge whose weight is the satoshi sum and whose ``tx_count`` is the number of
folded transfers.  Self-loops are never stored.

A graph is built once through :class:`GraphBuilder` (or the vectorised
:meth:`TxGraph.from_arrays`) and is read-only afterwards.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import MalformedRecordError, TaintRankError, UnknownNodeError

log = logging.getLogger(__name__)

SATOSHI_PER_BTC = 100_000_000

EDGES_FILENAME = "graph.edges"
LABELS_FILENAME = "graph.labels"


def avg_degree(node_count: int, edge_count: int) -> float | None:
    """Average total degree ``2L/N``; ``None`` for an empty graph."""
    if node_count == 0:
        return None
    return 2.0 * edge_count / node_count


def _int_sum(index: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    # Exact int64 sums; bincount would go through float64.
    out = np.zeros(size, dtype=np.int64)
    np.add.at(out, index, values)
    out.setflags(write=False)
    return out


class TxGraph:
    """Immutable aggregated graph with CSR adjacency in both directions.

    Edge ``e`` is ``(src[e], dst[e])``; edges are stored sorted by
    ``(src, dst)`` so the out-adjacency of node ``n`` is the slice
    ``out_ptr[n]:out_ptr[n + 1]``.  ``in_edges`` is the permutation of edge
    ids sorted by ``(dst, src)`` and ``in_ptr`` slices it per node.
    """

    def __init__(
        self,
        labels: Sequence[str],
        src: np.ndarray,
        dst: np.ndarray,
        weight: np.ndarray,
        tx_count: np.ndarray,
    ):
        # Callers must hand over canonical arrays; use from_arrays otherwise.
        self.labels: list[str] = list(labels)
        self._index = {label: i for i, label in enumerate(self.labels)}
        if len(self._index) != len(self.labels):
            raise TaintRankError("node labels must be unique")
        n = len(self.labels)
        self.src = np.ascontiguousarray(src, dtype=np.int64)
        self.dst = np.ascontiguousarray(dst, dtype=np.int64)
        self.weight = np.ascontiguousarray(weight, dtype=np.int64)
        self.tx_count = np.ascontiguousarray(tx_count, dtype=np.int64)
        for arr in (self.src, self.dst, self.weight, self.tx_count):
            arr.setflags(write=False)

        self.out_degree = np.bincount(self.src, minlength=n).astype(np.int64)
        self.in_degree = np.bincount(self.dst, minlength=n).astype(np.int64)
        self.out_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(self.out_degree, out=self.out_ptr[1:])
        self.in_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(self.in_degree, out=self.in_ptr[1:])
        self.in_edges = np.lexsort((self.src, self.dst)).astype(np.int64)
        for arr in (self.out_degree, self.in_degree, self.out_ptr, self.in_ptr, self.in_edges):
            arr.setflags(write=False)
        self._value_in: np.ndarray | None = None
        self._value_out: np.ndarray | None = None

    @classmethod
    def from_arrays(
        cls,
        labels: Sequence[str],
        src: Iterable[int] | np.ndarray,
        dst: Iterable[int] | np.ndarray,
        weight: Iterable[int] | np.ndarray,
        tx_count: Iterable[int] | np.ndarray | None = None,
    ) -> "TxGraph":
        """Build from raw (possibly parallel, possibly looping) transfers.

        Self-loops are dropped and parallel transfers aggregated.
        """
        n = len(labels)
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        weight = np.asarray(weight, dtype=np.int64).ravel()
        if tx_count is None:
            tx_count = np.ones_like(weight)
        else:
            tx_count = np.asarray(tx_count, dtype=np.int64).ravel()
        if not (len(src) == len(dst) == len(weight) == len(tx_count)):
            raise TaintRankError("edge arrays differ in length")
        if len(src):
            if src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n:
                raise UnknownNodeError("edge endpoint outside [0, node_count)")
            if weight.min() < 1:
                raise TaintRankError("edge weights must be >= 1 satoshi")
            if tx_count.min() < 1:
                raise TaintRankError("tx_count must be >= 1")

        keep = src != dst
        src, dst, weight, tx_count = src[keep], dst[keep], weight[keep], tx_count[keep]
        key = src * max(n, 1) + dst
        uniq, inverse = np.unique(key, return_inverse=True)
        agg_w = np.zeros(len(uniq), dtype=np.int64)
        np.add.at(agg_w, inverse, weight)
        agg_c = np.zeros(len(uniq), dtype=np.int64)
        np.add.at(agg_c, inverse, tx_count)
        return cls(labels, uniq // max(n, 1), uniq % max(n, 1), agg_w, agg_c)

    # -- identity -----------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self.labels)

    @property
    def edge_count(self) -> int:
        return len(self.src)

    @property
    def avg_degree(self) -> float | None:
        return avg_degree(self.node_count, self.edge_count)

    def id_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownNodeError(f"unknown node label {label!r}") from None

    def label(self, n: int) -> str:
        self._check(n)
        return self.labels[n]

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def _check(self, n: int) -> None:
        if not (0 <= n < len(self.labels)):
            raise UnknownNodeError(f"unknown node id {n}")

    # -- adjacency ----------------------------------------------------

    def out_neighbors(self, n: int) -> list[tuple[int, int]]:
        """``(neighbor, weight)`` pairs of out-edges, ascending neighbor id."""
        self._check(n)
        lo, hi = self.out_ptr[n], self.out_ptr[n + 1]
        return list(zip(self.dst[lo:hi].tolist(), self.weight[lo:hi].tolist()))

    def in_neighbors(self, n: int) -> list[tuple[int, int]]:
        """``(neighbor, weight)`` pairs of in-edges, ascending neighbor id."""
        self._check(n)
        eids = self.in_edges[self.in_ptr[n]:self.in_ptr[n + 1]]
        return list(zip(self.src[eids].tolist(), self.weight[eids].tolist()))

    def edges(self) -> Iterator[tuple[int, int, int, int]]:
        """Yield ``(src, dst, weight, tx_count)`` sorted by ``(src, dst)``."""
        yield from zip(
            self.src.tolist(), self.dst.tolist(), self.weight.tolist(), self.tx_count.tolist()
        )

    def node_values(self, mode: str) -> np.ndarray:
        """Per-node satoshi sum of in-edge (``"in"``) or out-edge (``"out"``) weights."""
        if mode == "in":
            if self._value_in is None:
                self._value_in = _int_sum(self.dst, self.weight, self.node_count)
            return self._value_in
        if mode == "out":
            if self._value_out is None:
                self._value_out = _int_sum(self.src, self.weight, self.node_count)
            return self._value_out
        raise ValueError(f"mode must be 'in' or 'out', got {mode!r}")

    def node_value(self, n: int, mode: str) -> int:
        self._check(n)
        return int(self.node_values(mode)[n])

    def subgraph(self, nodes: Iterable[int]) -> "TxGraph":
        """Induced subgraph; node ids are renumbered in ascending original id order."""
        keep = np.zeros(self.node_count, dtype=bool)
        idx = np.fromiter(nodes, dtype=np.int64)
        if len(idx) and (idx.min() < 0 or idx.max() >= self.node_count):
            raise UnknownNodeError("subgraph node outside graph")
        keep[idx] = True
        new_id = np.cumsum(keep) - 1
        mask = keep[self.src] & keep[self.dst]
        labels = [self.labels[i] for i in np.flatnonzero(keep).tolist()]
        return TxGraph(
            labels,
            new_id[self.src[mask]],
            new_id[self.dst[mask]],
            self.weight[mask],
            self.tx_count[mask],
        )

    def __repr__(self) -> str:
        return f"TxGraph(nodes={self.node_count}, links={self.edge_count})"


class GraphBuilder:
    """Single-writer accumulator of transfers; call :meth:`finalize` once.

    Node ids are handed out in first-seen order at finalize time.
    """

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._edges: dict[tuple[int, int], list[int]] = {}
        self._finalized = False

    def add_node(self, label: str) -> int:
        if self._finalized:
            raise TaintRankError("builder already finalized")
        nid = self._ids.get(label)
        if nid is None:
            nid = self._ids[label] = len(self._ids)
        return nid

    def add_transfer(self, src: str, dst: str, value: int) -> None:
        """Fold ``value`` satoshi from ``src`` to ``dst`` into the graph.

        Both endpoints become nodes even when the transfer is a self-loop,
        which is then discarded.
        """
        if value < 1:
            raise TaintRankError(f"transfer value must be >= 1 satoshi, got {value}")
        s = self.add_node(src)
        d = self.add_node(dst)
        if s == d:
            return
        slot = self._edges.get((s, d))
        if slot is None:
            self._edges[(s, d)] = [value, 1]
        else:
            slot[0] += value
            slot[1] += 1

    def finalize(self) -> TxGraph:
        if self._finalized:
            raise TaintRankError("builder already finalized")
        self._finalized = True
        labels = list(self._ids)
        if self._edges:
            pairs = np.array(list(self._edges), dtype=np.int64)
            vals = np.array(list(self._edges.values()), dtype=np.int64)
            order = np.lexsort((pairs[:, 1], pairs[:, 0]))
            pairs, vals = pairs[order], vals[order]
            return TxGraph(labels, pairs[:, 0], pairs[:, 1], vals[:, 0], vals[:, 1])
        empty = np.zeros(0, dtype=np.int64)
        return TxGraph(labels, empty, empty, empty, empty)


# -- edgelist files ---------------------------------------------------------


def write_edgelist(g: TxGraph, edges_path: str | Path, labels_path: str | Path) -> None:
    """Write ``src\\tdst\\tweight\\ttx_count`` rows and the ``id\\tlabel`` companion."""
    with open(edges_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{s}\t{d}\t{w}\t{c}\n" for s, d, w, c in g.edges())
    with open(labels_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{i}\t{label}\n" for i, label in enumerate(g.labels))


def read_edgelist(edges_path: str | Path, labels_path: str | Path) -> TxGraph:
    labels: list[str] = []
    with open(labels_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            nid, sep, label = line.partition("\t")
            if not sep or not nid.isdigit() or int(nid) != len(labels):
                raise MalformedRecordError(f"bad label row {line!r} (ids must be dense)", line_no)
            labels.append(label)

    src, dst, weight, count = [], [], [], []
    with open(edges_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise MalformedRecordError(f"expected 4 tab-separated fields, got {len(parts)}", line_no)
            try:
                s, d, w, c = (int(p) for p in parts)
            except ValueError:
                raise MalformedRecordError("non-integer field", line_no) from None
            src.append(s)
            dst.append(d)
            weight.append(w)
            count.append(c)
    g = TxGraph.from_arrays(labels, src, dst, weight, count)
    if g.edge_count != len(src):
        log.warning("edgelist %s held %d duplicate or looping rows", edges_path, len(src) - g.edge_count)
    return g


def save_graph(g: TxGraph, directory: str | Path) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = directory / EDGES_FILENAME, directory / LABELS_FILENAME
    write_edgelist(g, *paths)
    return paths


def load_graph(directory: str | Path) -> TxGraph:
    directory = Path(directory)
    return read_edgelist(directory / EDGES_FILENAME, directory / LABELS_FILENAME)
