"""Taint propagation from a known thief node.

Seven score tables are available::

    fixed          1 for every node reachable from the root, else 0
    weight_in      t_i = sum_j t_j * w(j, i) / V_j,  V_j = in-value of j
    weight_out     same with V_j = out-value of j
    distance       t_i = sum_j t_j / hops(root, i)
    combined_avg   per-node mean of distance and weight_out
    combined_max   per-node max of distance and weight_out
    pagerank_like  init m'_i / m_i, then t_i = sum_j t_j / k'_j, synchronous

The iterative methods (weight, distance) keep the root pinned at 1 and visit
the other reachable nodes in ascending ``(hop distance, node id)`` order,
reading in-neighbour scores as currently assigned (0 before assignment).
Each call of ``sweeps`` repeats that pass in place.  In-neighbours are summed
in ascending id order so results are bit-for-bit reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, MalformedRecordError, UnknownNodeError
from .graph import TxGraph

METHODS = (
    "fixed",
    "weight_in",
    "weight_out",
    "distance",
    "combined_avg",
    "combined_max",
    "pagerank_like",
)
SWEEP_METHODS = METHODS[:6]


@dataclass
class TaintScores:
    method: str
    root: int
    iterations: int
    scores: np.ndarray
    reachable: np.ndarray | None
    labels: Sequence[str]

    def __post_init__(self) -> None:
        self.scores.setflags(write=False)

    @property
    def reachable_set(self) -> frozenset[int]:
        if self.reachable is None:
            return frozenset()
        return frozenset(np.flatnonzero(self.reachable).tolist())

    def ranking(self) -> np.ndarray:
        """Node ids sorted by descending score, ties by ascending id."""
        ids = np.arange(len(self.scores))
        return np.lexsort((ids, -self.scores))

    def __len__(self) -> int:
        return len(self.scores)


@dataclass
class TaintedEdgeLabels:
    root: int
    tainted: np.ndarray          # bool per edge id
    in_degree: np.ndarray        # m
    tainted_in: np.ndarray       # m'
    out_degree: np.ndarray       # k
    tainted_out: np.ndarray      # k'
    reachable: np.ndarray


def _check_root(g: TxGraph, root: int) -> int:
    root = int(root)
    if not (0 <= root < g.node_count):
        raise UnknownNodeError(f"unknown root node id {root}")
    return root


def hop_distances(g: TxGraph, root: int) -> np.ndarray:
    """Unweighted directed hop count from ``root``; ``-1`` where unreachable.

    Level-synchronous BFS: each frontier's out-edges are gathered at once.
    """
    root = _check_root(g, root)
    dist = np.full(g.node_count, -1, dtype=np.int64)
    dist[root] = 0
    frontier = np.array([root], dtype=np.int64)
    level = 0
    out_ptr, dst = g.out_ptr, g.dst
    while len(frontier):
        starts = out_ptr[frontier]
        counts = out_ptr[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        offsets = np.repeat(starts - np.cumsum(counts) + counts, counts)
        nbrs = dst[offsets + np.arange(total)]
        nbrs = np.unique(nbrs[dist[nbrs] < 0])
        level += 1
        dist[nbrs] = level
        frontier = nbrs
    return dist


def reachable_mask(g: TxGraph, root: int) -> np.ndarray:
    return hop_distances(g, root) >= 0


def reachable_subgraph(g: TxGraph, root: int) -> tuple[frozenset[int], TxGraph]:
    """Forward closure of ``root`` (ids in ``g``) and the induced subgraph."""
    mask = reachable_mask(g, root)
    nodes = np.flatnonzero(mask)
    return frozenset(nodes.tolist()), g.subgraph(nodes.tolist())


def sweep_order(dist: np.ndarray, root: int) -> np.ndarray:
    """Reachable non-root nodes by ascending ``(distance, id)``."""
    nodes = np.flatnonzero(dist > 0)
    return nodes[np.argsort(dist[nodes], kind="stable")]


def _check_sweeps(sweeps: int) -> int:
    sweeps = int(sweeps)
    if sweeps < 1:
        raise ConfigError(f"sweeps must be >= 1, got {sweeps}")
    return sweeps


def _in_lists(g: TxGraph) -> tuple[list[int], list[int], list[int]]:
    return g.in_ptr.tolist(), g.src[g.in_edges].tolist(), g.weight[g.in_edges].tolist()


def taint_fixed(g: TxGraph, root: int) -> TaintScores:
    mask = reachable_mask(g, root)
    return TaintScores("fixed", int(root), 1, mask.astype(np.float64), mask, g.labels)


def taint_weight(g: TxGraph, root: int, value_mode: str = "out", sweeps: int = 1) -> TaintScores:
    """Spread taint proportionally to link weight over the sender's value.

    ``V_j`` is taken from ``g`` as given, so passing the full graph uses the
    sender's whole in/out value.  Terms with ``V_j == 0`` contribute 0.
    """
    if value_mode not in ("in", "out"):
        raise ConfigError(f"value_mode must be 'in' or 'out', got {value_mode!r}")
    sweeps = _check_sweeps(sweeps)
    dist = hop_distances(g, root)
    values = g.node_values(value_mode).tolist()
    ptr, in_src, in_w = _in_lists(g)
    t = [0.0] * g.node_count
    t[root] = 1.0
    order = sweep_order(dist, root).tolist()
    for _ in range(sweeps):
        for i in order:
            s = 0.0
            for e in range(ptr[i], ptr[i + 1]):
                j = in_src[e]
                vj = values[j]
                if vj:
                    s += t[j] * in_w[e] / vj
            t[i] = s
    return TaintScores(
        f"weight_{value_mode}", int(root), sweeps, np.array(t, dtype=np.float64), dist >= 0, g.labels
    )


def taint_distance(g: TxGraph, root: int, sweeps: int = 1) -> TaintScores:
    sweeps = _check_sweeps(sweeps)
    dist = hop_distances(g, root)
    hops = dist.tolist()
    ptr, in_src, _ = _in_lists(g)
    t = [0.0] * g.node_count
    t[root] = 1.0
    order = sweep_order(dist, root).tolist()
    for _ in range(sweeps):
        for i in order:
            d = hops[i]
            s = 0.0
            for e in range(ptr[i], ptr[i + 1]):
                s += t[in_src[e]] / d
            t[i] = s
    return TaintScores("distance", int(root), sweeps, np.array(t, dtype=np.float64), dist >= 0, g.labels)


def combine(distance: TaintScores, weight: TaintScores, mode: str = "avg") -> TaintScores:
    if mode == "avg":
        scores = (distance.scores + weight.scores) / 2.0
    elif mode == "max":
        scores = np.maximum(distance.scores, weight.scores)
    else:
        raise ConfigError(f"combine mode must be 'avg' or 'max', got {mode!r}")
    return TaintScores(
        f"combined_{mode}", distance.root, distance.iterations, scores, distance.reachable, distance.labels
    )


def taint_combined(g: TxGraph, root: int, mode: str = "avg", sweeps: int = 1) -> TaintScores:
    if mode not in ("avg", "max"):
        raise ConfigError(f"combine mode must be 'avg' or 'max', got {mode!r}")
    return combine(taint_distance(g, root, sweeps), taint_weight(g, root, "out", sweeps), mode)


def label_tainted_edges(g: TxGraph, root: int, reachable: np.ndarray | None = None) -> TaintedEdgeLabels:
    """An edge is tainted iff its source is reachable from ``root``."""
    root = _check_root(g, root)
    if reachable is None:
        reachable = reachable_mask(g, root)
    tainted = reachable[g.src]
    n = g.node_count
    return TaintedEdgeLabels(
        root=root,
        tainted=tainted,
        in_degree=g.in_degree,
        tainted_in=np.bincount(g.dst[tainted], minlength=n).astype(np.int64),
        out_degree=g.out_degree,
        tainted_out=np.bincount(g.src[tainted], minlength=n).astype(np.int64),
        reachable=reachable,
    )


def taint_pagerank(g: TxGraph, labels: TaintedEdgeLabels, iterations: int = 1) -> TaintScores:
    """PageRank-like propagation over the whole graph (no damping, no normalisation)."""
    iterations = int(iterations)
    if iterations < 0:
        raise ConfigError(f"iterations must be >= 0, got {iterations}")
    m, m_t, k_t = labels.in_degree, labels.tainted_in, labels.tainted_out
    t = np.zeros(g.node_count, dtype=np.float64)
    has_in = m > 0
    t[has_in] = m_t[has_in] / m[has_in]

    # In-edge order (dst, src) makes bincount add terms in ascending src per node.
    e_src = g.src[g.in_edges]
    e_dst = g.dst[g.in_edges]
    live = k_t[e_src] > 0
    e_src, e_dst = e_src[live], e_dst[live]
    divisor = k_t[e_src].astype(np.float64)
    for _ in range(iterations):
        t = np.bincount(e_dst, weights=t[e_src] / divisor, minlength=g.node_count)
    return TaintScores("pagerank_like", labels.root, iterations, t, labels.reachable, g.labels)


def run_method(
    g: TxGraph, root: int, method: str, *, sweeps: int = 1, iterations: int = 1
) -> TaintScores:
    """Dispatch on a method id from :data:`METHODS`."""
    root = _check_root(g, root)
    if method == "fixed":
        return taint_fixed(g, root)
    if method in ("weight_in", "weight_out"):
        return taint_weight(g, root, method.split("_")[1], sweeps)
    if method == "distance":
        return taint_distance(g, root, sweeps)
    if method in ("combined_avg", "combined_max"):
        return taint_combined(g, root, method.split("_")[1], sweeps)
    if method == "pagerank_like":
        return taint_pagerank(g, label_tainted_edges(g, root), iterations)
    raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")


def run_all(g: TxGraph, root: int, *, sweeps: int = 1, iterations: int = 1) -> dict[str, TaintScores]:
    """Every method, sharing the distance and weight_out passes."""
    root = _check_root(g, root)
    dist = taint_distance(g, root, sweeps)
    w_out = taint_weight(g, root, "out", sweeps)
    fixed = taint_fixed(g, root)
    return {
        "fixed": fixed,
        "weight_in": taint_weight(g, root, "in", sweeps),
        "weight_out": w_out,
        "distance": dist,
        "combined_avg": combine(dist, w_out, "avg"),
        "combined_max": combine(dist, w_out, "max"),
        "pagerank_like": taint_pagerank(g, label_tainted_edges(g, root, fixed.reachable), iterations),
    }


# -- score files ------------------------------------------------------------


def write_scores(scores: TaintScores, path: str | Path, meta: dict[str, object] | None = None) -> None:
    """``node_id\\tlabel\\tscore`` rows, best first, behind one ``#`` header line."""
    header = {
        "method": scores.method,
        "root": scores.labels[scores.root],
        "root_id": scores.root,
        "iterations": scores.iterations,
    }
    header.update(meta or {})
    for key, val in header.items():
        if any(c in str(val) for c in " \t\n="):
            raise ConfigError(f"metadata {key}={val!r} contains a separator character")
    values = scores.scores.tolist()
    labels = scores.labels
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in header.items()) + "\n")
        fh.writelines(f"{i}\t{labels[i]}\t{values[i]!r}\n" for i in scores.ranking().tolist())


def read_scores(path: str | Path) -> tuple[dict[str, str], TaintScores]:
    """Inverse of :func:`write_scores`; returns the header fields and the scores by id."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise MalformedRecordError("missing score-file header", 1)
        meta = dict(item.split("=", 1) for item in first[2:].split())
        rows: list[tuple[int, str, float]] = []
        for line_no, line in enumerate(fh, 2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise MalformedRecordError("expected node_id, label, score", line_no)
            try:
                rows.append((int(parts[0]), parts[1], float(parts[2])))
            except ValueError:
                raise MalformedRecordError("bad node id or score", line_no) from None
    n = len(rows)
    labels = [""] * n
    scores = np.zeros(n, dtype=np.float64)
    seen = np.zeros(n, dtype=bool)
    for nid, label, score in rows:
        if not 0 <= nid < n or seen[nid]:
            raise MalformedRecordError(f"node ids are not a dense permutation (id {nid})")
        seen[nid] = True
        labels[nid] = label
        scores[nid] = score
    result = TaintScores(
        meta.get("method", "unknown"),
        int(meta.get("root_id", 0)),
        int(meta.get("iterations", 1)),
        scores,
        None,
        labels,
    )
    return meta, result
