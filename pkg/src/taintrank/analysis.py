"""Degree statistics, score histograms and top-k reports."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError
from .graph import TxGraph, avg_degree
from .taint import TaintScores


@dataclass
class DegreeStats:
    in_counts: dict[int, int]
    out_counts: dict[int, int]
    node_count: int
    edge_count: int

    @property
    def avg_degree(self) -> float | None:
        return avg_degree(self.node_count, self.edge_count)

    def rows(self) -> list[tuple[str, int, int, float]]:
        """``(direction, degree, count, fraction)`` rows, in then out, ascending degree."""
        out = []
        for direction, counts in (("in", self.in_counts), ("out", self.out_counts)):
            for degree in sorted(counts):
                out.append((direction, degree, counts[degree], counts[degree] / self.node_count))
        return out


def degree_distribution(g: TxGraph) -> DegreeStats:
    def tally(degrees: np.ndarray) -> dict[int, int]:
        values, counts = np.unique(degrees, return_counts=True)
        return dict(zip(values.tolist(), counts.tolist()))

    return DegreeStats(tally(g.in_degree), tally(g.out_degree), g.node_count, g.edge_count)


def top_k(scores: TaintScores, k: int) -> list[tuple[str, float]]:
    """Best ``k`` nodes as ``(label, score)``; ties go to the lower node id."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    ids = scores.ranking()[:k].tolist()
    return [(scores.labels[i], float(scores.scores[i])) for i in ids]


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    zero_count: int = 0  # log bins only: scores <= 0 kept out of the bins

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.zero_count


def score_histogram(scores: TaintScores | np.ndarray, bins: str = "log", bin_count: int = 20) -> Histogram:
    """Bin every score; bins are ``[lo, hi)`` except the last, which is closed.

    With ``bins="log"`` edges are geometric between the smallest positive and
    the largest score, and zero scores are reported in ``zero_count``.
    """
    if bin_count < 1:
        raise ConfigError(f"bin_count must be >= 1, got {bin_count}")
    values = np.asarray(scores.scores if isinstance(scores, TaintScores) else scores, dtype=np.float64)
    zero_count = 0
    if bins == "log":
        positive = values > 0
        zero_count = int((~positive).sum())
        values = values[positive]
        if len(values) == 0:
            return Histogram(np.array([]), np.zeros(0, dtype=np.int64), zero_count)
        lo, hi = float(values.min()), float(values.max())
        if lo == hi:
            lo, hi = lo / np.sqrt(10.0), hi * np.sqrt(10.0)
        edges = np.geomspace(lo, hi, bin_count + 1)
    elif bins == "linear":
        if len(values) == 0:
            return Histogram(np.array([]), np.zeros(0, dtype=np.int64))
        lo, hi = float(values.min()), float(values.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bin_count + 1)
    else:
        raise ConfigError(f"bins must be 'log' or 'linear', got {bins!r}")
    idx = np.searchsorted(edges[1:-1], values, side="right")
    counts = np.bincount(idx, minlength=bin_count).astype(np.int64)
    return Histogram(edges, counts, zero_count)


def knee(scores: TaintScores | np.ndarray) -> int:
    """Number of nodes before the largest relative drop in the sorted positive scores.

    Informational only; 0 when fewer than two positive scores exist.
    """
    values = np.asarray(scores.scores if isinstance(scores, TaintScores) else scores, dtype=np.float64)
    positive = np.sort(values[values > 0])[::-1]
    if len(positive) < 2:
        return 0
    drops = np.log10(positive[:-1]) - np.log10(positive[1:])
    return int(np.argmax(drops)) + 1


# -- CSV writers ------------------------------------------------------------


def _write_csv(path: str | Path, header: Iterable[str], rows: Iterable[Iterable[object]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_degree_csv(stats: DegreeStats, path: str | Path) -> None:
    _write_csv(path, ("direction", "degree", "count", "fraction"), (
        (d, k, c, repr(f)) for d, k, c, f in stats.rows()
    ))


def write_histogram_csv(hist: Histogram, path: str | Path) -> None:
    rows = [(repr(float(lo)), repr(float(hi)), int(c))
            for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts)]
    if hist.zero_count:
        rows.insert(0, ("0.0", "0.0", hist.zero_count))
    _write_csv(path, ("bin_lo", "bin_hi", "count"), rows)


def write_top_k_csv(ranked: list[tuple[str, float]], path: str | Path) -> None:
    _write_csv(path, ("rank", "label", "score"), (
        (rank, label, repr(score)) for rank, (label, score) in enumerate(ranked, 1)
    ))
