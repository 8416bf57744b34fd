"""TaintRank: score Bitcoin addresses by exposure to a known theft."""
from .errors import ConfigError, MalformedRecordError, TaintRankError, UnknownNodeError
from .graph import GraphBuilder, TxGraph, avg_degree, load_graph, read_edgelist, save_graph, write_edgelist
from .ingest import ClusterMap, TransactionRecord, build_graph, cluster_inputs, parse_records
from .taint import (
    METHODS,
    TaintedEdgeLabels,
    TaintScores,
    hop_distances,
    label_tainted_edges,
    reachable_subgraph,
    run_all,
    run_method,
    taint_combined,
    taint_distance,
    taint_fixed,
    taint_pagerank,
    taint_weight,
)
from .analysis import DegreeStats, degree_distribution, score_histogram, top_k
from .scenarios import ScenarioSpec, generate

__version__ = "0.1.0"
