"""Command-line entry point: ``taintrank {ingest,taint,report,scenario}``.

Data goes to files, logs to stderr, and each run prints one JSON summary
line to stdout.  Every run also writes ``manifest.json`` next to its outputs;
``taintrank --from-manifest PATH`` replays it.

Exit codes: 0 success, 1 I/O error, 2 malformed input, 3 bad configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .analysis import (
    degree_distribution,
    knee,
    score_histogram,
    top_k,
    write_degree_csv,
    write_histogram_csv,
    write_top_k_csv,
)
from .errors import ConfigError, MalformedRecordError, UnknownNodeError
from .graph import load_graph, save_graph
from .ingest import PAIRING_RULES, UNITS, build_graph, cluster_inputs, filter_window, parse_records
from .scenarios import KINDS, ScenarioSpec, parse_value, evaluate, generate, load_config
from .taint import METHODS, hop_distances, read_scores, reachable_subgraph, run_all, run_method, write_scores

log = logging.getLogger("taintrank")

EXIT_OK, EXIT_IO, EXIT_MALFORMED, EXIT_CONFIG = 0, 1, 2, 3

METHOD_CHOICES = METHODS + ("weight", "combined", "pagerank", "all")


@dataclass
class RunConfig:
    command: str
    argv: list[str]
    input: str | None = None
    graph: str | None = None
    scores: list[str] = field(default_factory=list)
    config: str | None = None
    out_dir: str | None = None
    root: str | None = None
    method: str | None = None
    value_mode: str = "out"
    combine: str = "avg"
    iterations: int = 1
    sweeps: int = 1
    cluster: bool = False
    pairing: str = "proportional"
    unit: str = "satoshi"
    strict: bool = False
    window: list[str] | None = None
    top_k: int | None = None
    bins: str = "log"
    bin_count: int = 20
    kind: str | None = None
    params: list[str] = field(default_factory=list)
    seed: int | None = None


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse's own exit code 2 would read as "malformed input"
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="taintrank", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default="INFO")
    parser.add_argument("--from-manifest", metavar="PATH", help="re-run the command recorded in a manifest")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="transaction records -> edgelist")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cluster", action="store_true", help="merge co-spent input addresses")
    p.add_argument("--pairing", choices=PAIRING_RULES, default="proportional")
    p.add_argument("--unit", choices=UNITS, default="satoshi")
    p.add_argument("--strict", action="store_true", help="abort on the first malformed line")
    p.add_argument("--window", nargs=2, metavar=("START", "END"),
                   help="inclusive timestamp window (unix seconds or ISO-8601)")

    p = sub.add_parser("taint", help="edgelist -> score files")
    p.add_argument("--graph", required=True, help="directory holding graph.edges / graph.labels")
    p.add_argument("--root", required=True, help="label of the thief node")
    p.add_argument("--method", choices=METHOD_CHOICES, default="all")
    p.add_argument("--value-mode", choices=("in", "out"), default="out")
    p.add_argument("--combine", choices=("avg", "max"), default="avg")
    p.add_argument("--iterations", type=int, default=1, help="pagerank_like iterations")
    p.add_argument("--sweeps", type=int, default=1, help="passes of the iterative methods")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="degree / histogram / top-k CSVs")
    p.add_argument("--graph")
    p.add_argument("--root", help="also report the subgraph reachable from this label")
    p.add_argument("--scores", nargs="*", default=[])
    p.add_argument("--top-k", type=int, default=1000)
    p.add_argument("--bins", choices=("log", "linear"), default="log")
    p.add_argument("--bin-count", type=int, default=20)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("scenario", help="synthetic attack graphs with ground truth")
    p.add_argument("--config", help="key = value scenario file")
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--param", dest="params", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--top-k", type=int, help="also score every method and evaluate its top k")
    p.add_argument("--out-dir", required=True)
    return parser


def _fail(code: int, message: str) -> int:
    print(f"taintrank: error: {message}", file=sys.stderr, flush=True)
    return code


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True), flush=True)


def _write_manifest(cfg: RunConfig, out_dir: Path, outputs: list[str]) -> None:
    manifest = {"tool": "taintrank", "version": __version__, "config": asdict(cfg), "outputs": sorted(outputs)}
    with open(out_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _timestamp(raw: str) -> int:
    value = parse_value(raw)
    if isinstance(value, int):
        return value
    try:
        dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError:
        raise ConfigError(f"bad timestamp {raw!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def cmd_ingest(cfg: RunConfig) -> int:
    window = (_timestamp(cfg.window[0]), _timestamp(cfg.window[1])) if cfg.window else None
    with open(cfg.input, encoding="utf-8") as fh:
        parsed = parse_records(fh, unit=cfg.unit, strict=cfg.strict)
    records = filter_window(parsed.records, window)
    cmap = cluster_inputs(records) if cfg.cluster else None
    g = build_graph(records, cmap, pairing=cfg.pairing)

    out = Path(cfg.out_dir)
    edges_path, labels_path = save_graph(g, out)
    outputs = [edges_path.name, labels_path.name]
    if cmap is not None:
        with open(out / "clusters.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for rep, members in cmap.clusters().items():
                fh.writelines(f"{rep}\t{m}\n" for m in members)
        outputs.append("clusters.tsv")
    _write_manifest(cfg, out, outputs)
    _emit({
        "command": "ingest",
        "records": len(parsed.records),
        "records_in_window": len(records),
        "malformed": len(parsed.errors),
        "zero_values_dropped": parsed.zero_values_dropped,
        "nodes": g.node_count,
        "links": g.edge_count,
        "avg_degree": g.avg_degree,
    })
    return EXIT_OK


def _resolve_methods(cfg: RunConfig) -> list[str]:
    if cfg.method == "all":
        return list(METHODS)
    if cfg.method == "weight":
        return [f"weight_{cfg.value_mode}"]
    if cfg.method == "combined":
        return [f"combined_{cfg.combine}"]
    if cfg.method == "pagerank":
        return ["pagerank_like"]
    return [cfg.method]


def _graph_meta(graph_dir: Path) -> dict:
    try:
        with open(graph_dir / "manifest.json", encoding="utf-8") as fh:
            config = json.load(fh).get("config", {})
    except (OSError, ValueError):
        return {"pairing": "unknown", "cluster": "unknown"}
    return {"pairing": config.get("pairing", "unknown"), "cluster": str(config.get("cluster", "unknown")).lower()}


def cmd_taint(cfg: RunConfig) -> int:
    if cfg.sweeps < 1:
        raise ConfigError("--sweeps must be >= 1")
    if cfg.iterations < 0:
        raise ConfigError("--iterations must be >= 0")
    graph_dir = Path(cfg.graph)
    g = load_graph(graph_dir)
    try:
        root = g.id_of(cfg.root)
    except UnknownNodeError:
        raise ConfigError(f"unknown root label {cfg.root!r}") from None
    methods = _resolve_methods(cfg)
    if len(methods) > 1:
        results = run_all(g, root, sweeps=cfg.sweeps, iterations=cfg.iterations)
    else:
        results = {methods[0]: run_method(g, root, methods[0], sweeps=cfg.sweeps, iterations=cfg.iterations)}

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"sweeps": cfg.sweeps, **_graph_meta(graph_dir)}
    outputs = []
    for method in methods:
        name = f"scores_{method}.tsv"
        write_scores(results[method], out / name, meta)
        outputs.append(name)
    _write_manifest(cfg, out, outputs)
    reachable = results[methods[0]].reachable
    _emit({
        "command": "taint",
        "root": cfg.root,
        "methods": methods,
        "nodes": g.node_count,
        "reachable": int(reachable.sum()) if reachable is not None else None,
    })
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    if cfg.top_k is not None and cfg.top_k < 1:
        raise ConfigError("--top-k must be >= 1")
    if cfg.bin_count < 1:
        raise ConfigError("--bin-count must be >= 1")
    if not cfg.graph and not cfg.scores:
        raise ConfigError("report needs --graph and/or --scores")
    if cfg.root and not cfg.graph:
        raise ConfigError("--root needs --graph")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[str] = []
    summary: dict = {"command": "report"}

    if cfg.graph:
        g = load_graph(cfg.graph)
        stats = degree_distribution(g)
        write_degree_csv(stats, out / "degree.csv")
        outputs.append("degree.csv")
        summary.update(nodes=g.node_count, links=g.edge_count, avg_degree=stats.avg_degree)
        if cfg.root:
            try:
                root = g.id_of(cfg.root)
            except UnknownNodeError:
                raise ConfigError(f"unknown root label {cfg.root!r}") from None
            _, sub = reachable_subgraph(g, root)
            sub_stats = degree_distribution(sub)
            write_degree_csv(sub_stats, out / "subgraph_degree.csv")
            outputs.append("subgraph_degree.csv")
            summary["subgraph"] = {
                "nodes": sub.node_count,
                "links": sub.edge_count,
                "avg_degree": sub_stats.avg_degree,
                "max_hops": int(hop_distances(g, root).max()),
            }

    knees = {}
    for path in cfg.scores:
        _, scores = read_scores(path)
        name = Path(path).stem.removeprefix("scores_")
        write_top_k_csv(top_k(scores, cfg.top_k), out / f"top_{name}.csv")
        write_histogram_csv(score_histogram(scores, cfg.bins, cfg.bin_count), out / f"hist_{name}.csv")
        outputs += [f"top_{name}.csv", f"hist_{name}.csv"]
        knees[name] = knee(scores)
    if knees:
        summary["knee"] = knees
    _write_manifest(cfg, out, outputs)
    _emit(summary)
    return EXIT_OK


def cmd_scenario(cfg: RunConfig) -> int:
    if cfg.config:
        spec = load_config(cfg.config)
        if cfg.kind and cfg.kind != spec.kind:
            raise ConfigError("--kind disagrees with the config file")
    elif cfg.kind:
        spec = ScenarioSpec(cfg.kind)
    else:
        raise ConfigError("scenario needs --config or --kind")
    params = dict(spec.params)
    for item in cfg.params:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        params[key.strip()] = parse_value(raw.strip())
    spec = ScenarioSpec(spec.kind, params, spec.seed if cfg.seed is None else cfg.seed)
    scenario = generate(spec)
    g = scenario.graph

    out = Path(cfg.out_dir)
    edges_path, labels_path = save_graph(g, out)
    with open(out / "ground_truth.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for i in sorted(scenario.ground_truth):
            fh.write(f"{i}\t{g.labels[i]}\t{scenario.stolen.get(i, 0)}\n")
    outputs = [edges_path.name, labels_path.name, "ground_truth.tsv"]
    summary = {
        "command": "scenario",
        "kind": spec.kind,
        "seed": spec.seed,
        "root": g.labels[scenario.root],
        "nodes": g.node_count,
        "links": g.edge_count,
        "ground_truth": len(scenario.ground_truth),
    }
    if cfg.top_k:
        results = run_all(g, scenario.root)
        summary["evaluation"] = {m: evaluate(scenario, s, cfg.top_k) for m, s in results.items()}
    _write_manifest(cfg, out, outputs)
    _emit(summary)
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "taint": cmd_taint, "report": cmd_report, "scenario": cmd_scenario}


def _config_from_args(args: argparse.Namespace, argv: list[str]) -> RunConfig:
    fields = set(RunConfig.__dataclass_fields__)
    values = {k: v for k, v in vars(args).items() if k in fields}
    return RunConfig(argv=argv, **values)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.from_manifest:
        try:
            with open(args.from_manifest, encoding="utf-8") as fh:
                argv = json.load(fh)["config"]["argv"]
        except OSError as exc:
            return _fail(EXIT_IO, str(exc))
        except (ValueError, KeyError, TypeError):
            return _fail(EXIT_CONFIG, f"{args.from_manifest} is not a taintrank manifest")
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG

    cfg = _config_from_args(args, argv)
    try:
        return COMMANDS[args.command](cfg)
    except (ConfigError, UnknownNodeError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except MalformedRecordError as exc:
        return _fail(EXIT_MALFORMED, f"malformed input: {exc}")
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))


if __name__ == "__main__":
    sys.exit(main())
