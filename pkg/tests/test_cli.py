import csv
import json
import math
import subprocess
import sys

import pytest

from taintrank.cli import main
from taintrank.graph import GraphBuilder, save_graph
from taintrank.taint import METHODS, read_scores

FIXTURE = [
    {"tx_id": "t1", "timestamp": 100, "inputs": [{"address": "A", "value": 10}],
     "outputs": [{"address": "B", "value": 6}, {"address": "C", "value": 4}]},
    {"tx_id": "t2", "timestamp": 200, "inputs": [{"address": "B", "value": 6}, {"address": "D", "value": 2}],
     "outputs": [{"address": "E", "value": 8}]},
    {"tx_id": "t3", "timestamp": 300, "inputs": [{"address": "D", "value": 5}, {"address": "C", "value": 4}],
     "outputs": [{"address": "F", "value": 9}]},
]

# Hand-derived: ids in first-seen order A0 B1 C2 D3 E4 F5; multi-input
# outputs split by input value (6:2 and 5:4 divide 8 and 9 exactly).
EXPECTED_EDGES = ["0\t1\t6\t1", "0\t2\t4\t1", "1\t4\t6\t1", "2\t5\t4\t1", "3\t4\t2\t1", "3\t5\t5\t1"]


@pytest.fixture
def records(tmp_path):
    path = tmp_path / "records.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in FIXTURE))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def summary(stdout):
    lines = stdout.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


def chain_graph_dir(tmp_path, length=4):
    b = GraphBuilder()
    for i in range(length):
        b.add_transfer(f"c{i}", f"c{i + 1}", 10)
    d = tmp_path / f"chain{length}"
    save_graph(b.finalize(), d)
    return d


def test_ingest_fixture(tmp_path, records, capsys):
    code, out, _ = run(capsys, "ingest", "--input", records, "--out-dir", tmp_path / "g")
    assert code == 0
    assert (tmp_path / "g" / "graph.edges").read_text().splitlines() == EXPECTED_EDGES
    assert (tmp_path / "g" / "graph.labels").read_text().splitlines() == [f"{i}\t{a}" for i, a in enumerate("ABCDEF")]
    s = summary(out)
    assert (s["records"], s["nodes"], s["links"]) == (3, 6, 6)
    assert s["avg_degree"] == 2.0


def test_ingest_cluster_shrinks(tmp_path, records, capsys):
    code, out, _ = run(capsys, "ingest", "--input", records, "--out-dir", tmp_path / "g", "--cluster")
    assert code == 0
    s = summary(out)
    assert s["nodes"] == 4 and s["nodes"] < 6
    assert (tmp_path / "g" / "graph.edges").read_text().splitlines() == ["0\t1\t10\t1", "1\t2\t8\t1", "1\t3\t9\t1"]
    clusters = (tmp_path / "g" / "clusters.tsv").read_text().splitlines()
    assert {line.split("\t")[0] for line in clusters} == {"A", "B"}


def test_ingest_window(tmp_path, records, capsys):
    code, out, _ = run(capsys, "ingest", "--input", records, "--out-dir", tmp_path / "g", "--window", 150, 300)
    assert code == 0
    assert summary(out)["records_in_window"] == 2


def test_ingest_btc_unit(tmp_path, capsys):
    path = tmp_path / "btc.jsonl"
    path.write_text('{"tx_id": "t", "inputs": [{"address": "A", "value": 0.5}], '
                    '"outputs": [{"address": "B", "value": 0.25}]}\n')
    code, _, _ = run(capsys, "ingest", "--input", path, "--out-dir", tmp_path / "g", "--unit", "btc")
    assert code == 0
    assert (tmp_path / "g" / "graph.edges").read_text() == "0\t1\t25000000\t1\n"


def test_ingest_missing_file(tmp_path, capsys):
    code, _, _ = run(capsys, "ingest", "--input", tmp_path / "nope.jsonl", "--out-dir", tmp_path / "g")
    assert code == 1


def test_ingest_malformed(tmp_path, records, capsys):
    with open(records, "a") as fh:
        fh.write("{broken\n")
    code, out, _ = run(capsys, "ingest", "--input", records, "--out-dir", tmp_path / "g")
    assert code == 0 and summary(out)["malformed"] == 1
    code, _, err = run(capsys, "ingest", "--input", records, "--out-dir", tmp_path / "h", "--strict")
    assert code == 2
    assert "line 4" in err


def test_bad_flag_is_config_error(tmp_path, records, capsys):
    code, _, _ = run(capsys, "ingest", "--input", records, "--out-dir", tmp_path, "--pairing", "magic")
    assert code == 3
    code, _, _ = run(capsys, "taint", "--graph", tmp_path, "--root", "x", "--out-dir", tmp_path, "--sweeps", 0)
    assert code == 3


def test_taint_distance_factorial(tmp_path, capsys):
    g = chain_graph_dir(tmp_path, 6)
    code, out, _ = run(capsys, "taint", "--graph", g, "--root", "c0", "--method", "distance", "--out-dir", tmp_path / "s")
    assert code == 0
    _, scores = read_scores(tmp_path / "s" / "scores_distance.tsv")
    for k in range(7):
        assert abs(scores.scores[k] - 1 / math.factorial(k)) <= 1e-12
    assert summary(out)["reachable"] == 7


def test_taint_fixed_binary(tmp_path, records, capsys):
    run(capsys, "ingest", "--input", records, "--out-dir", tmp_path / "g")
    code, _, _ = run(capsys, "taint", "--graph", tmp_path / "g", "--root", "B", "--method", "fixed", "--out-dir", tmp_path / "s")
    assert code == 0
    meta, scores = read_scores(tmp_path / "s" / "scores_fixed.tsv")
    assert set(scores.scores.tolist()) <= {0.0, 1.0}
    assert meta["pairing"] == "proportional" and meta["cluster"] == "false"


def test_taint_unknown_root(tmp_path, capsys):
    g = chain_graph_dir(tmp_path)
    code, _, err = run(capsys, "taint", "--graph", g, "--root", "ghost", "--out-dir", tmp_path / "s")
    assert code == 3
    assert "ghost" in err


def test_taint_all_methods(tmp_path, records, capsys):
    run(capsys, "ingest", "--input", records, "--out-dir", tmp_path / "g")
    code, out, _ = run(capsys, "taint", "--graph", tmp_path / "g", "--root", "A", "--method", "all",
                       "--iterations", 5, "--out-dir", tmp_path / "s")
    assert code == 0
    universes = set()
    for method in METHODS:
        meta, scores = read_scores(tmp_path / "s" / f"scores_{method}.tsv")
        assert meta["method"] == method
        universes.add(tuple(scores.labels))
    assert len(universes) == 1
    assert summary(out)["methods"] == list(METHODS)
    manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert manifest["config"]["iterations"] == 5


@pytest.mark.parametrize("flags,expected", [
    (["--method", "weight", "--value-mode", "in"], "weight_in"),
    (["--method", "combined", "--combine", "max"], "combined_max"),
    (["--method", "pagerank"], "pagerank_like"),
])
def test_taint_method_aliases(tmp_path, capsys, flags, expected):
    g = chain_graph_dir(tmp_path)
    code, _, _ = run(capsys, "taint", "--graph", g, "--root", "c0", *flags, "--out-dir", tmp_path / "s")
    assert code == 0
    assert (tmp_path / "s" / f"scores_{expected}.tsv").exists()


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_report(tmp_path, capsys):
    g = chain_graph_dir(tmp_path, 2)
    run(capsys, "taint", "--graph", g, "--root", "c0", "--out-dir", tmp_path / "s")
    code, out, _ = run(capsys, "report", "--graph", g, "--root", "c1", "--scores",
                       tmp_path / "s" / "scores_distance.tsv", "--top-k", 5, "--out-dir", tmp_path / "r")
    assert code == 0
    degree = read_csv(tmp_path / "r" / "degree.csv")
    assert degree[0] == ["direction", "degree", "count", "fraction"]
    assert len(degree) - 1 == 4
    top = read_csv(tmp_path / "r" / "top_distance.csv")
    assert top[0] == ["rank", "label", "score"] and len(top) - 1 == 3
    hist = read_csv(tmp_path / "r" / "hist_distance.csv")
    assert hist[0] == ["bin_lo", "bin_hi", "count"]
    assert sum(int(row[2]) for row in hist[1:]) == 3
    s = summary(out)
    assert s["subgraph"] == {"nodes": 2, "links": 1, "avg_degree": 1.0, "max_hops": 1}


def test_report_top_k_rows(tmp_path, capsys):
    g = chain_graph_dir(tmp_path, 9)
    run(capsys, "taint", "--graph", g, "--root", "c0", "--method", "fixed", "--out-dir", tmp_path / "s")
    code, _, _ = run(capsys, "report", "--scores", tmp_path / "s" / "scores_fixed.tsv", "--top-k", 5,
                     "--bins", "linear", "--out-dir", tmp_path / "r")
    assert code == 0
    assert len(read_csv(tmp_path / "r" / "top_fixed.csv")) - 1 == 5
    hist = read_csv(tmp_path / "r" / "hist_fixed.csv")
    assert sum(int(row[2]) for row in hist[1:]) == 10


def test_report_needs_input(tmp_path, capsys):
    code, _, _ = run(capsys, "report", "--out-dir", tmp_path)
    assert code == 3


def test_scenario_command(tmp_path, capsys):
    cfg = tmp_path / "dust.cfg"
    cfg.write_text("kind = dust_attack\nvictims = 10\nseed = 1\n")
    code, out, _ = run(capsys, "scenario", "--config", cfg, "--top-k", 5, "--out-dir", tmp_path / "sc")
    assert code == 0
    s = summary(out)
    assert s["kind"] == "dust_attack" and s["root"] == "thief"
    assert set(s["evaluation"]) == set(METHODS)
    assert (tmp_path / "sc" / "graph.edges").exists()
    truth = (tmp_path / "sc" / "ground_truth.tsv").read_text().splitlines()
    assert len(truth) == s["ground_truth"] == 12  # thief, stash and the 10 victims


def test_scenario_bad_param(tmp_path, capsys):
    code, _, _ = run(capsys, "scenario", "--kind", "long_chain", "--param", "length=-3", "--out-dir", tmp_path)
    assert code == 3


def test_manifest_rerun_byte_identical(tmp_path, records, capsys):
    run(capsys, "ingest", "--input", records, "--out-dir", tmp_path / "g", "--cluster")
    run(capsys, "taint", "--graph", tmp_path / "g", "--root", "A", "--out-dir", tmp_path / "s", "--sweeps", 2)
    before = {p.name: p.read_bytes() for p in (tmp_path / "s").iterdir()}
    for p in (tmp_path / "s").iterdir():
        if p.name != "manifest.json":
            p.unlink()
    code, _, _ = run(capsys, "--from-manifest", tmp_path / "s" / "manifest.json")
    assert code == 0
    after = {p.name: p.read_bytes() for p in (tmp_path / "s").iterdir()}
    assert after == before


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "taintrank.cli", "scenario", "--kind", "long_chain", "--out-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["nodes"] == 6
