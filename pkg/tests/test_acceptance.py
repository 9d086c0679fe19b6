"""Acceptance criteria 1-10, one check per criterion.

Each check returns ``(passed, detail)``. Under pytest every criterion is a
test and a PASS/FAIL line per criterion is printed in the terminal summary;
run as a script (``python3 tests/test_acceptance.py``) to print the lines
directly.
"""

import itertools
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from helpers import noise_matrix, planted_two_block, wcd_family, wcd_instance  # noqa: E402
from repgraph.affinity import edit_distance  # noqa: E402
from repgraph.faircluster import (FairnessConfig, equity_report, fair_partition, make_partition,  # noqa: E402
                                  max_cluster_variance, objective, purity)
from repgraph.graph import rmt_bulk_cutoff, threshold_to_graph  # noqa: E402
from repgraph.pipeline import PipelineConfig, run_pipeline  # noqa: E402
from repgraph.repdist import ClusterMass, LabeledGraph, ged_assignment, ged_exact, js_repertoire_distance  # noqa: E402
from repgraph.sketch import build_index, estimate_jaccard, minhash_sketch, query_candidates, sketch_sequences  # noqa: E402
from repgraph.synthgen import SynthSpec, generate, write_synth  # noqa: E402
from repgraph.tuner import tune_bisect  # noqa: E402

RESULTS: dict[int, tuple[bool, str]] = {}
AA = "ACDEFGHIKLMNPQRSTVWY"


def reference_dp(a, b):
    """Full-table Levenshtein DP, written independently of the library kernel."""
    table = np.zeros((len(a) + 1, len(b) + 1))
    table[:, 0] = np.arange(len(a) + 1)
    table[0, :] = np.arange(len(b) + 1)
    for x in range(1, len(a) + 1):
        for y in range(1, len(b) + 1):
            table[x, y] = min(table[x - 1, y] + 1, table[x, y - 1] + 1,
                                   table[x - 1, y - 1] + (a[x - 1] != b[y - 1]))
    return float(table[-1, -1])


def check_1():
    rng = np.random.default_rng(1)
    pairs = [("".join(rng.choice(list(AA), rng.integers(0, 31))), "".join(rng.choice(list(AA), rng.integers(0, 31))))
             for _ in range(1000)]
    start = time.perf_counter()
    got = [edit_distance(a, b) for a, b in pairs]
    elapsed = time.perf_counter() - start
    mismatches = sum(g != reference_dp(a, b) for g, (a, b) in zip(got, pairs))
    return mismatches == 0 and elapsed < 5.0, f"mismatches={mismatches} kernel_time={elapsed:.2f}s"


def check_2():
    rng = np.random.default_rng(2)
    bound = 3 / math.sqrt(128)
    ok = 0
    for t in range(500):
        shared = int(rng.integers(0, 60))
        a = {f"s{i}" for i in range(shared)} | {f"a{t}_{i}" for i in range(int(rng.integers(1, 40)))}
        b = {f"s{i}" for i in range(shared)} | {f"b{t}_{i}" for i in range(int(rng.integers(1, 40)))}
        exact = len(a & b) / len(a | b)
        est = estimate_jaccard(minhash_sketch(a, 128, seed=t), minhash_sketch(b, 128, seed=t))
        ok += abs(est - exact) <= bound
    return ok / 500 >= 0.99, f"within_bound={ok}/500 bound={bound:.4f}"


def check_3():
    start = time.perf_counter()
    ds, truth = generate(SynthSpec(n=2000, n_blocks=100, mutation_rate=0.05, seed=3))
    cands = query_candidates(build_index(sketch_sequences(ds.sequences), 32)).as_set()
    elapsed = time.perf_counter() - start
    true_pairs = truth.pair_set()
    recall = len(true_pairs & cands) / len(true_pairs)
    return recall >= 0.95 and elapsed < 30.0, f"recall={recall:.4f} true_pairs={len(true_pairs)} time={elapsed:.1f}s"


def _candidate_count(n, seed):
    ds, _ = generate(SynthSpec(n=n, block_size=10, mutation_rate=0.1, seed=seed))
    return query_candidates(build_index(sketch_sequences(ds.sequences), 32)).count


def check_4():
    small = np.mean([_candidate_count(1000, s) for s in range(3)])
    large = np.mean([_candidate_count(2000, s) for s in range(3)])
    ratio = large / small
    return ratio < 3.0, f"mean|C| n=1000:{small:.0f} n=2000:{large:.0f} ratio={ratio:.3f} slope={math.log2(ratio):.3f}"


def check_5():
    m = noise_matrix(200, seed=5)
    rep = rmt_bulk_cutoff(m)
    removed = 1 - threshold_to_graph(m, rep.weight_threshold).n_edges / m.nnz
    pm, block = planted_two_block(100, seed=5)
    g = threshold_to_graph(pm, rmt_bulk_cutoff(pm).weight_threshold)
    cross = sum(block[i] != block[j] for i, j, _ in g.edges)
    pur = purity(fair_partition(g, 2, FairnessConfig("js", 0.0)).assignment, block)
    ok = removed >= 0.95 and cross == 0 and pur >= 0.95
    return ok, f"noise_removed={removed:.4f} cross_edges={cross} planted_purity={pur:.3f}"


def check_6():
    spec = SynthSpec(n=1000, n_blocks=4, mutation_rate=0.05, subgroups={"major": 0.99, "rare": 0.01},
                     rare="rare", rare_block=0, seed=0)
    with tempfile.TemporaryDirectory() as tmp:
        path, _ = write_synth(Path(tmp) / "longtail.tsv", *generate(spec))
        base = run_pipeline(PipelineConfig(input=str(path), output_dir=f"{tmp}/base", lam=0.0))
        tuned = run_pipeline(PipelineConfig(input=str(path), output_dir=f"{tmp}/tuned", tune="bisect",
                                            delta_max=0.10))
    trace = tuned["results"].trace
    d_eq = tuned["equity"]["d_eq"]
    js0, js1 = base["equity"]["js_disparity"], tuned["equity"]["js_disparity"]
    ok = trace.feasible and d_eq <= 0.10 and js0 > js1
    return ok, (f"lambda*={trace.chosen} feasible={trace.feasible} d_eq={d_eq:.4f} "
                f"js_disparity(lambda=0)={js0:.4f} > js_disparity(lambda*)={js1:.4f}")


def check_7():
    x, groups, blob = wcd_instance()
    lam, tau = 20.0, 0.2
    out = {}
    for mode in ("wcd", "js"):
        cfg = FairnessConfig(mode, lam, tau)
        part = fair_partition(x, 10, cfg, groups, seed=0)
        family_best = min(objective(x, make_partition(a, 10, groups), cfg, groups) for a in wcd_family(groups, blob))
        out[mode] = (equity_report(part).coverage["rare"], max_cluster_variance(x, part) / tau,
                     objective(x, part, cfg, groups) <= family_best + 1e-9)
    ok = (out["wcd"][0] >= 0.2 and out["js"][0] < 0.2 and all(lam >= v[1] for v in out.values())
          and all(v[2] for v in out.values()))
    return ok, ("coverage wcd={:.2f} js={:.2f}; lambda={} >= Var/tau (wcd {:.3f}, js {:.3f}); "
                "beats exhaustive family: {}").format(out["wcd"][0], out["js"][0], lam, out["wcd"][1],
                                                     out["js"][1], out["wcd"][2] and out["js"][2])


def check_8():
    tr = tune_bisect(lambda lam: 0.3 - 0.25 * lam, 0.10)
    lams = [e[0] for e in tr.evaluations]
    ok = len(lams) == 5 and lams == [0.5, 0.75, 0.875, 0.8125, 0.78125] and tr.chosen == 0.8125 and tr.feasible
    return ok, f"evaluations={lams} lambda*={tr.chosen}"


def _random_labeled(rng):
    n = int(rng.integers(1, 7))
    labels = tuple(rng.choice(["CASS", "CAST", "CSAR", "GGGG"], n))
    edges = {(i, j): float(rng.choice([0.5, 1.0])) for i, j in itertools.combinations(range(n), 2)
             if rng.random() < 0.4}
    return LabeledGraph(labels, edges)


def check_9():
    rng = np.random.default_rng(9)
    bad = 0
    for p, q, r in rng.dirichlet(np.ones(4), size=(1000, 3)):
        P, Q, R = (ClusterMass(v / v.sum()) for v in (p, q, r))
        pq, qp = js_repertoire_distance(P, Q), js_repertoire_distance(Q, P)
        bad += abs(pq - qp) > 1e-9 or js_repertoire_distance(P, P) > 1e-9
        bad += js_repertoire_distance(P, R) > pq + js_repertoire_distance(Q, R) + 1e-9
    violations = equal = 0
    for _ in range(200):
        ga, gb = _random_labeled(rng), _random_labeled(rng)
        exact, approx = ged_exact(ga, gb), ged_assignment(ga, gb)
        violations += approx < exact - 1e-9
        equal += abs(approx - exact) <= 1e-9
    ok = bad == 0 and violations == 0 and equal >= 60
    return ok, f"js_violations={bad} ged_bound_violations={violations} ged_equal={equal}/200"


def _comparable(manifest):
    m = json.loads(json.dumps({k: v for k, v in manifest.items() if k not in ("timings", "results")}, default=str))
    m["config"].pop("output_dir")
    m["config"].pop("threads")
    return m


def check_10():
    spec = SynthSpec(n=300, n_blocks=6, mutation_rate=0.05, subgroups={"a": 0.7, "b": 0.3}, seed=10)
    with tempfile.TemporaryDirectory() as tmp:
        path, _ = write_synth(Path(tmp) / "in.tsv", *generate(spec))
        runs = {}
        for name, threads in (("first", 1), ("second", 1), ("eight", 8)):
            cfg = PipelineConfig(input=str(path), output_dir=f"{tmp}/{name}", clusters=3, lam=0.5,
                                 tune="bisect", threads=threads, seed=7)
            runs[name] = run_pipeline(cfg)
        files = sorted(runs["first"]["files"])
        same_bytes = all(
            (Path(tmp) / "first" / f).read_bytes() == (Path(tmp) / other / f).read_bytes()
            for f in files for other in ("second", "eight")
        )
    same_manifest = _comparable(runs["first"]) == _comparable(runs["second"]) == _comparable(runs["eight"])
    return same_bytes and same_manifest, f"files={len(files)} byte_identical={same_bytes} manifest_equal={same_manifest}"


CHECKS = {i: globals()[f"check_{i}"] for i in range(1, 11)}


def _record(i):
    ok, detail = CHECKS[i]()
    RESULTS[i] = (ok, detail)
    return ok, detail


@pytest.mark.parametrize("criterion", list(CHECKS))
def test_acceptance(criterion):
    ok, detail = _record(criterion)
    print(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for i in CHECKS:
        ok, detail = _record(i)
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} criterion {i}: {detail}", flush=True)
    sys.exit(1 if failed else 0)
