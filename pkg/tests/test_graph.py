import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import noise_matrix, planted_two_block
from repgraph.errors import DegenerateInputError
from repgraph.graph import (SimilarityMatrix, WeightedGraph, assemble_similarity, export_graph, read_edge_list,
                            read_graphml, rmt_bulk_cutoff, threshold_to_graph)


def test_assemble_examples():
    assert assemble_similarity(3, []).nnz == 0
    m = assemble_similarity(3, [(0, 1, 0.9)])
    assert m.get(0, 1) == m.get(1, 0) == 0.9
    assert assemble_similarity(3, [(0, 1, 0.4), (1, 0, 0.6)]).get(0, 1) == 0.6
    with pytest.raises(IndexError):
        assemble_similarity(3, [(0, 3, 0.5)])


def test_assembled_matrix_symmetric_real_spectrum():
    m, _ = planted_two_block(40, seed=1)
    a = m.to_sparse().toarray()
    assert np.array_equal(a, a.T)
    vals = np.linalg.eigvals(a)
    assert np.max(np.abs(vals.imag)) < 1e-9


def test_noise_spectrum_and_removal():
    rep = rmt_bulk_cutoff(noise_matrix(200, seed=3))
    assert rep.n_above / 200 <= 0.02
    m = noise_matrix(200, seed=3)
    g = threshold_to_graph(m, rep.weight_threshold)
    assert g.n_edges <= 0.05 * m.nnz


def test_planted_two_eigenvalues_and_clean_cut():
    m, block = planted_two_block(100, seed=2)
    rep = rmt_bulk_cutoff(m)
    assert rep.n_above == 2
    g = threshold_to_graph(m, rep.weight_threshold)
    assert all(block[i] == block[j] for i, j, _ in g.edges)
    assert g.n_edges == 2 * (50 * 49 // 2)


def test_no_entries_defaults():
    rep = rmt_bulk_cutoff(SimilarityMatrix(5, np.array([], int), np.array([], int), np.array([])), default_tau=0.7)
    assert rep.n_above == 0 and rep.weight_threshold == 0.7


def test_too_small():
    with pytest.raises(DegenerateInputError):
        rmt_bulk_cutoff(assemble_similarity(2, [(0, 1, 0.5)]))


def test_shuffle_mode_deterministic_and_cleans_planted():
    m, block = planted_two_block(60, seed=4)
    a = rmt_bulk_cutoff(m, "shuffle", shuffles=5, seed=1)
    b = rmt_bulk_cutoff(m, "shuffle", shuffles=5, seed=1)
    assert a.weight_threshold == b.weight_threshold and a.bulk_edge == b.bulk_edge
    g = threshold_to_graph(m, a.weight_threshold)
    assert all(block[i] == block[j] for i, j, _ in g.edges)


def test_large_matrix_uses_iterative_solver():
    rng = np.random.default_rng(0)
    n = 4200
    rows = rng.integers(0, n, 20000)
    cols = rng.integers(0, n, 20000)
    keep = rows != cols
    m = assemble_similarity(n, zip(rows[keep], cols[keep], rng.random(keep.sum())))
    rep = rmt_bulk_cutoff(m)
    assert np.isfinite(rep.bulk_edge)


def test_threshold_examples():
    m = assemble_similarity(4, [(0, 1, 0.4), (1, 2, 0.7), (2, 3, 0.9)])
    assert threshold_to_graph(m, 0.0).n_edges == 3
    assert threshold_to_graph(m, 1.0 + 1e-9).n_edges == 0
    assert threshold_to_graph(m, 0.7).n_edges == 2


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9), st.floats(0, 1)), max_size=40),
       st.floats(0, 1), st.floats(0, 1))
def test_threshold_monotone(trip, t1, t2):
    m = assemble_similarity(10, [(i, j, w) for i, j, w in trip if i != j])
    lo, hi = sorted((t1, t2))
    assert set(threshold_to_graph(m, hi).edges) <= set(threshold_to_graph(m, lo).edges)


def test_export_edge_list(tmp_path):
    g = WeightedGraph.from_edges(2, [(0, 1, 0.75)])
    export_graph(g, ["a", "b"], tmp_path / "g.tsv")
    lines = (tmp_path / "g.tsv").read_text().splitlines()
    assert lines == ["# source\ttarget\tweight", "a\tb\t0.75"]
    export_graph(WeightedGraph.from_edges(3, []), ["a", "b", "c"], tmp_path / "e.tsv")
    assert (tmp_path / "e.tsv").read_text().splitlines() == ["# source\ttarget\tweight"]


def test_edge_list_round_trip(tmp_path):
    m, _ = planted_two_block(20, seed=5)
    g = threshold_to_graph(m, 0.1)
    labels = [f"n{i}" for i in range(20)]
    export_graph(g, labels, tmp_path / "g.tsv")
    back_labels, back = read_edge_list(tmp_path / "g.tsv")
    original = sorted(tuple(sorted((labels[i], labels[j]))) + (w,) for i, j, w in g.edges)
    parsed = sorted(tuple(sorted((back_labels[i], back_labels[j]))) + (w,) for i, j, w in back.edges)
    assert parsed == original


def test_graphml_round_trip(tmp_path):
    g = WeightedGraph.from_edges(3, [(0, 1, 0.5), (1, 2, 0.25)])
    export_graph(g, ["x", "y", "z"], tmp_path / "g.graphml", "gml-like", {"sequence": ["CAS", "CAT", "CSA"]})
    labels, back, attrs = read_graphml(tmp_path / "g.graphml")
    assert labels == ["x", "y", "z"] and back.edges == g.edges
    assert attrs["sequence"] == ["CAS", "CAT", "CSA"]
