import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from repgraph.affinity import (AffinityConfig, CostScheme, GateParams, alignment_affinity, channel_importance,
                               compute_affinity_channels, edit_distance, embed_sequence, embedding_affinity,
                               gate_and_fuse, layer_norm, layer_norm_fuse, load_cost_table, load_gate_params,
                               save_gate_params, tile_plan)
from repgraph.errors import IncompatibleError, InvalidParameterError

AA = "ACDEFGHIKLMNPQRSTVWY"


def full_table_dp(a, b, ins=1.0, dele=1.0, sub=lambda x, y: 0.0 if x == y else 1.0):
    """Textbook full (|a|+1) x (|b|+1) table, independent of the rolling-row kernel."""
    d = [[0.0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for x in range(1, len(a) + 1):
        d[x][0] = d[x - 1][0] + dele
    for y in range(1, len(b) + 1):
        d[0][y] = d[0][y - 1] + ins
    for x in range(1, len(a) + 1):
        for y in range(1, len(b) + 1):
            d[x][y] = min(d[x - 1][y] + dele, d[x][y - 1] + ins, d[x - 1][y - 1] + sub(a[x - 1], b[y - 1]))
    return d[-1][-1]


@pytest.mark.parametrize("a, b, expected", [("CASS", "CASS", 0), ("", "CAS", 3), ("kitten", "sitting", 3)])
def test_edit_distance_examples(a, b, expected):
    assert edit_distance(a, b) == expected


def test_edit_distance_matches_full_table(rng):
    for _ in range(200):
        a = "".join(rng.choice(list("ACDE"), rng.integers(0, 12)))
        b = "".join(rng.choice(list("ACDE"), rng.integers(0, 12)))
        assert edit_distance(a, b) == full_table_dp(a, b)


def test_weighted_costs_match_full_table(rng):
    table = {"A": {"C": 0.5}, "C": {"A": 0.5}}
    costs = CostScheme(insertion=1.5, deletion=1.5, substitution=2.0, table=table)

    def sub(x, y):
        return costs.sub(x, y)

    for _ in range(100):
        a = "".join(rng.choice(list("ACD"), rng.integers(0, 9)))
        b = "".join(rng.choice(list("ACD"), rng.integers(0, 9)))
        assert edit_distance(a, b, costs) == pytest.approx(full_table_dp(a, b, 1.5, 1.5, sub))


def test_metric_axioms_on_corpus(rng):
    corpus = ["".join(rng.choice(list("ACDEG"), rng.integers(1, 9))) for _ in range(50)]
    d = {(a, b): edit_distance(a, b) for a in corpus for b in corpus}
    for a, b in itertools.product(corpus, repeat=2):
        assert d[a, b] == d[b, a]
        assert abs(len(a) - len(b)) <= d[a, b] <= len(a) + len(b)
    assert all(d[a, a] == 0 for a in corpus)
    for a, b, c in itertools.product(corpus[:20], repeat=3):
        assert d[a, c] <= d[a, b] + d[b, c]


def test_band_is_exact_when_wide():
    assert edit_distance("CASSLGQETQ", "CASRLGETQ", band=20) == edit_distance("CASSLGQETQ", "CASRLGETQ")


def test_cost_table_file(tmp_path):
    p = tmp_path / "costs.tsv"
    p.write_text("\tA\tC\nA\t0\t0.25\nC\t0.25\t0\n")
    costs = load_cost_table(p)
    assert edit_distance("AAA", "ACA", costs) == 0.25
    with pytest.raises(InvalidParameterError):
        CostScheme(table={"A": {"C": 1.0}, "C": {"A": 2.0}})


def test_alignment_affinity_examples():
    assert alignment_affinity("CASS", "CASS") == 1.0
    assert alignment_affinity("AAAA", "CCCC") == 0.0
    assert alignment_affinity("", "") == 1.0


def test_embedding_examples():
    u = embed_sequence("CASSLGQ")
    assert np.array_equal(u.values, embed_sequence("CASSLGQ").values)
    assert u.values.shape == (67,)
    a, b = embed_sequence("AAAAA").values[:64], embed_sequence("WWWWW").values[:64]
    assert np.dot(a, b) == 0.0
    v = np.array([1.0, 2.0, 0.0])
    assert embedding_affinity(v, v) == pytest.approx(1.0)
    assert embedding_affinity(v, -v) == pytest.approx(0.0)
    assert embedding_affinity(np.array([1.0, 0]), np.array([0, 1.0])) == 0.5
    with pytest.raises(IncompatibleError):
        embedding_affinity(np.ones(2), np.ones(3))


def _meta(b):
    p = GateParams.zeros()
    p.bmeta = b
    return p


def test_channel_importance_sigmoid():
    f = np.zeros(4)
    assert channel_importance(f, _meta(0.0)) == 0.5
    assert channel_importance(f, _meta(10.0)) > 0.999
    assert channel_importance(f, _meta(-10.0)) < 0.001
    with pytest.raises(InvalidParameterError):
        channel_importance(np.zeros(3), _meta(0.0))


def test_gate_and_fuse_examples():
    r = gate_and_fuse([0.2, 0.8], [0.0, 0.0])
    assert np.allclose(r.weights, [0.5, 0.5]) and r.fused == pytest.approx(0.5)
    r = gate_and_fuse([1.0, 0.0], [math.log(2), 0.0])
    assert np.allclose(r.weights, [2 / 3, 1 / 3]) and r.fused == pytest.approx(2 / 3)
    assert gate_and_fuse([0.37], [5.0]).fused == pytest.approx(0.37)
    with pytest.raises(InvalidParameterError):
        gate_and_fuse([], [])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=5).flatmap(
    lambda a: st.tuples(st.just(a), st.lists(st.floats(-20, 20), min_size=len(a), max_size=len(a)),
                        st.floats(-50, 50))))
def test_fusion_shift_invariant_and_convex(args):
    a, g, c = args
    r1 = gate_and_fuse(a, g)
    r2 = gate_and_fuse(a, np.asarray(g) + c)
    assert np.allclose(r1.weights, r2.weights, atol=1e-12, rtol=0)
    assert abs(r1.weights.sum() - 1) < 1e-9
    assert min(a) <= r1.fused <= max(a)


def test_layer_norm_examples():
    assert np.allclose(layer_norm(np.full(5, 3.0)), 0.0)
    assert np.allclose(layer_norm(np.array([1.0, -1.0]), eps=1e-12), [1.0, -1.0])
    assert np.array_equal(layer_norm_fuse([np.array([1.0, 2.0]), np.array([3.0, 0.0])], [0.0, 0.0]), np.zeros(2))
    with pytest.raises(InvalidParameterError):
        layer_norm_fuse([np.ones(2), np.ones(3)], [1, 1])


@pytest.mark.parametrize("args, grid", [((100, 100, 16, 16), (7, 7)), ((16, 16, 16, 16), (1, 1)),
                                        ((17, 1, 16, 16), (2, 1))])
def test_tile_plan(args, grid):
    plan = tile_plan(*args)
    assert (plan.grid_x, plan.grid_y) == grid


def test_tile_plan_zero_block():
    with pytest.raises(InvalidParameterError):
        tile_plan(10, 10, 0, 16)


def test_gate_param_file_round_trip(tmp_path):
    p = GateParams.zeros()
    p.b2[:] = [0.3, -0.1]
    save_gate_params(p, tmp_path / "gate.txt")
    q = load_gate_params(tmp_path / "gate.txt")
    for k, v in p.to_blocks().items():
        assert np.allclose(v, q.to_blocks()[k])


def test_compute_channels_examples(rng):
    assert compute_affinity_channels(["CASS"], np.zeros((0, 2), dtype=np.int64)) == []
    (same,) = compute_affinity_channels(["CASSLG", "CASSLG"], [(0, 1)])
    assert same.channels.tolist() == [1.0, 1.0] and same.fused == 1.0


def test_compute_channels_serial_oracle_and_threads(rng):
    seqs = ["".join(rng.choice(list(AA), rng.integers(8, 18))) for _ in range(60)]
    pairs = np.array(sorted({tuple(sorted(rng.choice(60, 2, replace=False))) for _ in range(120)})[:100])
    out1 = compute_affinity_channels(seqs, pairs, config=AffinityConfig(threads=1))
    out8 = compute_affinity_channels(seqs, pairs, config=AffinityConfig(threads=8, block_x=4, block_y=4))
    for (i, j), r1, r8 in zip(pairs.tolist(), out1, out8):
        assert r1.pair == (i, j) == r8.pair
        serial = gate_and_fuse([alignment_affinity(seqs[i], seqs[j]),
                                embedding_affinity(embed_sequence(seqs[i]), embed_sequence(seqs[j]))], [0.0, 0.0])
        assert r1.fused == serial.fused == r8.fused


def test_compose_gates_changes_nothing_at_zero_meta(rng):
    seqs = ["CASSLGQ", "CASRLGQ", "CSARDGT"]
    a = compute_affinity_channels(seqs, [(0, 1), (0, 2)])
    b = compute_affinity_channels(seqs, [(0, 1), (0, 2)], config=AffinityConfig(compose_gates=True))
    assert [x.fused for x in a] == pytest.approx([x.fused for x in b])
