import itertools

import numpy as np
import pytest

from repgraph.errors import BandingMismatchError, EmptyShingleError, IncompatibleError
from repgraph.sketch import (Sketch, build_index, estimate_jaccard, minhash_sketch, prefilter_error_bound,
                             query_candidates, read_sketch_cache, shingle, sketch_sequences,
                             storage_efficiency, write_sketch_cache)

AA = "ACDEFGHIKLMNPQRSTVWY"


def test_shingle_examples():
    assert shingle("CASS", 2) == {"CA", "AS", "SS"}
    assert shingle("AAAA", 2) == {"AA"}
    assert shingle("AG", 3) == {"AG"}


def test_sketch_deterministic_and_shape():
    a = minhash_sketch({"CAS", "ASS"}, m=64, seed=3)
    b = minhash_sketch({"ASS", "CAS"}, m=64, seed=3)
    assert np.array_equal(a.signature, b.signature)
    assert minhash_sketch({"CAS"}, m=1).m == 1


def test_empty_shingle_set():
    with pytest.raises(EmptyShingleError):
        minhash_sketch(set())


def test_containment_agreement_monte_carlo():
    a = {f"k{i}" for i in range(30)}
    b = a | {f"x{i}" for i in range(20)}
    rates = [estimate_jaccard(minhash_sketch(a, 128, s), minhash_sketch(b, 128, s)) for s in range(1000)]
    assert abs(np.mean(rates) - len(a) / len(b)) < 0.01


def test_estimate_jaccard_identity_and_disjoint():
    s = minhash_sketch({"AB", "BC"}, 16)
    assert estimate_jaccard(s, s) == 1.0
    t = Sketch(s.signature + np.uint64(1))
    assert estimate_jaccard(s, t) == 0.0
    with pytest.raises(IncompatibleError):
        estimate_jaccard(s, minhash_sketch({"AB"}, 8))


def test_index_bucket_counts():
    s = minhash_sketch({"CAS", "ASS"}, 128)
    idx = build_index([s], bands=4)
    assert sum(0 in members for members in idx.buckets.values()) == 4
    with pytest.raises(BandingMismatchError):
        build_index([s], bands=4, rows=5)


def test_identical_sketches_share_all_buckets_within_block():
    seqs = ["CASSLGQ", "CASSLGQ"]
    same = sketch_sequences(seqs, block_keys=["v1", "v1"])
    idx = build_index(same, bands=32)
    shared = sum({0, 1} <= set(m) for m in idx.buckets.values())
    assert shared == 32
    assert query_candidates(idx).as_set() == {(0, 1)}


def test_different_blocks_share_nothing():
    sk = sketch_sequences(["CASSLGQ", "CASSLGQ", "CASSLGQ"], block_keys=["a", "b", "c"])
    idx = build_index(sk, bands=32)
    assert all(len(m) == 1 for m in idx.buckets.values())
    assert query_candidates(idx).count == 0


def _brute_pairs(sketches, bands):
    r = sketches[0].m // bands
    out = set()
    for i, j in itertools.combinations(range(len(sketches)), 2):
        a, b = sketches[i], sketches[j]
        if a.block_key != b.block_key:
            continue
        for band in range(bands):
            sl = slice(band * r, (band + 1) * r)
            if np.array_equal(a.signature[sl], b.signature[sl]):
                out.add((i, j))
                break
    return out


def test_candidates_match_brute_force_banding(rng):
    base = "".join(rng.choice(list(AA), 15))
    seqs = []
    for _ in range(60):
        s = list(base)
        for p in np.flatnonzero(rng.random(len(s)) < 0.2):
            s[p] = rng.choice(list(AA))
        seqs.append("".join(s))
    sk = sketch_sequences(seqs, block_keys=[str(i % 2) for i in range(60)])
    cands = query_candidates(build_index(sk, 32))
    assert cands.as_set() == _brute_pairs(sk, 32)
    pairs = cands.pairs
    assert np.all(pairs[:, 0] < pairs[:, 1])
    assert len(cands.as_set()) == cands.count


def test_candidates_permutation_invariant(rng):
    seqs = ["".join(rng.choice(list("ACDE"), 8)) for _ in range(40)]
    perm = rng.permutation(40)
    a = query_candidates(build_index(sketch_sequences(seqs), 32)).as_set()
    b = query_candidates(build_index(sketch_sequences([seqs[p] for p in perm]), 32)).as_set()
    mapped = {tuple(sorted((int(perm[i]), int(perm[j])))) for i, j in b}
    assert mapped == a
    assert len(a) <= 40 * 39 // 2


@pytest.mark.parametrize("m, eps, expected", [(128, 0.0, 0.08839), (1, 0.0, 1.0), (64, 0.01, 0.135)])
def test_prefilter_error_bound(m, eps, expected):
    assert prefilter_error_bound(m, eps) == pytest.approx(expected, abs=5e-6)


def test_storage_efficiency():
    assert storage_efficiency(2, 1) == 100.0
    assert storage_efficiency(1, 1) == 0.0
    assert round(storage_efficiency(3.16, 2.0)) == 58
    with pytest.raises(ZeroDivisionError):
        storage_efficiency(1, 0)


def test_sketch_cache_round_trip(tmp_path):
    sk = sketch_sequences(["CASSLG", "CASRQE", "CSARDG"], k=3, m=16, seed=9)
    path = tmp_path / "cache.bin"
    write_sketch_cache(path, sk, 3, 9)
    raw = path.read_bytes()
    assert raw[:4] == b"RGSK"
    header, sigs = read_sketch_cache(path)
    assert header == {"version": 1, "m": 16, "k": 3, "seed": 9, "n": 3}
    assert np.array_equal(sigs, np.stack([s.signature for s in sk]))
    assert len(raw) == 32 + 3 * 16 * 8
