"""MinHash sketching and block-aware LSH banding for candidate generation.

Each k-mer is first reduced to a 64-bit key (BLAKE2b, so results are stable
across platforms and interpreter runs). Slot ``p`` of a signature is the
minimum over k-mers of ``mix(a_p * key + b_p)`` in uint64 arithmetic, where
``a_p`` is odd and ``mix`` is the SplitMix64 finaliser; both steps are
bijections on 64-bit integers, so every slot behaves like a random
permutation of the key space.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import (
    BandingMismatchError,
    EmptyShingleError,
    IncompatibleError,
    InvalidParameterError,
)

DEFAULT_K = 4
DEFAULT_M = 128
DEFAULT_BANDS = 32
DEFAULT_SEED = 1
GLOBAL_BLOCK = ""

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finaliser, vectorised over a uint64 array."""
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def shingle(residues: str, k: int) -> set[str]:
    """All length-``k`` substrings; a string shorter than ``k`` is its own single shingle."""
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    if len(residues) < k:
        return {residues} if residues else set()
    return {residues[i : i + k] for i in range(len(residues) - k + 1)}


@lru_cache(maxsize=1 << 18)
def kmer_key(kmer: str) -> int:
    return int.from_bytes(hashlib.blake2b(kmer.encode("utf-8"), digest_size=8).digest(), "little")


@lru_cache(maxsize=64)
def _hash_params(m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    a = rng.integers(0, 1 << 64, size=m, dtype=np.uint64, endpoint=False) | np.uint64(1)
    b = rng.integers(0, 1 << 64, size=m, dtype=np.uint64, endpoint=False)
    a.flags.writeable = False
    b.flags.writeable = False
    return a, b


def _signature(keys: np.ndarray, m: int, seed: int) -> np.ndarray:
    a, b = _hash_params(m, seed)
    with np.errstate(over="ignore"):
        values = _mix64(keys[:, None] * a[None, :] + b[None, :])
    return values.min(axis=0)


@dataclass(frozen=True, eq=False)
class Sketch:
    signature: np.ndarray
    block_key: Hashable = GLOBAL_BLOCK
    owner: int = -1

    @property
    def m(self) -> int:
        return int(self.signature.shape[0])


def minhash_sketch(
    kmers: Iterable[str], m: int = DEFAULT_M, seed: int = DEFAULT_SEED,
    block_key: Hashable = GLOBAL_BLOCK, owner: int = -1,
) -> Sketch:
    if m < 1:
        raise InvalidParameterError("signature length m must be >= 1")
    keys = np.fromiter((kmer_key(s) for s in set(kmers)), dtype=np.uint64)
    if keys.size == 0:
        raise EmptyShingleError("cannot sketch an empty k-mer set")
    keys.sort()
    return Sketch(_signature(keys, m, seed), block_key, owner)


def sketch_sequences(
    sequences: Sequence[str], k: int = DEFAULT_K, m: int = DEFAULT_M, seed: int = DEFAULT_SEED,
    block_keys: Sequence[Hashable] | None = None,
) -> list[Sketch]:
    """Sketch every sequence; ``owner`` is the position in ``sequences``."""
    if block_keys is not None and len(block_keys) != len(sequences):
        raise IncompatibleError("block_keys must align with sequences")
    out = []
    for i, seq in enumerate(sequences):
        block = GLOBAL_BLOCK if block_keys is None else block_keys[i]
        out.append(minhash_sketch(shingle(seq, k), m, seed, block, i))
    return out


def estimate_jaccard(a: Sketch, b: Sketch) -> float:
    if a.m != b.m:
        raise IncompatibleError(f"sketch lengths differ: {a.m} vs {b.m}")
    return float(np.count_nonzero(a.signature == b.signature)) / a.m


def signature_matrix(sketches: Sequence[Sketch]) -> np.ndarray:
    if not sketches:
        return np.zeros((0, 0), dtype=np.uint64)
    ms = {s.m for s in sketches}
    if len(ms) != 1:
        raise IncompatibleError(f"mixed signature lengths {sorted(ms)}")
    return np.stack([s.signature for s in sketches])


def _band_hashes(sigs: np.ndarray, bands: int, rows: int) -> np.ndarray:
    """(n, bands) uint64 digest of each band's ``rows`` slots."""
    n = sigs.shape[0]
    view = sigs.reshape(n, bands, rows)
    with np.errstate(over="ignore"):
        h = _mix64(view[:, :, 0] + _GOLDEN)
        for c in range(1, rows):
            h = _mix64(h * _GOLDEN + view[:, :, c])
    return h


@dataclass(frozen=True, eq=False)
class LshIndex:
    """Bucket postings sorted by (block, band, band hash, member).

    ``bucket_starts[t]:bucket_starts[t+1]`` delimits bucket ``t`` in
    ``members``; all buckets of one block are contiguous.
    """

    bands: int
    rows: int
    m: int
    block_labels: tuple
    bucket_block: np.ndarray
    bucket_band: np.ndarray
    bucket_hash: np.ndarray
    bucket_starts: np.ndarray
    members: np.ndarray
    n_items: int

    @property
    def n_buckets(self) -> int:
        return int(self.bucket_block.shape[0])

    @property
    def buckets(self) -> dict[tuple, list[int]]:
        """(block_key, band, band_hash) -> member list, for inspection."""
        out = {}
        for t in range(self.n_buckets):
            key = (
                self.block_labels[self.bucket_block[t]],
                int(self.bucket_band[t]),
                int(self.bucket_hash[t]),
            )
            out[key] = self.members[self.bucket_starts[t] : self.bucket_starts[t + 1]].tolist()
        return out

    def nbytes(self) -> int:
        return int(
            self.bucket_block.nbytes + self.bucket_band.nbytes + self.bucket_hash.nbytes
            + self.bucket_starts.nbytes + self.members.nbytes
        )


def _block_codes(sketches: Sequence[Sketch]) -> tuple[tuple, np.ndarray]:
    labels = sorted({s.block_key for s in sketches}, key=lambda x: (type(x).__name__, str(x)))
    lookup = {lab: i for i, lab in enumerate(labels)}
    return tuple(labels), np.array([lookup[s.block_key] for s in sketches], dtype=np.int64)


def build_index(sketches: Sequence[Sketch], bands: int = DEFAULT_BANDS, rows: int | None = None) -> LshIndex:
    if bands < 1:
        raise BandingMismatchError("bands must be >= 1")
    sigs = signature_matrix(sketches)
    m = sigs.shape[1] if sigs.size else (rows or 0) * bands
    if rows is None:
        rows = m // bands
    if bands * rows != m or rows < 1:
        raise BandingMismatchError(f"bands*rows = {bands}*{rows} != signature length {m}")
    owners = np.array([s.owner if s.owner >= 0 else i for i, s in enumerate(sketches)], dtype=np.int64)
    n = len(sketches)
    labels, blocks = _block_codes(sketches)
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return LshIndex(bands, rows, m, labels, empty, empty, np.zeros(0, np.uint64),
                        np.zeros(1, np.int64), empty, 0)

    hashes = _band_hashes(sigs, bands, rows).ravel()
    block_col = np.repeat(blocks, bands)
    band_col = np.tile(np.arange(bands, dtype=np.int64), n)
    member_col = np.repeat(owners, bands)
    order = np.lexsort((member_col, hashes, band_col, block_col))
    block_col, band_col = block_col[order], band_col[order]
    hashes, member_col = hashes[order], member_col[order]

    new = np.ones(order.size, dtype=bool)
    new[1:] = (
        (block_col[1:] != block_col[:-1]) | (band_col[1:] != band_col[:-1])
        | (hashes[1:] != hashes[:-1])
    )
    starts = np.flatnonzero(new)
    return LshIndex(
        bands, rows, m, labels,
        block_col[starts], band_col[starts], hashes[starts],
        np.append(starts, order.size).astype(np.int64), member_col, n,
    )


@dataclass(frozen=True, eq=False)
class CandidateSet:
    pairs: np.ndarray  # (count, 2) int64, i < j, lexicographically sorted

    @property
    def count(self) -> int:
        return int(self.pairs.shape[0])

    def __len__(self) -> int:
        return self.count

    def __iter__(self):
        return (tuple(p) for p in self.pairs.tolist())

    def as_set(self) -> set[tuple[int, int]]:
        return {tuple(p) for p in self.pairs.tolist()}


def _canonical(i: np.ndarray, j: np.ndarray) -> CandidateSet:
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    keep = lo != hi
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return CandidateSet(np.zeros((0, 2), dtype=np.int64))
    width = int(hi.max()) + 1
    codes = np.unique(lo * width + hi)  # sort-merge dedup
    return CandidateSet(np.stack([codes // width, codes % width], axis=1).astype(np.int64))


def query_candidates(index: LshIndex, sketches: Sequence[Sketch] | None = None) -> CandidateSet:
    """Pairs that share at least one bucket.

    With ``sketches=None`` the indexed items are joined against each other.
    Otherwise each query sketch is probed against the index and paired with
    every bucket-mate (query owners and indexed owners share one index space).
    """
    lefts, rights = [], []
    if sketches is None:
        sizes = np.diff(index.bucket_starts)
        for t in np.flatnonzero(sizes > 1):
            mem = index.members[index.bucket_starts[t] : index.bucket_starts[t + 1]]
            ii, jj = np.triu_indices(mem.size, k=1)
            lefts.append(mem[ii])
            rights.append(mem[jj])
    else:
        sigs = signature_matrix(sketches)
        if sigs.size and sigs.shape[1] != index.m:
            raise IncompatibleError("query sketches do not match the index signature length")
        hashes = _band_hashes(sigs, index.bands, index.rows) if sigs.size else None
        lookup = {lab: i for i, lab in enumerate(index.block_labels)}
        keys = {
            (int(index.bucket_block[t]), int(index.bucket_band[t]), int(index.bucket_hash[t])): t
            for t in range(index.n_buckets)
        }
        for q, sk in enumerate(sketches):
            if sk.block_key not in lookup:
                continue
            owner = sk.owner if sk.owner >= 0 else q
            blk = lookup[sk.block_key]
            for band in range(index.bands):
                t = keys.get((blk, band, int(hashes[q, band])))
                if t is None:
                    continue
                mem = index.members[index.bucket_starts[t] : index.bucket_starts[t + 1]]
                lefts.append(np.full(mem.size, owner, dtype=np.int64))
                rights.append(mem)
    if not lefts:
        return CandidateSet(np.zeros((0, 2), dtype=np.int64))
    return _canonical(np.concatenate(lefts), np.concatenate(rights))


def prefilter_error_bound(m: int, eps_impl: float = 0.0) -> float:
    """Practical bound on MinHash prefiltering error, ``1/sqrt(m) + eps_impl``."""
    if m < 1 or eps_impl < 0:
        raise InvalidParameterError("need m >= 1 and eps_impl >= 0")
    return 1.0 / math.sqrt(m) + eps_impl


def storage_efficiency(mem_baseline: float, mem_lsh: float) -> float:
    """Relative storage saving of the LSH layout versus a baseline, in percent."""
    if mem_lsh == 0:
        raise ZeroDivisionError("mem_lsh must be non-zero")
    return (mem_baseline - mem_lsh) / mem_lsh * 100.0


# --- sketch cache -----------------------------------------------------------

CACHE_MAGIC = b"RGSK"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIIIQQ")


def write_sketch_cache(path, sketches: Sequence[Sketch], k: int, seed: int) -> None:
    """Little-endian: magic, version u32, m u32, k u32, seed u64, n u64, then n*m u64 minima."""
    sigs = signature_matrix(sketches)
    n, m = (sigs.shape if sigs.size else (0, 0))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, m, k, seed & _MASK, n))
        fh.write(np.ascontiguousarray(sigs, dtype="<u8").tobytes())


def read_sketch_cache(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise InvalidParameterError("sketch cache truncated")
    magic, version, m, k, seed, n = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise InvalidParameterError(f"bad sketch cache magic {magic!r}")
    if version != CACHE_VERSION:
        raise InvalidParameterError(f"unsupported sketch cache version {version}")
    body = np.frombuffer(raw, dtype="<u8", offset=_HEADER.size)
    if body.size != n * m:
        raise InvalidParameterError(f"sketch cache holds {body.size} minima, expected {n * m}")
    header = {"version": version, "m": m, "k": k, "seed": seed, "n": n}
    return header, body.reshape(n, m).astype(np.uint64)
