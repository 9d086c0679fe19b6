"""Synthetic repertoires with planted blocks and long-tailed subgroups.

Each block has a random ancestor (uniform residues, length 12-20); members are
copies with every position substituted independently at ``mutation_rate``.
A ``noise`` fraction of sequences are independent random strings outside any
block. Ground truth lists every within-block pair whose exact k-mer Jaccard is
at least ``tau``; generation recomputes that list by brute force over all pairs
and refuses to return if the two disagree.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import SpecError
from .ingest import AMINO_ACIDS, NUCLEOTIDES, RepertoireDataset, SequenceRecord, make_alphabet
from .sketch import shingle


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings.

    Attributes:
        n: number of sequences.
        n_blocks: planted block count; ignored when ``block_size`` is set.
        block_size: members per block (block count then scales with ``n``).
        mutation_rate: per-position substitution probability.
        noise: fraction of sequences drawn independently (block ``-1``).
        subgroups: label -> frequency, summing to 1.
        rare: label of the rare subgroup; its frequency must lie in (0, 0.05].
        rare_block: put every rare member in this block (``None``: spread at random).
        length: inclusive ancestor length range.
        tau: Jaccard threshold for ground-truth pairs.
        k: shingle length.
        alphabet: ``"aa"`` or ``"nt"``.
        seed: RNG seed.
    """

    n: int = 1000
    n_blocks: int = 20
    block_size: int | None = None
    mutation_rate: float = 0.05
    noise: float = 0.0
    subgroups: dict = field(default_factory=lambda: {"common": 1.0})
    rare: str | None = None
    rare_block: int | None = None
    length: tuple[int, int] = (12, 20)
    tau: float = 0.7
    k: int = 4
    alphabet: str = "aa"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise SpecError("n must be >= 1")
        if not 0 <= self.mutation_rate <= 1:
            raise SpecError("mutation_rate must lie in [0, 1]")
        if not 0 <= self.noise <= 1:
            raise SpecError("noise must lie in [0, 1]")
        freqs = list(self.subgroups.values())
        if not freqs or any(f < 0 for f in freqs) or abs(sum(freqs) - 1.0) > 1e-9:
            raise SpecError(f"subgroup frequencies must be non-negative and sum to 1, got {sum(freqs)!r}")
        if self.rare is not None:
            if self.rare not in self.subgroups:
                raise SpecError(f"rare subgroup {self.rare!r} is not listed")
            eps = self.subgroups[self.rare]
            if not 0 < eps <= 0.05:
                raise SpecError(f"rare frequency must lie in (0, 0.05], got {eps}")
        lo, hi = self.length
        if not 1 <= lo <= hi:
            raise SpecError("length range must satisfy 1 <= lo <= hi")
        if self.block_size is None and self.n_blocks < 1:
            raise SpecError("n_blocks must be >= 1")
        if self.block_size is not None and self.block_size < 1:
            raise SpecError("block_size must be >= 1")
        if self.alphabet not in ("aa", "nt"):
            raise SpecError("alphabet must be 'aa' or 'nt'")
        if not 0 < self.tau <= 1 or self.k < 1:
            raise SpecError("tau must lie in (0, 1] and k must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        data = dict(data)
        if "length" in data:
            data["length"] = tuple(data["length"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SynthSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["length"] = list(self.length)
        return d


@dataclass(frozen=True, eq=False)
class GroundTruth:
    pairs: np.ndarray  # (p, 2) int64, i < j, lexicographic
    jaccard: np.ndarray
    blocks: np.ndarray  # block per sequence, -1 for noise
    subgroups: tuple
    tau: float
    k: int

    def pair_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.pairs}


def _group_counts(n: int, freqs: dict) -> dict:
    """Largest-remainder rounding of ``n * f`` per group."""
    names = list(freqs)
    raw = np.array([n * freqs[g] for g in names])
    base = np.floor(raw + 1e-9).astype(int)
    short = n - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return dict(zip(names, base.tolist()))


def _mutate(anc: np.ndarray, rate: float, n_sym: int, rng: np.random.Generator) -> np.ndarray:
    seq = anc.copy()
    hit = rng.random(seq.size) < rate
    if hit.any():
        # shift by 1..n_sym-1 so a mutation always changes the residue
        seq[hit] = (seq[hit] + rng.integers(1, n_sym, size=int(hit.sum()))) % n_sym
    return seq


def exact_jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def _brute_force_pairs(kmer_sets: list[set], tau: float) -> dict[tuple[int, int], float]:
    """All pairs with Jaccard >= tau, from a sparse incidence product."""
    vocab: dict[str, int] = {}
    rows, cols = [], []
    for i, s in enumerate(kmer_sets):
        for km in s:
            cols.append(vocab.setdefault(km, len(vocab)))
            rows.append(i)
    n = len(kmer_sets)
    inc = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, max(len(vocab), 1)))
    inter = sp.triu(inc @ inc.T, k=1).tocoo()
    sizes = np.array([len(s) for s in kmer_sets], dtype=float)
    union = sizes[inter.row] + sizes[inter.col] - inter.data
    jac = inter.data / union
    out = {}
    keep = jac >= tau
    for i, j, v in zip(inter.row[keep], inter.col[keep], jac[keep]):
        out[(int(i), int(j))] = float(v)
    return out


def generate(spec: SynthSpec) -> tuple[RepertoireDataset, GroundTruth]:
    """Build a dataset and its ground truth; deterministic for a given spec."""
    rng = np.random.default_rng(spec.seed)
    symbols = AMINO_ACIDS if spec.alphabet == "aa" else NUCLEOTIDES
    n_sym = len(symbols)
    n = spec.n
    n_noise = int(round(spec.noise * n))
    n_signal = n - n_noise
    if spec.block_size is not None:
        n_blocks = max(1, math.ceil(n_signal / spec.block_size)) if n_signal else 0
    else:
        n_blocks = min(spec.n_blocks, n_signal)
    if spec.rare_block is not None and not 0 <= spec.rare_block < max(n_blocks, 1):
        raise SpecError(f"rare_block {spec.rare_block} outside [0, {n_blocks})")

    # block membership: signal positions cycle through blocks, then everything is shuffled
    blocks = np.full(n, -1, dtype=np.int64)
    if n_signal:
        blocks[:n_signal] = np.arange(n_signal) % n_blocks
    blocks = blocks[rng.permutation(n)]

    lo, hi = spec.length
    ancestors = [rng.integers(0, n_sym, size=int(rng.integers(lo, hi + 1))) for _ in range(n_blocks)]
    codes = []
    for b in blocks:
        if b < 0:
            codes.append(rng.integers(0, n_sym, size=int(rng.integers(lo, hi + 1))))
        else:
            codes.append(_mutate(ancestors[b], spec.mutation_rate, n_sym, rng))
    seqs = ["".join(symbols[c] for c in code) for code in codes]

    labels = _assign_subgroups(spec, blocks, rng)
    counts = np.floor(rng.pareto(1.5, size=n) * 10).astype(int) + 1
    freqs = counts / counts.sum()

    width = len(str(n - 1))
    records = tuple(
        SequenceRecord(f"s{i:0{width}d}", seqs[i], float(freqs[i]), labels[i], {"true_block": str(int(blocks[i]))})
        for i in range(n)
    )
    dataset = RepertoireDataset(
        records, make_alphabet(spec.alphabet), ("id", "cdr3", "frequency", "subgroup", "true_block")
    )
    truth = _ground_truth(seqs, blocks, spec)
    return dataset, GroundTruth(truth[0], truth[1], blocks, tuple(labels), spec.tau, spec.k)


def _assign_subgroups(spec: SynthSpec, blocks: np.ndarray, rng) -> list[str]:
    n = blocks.size
    counts = _group_counts(n, spec.subgroups)
    labels: list[str | None] = [None] * n
    free = list(rng.permutation(n))
    if spec.rare is not None and spec.rare_block is not None:
        home = [i for i in free if blocks[i] == spec.rare_block]
        if len(home) < counts[spec.rare]:
            raise SpecError(
                f"rare block holds {len(home)} sequences but the rare subgroup needs {counts[spec.rare]}"
            )
        chosen = set(home[: counts[spec.rare]])
        for i in chosen:
            labels[i] = spec.rare
        free = [i for i in free if i not in chosen]
    pos = 0
    for g, c in counts.items():
        if spec.rare is not None and spec.rare_block is not None and g == spec.rare:
            continue
        for i in free[pos : pos + c]:
            labels[i] = g
        pos += c
    return labels


def _ground_truth(seqs: list[str], blocks: np.ndarray, spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    kmer_sets = [shingle(s, spec.k) for s in seqs]
    # per-block enumeration with Python sets
    planted: dict[tuple[int, int], float] = {}
    for b in np.unique(blocks[blocks >= 0]):
        idx = np.flatnonzero(blocks == b)
        for x in range(idx.size):
            for y in range(x + 1, idx.size):
                i, j = int(idx[x]), int(idx[y])
                jac = exact_jaccard(kmer_sets[i], kmer_sets[j])
                if jac >= spec.tau:
                    planted[(i, j)] = jac
    # independent brute force over all pairs, restricted to within-block pairs
    brute = {
        p: v for p, v in _brute_force_pairs(kmer_sets, spec.tau).items()
        if blocks[p[0]] >= 0 and blocks[p[0]] == blocks[p[1]]
    }
    if set(planted) != set(brute) or any(abs(planted[p] - brute[p]) > 1e-12 for p in planted):
        raise SpecError("ground-truth self-check failed: block enumeration disagrees with brute force")
    keys = sorted(planted)
    pairs = np.array(keys, dtype=np.int64).reshape(-1, 2)
    return pairs, np.array([planted[p] for p in keys], dtype=float)


def write_synth(out, dataset: RepertoireDataset, truth: GroundTruth) -> tuple[Path, Path]:
    """Write the repertoire TSV and a ground-truth pair sidecar next to it."""
    from .ingest import serialize_repertoire

    out = Path(out)
    out.write_text(serialize_repertoire(dataset), encoding="utf-8")
    side = out.with_name(out.stem + ".pairs.tsv")
    ids = dataset.ids
    with open(side, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id_i\tid_j\tjaccard\n")
        for (i, j), v in zip(truth.pairs.tolist(), truth.jaccard.tolist()):
            fh.write(f"{ids[i]}\t{ids[j]}\t{v!r}\n")
    return out, side
