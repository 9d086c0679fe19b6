"""Per-pair affinity channels and their gated fusion.

Two channels are computed for every candidate pair: a normalised edit-distance
(alignment) affinity and a cosine affinity between deterministic sequence
embeddings. Channels are combined with softmax gate weights produced by a
small per-channel scorer.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import IncompatibleError, InvalidParameterError
from .paramfile import format_param_blocks, read_param_blocks
from .sketch import kmer_key

# --- edit distance ------------------------------------------------------------


@dataclass(frozen=True)
class CostScheme:
    insertion: float = 1.0
    deletion: float = 1.0
    substitution: float = 1.0
    table: Mapping[str, Mapping[str, float]] | None = None

    def __post_init__(self):
        if min(self.insertion, self.deletion, self.substitution) < 0:
            raise InvalidParameterError("edit costs must be non-negative")
        if self.table is not None:
            for a, row in self.table.items():
                for b, c in row.items():
                    if c < 0:
                        raise InvalidParameterError(f"negative substitution cost {a}->{b}")
                    if a == b and c != 0:
                        raise InvalidParameterError(f"cost table diagonal {a}->{a} must be 0")
                    if self.table.get(b, {}).get(a, c) != c:
                        raise InvalidParameterError(f"cost table not symmetric at {a},{b}")

    def sub(self, a: str, b: str) -> float:
        if a == b:
            return 0.0
        if self.table is not None:
            return float(self.table.get(a, {}).get(b, self.substitution))
        return self.substitution

    @property
    def max_cost(self) -> float:
        top = max(self.insertion, self.deletion, self.substitution)
        if self.table is not None:
            top = max([top] + [c for row in self.table.values() for c in row.values()])
        return top


UNIT_COSTS = CostScheme()


def load_cost_table(path, insertion: float = 1.0, deletion: float = 1.0) -> CostScheme:
    """Square labelled TSV matrix; the header's first cell is ignored."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter="\t") if r]
    labels = [c.strip() for c in rows[0][1:]]
    table: dict[str, dict[str, float]] = {}
    for r in rows[1:]:
        table[r[0].strip()] = {lab: float(v) for lab, v in zip(labels, r[1:])}
    if sorted(table) != sorted(labels):
        raise InvalidParameterError("cost matrix row labels must match column labels")
    sub_default = max((c for row in table.values() for c in row.values()), default=1.0)
    return CostScheme(insertion, deletion, sub_default, table)


def edit_distance(a: str, b: str, costs: CostScheme = UNIT_COSTS, band: int | None = None) -> float:
    """Weighted edit distance with two rolling DP rows.

    ``band`` restricts the table to ``|x - y| <= band``; the result is then an
    upper bound, exact whenever an optimal alignment stays inside the band.
    """
    ins, dele = costs.insertion, costs.deletion
    n, m = len(a), len(b)
    inf = math.inf
    prev = [y * ins for y in range(m + 1)]
    if band is not None:
        prev = [v if y <= band else inf for y, v in enumerate(prev)]
    unit_sub = costs.table is None
    sub = costs.substitution
    for x in range(1, n + 1):
        ax = a[x - 1]
        cur = [inf] * (m + 1)
        lo, hi = 1, m
        if band is not None:
            lo, hi = max(1, x - band), min(m, x + band)
            if x <= band:
                cur[0] = x * dele
        else:
            cur[0] = x * dele
        left = cur[lo - 1]
        for y in range(lo, hi + 1):
            by = b[y - 1]
            if ax == by:
                diag = prev[y - 1]
            else:
                diag = prev[y - 1] + (sub if unit_sub else costs.sub(ax, by))
            up = prev[y] + dele
            left = left + ins
            best = diag if diag < up else up
            if left < best:
                best = left
            cur[y] = best
            left = best
        prev = cur
    return float(prev[m])


def alignment_affinity(a: str, b: str, costs: CostScheme = UNIT_COSTS) -> float:
    """``1 - d / (max_len * c_max)`` clamped to [0, 1]; two empty strings give 1."""
    longest = max(len(a), len(b))
    cmax = costs.max_cost
    if longest == 0 or cmax == 0:
        return 1.0
    value = 1.0 - edit_distance(a, b, costs) / (longest * cmax)
    return min(1.0, max(0.0, value))


# --- embeddings ---------------------------------------------------------------

# Kyte-Doolittle hydropathy scaled to [-1, 1]
HYDROPATHY = {
    "A": 1.8, "R": -4.5, "N": -3.5, "D": -3.5, "C": 2.5, "Q": -3.5, "E": -3.5,
    "G": -0.4, "H": -3.2, "I": 4.5, "L": 3.8, "K": -3.9, "M": 1.9, "F": 2.8,
    "P": -1.6, "S": -0.8, "T": -0.7, "W": -0.9, "Y": -1.3, "V": 4.2,
}
HYDROPATHY = {k: v / 4.5 for k, v in HYDROPATHY.items()}
# side-chain charge near pH 7
CHARGE = {"D": -1.0, "E": -1.0, "K": 1.0, "R": 1.0, "H": 0.1}
# residue volume (cubic angstrom) scaled by tryptophan's
VOLUME = {
    "A": 88.6, "R": 173.4, "N": 114.1, "D": 111.1, "C": 108.5, "Q": 143.8, "E": 138.4,
    "G": 60.1, "H": 153.2, "I": 166.7, "L": 166.7, "K": 168.6, "M": 162.9, "F": 189.9,
    "P": 112.7, "S": 89.0, "T": 116.1, "W": 227.8, "Y": 193.6, "V": 140.0,
}
VOLUME = {k: v / 227.8 for k, v in VOLUME.items()}
_MEAN_VOLUME = float(np.mean(list(VOLUME.values())))


@dataclass(frozen=True)
class EmbeddingConfig:
    k: int = 3
    d_kmer: int = 64

    @property
    def dim(self) -> int:
        return self.d_kmer + 3


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    owner: int = -1


def kmer_bucket(kmer: str, d_kmer: int) -> int:
    return kmer_key(kmer) % d_kmer


def embed_sequence(residues: str, config: EmbeddingConfig = EmbeddingConfig(), owner: int = -1) -> EmbeddingVector:
    """Hashed k-mer counts (divided by the number of k-mers) followed by mean
    hydropathy, charge and volume."""
    if not isinstance(residues, str):
        owner = getattr(residues, "owner", owner)
        residues = residues.residues
    vec = np.zeros(config.dim)
    k = config.k
    kmers = [residues[i : i + k] for i in range(len(residues) - k + 1)] or [residues]
    for km in kmers:
        vec[kmer_bucket(km, config.d_kmer)] += 1.0
    vec[: config.d_kmer] /= len(kmers)
    n = len(residues)
    vec[config.d_kmer] = sum(HYDROPATHY.get(c, 0.0) for c in residues) / n
    vec[config.d_kmer + 1] = sum(CHARGE.get(c, 0.0) for c in residues) / n
    vec[config.d_kmer + 2] = sum(VOLUME.get(c, _MEAN_VOLUME) for c in residues) / n
    return EmbeddingVector(vec, owner)


def embedding_affinity(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """(cosine + 1) / 2; a zero vector on either side gives 0.5."""
    a = getattr(u, "values", u)
    b = getattr(v, "values", v)
    if a.shape != b.shape:
        raise IncompatibleError(f"embedding dimensions differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.5
    cos = float(np.dot(a, b) / (na * nb))
    return min(1.0, max(0.0, (cos + 1.0) / 2.0))


# --- gating -------------------------------------------------------------------

N_GATE_FEATURES = 4


@dataclass
class GateParams:
    """Per-channel two-layer scorer plus channel-importance and layer-norm parameters.

    Shapes: ``W1 (M, H, 4)``, ``b1 (M, H)``, ``W2 (M, H)``, ``b2 (M,)``,
    ``Wmeta (F,)`` or ``(P, F)``, ``bmeta`` scalar or ``(P,)``; ``gamma``/``beta``
    broadcast over the normalised axis.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wmeta: np.ndarray = field(default_factory=lambda: np.zeros(N_GATE_FEATURES))
    bmeta: np.ndarray | float = 0.0
    gamma: np.ndarray | float = 1.0
    beta: np.ndarray | float = 0.0
    eps: float = 1e-5

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2", "Wmeta"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        M = self.W1.shape[0]
        if self.W1.ndim != 3 or self.W1.shape[2] != N_GATE_FEATURES:
            raise InvalidParameterError(f"W1 must be (M, H, {N_GATE_FEATURES}), got {self.W1.shape}")
        H = self.W1.shape[1]
        if self.b1.shape != (M, H) or self.W2.shape != (M, H) or self.b2.shape != (M,):
            raise InvalidParameterError("gate scorer parameter shapes are inconsistent")
        if not self.eps > 0:
            raise InvalidParameterError("layer-norm eps must be > 0")

    @property
    def n_channels(self) -> int:
        return self.W1.shape[0]

    @classmethod
    def zeros(cls, n_channels: int = 2, hidden: int = 8) -> "GateParams":
        """Zero final layer: every channel scores 0, so fusion is an equal-weight mean."""
        return cls(
            np.zeros((n_channels, hidden, N_GATE_FEATURES)), np.zeros((n_channels, hidden)),
            np.zeros((n_channels, hidden)), np.zeros(n_channels),
        )

    def to_blocks(self) -> dict:
        return {
            "W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2,
            "Wmeta": self.Wmeta, "bmeta": np.asarray(self.bmeta, dtype=float),
            "gamma": np.asarray(self.gamma, dtype=float), "beta": np.asarray(self.beta, dtype=float),
            "eps": float(self.eps),
        }


def load_gate_params(path) -> GateParams:
    blocks = read_param_blocks(path)
    missing = {"W1", "b1", "W2", "b2"} - set(blocks)
    if missing:
        raise InvalidParameterError(f"gate parameter file lacks {sorted(missing)}")
    kw = {k: blocks[k] for k in ("Wmeta", "bmeta", "gamma", "beta", "eps") if k in blocks}
    if "eps" in kw:
        kw["eps"] = float(kw["eps"])
    return GateParams(blocks["W1"], blocks["b1"], blocks["W2"], blocks["b2"], **kw)


def save_gate_params(params: GateParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_param_blocks(params.to_blocks()))


def _sigmoid(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def softmax(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    e = np.exp(s - s.max())
    return e / e.sum()


def gate_features(channels, len_i: int, len_j: int, len_max: int) -> np.ndarray:
    """(M, 4) scorer inputs: own channel, length gap / len_max, min and max channel."""
    a = np.asarray(channels, dtype=float)
    gap = abs(len_i - len_j) / len_max if len_max > 0 else 0.0
    return np.column_stack([a, np.full(a.size, gap), np.full(a.size, a.min()), np.full(a.size, a.max())])


def gate_scores(features: np.ndarray, params: GateParams) -> np.ndarray:
    """Unnormalised channel relevance ``W2 . relu(W1 f + b1) + b2`` per channel."""
    if features.shape != (params.n_channels, N_GATE_FEATURES):
        raise InvalidParameterError(
            f"expected features of shape {(params.n_channels, N_GATE_FEATURES)}, got {features.shape}"
        )
    hidden = np.maximum(0.0, np.einsum("mhf,mf->mh", params.W1, features) + params.b1)
    return np.einsum("mh,mh->m", params.W2, hidden) + params.b2


def channel_importance(features, params: GateParams):
    """``sigmoid(Wmeta F + bmeta)``; a scalar for vector ``Wmeta``, a vector for matrix ``Wmeta``."""
    F = np.asarray(features, dtype=float)
    W = params.Wmeta
    if W.shape[-1] != F.shape[-1]:
        raise InvalidParameterError(f"Wmeta expects {W.shape[-1]} features, got {F.shape[-1]}")
    z = W @ F + params.bmeta
    out = _sigmoid(z)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class AffinityChannelSet:
    pair: tuple[int, int]
    channels: np.ndarray
    gate_scores: np.ndarray
    weights: np.ndarray
    fused: float


def gate_and_fuse(channels, gate_scores, pair: tuple[int, int] = (-1, -1), alphas=None) -> AffinityChannelSet:
    """Softmax the gate scores into weights and take the weighted channel sum.

    With ``alphas`` (channel-importance scalars) the softmax weights are
    multiplied by them and renormalised.
    """
    a = np.asarray(channels, dtype=float).ravel()
    g = np.asarray(gate_scores, dtype=float).ravel()
    if a.size == 0:
        raise InvalidParameterError("at least one channel is required")
    if a.size != g.size:
        raise InvalidParameterError(f"{a.size} channels but {g.size} gate scores")
    w = softmax(g)
    if alphas is not None:
        w = w * np.asarray(alphas, dtype=float).ravel()
        total = w.sum()
        w = w / total if total > 0 else np.full(a.size, 1.0 / a.size)
    fused = float(np.dot(w, a))
    fused = min(float(a.max()), max(float(a.min()), fused))
    return AffinityChannelSet(tuple(pair), a, g, w, fused)


def layer_norm(x, gamma=1.0, beta=0.0, eps: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return gamma * (x - mu) / np.sqrt(var + eps) + beta


def layer_norm_fuse(features: Sequence, alphas: Sequence, params: GateParams | None = None) -> np.ndarray:
    """``sum_m alpha_m * LayerNorm(F_m)`` over channels."""
    if len(features) != len(alphas) or not features:
        raise InvalidParameterError("need one alpha per feature vector and at least one channel")
    feats = [np.asarray(f, dtype=float) for f in features]
    if len({f.shape for f in feats}) != 1:
        raise InvalidParameterError("feature vectors must share one shape")
    gamma = 1.0 if params is None else params.gamma
    beta = 0.0 if params is None else params.beta
    eps = 1e-5 if params is None else params.eps
    out = np.zeros_like(feats[0])
    for f, alpha in zip(feats, alphas):
        out = out + np.asarray(alpha, dtype=float) * layer_norm(f, gamma, beta, eps)
    return out


# --- tiling and the pair workload ---------------------------------------------


@dataclass(frozen=True)
class TilePlan:
    grid_x: int
    grid_y: int
    block_x: int
    block_y: int


def tile_plan(n: int, m_rows: int, block_x: int = 16, block_y: int = 16) -> TilePlan:
    if block_x <= 0 or block_y <= 0:
        raise InvalidParameterError("block dimensions must be positive")
    if n <= 0 or m_rows <= 0:
        raise InvalidParameterError("workload dimensions must be positive")
    return TilePlan(-(-n // block_x), -(-m_rows // block_y), block_x, block_y)


@dataclass(frozen=True)
class AffinityConfig:
    embedding: EmbeddingConfig = EmbeddingConfig()
    compose_gates: bool = False
    block_x: int = 16
    block_y: int = 16
    threads: int = 1


def compute_affinity_channels(
    sequences: Sequence[str],
    candidates,
    params: GateParams | None = None,
    costs: CostScheme = UNIT_COSTS,
    config: AffinityConfig = AffinityConfig(),
) -> list[AffinityChannelSet]:
    """Alignment and embedding channels, gated and fused, for every candidate pair.

    Output order follows ``candidates``. Pairs are grouped into square tiles of
    the (i, j) index grid and tiles run on a thread pool; each result lands in
    its candidate's slot, so the output is independent of the schedule.
    Embeddings are computed only for sequences that occur in some pair.
    """
    if hasattr(sequences, "sequences"):
        sequences = sequences.sequences
    pairs = candidates.pairs if hasattr(candidates, "pairs") else np.asarray(list(candidates), dtype=np.int64)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        return []
    n = len(sequences)
    if pairs.min() < 0 or pairs.max() >= n:
        raise InvalidParameterError("candidate index out of range")
    params = params or GateParams.zeros()
    if params.n_channels != 2:
        raise InvalidParameterError("gate parameters must describe exactly 2 channels")
    len_max = max(len(s) for s in sequences)

    needed = np.unique(pairs)
    embeddings = {int(i): embed_sequence(sequences[i], config.embedding, int(i)) for i in needed}

    plan = tile_plan(n, n, config.block_x, config.block_y)
    tile_id = (pairs[:, 0] // plan.block_x) * plan.grid_y + pairs[:, 1] // plan.block_y
    order = np.argsort(tile_id, kind="stable")
    bounds = np.flatnonzero(np.diff(tile_id[order])) + 1
    tiles = np.split(order, bounds)
    results: list[AffinityChannelSet | None] = [None] * pairs.shape[0]

    def run_tile(slots: np.ndarray) -> None:
        for slot in slots.tolist():
            i, j = int(pairs[slot, 0]), int(pairs[slot, 1])
            si, sj = sequences[i], sequences[j]
            channels = np.array([
                alignment_affinity(si, sj, costs),
                embedding_affinity(embeddings[i], embeddings[j]),
            ])
            feats = gate_features(channels, len(si), len(sj), len_max)
            scores = gate_scores(feats, params)
            alphas = None
            if config.compose_gates:
                alphas = np.array([channel_importance(f, params) for f in feats], dtype=float)
            results[slot] = gate_and_fuse(channels, scores, (i, j), alphas)

    if config.threads <= 1:
        for t in tiles:
            run_tile(t)
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            list(pool.map(run_tile, tiles))
    return results
