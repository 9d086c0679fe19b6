"""Clustering under a cohesion + equity objective.

The objective is the within-cluster sum of squares plus ``lam`` times a
subgroup penalty. Two penalties are available:

* ``js``: for every cluster ``i`` and subgroup ``g`` the share of ``g`` that
  lands in ``i`` (``r = |C_i & g| / |g|``) is compared with the cluster's share
  of all points (``s = |C_i| / n``) through the Jensen-Shannon divergence of
  the two-point distributions ``(r, 1 - r)`` and ``(s, 1 - s)``.
* ``wcd``: ``sum_g sum_i w_g * |r_ig - tau_g|`` with ``w_g = 1 / |g|``.

Graph inputs are clustered in a spectral embedding: the first ``k - 1``
non-trivial eigenvectors of a degree-regularised normalized Laplacian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .errors import (
    DegenerateInputError,
    InfeasibleError,
    InvalidDistributionError,
    InvalidParameterError,
)

LN2 = math.log(2.0)


# --- divergences ------------------------------------------------------------------


def _xlogy_ratio(p: np.ndarray, m: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast(p, m).shape)
    p, m = np.broadcast_arrays(p, m)
    mask = p > 0
    out[mask] = p[mask] * np.log(p[mask] / m[mask])
    return out


def js_divergence(p, q, check: bool = True) -> float:
    """Jensen-Shannon divergence in nats, bounded by ``ln 2``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if check:
        if p.shape != q.shape or p.ndim != 1:
            raise InvalidDistributionError(f"shape mismatch {p.shape} vs {q.shape}")
        for name, d in (("p", p), ("q", q)):
            if np.any(d < 0) or not np.all(np.isfinite(d)):
                raise InvalidDistributionError(f"{name} has negative or non-finite mass")
            if abs(d.sum() - 1.0) > 1e-9:
                raise InvalidDistributionError(f"{name} sums to {d.sum()!r}, not 1")
    m = 0.5 * (p + q)
    js = 0.5 * _xlogy_ratio(p, m).sum() + 0.5 * _xlogy_ratio(q, m).sum()
    return float(min(max(js, 0.0), LN2))


def js_two_point(r, s) -> np.ndarray:
    """Elementwise JS divergence between ``(r, 1-r)`` and ``(s, 1-s)``."""
    r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    m = 0.5 * (r + s)
    out = 0.5 * (_xlogy_ratio(r, m) + _xlogy_ratio(1 - r, 1 - m) + _xlogy_ratio(s, m) + _xlogy_ratio(1 - s, 1 - m))
    return np.clip(out, 0.0, LN2)


# --- configuration and partitions ------------------------------------------------


@dataclass(frozen=True)
class FairnessConfig:
    """Penalty selection.

    Attributes:
        mode: ``"js"`` or ``"wcd"``.
        lam: penalty weight, >= 0.
        tau_g: wcd target coverage; a float for every subgroup or a per-subgroup map.
        weights: optional per-subgroup wcd weights; default ``1/|g|``.
    """

    mode: str = "js"
    lam: float = 0.0
    tau_g: float | Mapping[str, float] = 0.2
    weights: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.mode not in ("js", "wcd"):
            raise InvalidParameterError(f"unknown fairness mode {self.mode!r}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise InvalidParameterError(f"lambda must be finite and >= 0, got {self.lam}")
        taus = self.tau_g.values() if isinstance(self.tau_g, Mapping) else [self.tau_g]
        for t in taus:
            if not 0 < t <= 1:
                raise InvalidParameterError(f"tau_g must lie in (0, 1], got {t}")


class _Groups:
    """Integer coding of subgroup labels; unlabeled points get -1."""

    def __init__(self, labels: Sequence | None, n: int):
        if labels is None:
            labels = [None] * n
        if len(labels) != n:
            raise InvalidParameterError(f"{len(labels)} subgroup labels for {n} points")
        self.names: list = []
        index: dict = {}
        codes = np.full(n, -1, dtype=np.int64)
        for i, lab in enumerate(labels):
            if lab is None:
                continue
            if lab not in index:
                index[lab] = len(self.names)
                self.names.append(lab)
            codes[i] = index[lab]
        self.codes = codes
        self.sizes = np.bincount(codes[codes >= 0], minlength=len(self.names)).astype(float)

    @property
    def count(self) -> int:
        return len(self.names)


@dataclass(eq=False)
class Partition:
    k: int
    assignment: np.ndarray
    sizes: np.ndarray
    contingency: np.ndarray  # (k, n_groups)
    groups: list = field(default_factory=list)
    centroids: np.ndarray | None = None
    history: list[float] = field(default_factory=list)
    iterations: int = 0

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    def members(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == i)


def make_partition(assignment, k: int | None = None, subgroups: Sequence | None = None,
                   points: np.ndarray | None = None) -> Partition:
    """Build a :class:`Partition` (sizes, contingency, centroids) from an assignment vector."""
    a = np.asarray(assignment, dtype=np.int64)
    if a.ndim != 1 or a.size == 0:
        raise DegenerateInputError("assignment must be a non-empty vector")
    k = int(a.max()) + 1 if k is None else int(k)
    if a.min() < 0 or a.max() >= k:
        raise InvalidParameterError("assignment labels must lie in [0, k)")
    groups = _Groups(subgroups, a.size)
    sizes = np.bincount(a, minlength=k).astype(np.int64)
    cont = _contingency(a, groups.codes, k, groups.count)
    cents = _centroids(np.asarray(points, dtype=float), a, k) if points is not None else None
    return Partition(k, a, sizes, cont, list(groups.names), cents)


def _contingency(a, codes, k, n_groups) -> np.ndarray:
    cont = np.zeros((k, n_groups), dtype=np.int64)
    mask = codes >= 0
    np.add.at(cont, (a[mask], codes[mask]), 1)
    return cont


def _centroids(x: np.ndarray, a: np.ndarray, k: int, previous: np.ndarray | None = None) -> np.ndarray:
    cents = np.zeros((k, x.shape[1])) if previous is None else previous.copy()
    for i in range(k):
        mask = a == i
        if mask.any():
            cents[i] = x[mask].mean(axis=0)
    return cents


# --- objective -----------------------------------------------------------------------


class _Penalty:
    """Row-wise penalty of a contingency table; rows are clusters."""

    def __init__(self, config: FairnessConfig, groups: _Groups, n: int):
        self.mode = config.mode
        self.n = n
        self.gsize = np.where(groups.sizes > 0, groups.sizes, 1.0)
        if config.mode == "wcd":
            if isinstance(config.tau_g, Mapping):
                self.tau = np.array([config.tau_g.get(g, 0.2) for g in groups.names], dtype=float)
            else:
                self.tau = np.full(groups.count, float(config.tau_g))
            if config.weights is not None:
                self.w = np.array([config.weights[g] for g in groups.names], dtype=float)
            else:
                self.w = 1.0 / self.gsize

    def rows(self, cont: np.ndarray, sizes: np.ndarray) -> np.ndarray:
        """Penalty of each row; ``cont`` is (..., G), ``sizes`` is (...)."""
        r = cont / self.gsize
        if self.mode == "js":
            s = np.asarray(sizes, dtype=float)[..., None] / self.n
            return js_two_point(r, np.broadcast_to(s, r.shape)).sum(axis=-1)
        return (self.w * np.abs(r - self.tau)).sum(axis=-1)


def _as_points(data) -> np.ndarray:
    if hasattr(data, "src") and hasattr(data, "n"):
        raise InvalidParameterError("pass graph input through spectral_embedding first")
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def cohesion(points, partition: Partition) -> float:
    x = _as_points(points)
    cents = _centroids(x, partition.assignment, partition.k)
    return float(((x - cents[partition.assignment]) ** 2).sum())


def penalty(partition: Partition, config: FairnessConfig, subgroups: Sequence | None = None) -> float:
    """Fairness penalty term (without ``lam``)."""
    groups = _Groups(subgroups, partition.n) if subgroups is not None else None
    cont = partition.contingency if groups is None else _contingency(partition.assignment, groups.codes, partition.k, groups.count)
    if groups is None:
        groups = _Groups(None, partition.n)
        groups.names = list(partition.groups)
        groups.sizes = cont.sum(axis=0).astype(float)
    if groups.count == 0:
        return 0.0
    return float(_Penalty(config, groups, partition.n).rows(cont, partition.sizes).sum())


def objective(points, partition: Partition, config: FairnessConfig, subgroups: Sequence | None = None) -> float:
    """Cohesion plus ``config.lam`` times the penalty.

    Graph inputs are embedded with :func:`spectral_embedding` (``k`` =
    ``partition.k``) before the cohesion term is computed.
    """
    if config.lam < 0:
        raise InvalidParameterError("lambda must be >= 0")
    x = graph_points(points, partition.k) if _is_graph(points) else points
    total = cohesion(x, partition)
    if config.lam > 0:
        total += config.lam * penalty(partition, config, subgroups)
    return total


def max_cluster_variance(points, partition: Partition) -> float:
    """Largest within-cluster variance, mean squared distance to the centroid."""
    x = _as_points(points)
    cents = _centroids(x, partition.assignment, partition.k)
    d = ((x - cents[partition.assignment]) ** 2).sum(axis=1)
    best = 0.0
    for i in range(partition.k):
        mask = partition.assignment == i
        if mask.any():
            best = max(best, float(d[mask].mean()))
    return best


# --- spectral embedding ------------------------------------------------------------


def _is_graph(obj) -> bool:
    return hasattr(obj, "src") and hasattr(obj, "weight") and hasattr(obj, "n")


def spectral_embedding(graph, dim: int, regularization: float = 1.0) -> np.ndarray:
    """First ``dim`` non-trivial eigenvectors of a degree-regularised normalized Laplacian.

    The adjacency gets ``regularization * mean_degree / n`` added to every
    off-diagonal entry before ``L = I - D^-1/2 W D^-1/2`` is formed, which
    keeps isolated nodes and tiny components from claiming the leading
    eigenvectors. The trivial eigenvector ``D^1/2 1`` is deflated. Each
    eigenvector's sign makes its largest-magnitude entry positive. Rows are
    not normalised.
    """
    n = graph.n
    if graph.n_edges == 0:
        raise DegenerateInputError("graph has no edges; spectral embedding is undefined")
    if dim < 1:
        raise InvalidParameterError("dim must be >= 1")
    if regularization < 0:
        raise InvalidParameterError("regularization must be >= 0")
    w = graph.adjacency()
    deg = np.asarray(w.sum(axis=1)).ravel()
    r = regularization * deg.sum() / n / n
    deg = deg + r * (n - 1)
    dinv = np.zeros(n)
    nz = deg > 0
    dinv[nz] = 1.0 / np.sqrt(deg[nz])
    u = np.sqrt(deg)
    u /= np.linalg.norm(u)
    dim = min(dim, n - 1)
    if n <= 4096:
        dense = w.toarray() + r * (np.ones((n, n)) - np.eye(n))
        lap = np.eye(n) - dinv[:, None] * dense * dinv[None, :] + 3.0 * np.outer(u, u)
        _, vecs = np.linalg.eigh(lap)
        vecs = vecs[:, :dim]
    else:
        # largest eigenpairs of (I + D^-1/2 W D^-1/2 - 3uu') are the smallest of the deflated L
        norm_adj = (sp.diags(dinv) @ w @ sp.diags(dinv)).tocsr()
        from scipy.sparse.linalg import LinearOperator

        def matvec(v):
            v = np.ravel(v)
            reg = r * dinv * (dinv @ v) - r * dinv * dinv * v
            return v + norm_adj @ v + reg - 3.0 * u * (u @ v)

        op = LinearOperator((n, n), matvec=matvec, dtype=float)
        vals, vecs = eigsh(op, k=dim, which="LA", v0=np.full(n, 1.0 / math.sqrt(n)))
        vecs = vecs[:, np.argsort(-vals, kind="stable")]
    for c in range(vecs.shape[1]):
        j = int(np.argmax(np.abs(vecs[:, c])))
        if vecs[j, c] < 0:
            vecs[:, c] = -vecs[:, c]
    return np.ascontiguousarray(vecs)


def graph_points(graph, k: int, regularization: float = 1.0) -> np.ndarray:
    """Clustering coordinates for ``k`` clusters: ``max(k - 1, 1)`` non-trivial eigenvectors."""
    return spectral_embedding(graph, max(k - 1, 1), regularization)


# --- penalized Lloyd ---------------------------------------------------------------


def farthest_point_seeds(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy farthest-point seeding: a random first point, then argmax of min distance."""
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    dmin = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        j = int(np.argmax(dmin))
        chosen.append(j)
        dmin = np.minimum(dmin, ((x - x[j]) ** 2).sum(axis=1))
    return np.array(chosen, dtype=np.int64)


def _sqdist(x: np.ndarray, cents: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)


def fair_partition(
    data,
    k: int,
    config: FairnessConfig | None = None,
    subgroups: Sequence | None = None,
    seed: int = 0,
    max_iter: int = 100,
    init: np.ndarray | None = None,
) -> Partition:
    """Penalized Lloyd clustering of a point set or a :class:`~repgraph.graph.WeightedGraph`.

    Each assignment step visits points in index order and moves a point to
    the cluster minimising squared distance to the (fixed) centroid plus
    ``lam`` times the exact change in penalty, using the running contingency
    table. A point moves only if that strictly lowers its cost; ties go to
    the lower cluster index. The update step recomputes centroids. The loop
    stops when no point moves or after ``max_iter`` iterations.

    Args:
        data: (n, d) array or a weighted graph (clustered in :func:`graph_points`).
        k: number of clusters.
        config: penalty settings; default is unpenalized.
        subgroups: per-point subgroup labels (``None`` for unlabeled points).
        seed: seeds the first farthest-point centre.
        max_iter: iteration cap.
        init: optional initial assignment, overriding seeding.

    Returns:
        The partition; ``history`` holds the objective after each iteration.
    """
    config = config or FairnessConfig()
    if _is_graph(data):
        if k > data.n:
            raise InfeasibleError(f"k={k} exceeds n={data.n}")
        x = graph_points(data, k)
    else:
        x = _as_points(data)
    n = x.shape[0]
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    if k > n:
        raise InfeasibleError(f"k={k} exceeds n={n}")
    groups = _Groups(subgroups, n)
    use_pen = config.lam > 0 and groups.count > 0
    pen = _Penalty(config, groups, n) if use_pen else None
    lam = config.lam

    if init is None:
        seeds = farthest_point_seeds(x, k, np.random.default_rng(seed))
        cents = x[seeds].copy()
        a = np.argmin(_sqdist(x, cents), axis=1).astype(np.int64)
    else:
        a = np.asarray(init, dtype=np.int64).copy()
        cents = _centroids(x, a, k, x[farthest_point_seeds(x, k, np.random.default_rng(seed))])

    sizes = np.bincount(a, minlength=k).astype(np.int64)
    cont = _contingency(a, groups.codes, k, groups.count)

    def total() -> float:
        c = _centroids(x, a, k, cents)
        val = float(((x - c[a]) ** 2).sum())
        if use_pen:
            val += lam * float(pen.rows(cont, sizes).sum())
        return val

    history: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        moved = 0
        dist = _sqdist(x, cents)
        row_pen = pen.rows(cont, sizes) if use_pen else None
        for p in range(n):
            cur = a[p]
            cost = dist[p].copy()
            if use_pen:
                g = groups.codes[p]
                add = cont.copy()
                rem_row = cont[cur].copy()
                if g >= 0:
                    add[:, g] += 1
                    rem_row[g] -= 1
                gain_src = pen.rows(rem_row, sizes[cur] - 1) - row_pen[cur]
                delta = pen.rows(add, sizes + 1) - row_pen + gain_src
                delta[cur] = 0.0
                cost += lam * delta
            best = int(np.argmin(cost))
            if best != cur and cost[best] < cost[cur]:
                g = groups.codes[p]
                sizes[cur] -= 1
                sizes[best] += 1
                if g >= 0:
                    cont[cur, g] -= 1
                    cont[best, g] += 1
                if use_pen:
                    row_pen[cur] = pen.rows(cont[cur], sizes[cur])
                    row_pen[best] = pen.rows(cont[best], sizes[best])
                a[p] = best
                moved += 1
        cents = _centroids(x, a, k, cents)
        _reseed_empty(x, a, cents, sizes, cont, groups, total)
        history.append(total())
        if moved == 0:
            break

    part = Partition(k, a, sizes.copy(), cont.copy(), list(groups.names), _centroids(x, a, k, cents), history, it)
    return part


def _reseed_empty(x, a, cents, sizes, cont, groups, total) -> None:
    """Move the point farthest from its centroid into each empty cluster, if that does not raise the objective."""
    for e in np.flatnonzero(sizes == 0):
        d = ((x - cents[a]) ** 2).sum(axis=1)
        d[sizes[a] <= 1] = -1.0  # never empty another cluster
        p = int(np.argmax(d))
        if d[p] <= 0:
            continue
        before = total()
        src, g = a[p], groups.codes[p]
        a[p] = e
        sizes[src] -= 1
        sizes[e] += 1
        if g >= 0:
            cont[src, g] -= 1
            cont[e, g] += 1
        if total() > before:
            a[p] = src
            sizes[src] += 1
            sizes[e] -= 1
            if g >= 0:
                cont[src, g] += 1
                cont[e, g] -= 1
            continue
        cents[:] = _centroids(x, a, len(cents), cents)


def lloyd_reference(x, k: int, seed: int = 0, max_iter: int = 100) -> np.ndarray:
    """Plain Lloyd iterations with the same seeding and tie rules; used as an oracle."""
    x = _as_points(x)
    cents = x[farthest_point_seeds(x, k, np.random.default_rng(seed))].copy()
    a = np.argmin(_sqdist(x, cents), axis=1)
    for _ in range(max_iter):
        d = _sqdist(x, cents)
        best = np.argmin(d, axis=1)
        keep = d[np.arange(len(a)), a] <= d[np.arange(len(a)), best]
        new = np.where(keep, a, best)
        cents = _centroids(x, new, k, cents)
        changed = np.any(new != a)
        a = new
        if not changed:
            break
    return a


# --- equity report -----------------------------------------------------------------


@dataclass(frozen=True)
class EquityReport:
    r_prop: float
    d_eq: float
    js_disparity: float
    coverage: dict
    purity: float | None
    deviation: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 0)))
    groups: tuple = ()

    def to_dict(self) -> dict:
        return {
            "r_prop": self.r_prop,
            "d_eq": self.d_eq,
            "js_disparity": self.js_disparity,
            "coverage": {str(g): v for g, v in self.coverage.items()},
            "purity": self.purity,
        }


def purity(assignment, labels) -> float:
    """Fraction of points whose cluster's majority label equals their own."""
    a = np.asarray(assignment)
    _, lab = np.unique(np.asarray(labels, dtype=object).astype(str), return_inverse=True)
    total = 0
    for c in np.unique(a):
        total += int(np.bincount(lab[a == c]).max())
    return total / a.size


def equity_report(partition: Partition, subgroups: Sequence | None = None, labels: Sequence | None = None) -> EquityReport:
    """Proportionality, deviation, JS disparity, coverage and purity of ``partition``.

    Args:
        partition: clustering to score.
        subgroups: per-point subgroup labels; defaults to the partition's own table.
        labels: optional reference labels for purity.
    """
    n = partition.n
    if subgroups is not None:
        groups = _Groups(subgroups, n)
        names = groups.names
        cont = _contingency(partition.assignment, groups.codes, partition.k, groups.count)
        gsize = groups.sizes
    else:
        names = list(partition.groups)
        cont = partition.contingency
        gsize = cont.sum(axis=0).astype(float)
    if not names:
        dev = np.zeros((partition.k, 0))
        return EquityReport(0.0, 0.0, 0.0, {}, purity(partition.assignment, labels) if labels is not None else None, dev, ())
    r = cont / np.where(gsize > 0, gsize, 1.0)
    s = partition.sizes / n
    dev = np.abs(r - s[:, None])
    js = js_two_point(r, np.broadcast_to(s[:, None], r.shape))
    best = r.max(axis=0)
    coverage = {g: float(best[j]) for j, g in enumerate(names)}
    pur = purity(partition.assignment, labels) if labels is not None else None
    return EquityReport(
        r_prop=float(best.mean()),
        d_eq=float(dev.max()),
        js_disparity=float(js.max()),
        coverage=coverage,
        purity=pur,
        deviation=dev,
        groups=tuple(names),
    )


def coverage(partition: Partition, group, subgroups: Sequence | None = None) -> float:
    rep = equity_report(partition, subgroups)
    if group not in rep.coverage:
        raise KeyError(f"unknown subgroup {group!r}")
    return rep.coverage[group]
