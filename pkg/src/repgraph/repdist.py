"""Distances between two repertoires: cluster-mass JS distance and graph edit distance.

Edit costs: every node of A is substituted by a node of B or deleted, every
unused node of B is inserted. An edge of A whose endpoints both map onto an
edge of B is substituted; all other edges of A are deleted and all unmatched
edges of B inserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .affinity import alignment_affinity
from .errors import DegenerateInputError, IncompatibleError, InvalidParameterError, SizeLimitError
from .faircluster import FairnessConfig, Partition, fair_partition, js_divergence

EXACT_LIMIT = 8
_BIG = 1e12


@dataclass(frozen=True)
class ClusterMass:
    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.ndim != 1 or m.size == 0 or np.any(m < 0) or abs(m.sum() - 1.0) > 1e-9:
            raise InvalidParameterError("cluster masses must be a non-negative vector summing to 1")
        object.__setattr__(self, "masses", m)

    @property
    def k(self) -> int:
        return int(self.masses.size)


def cluster_mass(partition: Partition) -> ClusterMass:
    """Fraction of nodes in each cluster, in cluster-index order."""
    if partition.n == 0:
        raise DegenerateInputError("empty partition")
    sizes = np.bincount(partition.assignment, minlength=partition.k).astype(float)
    return ClusterMass(sizes / sizes.sum())


def js_repertoire_distance(pa: ClusterMass, pb: ClusterMass) -> float:
    """Square root of the JS divergence between two cluster-mass vectors (a metric)."""
    if pa.k != pb.k:
        raise IncompatibleError(f"cluster counts differ: {pa.k} vs {pb.k}")
    return math.sqrt(js_divergence(pa.masses, pb.masses))


# --- labeled graphs --------------------------------------------------------------


@dataclass(frozen=True)
class LabeledGraph:
    """Small undirected graph with a string label per node and weighted edges."""

    labels: tuple[str, ...]
    edges: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        norm = {}
        for (i, j), w in dict(self.edges).items():
            if i == j:
                raise InvalidParameterError("self-loops are not supported")
            if not (0 <= i < len(self.labels) and 0 <= j < len(self.labels)):
                raise IndexError(f"edge ({i}, {j}) outside the node range")
            norm[(min(i, j), max(i, j))] = float(w)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "edges", norm)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def weight(self, i: int, j: int) -> float | None:
        return self.edges.get((min(i, j), max(i, j)))

    def incident(self, i: int) -> list[float]:
        return [w for (a, b), w in self.edges.items() if a == i or b == i]

    @classmethod
    def from_weighted(cls, graph, labels: Sequence[str]) -> "LabeledGraph":
        return cls(tuple(labels), {(i, j): w for i, j, w in graph.edges})


def normalized_edit_cost(a: str, b: str) -> float:
    return 1.0 - alignment_affinity(a, b)


@dataclass(frozen=True)
class GedCosts:
    node_sub: Callable[[str, str], float] = normalized_edit_cost
    node_indel: float = 1.0
    edge_sub: Callable[[float, float], float] = lambda w, v: abs(w - v)
    edge_indel: float = 1.0

    def __post_init__(self):
        if self.node_indel < 0 or self.edge_indel < 0:
            raise InvalidParameterError("indel costs must be >= 0")


UNIT_GED = GedCosts()


def mapping_cost(ga: LabeledGraph, gb: LabeledGraph, mapping: Sequence[int | None], costs: GedCosts = UNIT_GED) -> float:
    """Exact edit cost of ``mapping`` (``mapping[i]`` is a B node or ``None`` for deletion)."""
    used = set()
    total = 0.0
    for i, j in enumerate(mapping):
        if j is None:
            total += costs.node_indel
        else:
            if j in used:
                raise InvalidParameterError("mapping is not injective")
            used.add(j)
            total += costs.node_sub(ga.labels[i], gb.labels[j])
    total += costs.node_indel * (gb.n - len(used))
    matched = set()
    for (a1, a2), w in ga.edges.items():
        b1, b2 = mapping[a1], mapping[a2]
        v = gb.weight(b1, b2) if b1 is not None and b2 is not None else None
        if v is None:
            total += costs.edge_indel
        else:
            total += costs.edge_sub(w, v)
            matched.add((min(b1, b2), max(b1, b2)))
    total += costs.edge_indel * (gb.n_edges - len(matched))
    return total


def _edge_estimate(wa: list[float], wb: list[float], costs: GedCosts) -> float:
    """Optimal matching cost between two incident-edge multisets."""
    if not wa and not wb:
        return 0.0
    na, nb = len(wa), len(wb)
    c = np.full((na + nb, na + nb), _BIG)
    for x, w in enumerate(wa):
        for y, v in enumerate(wb):
            c[x, y] = costs.edge_sub(w, v)
        c[x, nb + x] = costs.edge_indel
    for y in range(nb):
        c[na + y, y] = costs.edge_indel
    c[na:, nb:] = 0.0
    r, s = linear_sum_assignment(c)
    return float(c[r, s].sum())


def _assignment_matrix(ga: LabeledGraph, gb: LabeledGraph, costs: GedCosts) -> np.ndarray:
    na, nb = ga.n, gb.n
    c = np.full((na + nb, na + nb), _BIG)
    inc_a = [ga.incident(i) for i in range(na)]
    inc_b = [gb.incident(j) for j in range(nb)]
    for i in range(na):
        for j in range(nb):
            c[i, j] = costs.node_sub(ga.labels[i], gb.labels[j]) + 0.5 * _edge_estimate(inc_a[i], inc_b[j], costs)
        c[i, nb + i] = costs.node_indel + 0.5 * costs.edge_indel * len(inc_a[i])
    for j in range(nb):
        c[na + j, j] = costs.node_indel + 0.5 * costs.edge_indel * len(inc_b[j])
    c[na:, nb:] = 0.0
    return c


def ged_assignment(ga: LabeledGraph, gb: LabeledGraph, costs: GedCosts = UNIT_GED,
                   return_mapping: bool = False):
    """Upper bound on GED from a node assignment.

    A square cost matrix of size ``|V_A| + |V_B|`` holds substitution costs
    (node cost plus half the best matching of incident edges), deletions on
    one diagonal block and insertions on the other. The optimal assignment
    induces a node mapping whose exact edit cost is returned.
    """
    if ga.n == 0 or gb.n == 0:
        mapping: list[int | None] = [None] * ga.n
    else:
        c = _assignment_matrix(ga, gb, costs)
        rows, cols = linear_sum_assignment(c)
        mapping = [None] * ga.n
        for r, s in zip(rows, cols):
            if r < ga.n and s < gb.n:
                mapping[r] = int(s)
    cost = mapping_cost(ga, gb, mapping, costs)
    return (cost, mapping) if return_mapping else cost


def ged_exact(ga: LabeledGraph, gb: LabeledGraph, costs: GedCosts = UNIT_GED,
              return_mapping: bool = False, limit: int = EXACT_LIMIT):
    """Minimal edit cost over all partial injective node mappings.

    Depth-first branch and bound over the nodes of A. The bound adds, to the
    cost already fixed, an optimal assignment of the remaining nodes using
    node costs only (edge costs are non-negative, so it never overestimates).
    The assignment heuristic supplies the initial incumbent.
    """
    if max(ga.n, gb.n) > limit:
        raise SizeLimitError(
            f"exact GED is capped at {limit} nodes (got {ga.n} and {gb.n}); use ged_assignment"
        )
    na, nb = ga.n, gb.n
    node_sub = np.array([[costs.node_sub(a, b) for b in gb.labels] for a in ga.labels]).reshape(na, nb)
    best_cost, best_map = ged_assignment(ga, gb, costs, return_mapping=True)
    mapping: list[int | None] = [None] * na
    used = np.zeros(nb, dtype=bool)
    eps = 1e-12

    def fixed_edges(i: int, j: int | None) -> float:
        """Edge cost decided by mapping node ``i`` to ``j``, given nodes ``< i`` are mapped."""
        cost = 0.0
        for p in range(i):
            w = ga.weight(p, i)
            q = mapping[p]
            v = gb.weight(q, j) if (q is not None and j is not None) else None
            if w is not None:
                cost += costs.edge_indel if v is None else costs.edge_sub(w, v)
            elif v is not None:
                cost += costs.edge_indel
        return cost

    def bound(i: int) -> float:
        rest_a = na - i
        free = np.flatnonzero(~used)
        rest_b = free.size
        if rest_a == 0:
            return costs.node_indel * rest_b
        size = rest_a + rest_b
        c = np.full((size, size), _BIG)
        if rest_b:
            c[:rest_a, :rest_b] = node_sub[i:, free]
        c[np.arange(rest_a), rest_b + np.arange(rest_a)] = costs.node_indel
        c[rest_a + np.arange(rest_b), np.arange(rest_b)] = costs.node_indel
        c[rest_a:, rest_b:] = 0.0
        r, s = linear_sum_assignment(c)
        return float(c[r, s].sum())

    def search(i: int, acc: float) -> None:
        nonlocal best_cost, best_map
        if i == na:
            total = acc + costs.node_indel * int((~used).sum())
            # B edges between nodes not in the image were never charged
            image = {q for q in mapping if q is not None}
            for (b1, b2) in gb.edges:
                if b1 not in image or b2 not in image:
                    total += costs.edge_indel
            if total < best_cost - eps:
                best_cost, best_map = total, list(mapping)
            return
        options = [(float(node_sub[i, j]), int(j)) for j in np.flatnonzero(~used)]
        options.sort()
        options.append((costs.node_indel, None))
        for node_cost, j in options:
            step = acc + node_cost + fixed_edges(i, j)
            mapping[i] = j
            if j is not None:
                used[j] = True
            if step + bound(i + 1) < best_cost - eps:
                search(i + 1, step)
            if j is not None:
                used[j] = False
            mapping[i] = None

    search(0, 0.0)
    return (best_cost, best_map) if return_mapping else best_cost


def ged_normalized(ged: float, ga: LabeledGraph, gb: LabeledGraph) -> float:
    """``ged / (max(|V|) + max(|E|))``; 0 when both graphs are empty."""
    if ged < 0:
        raise InvalidParameterError("ged must be >= 0")
    denom = max(ga.n, gb.n) + max(ga.n_edges, gb.n_edges)
    return 0.0 if denom == 0 else ged / denom


def repertoire_distance(ga, labels_a, gb, labels_b, mode: str = "js", k: int = 2, seed: int = 0,
                        costs: GedCosts = UNIT_GED) -> tuple[float, dict]:
    """Distance between two weighted graphs in ``js``, ``ged`` or ``ged-approx`` mode.

    ``js`` clusters both graphs with the same procedure (unpenalized, same
    ``k`` and seed) and compares cluster masses.
    """
    if mode == "js":
        pa = cluster_mass(fair_partition(ga, k, FairnessConfig(), seed=seed))
        pb = cluster_mass(fair_partition(gb, k, FairnessConfig(), seed=seed))
        value = js_repertoire_distance(pa, pb)
        return value, {"mode": mode, "k": k, "seed": seed, "mass_a": pa.masses.tolist(), "mass_b": pb.masses.tolist()}
    la = LabeledGraph.from_weighted(ga, labels_a)
    lb = LabeledGraph.from_weighted(gb, labels_b)
    if mode == "ged":
        value = ged_exact(la, lb, costs)
    elif mode == "ged-approx":
        value = ged_assignment(la, lb, costs)
    else:
        raise InvalidParameterError(f"unknown distance mode {mode!r}")
    return value, {"mode": mode, "ged": value, "normalized": ged_normalized(value, la, lb),
                   "nodes": [la.n, lb.n], "edges": [la.n_edges, lb.n_edges]}
