"""Similarity matrix assembly, random-matrix edge thresholding and graph export.

The spectral test works on all off-diagonal entries (absent pairs count as
0) standardised robustly (median centre, MAD scale) and divided by
``sqrt(n)``. Squared eigenvalues of that matrix are compared with the
Marchenko-Pastur upper edge ``(1 + sqrt(q))**2``, where ``q`` is the mean
stored row degree over ``n``; for a dense matrix ``q = 1`` and the edge is 4,
the squared semicircle edge of a standardised symmetric noise matrix.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import DegenerateInputError, InvalidParameterError

DEFAULT_TAU = 0.7
DENSE_LIMIT = 4096
_MAD_TO_SD = 1.4826


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Upper-triangle storage of a symmetric matrix with implicit unit diagonal."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def get(self, i: int, j: int) -> float | None:
        if i == j:
            return 1.0
        lo, hi = min(i, j), max(i, j)
        pos = np.searchsorted(self.rows * self.n + self.cols, lo * self.n + hi)
        if pos < self.nnz and self.rows[pos] == lo and self.cols[pos] == hi:
            return float(self.values[pos])
        return None

    def to_sparse(self, values: np.ndarray | None = None) -> sp.csr_matrix:
        """Symmetric off-diagonal matrix (no diagonal) with optional replacement values."""
        v = self.values if values is None else values
        r = np.concatenate([self.rows, self.cols])
        c = np.concatenate([self.cols, self.rows])
        return sp.csr_matrix((np.concatenate([v, v]), (r, c)), shape=(self.n, self.n))


def _triples(affinities) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows, cols, vals = [], [], []
    for a in affinities:
        if hasattr(a, "pair"):
            (i, j), w = a.pair, a.fused
        else:
            i, j, w = a
        rows.append(int(i))
        cols.append(int(j))
        vals.append(float(w))
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals, dtype=float)


def assemble_similarity(n: int, affinities: Iterable) -> SimilarityMatrix:
    """Collect fused affinities into a symmetric matrix; repeated pairs keep their maximum."""
    rows, cols, vals = _triples(affinities)
    if rows.size:
        if min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= n:
            raise IndexError(f"pair index outside [0, {n})")
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    keep = lo != hi
    lo, hi, vals = lo[keep], hi[keep], vals[keep]
    if lo.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return SimilarityMatrix(n, empty, empty, np.zeros(0))
    codes = lo * n + hi
    order = np.lexsort((vals, codes))
    codes, vals = codes[order], vals[order]
    last = np.append(np.flatnonzero(codes[1:] != codes[:-1]), codes.size - 1)
    codes, vals = codes[last], vals[last]  # max sorts last within each code
    return SimilarityMatrix(n, codes // n, codes % n, vals)


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray  # descending squared eigenvalues of the standardised matrix
    bulk_edge: float
    aspect_ratio: float
    weight_threshold: float
    n_above: int
    mode: str
    center: float = 0.0
    scale: float = 0.0
    n_signal: int = 0


def _order_stat(sorted_vals: np.ndarray, const: float, count: int, k: int) -> float:
    """k-th smallest element of ``sorted_vals`` merged with ``count`` copies of ``const``."""
    below = int(np.searchsorted(sorted_vals, const, side="left"))
    if k < below:
        return float(sorted_vals[k])
    if k < below + count:
        return float(const)
    return float(sorted_vals[k - count])


def _median_with(values: np.ndarray, const: float, count: int) -> float:
    vals = np.sort(values)
    total = vals.size + count
    lo, hi = (total - 1) // 2, total // 2
    return 0.5 * (_order_stat(vals, const, count, lo) + _order_stat(vals, const, count, hi))


def _standardization(matrix: SimilarityMatrix) -> tuple[float, float]:
    """Median and MAD-based scale over all off-diagonal entries, absent pairs counting as 0.

    When more than half of the deviations vanish (typical for sparse
    matrices) the scale falls back to the root mean square deviation of the
    stored entries.
    """
    n_pairs = matrix.n * (matrix.n - 1) // 2
    n_absent = n_pairs - matrix.nnz
    w = matrix.values
    center = _median_with(w, 0.0, n_absent)
    scale = _MAD_TO_SD * _median_with(np.abs(w - center), abs(center), n_absent)
    if scale <= 0:
        scale = float(np.sqrt(np.mean((w - center) ** 2)))
    return center, scale


class _ZMatrix:
    """Standardised symmetric matrix: stored z-values plus a constant for absent pairs."""

    def __init__(self, matrix: SimilarityMatrix, absent: float):
        self.n = matrix.n
        self.rows, self.cols = matrix.rows, matrix.cols
        self.absent = absent

    def dense(self, z: np.ndarray) -> np.ndarray:
        out = np.full((self.n, self.n), self.absent)
        out[self.rows, self.cols] = z
        out[self.cols, self.rows] = z
        np.fill_diagonal(out, 0.0)
        return out

    def operator(self, z: np.ndarray) -> LinearOperator:
        d = z - self.absent
        r = np.concatenate([self.rows, self.cols])
        c = np.concatenate([self.cols, self.rows])
        s = sp.csr_matrix((np.concatenate([d, d]), (r, c)), shape=(self.n, self.n))
        a = self.absent
        return LinearOperator((self.n, self.n), matvec=lambda v: s @ v + a * (v.sum() - v), dtype=float)

    def eig(self, z: np.ndarray, vectors: bool = False, k_sparse: int = 64):
        """Eigenvalues (descending magnitude) and optionally eigenvectors."""
        if self.n <= DENSE_LIMIT:
            dense = self.dense(z)
            if vectors:
                vals, vecs = np.linalg.eigh(dense)
            else:
                vals, vecs = np.linalg.eigvalsh(dense), None
        else:
            k = min(k_sparse, self.n - 2)
            v0 = np.full(self.n, 1.0 / math.sqrt(self.n))
            out = eigsh(self.operator(z), k=k, which="LM", v0=v0, return_eigenvectors=vectors)
            vals, vecs = out if vectors else (out, None)
        order = np.argsort(-np.abs(vals), kind="stable")
        return vals[order], (vecs[:, order] if vectors else None)

    def top_sq(self, z: np.ndarray) -> float:
        if self.n <= DENSE_LIMIT:
            return float(np.max(np.linalg.eigvalsh(self.dense(z)) ** 2))
        v0 = np.full(self.n, 1.0 / math.sqrt(self.n))
        vals = eigsh(self.operator(z), k=1, which="LM", v0=v0, return_eigenvectors=False)
        return float(vals[0] ** 2)


def rmt_bulk_cutoff(
    matrix: SimilarityMatrix,
    mode: str = "mp",
    default_tau: float = DEFAULT_TAU,
    shuffles: int = 20,
    seed: int = 0,
) -> SpectrumReport:
    """Estimate the noise bulk edge of ``matrix`` and turn it into a weight threshold.

    Every off-diagonal entry (absent pairs count as 0) is centred on the
    median and divided by ``scale * sqrt(n)``, where ``scale`` is the
    MAD-based standard deviation of the entries.

    ``mp``: the bulk edge is the Marchenko-Pastur edge. Eigenpairs whose
    magnitude clears the edge by a finite-size margin (``1.3 * n**(-2/3)``
    relative, about three Tracy-Widom units) are summed into a signal
    reconstruction. If a fraction ``p`` of stored entries has positive
    signal, the threshold keeps the top ``p`` of stored weights.

    ``shuffle``: the bulk edge is the largest squared eigenvalue over
    ``shuffles`` random permutations of the stored weights across the stored
    positions (every node keeps its degree). The threshold is the largest
    weight ``t`` for which the entries below ``t`` show no eigenvalue above
    the edge, found by bisection over the sorted distinct weights.

    With no stored entries, or no spread in the entries, there is no spectral
    evidence and ``default_tau`` is returned.
    """
    if matrix.n < 3:
        raise DegenerateInputError("RMT thresholding needs at least 3 nodes")
    if mode not in ("mp", "shuffle"):
        raise InvalidParameterError(f"unknown RMT mode {mode!r}")
    n, w = matrix.n, matrix.values
    q = min(1.0, 2.0 * matrix.nnz / n / n)
    edge = (1.0 + math.sqrt(q)) ** 2
    if matrix.nnz == 0:
        return SpectrumReport(np.zeros(n), edge, q, default_tau, 0, mode)
    center, scale = _standardization(matrix)
    if scale <= 0:
        return SpectrumReport(np.zeros(n), edge, q, default_tau, 0, mode, center, 0.0)

    norm = scale * math.sqrt(n)
    z = (w - center) / norm
    zm = _ZMatrix(matrix, -center / norm)

    if mode == "shuffle":
        rng = np.random.default_rng(seed)
        edge = 0.0
        for _ in range(shuffles):
            edge = max(edge, zm.top_sq(rng.permutation(z)))

    vals, vecs = zm.eig(z, vectors=(mode == "mp"))
    sq = vals**2
    n_above = int(np.count_nonzero(sq > edge))
    eigenvalues = np.sort(sq)[::-1]

    n_signal = 0
    if mode == "mp":
        significant = np.abs(vals) > math.sqrt(edge) * (1.0 + 1.3 * n ** (-2.0 / 3.0))
        n_signal = int(significant.sum())
        keep = 0
        if n_signal:
            u = vecs[:, significant]
            signal = np.einsum("ek,k,ek->e", u[matrix.rows], vals[significant], u[matrix.cols])
            keep = int(np.count_nonzero(signal > 0))
        tau = _keep_top(w, keep)
    else:
        tau = _shuffle_threshold(matrix, z, zm, edge)
        n_signal = n_above
    return SpectrumReport(eigenvalues, edge, q, tau, n_above, mode, center, scale, n_signal)


def _keep_top(weights: np.ndarray, keep: int) -> float:
    """Weight threshold retaining the ``keep`` largest weights (ties may add more)."""
    if keep <= 0:
        return float(np.nextafter(weights.max(), np.inf))
    ordered = np.sort(weights)[::-1]
    return float(ordered[min(keep, ordered.size) - 1])


def _shuffle_threshold(matrix: SimilarityMatrix, z: np.ndarray, zm: _ZMatrix, edge: float) -> float:
    levels = np.unique(matrix.values)
    candidates = np.append(levels, np.nextafter(levels[-1], np.inf))

    def quiet(idx: int) -> bool:
        # entries at or above the candidate are neutralised (set to the centre)
        below = matrix.values < candidates[idx]
        return zm.top_sq(np.where(below, z, 0.0)) <= edge

    lo, hi = 0, candidates.size - 1
    if quiet(hi):
        return float(candidates[hi])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if quiet(mid):
            lo = mid
        else:
            hi = mid
    return float(candidates[lo])


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph; ``src < dst`` per edge, edges in lexicographic order."""

    n: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    threshold: float = 0.0

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.src.tolist(), self.dst.tolist(), self.weight.tolist()))

    def adjacency(self) -> sp.csr_matrix:
        r = np.concatenate([self.src, self.dst])
        c = np.concatenate([self.dst, self.src])
        return sp.csr_matrix((np.concatenate([self.weight, self.weight]), (r, c)), shape=(self.n, self.n))

    @property
    def indptr(self) -> np.ndarray:
        return self.adjacency().indptr

    def neighbors(self, i: int) -> np.ndarray:
        adj = self.adjacency()
        return adj.indices[adj.indptr[i] : adj.indptr[i + 1]]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]], threshold: float = 0.0) -> "WeightedGraph":
        m = assemble_similarity(n, edges)
        return cls(n, m.rows, m.cols, m.values, threshold)


def threshold_to_graph(matrix: SimilarityMatrix, tau_w: float) -> WeightedGraph:
    """Keep entries with weight >= ``tau_w``."""
    keep = matrix.values >= tau_w
    return WeightedGraph(matrix.n, matrix.rows[keep], matrix.cols[keep], matrix.values[keep], float(tau_w))


# --- export ---------------------------------------------------------------------

EDGE_LIST_HEADER = "# source\ttarget\tweight"
GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"


def export_graph(g: WeightedGraph, labels: Sequence[str], path, fmt: str = "tsv",
                 node_attrs: dict[str, Sequence[str]] | None = None) -> None:
    """Write ``g`` as a TSV edge list (``tsv``) or GraphML (``graphml``).

    Edge-list rows are ``id_i<TAB>id_j<TAB>w`` in node-index order.
    """
    if len(labels) < g.n:
        raise InvalidParameterError(f"{len(labels)} labels for {g.n} nodes")
    if fmt in ("tsv", "edge-list"):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(EDGE_LIST_HEADER + "\n")
            for i, j, w in g.edges:
                fh.write(f"{labels[i]}\t{labels[j]}\t{w!r}\n")
    elif fmt in ("graphml", "gml-like", "graph-markup"):
        _write_graphml(g, labels, path, node_attrs or {})
    else:
        raise InvalidParameterError(f"unknown export format {fmt!r}")


def _write_graphml(g: WeightedGraph, labels, path, node_attrs) -> None:
    ET.register_namespace("", GRAPHML_NS)
    root = ET.Element(f"{{{GRAPHML_NS}}}graphml")
    for name in node_attrs:
        ET.SubElement(root, f"{{{GRAPHML_NS}}}key", id=name, attrib={"for": "node", "attr.name": name, "attr.type": "string"})
    ET.SubElement(root, f"{{{GRAPHML_NS}}}key", id="weight", attrib={"for": "edge", "attr.name": "weight", "attr.type": "double"})
    graph = ET.SubElement(root, f"{{{GRAPHML_NS}}}graph", id="G", edgedefault="undirected")
    for i in range(g.n):
        node = ET.SubElement(graph, f"{{{GRAPHML_NS}}}node", id=str(labels[i]))
        for name, values in node_attrs.items():
            ET.SubElement(node, f"{{{GRAPHML_NS}}}data", key=name).text = str(values[i])
    for i, j, w in g.edges:
        edge = ET.SubElement(graph, f"{{{GRAPHML_NS}}}edge", source=str(labels[i]), target=str(labels[j]))
        ET.SubElement(edge, f"{{{GRAPHML_NS}}}data", key="weight").text = repr(w)
    ET.indent(root)
    ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)


def read_edge_list(path) -> tuple[list[str], WeightedGraph]:
    """Parse an exported edge list. Nodes are numbered by first appearance."""
    labels: list[str] = []
    index: dict[str, int] = {}
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            a, b, w = line.split("\t")
            for lab in (a, b):
                if lab not in index:
                    index[lab] = len(labels)
                    labels.append(lab)
            edges.append((index[a], index[b], float(w)))
    return labels, WeightedGraph.from_edges(len(labels), edges)


def read_graphml(path) -> tuple[list[str], WeightedGraph, dict[str, list[str]]]:
    """Parse a GraphML file written by :func:`export_graph` (node attributes included)."""
    root = ET.parse(path).getroot()
    ns = {"g": GRAPHML_NS}
    keys = {k.get("id"): k.get("attr.name") for k in root.findall("g:key", ns)}
    graph = root.find("g:graph", ns)
    labels, attrs = [], {}
    for node in graph.findall("g:node", ns):
        labels.append(node.get("id"))
        for d in node.findall("g:data", ns):
            attrs.setdefault(keys.get(d.get("key"), d.get("key")), []).append(d.text or "")
    index = {lab: i for i, lab in enumerate(labels)}
    edges = []
    for e in graph.findall("g:edge", ns):
        w = 1.0
        for d in e.findall("g:data", ns):
            if keys.get(d.get("key"), d.get("key")) == "weight":
                w = float(d.text)
        edges.append((index[e.get("source")], index[e.get("target")], w))
    return labels, WeightedGraph.from_edges(len(labels), edges), attrs


def read_graph(path) -> tuple[list[str], WeightedGraph, dict[str, list[str]]]:
    path = str(path)
    if path.endswith((".graphml", ".xml")):
        return read_graphml(path)
    labels, g = read_edge_list(path)
    return labels, g, {}
