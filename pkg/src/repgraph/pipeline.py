"""End-to-end run: ingest, sketch, candidates, affinities, RMT threshold, clustering, reports.

A run is configured by one JSON document (see :class:`PipelineConfig`) and
writes every artifact into ``output_dir`` together with ``manifest.json``,
which lists a SHA-256 checksum for each emitted file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__
from .affinity import AffinityConfig, GateParams, UNIT_COSTS, compute_affinity_channels, load_cost_table, load_gate_params
from .errors import ConfigError, RepgraphError, StageError
from .faircluster import (
    EquityReport,
    FairnessConfig,
    Partition,
    equity_report,
    fair_partition,
    graph_points,
    make_partition,
    spectral_embedding,
)
from .graph import (
    SpectrumReport,
    WeightedGraph,
    assemble_similarity,
    export_graph,
    rmt_bulk_cutoff,
    threshold_to_graph,
)
from .ingest import Schema, impute_frequencies, parse_repertoire
from .sketch import build_index, query_candidates, sketch_sequences
from .tuner import PRESETS, TuneTrace, tune_bisect, tune_gd, tune_grid

STAGES = ("ingest", "sketch", "candidates", "affinity", "matrix", "rmt", "graph", "tune", "cluster", "equity", "export")


@dataclass
class PipelineConfig:
    """Run settings; JSON keys use the field names, with ``lambda`` accepted for ``lam``.

    Relative paths are resolved against the directory of the config file.
    When ``lam`` is unset the task ``preset`` supplies it (viral 0.5, tumor 0.6).
    """

    input: str = ""
    output_dir: str = "repgraph_out"
    alphabet: str = "aa"
    id_column: str = "id"
    residues_column: str = "cdr3"
    frequency_column: str = "frequency"
    subgroup_column: str = "subgroup"
    max_len: int | None = None
    on_invalid: str = "raise"
    kmer: int = 4
    m: int = 128
    bands: int = 32
    sketch_seed: int = 1
    block_column: str | None = None
    gate_params: str | None = None
    cost_matrix: str | None = None
    compose_gates: bool = False
    rmt_mode: str = "mp"
    shuffles: int = 20
    default_tau: float = 0.7
    clusters: int = 4
    fair_mode: str = "js"
    lam: float | None = None
    tau_g: float = 0.2
    preset: str = "viral"
    max_iter: int = 100
    tune: str | None = None
    delta_max: float = 0.1
    tune_measure: str = "d_eq"
    export: str = "tsv"
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | os.PathLike | None = None) -> "PipelineConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        if base_dir is not None:
            for name in ("input", "gate_params", "cost_matrix", "output_dir"):
                value = getattr(cfg, name)
                if value and not os.path.isabs(value):
                    setattr(cfg, name, os.path.normpath(os.path.join(base_dir, value)))
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data, os.path.dirname(os.path.abspath(path)))

    @property
    def resolved_lambda(self) -> float:
        return float(self.lam) if self.lam is not None else PRESETS[self.preset]

    def validate(self) -> None:
        """Check values and referenced files before any work is done."""
        if not self.input or not os.path.isfile(self.input):
            raise ConfigError(f"input file does not exist: {self.input!r}")
        for name in ("gate_params", "cost_matrix"):
            value = getattr(self, name)
            if value and not os.path.isfile(value):
                raise ConfigError(f"{name} file does not exist: {value!r}")
        checks = [
            (self.alphabet in ("aa", "nt"), "alphabet must be 'aa' or 'nt'"),
            (self.on_invalid in ("raise", "skip"), "on_invalid must be 'raise' or 'skip'"),
            (self.kmer >= 1 and self.m >= 1 and self.bands >= 1, "kmer, m and bands must be >= 1"),
            (self.m % self.bands == 0, f"bands={self.bands} must divide m={self.m}"),
            (self.rmt_mode in ("mp", "shuffle"), "rmt_mode must be 'mp' or 'shuffle'"),
            (self.shuffles >= 1, "shuffles must be >= 1"),
            (0 <= self.default_tau <= 1, "default_tau must lie in [0, 1]"),
            (self.clusters >= 1, "clusters must be >= 1"),
            (self.fair_mode in ("js", "wcd"), "fair_mode must be 'js' or 'wcd'"),
            (self.lam is None or self.lam >= 0, "lambda must be >= 0"),
            (0 < self.tau_g <= 1, "tau_g must lie in (0, 1]"),
            (self.preset in PRESETS, f"preset must be one of {sorted(PRESETS)}"),
            (self.tune in (None, "bisect", "grid", "gd"), "tune must be bisect, grid, gd or null"),
            (self.tune_measure in ("d_eq", "js_disparity"), "tune_measure must be d_eq or js_disparity"),
            (self.export in ("tsv", "graphml", "gml-like"), "export must be tsv or graphml"),
            (self.threads >= 1, "threads must be >= 1"),
            (self.max_iter >= 1, "max_iter must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunResults:
    dataset: Any = None
    candidates: Any = None
    affinities: list = field(default_factory=list)
    matrix: Any = None
    spectrum: SpectrumReport | None = None
    graph: WeightedGraph | None = None
    trace: TuneTrace | None = None
    lam: float = 0.0
    partition: Partition | None = None
    equity: EquityReport | None = None
    warnings: list[str] = field(default_factory=list)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_reports(results: RunResults, outdir, export_format: str = "tsv") -> dict[str, Path]:
    """Write clusters, graph, equity, heatmap, layout and (if tuned) trace files."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    ds, part, g = results.dataset, results.partition, results.graph
    ids = ds.ids
    files: dict[str, Path] = {}

    path = out / "clusters.tsv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id\tcluster\n")
        for rid, c in zip(ids, part.assignment.tolist()):
            fh.write(f"{rid}\t{c}\n")
    files["clusters.tsv"] = path

    path = out / "graph.tsv"
    export_graph(g, ids, path, "tsv")
    files["graph.tsv"] = path
    if export_format in ("graphml", "gml-like"):
        path = out / "graph.graphml"
        attrs = {"sequence": ds.sequences, "cluster": [str(c) for c in part.assignment.tolist()]}
        export_graph(g, ids, path, "graphml", node_attrs=attrs)
        files["graph.graphml"] = path

    eq = results.equity
    path = out / "equity.json"
    path.write_text(json.dumps(eq.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files["equity.json"] = path

    path = out / "disparity_heatmap.tsv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(["cluster"] + [str(gname) for gname in eq.groups]) + "\n")
        for i in range(part.k):
            row = eq.deviation[i] if eq.deviation.size else []
            fh.write("\t".join([str(i)] + [_fmt(v) for v in row]) + "\n")
    files["disparity_heatmap.tsv"] = path

    path = out / "layout2d.tsv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id\tx\ty\n")
        if g.n_edges > 0:
            coords = spectral_embedding(g, 2)
            if coords.shape[1] < 2:
                coords = np.hstack([coords, np.zeros((coords.shape[0], 2 - coords.shape[1]))])
            for rid, (x, y) in zip(ids, coords[:, :2].tolist()):
                fh.write(f"{rid}\t{_fmt(x)}\t{_fmt(y)}\n")
    files["layout2d.tsv"] = path

    if results.trace is not None:
        path = out / "tuner_trace.json"
        payload = {
            "method": results.trace.method,
            "evaluations": results.trace.to_json(),
            "chosen": results.trace.chosen,
            "feasible": results.trace.feasible,
            "iterations": results.trace.iterations,
            "notes": results.trace.notes,
        }
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        files["tuner_trace.json"] = path
    return files


def _versions() -> dict:
    return {"repgraph": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


class _Manifest(dict):
    def stage(self, name: str, seconds: float) -> None:
        self["stages"].append(name)
        self["timings"][name] = seconds


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute every stage in order and return the manifest (also written to disk).

    Raises:
        ConfigError: invalid configuration (nothing is computed).
        StageError: a stage failed; carries the stage name and the partial manifest.
    """
    config.validate()
    manifest = _Manifest(
        config=config.to_dict(), versions=_versions(), seed=config.seed,
        stages=[], timings={}, warnings=[],
    )
    res = RunResults()
    state: dict[str, Any] = {}

    def run(name: str, fn) -> None:
        start = time.perf_counter()
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - wrapped with stage context
            raise StageError(name, exc, dict(manifest)) from exc
        manifest.stage(name, time.perf_counter() - start)

    def ingest():
        schema = Schema(config.id_column, config.residues_column, config.frequency_column, config.subgroup_column)
        ds = parse_repertoire(config.input, schema, config.alphabet, config.max_len, config.on_invalid)
        if any(r.frequency is not None for r in ds.records):
            ds = impute_frequencies(ds)
        res.dataset = ds
        manifest["n_sequences"] = ds.n
        manifest["rejected_rows"] = len(ds.rejected)

    def sketch():
        blocks = res.dataset.column_values(config.block_column) if config.block_column else None
        state["sketches"] = sketch_sequences(res.dataset.sequences, config.kmer, config.m, config.sketch_seed, blocks)

    def candidates():
        index = build_index(state["sketches"], config.bands)
        res.candidates = query_candidates(index)
        manifest["candidate_count"] = res.candidates.count

    def affinity():
        params = load_gate_params(config.gate_params) if config.gate_params else GateParams.zeros()
        costs = load_cost_table(config.cost_matrix) if config.cost_matrix else UNIT_COSTS
        acfg = AffinityConfig(compose_gates=config.compose_gates, threads=config.threads)
        res.affinities = compute_affinity_channels(res.dataset.sequences, res.candidates, params, costs, acfg)

    def matrix():
        res.matrix = assemble_similarity(res.dataset.n, res.affinities)

    def rmt():
        res.spectrum = rmt_bulk_cutoff(res.matrix, config.rmt_mode, config.default_tau, config.shuffles, config.seed)
        sp_ = res.spectrum
        manifest["rmt"] = {"mode": sp_.mode, "bulk_edge": sp_.bulk_edge, "aspect_ratio": sp_.aspect_ratio,
                           "weight_threshold": sp_.weight_threshold, "n_above": sp_.n_above}

    def graph():
        res.graph = threshold_to_graph(res.matrix, res.spectrum.weight_threshold)
        manifest["edge_count"] = res.graph.n_edges
        if res.graph.n_edges == 0:
            res.warnings.append("thresholded graph has no edges; all nodes placed in cluster 0")
        else:
            state["points"] = graph_points(res.graph, config.clusters)

    subgroups = lambda: res.dataset.subgroup_labels  # noqa: E731

    def cluster_at(lam: float) -> Partition:
        if "points" not in state:
            return make_partition(np.zeros(res.dataset.n, dtype=np.int64), config.clusters, subgroups())
        fcfg = FairnessConfig(config.fair_mode, lam, config.tau_g)
        return fair_partition(state["points"], config.clusters, fcfg, subgroups(), config.seed, config.max_iter)

    def measure(lam: float) -> float:
        rep = equity_report(cluster_at(lam), subgroups())
        return rep.d_eq if config.tune_measure == "d_eq" else rep.js_disparity

    def tune():
        if config.tune is None:
            res.lam = config.resolved_lambda
            return
        if config.tune == "bisect":
            res.trace = tune_bisect(measure, config.delta_max)
        elif config.tune == "grid":
            res.trace = tune_grid(measure, None, config.delta_max, refine=True)
        else:
            # smallest lambda meeting delta_max: overshoot is penalised, lambda itself is a cost
            res.trace = tune_gd(lambda lam: 10.0 * max(measure(lam) - config.delta_max, 0.0) + lam)
        res.lam = res.trace.chosen

    def cluster():
        if config.clusters > res.dataset.n:
            raise ConfigError(f"clusters={config.clusters} exceeds the {res.dataset.n} sequences")
        res.partition = cluster_at(res.lam)
        manifest["lambda"] = res.lam

    def equity():
        labels = None
        if "true_block" in res.dataset.columns:
            labels = res.dataset.column_values("true_block")
        res.equity = equity_report(res.partition, subgroups(), labels)
        manifest["equity"] = res.equity.to_dict()

    def export():
        files = emit_reports(res, config.output_dir, config.export)
        manifest["files"] = {name: _sha256(path) for name, path in sorted(files.items())}

    for name, fn in zip(STAGES, (ingest, sketch, candidates, affinity, matrix, rmt, graph, tune, cluster, equity, export)):
        run(name, fn)
    manifest["warnings"] = list(res.warnings)
    out = Path(config.output_dir) / "manifest.json"
    out.write_text(json.dumps(dict(manifest), indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    manifest["results"] = res
    return manifest


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
