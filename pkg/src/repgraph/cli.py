"""Command-line entry point: ``repgraph run|sketch|cluster|tune|repdist|synth``.

Exit codes: 0 success, 2 invalid configuration or arguments, 1 runtime failure.
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from .errors import ConfigError, InvalidParameterError, RepgraphError, SpecError, StageError

VALIDATION_ERRORS = (ConfigError, SpecError, InvalidParameterError)


def _fail(exc: BaseException) -> None:
    click.echo(f"error: {exc}", err=True)
    code = 2 if isinstance(exc, VALIDATION_ERRORS) else 1
    if isinstance(exc, StageError) and isinstance(exc.cause, VALIDATION_ERRORS) and exc.stage == "ingest":
        code = 2
    sys.exit(code)


@click.group()
@click.version_option(package_name="repgraph")
def main():
    """Sparse similarity graphs and fair clustering for receptor repertoires."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="JSON run configuration.")
@click.option("--threads", type=int, default=None, help="Worker threads for the affinity stage.")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option("--out", "output_dir", default=None, help="Override the output directory.")
@click.option("--input", "input", default=None, help="Override the input repertoire.")
@click.option("--alphabet", type=click.Choice(["aa", "nt"]), default=None)
@click.option("--max-len", type=int, default=None)
@click.option("--kmer", type=int, default=None)
@click.option("--sketch-len", "m", type=int, default=None)
@click.option("--bands", type=int, default=None)
@click.option("--block-col", "block_column", default=None)
@click.option("--gate-params", default=None, type=click.Path(dir_okay=False))
@click.option("--cost-matrix", default=None, type=click.Path(dir_okay=False))
@click.option("--compose-gates/--no-compose-gates", default=None)
@click.option("--rmt-mode", type=click.Choice(["mp", "shuffle"]), default=None)
@click.option("--shuffles", type=int, default=None)
@click.option("--export", "export_fmt", type=click.Choice(["tsv", "gml-like", "graphml"]), default=None)
@click.option("--k", "clusters", type=int, default=None, help="Cluster count.")
@click.option("--fair-mode", type=click.Choice(["js", "wcd"]), default=None)
@click.option("--lambda", "lam", type=float, default=None)
@click.option("--tau", "tau_g", type=float, default=None, help="WCD target coverage.")
@click.option("--tune", type=click.Choice(["bisect", "grid", "gd"]), default=None)
@click.option("--delta-max", type=float, default=None)
@click.option("--preset", type=click.Choice(["viral", "tumor"]), default=None)
def run(config_path, **overrides):
    """Run the full pipeline from a JSON configuration."""
    from .pipeline import PipelineConfig, run_pipeline

    try:
        cfg = PipelineConfig.load(config_path)
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key if key != "export_fmt" else "export", value)
        manifest = run_pipeline(cfg)
    except RepgraphError as exc:
        _fail(exc)
    summary = {k: manifest.get(k) for k in ("n_sequences", "candidate_count", "edge_count", "lambda")}
    summary["output_dir"] = cfg.output_dir
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--kmer", "--k", "kmer", type=int, default=4, show_default=True, help="Shingle length.")
@click.option("--sketch-len", "--m", "m", type=int, default=128, show_default=True, help="Signature length.")
@click.option("--bands", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--block-col", "--block-column", "block_column", default=None, help="Metadata column used as blocking key.")
@click.option("--alphabet", type=click.Choice(["aa", "nt"]), default="aa")
@click.option("--max-len", type=int, default=None, help="Truncate sequences to this length.")
@click.option("--out", required=True, help="Candidate pair TSV to write.")
@click.option("--sketch-cache", "--cache", "cache", default=None, help="Optional binary sketch cache to write.")
def sketch(input_path, kmer, m, bands, seed, block_column, alphabet, max_len, out, cache):
    """Sketch sequences and write LSH candidate pairs."""
    from .ingest import parse_repertoire
    from .sketch import build_index, query_candidates, sketch_sequences, write_sketch_cache

    try:
        ds = parse_repertoire(input_path, alphabet=alphabet, max_len=max_len)
        blocks = ds.column_values(block_column) if block_column else None
        sketches = sketch_sequences(ds.sequences, kmer, m, seed, blocks)
        cands = query_candidates(build_index(sketches, bands))
        if cache:
            write_sketch_cache(cache, sketches, kmer, seed)
    except RepgraphError as exc:
        _fail(exc)
    ids = ds.ids
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id_i\tid_j\n")
        for i, j in cands.pairs.tolist():
            fh.write(f"{ids[i]}\t{ids[j]}\n")
    click.echo(json.dumps({"sequences": ds.n, "candidates": cands.count}))


def _load_graph_and_groups(graph_path, input_path):
    from .graph import read_graph
    from .ingest import parse_repertoire

    labels, g, attrs = read_graph(graph_path)
    subgroups = None
    if input_path:
        ds = parse_repertoire(input_path)
        by_id = {r.id: r.subgroup for r in ds.records}
        missing = [lab for lab in labels if lab not in by_id]
        if missing:
            raise ConfigError(f"{len(missing)} graph nodes are absent from {input_path}, e.g. {missing[0]!r}")
        subgroups = [by_id[lab] for lab in labels]
    return labels, g, subgroups


@main.command()
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Repertoire TSV supplying subgroup labels.")
@click.option("--k", type=int, default=4, show_default=True)
@click.option("--fair-mode", type=click.Choice(["js", "wcd"]), default="js")
@click.option("--lambda", "lam", type=float, default=0.0, show_default=True)
@click.option("--tau", "tau_g", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, help="Cluster TSV to write.")
def cluster(graph_path, input_path, k, fair_mode, lam, tau_g, seed, out):
    """Fair clustering of an exported graph."""
    from .faircluster import FairnessConfig, equity_report, fair_partition

    try:
        labels, g, subgroups = _load_graph_and_groups(graph_path, input_path)
        part = fair_partition(g, k, FairnessConfig(fair_mode, lam, tau_g), subgroups, seed)
        rep = equity_report(part, subgroups)
    except RepgraphError as exc:
        _fail(exc)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id\tcluster\n")
        for lab, c in zip(labels, part.assignment.tolist()):
            fh.write(f"{lab}\t{c}\n")
    click.echo(json.dumps(rep.to_dict(), sort_keys=True))


@main.command()
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--tune", "method", type=click.Choice(["bisect", "grid", "gd"]), default="bisect")
@click.option("--delta-max", type=float, default=0.1, show_default=True)
@click.option("--preset", type=click.Choice(["viral", "tumor"]), default=None,
              help="Report the preset lambda instead of searching.")
@click.option("--k", type=int, default=4)
@click.option("--fair-mode", type=click.Choice(["js", "wcd"]), default="js")
@click.option("--measure", type=click.Choice(["d_eq", "js_disparity"]), default="d_eq")
@click.option("--seed", type=int, default=0)
@click.option("--out", default=None, help="Tuner trace JSON to write.")
def tune(graph_path, input_path, method, delta_max, preset, k, fair_mode, measure, seed, out):
    """Choose the fairness weight for an exported graph."""
    from .faircluster import FairnessConfig, equity_report, fair_partition, graph_points
    from .tuner import preset_lambda, tune_bisect, tune_gd, tune_grid

    if preset is not None:
        click.echo(json.dumps({"lambda": preset_lambda(preset), "preset": preset}))
        return
    try:
        labels, g, subgroups = _load_graph_and_groups(graph_path, input_path)
        points = graph_points(g, k)

        def disparity(lam: float) -> float:
            rep = equity_report(fair_partition(points, k, FairnessConfig(fair_mode, lam), subgroups, seed), subgroups)
            return getattr(rep, measure)

        if method == "bisect":
            trace = tune_bisect(disparity, delta_max)
        elif method == "grid":
            trace = tune_grid(disparity, None, delta_max, refine=True)
        else:
            trace = tune_gd(lambda lam: 10.0 * max(disparity(lam) - delta_max, 0.0) + lam)
    except RepgraphError as exc:
        _fail(exc)
    payload = {"evaluations": trace.to_json(), "chosen": trace.chosen, "feasible": trace.feasible,
               "iterations": trace.iterations, "method": trace.method}
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    click.echo(json.dumps({"lambda": trace.chosen, "feasible": trace.feasible}))


@main.command()
@click.option("--a", "path_a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", type=int, default=2, show_default=True, help="Cluster count for js mode.")
@click.option("--mode", type=click.Choice(["js", "ged", "ged-approx"]), default="js")
@click.option("--seed", type=int, default=0)
def repdist(path_a, path_b, k, mode, seed):
    """Distance between two exported repertoire graphs.

    GED modes use the GraphML ``sequence`` node attribute as the node label,
    falling back to node ids for edge lists.
    """
    from .graph import read_graph
    from .repdist import repertoire_distance

    try:
        la, ga, aa = read_graph(path_a)
        lb, gb, ab = read_graph(path_b)
        value, detail = repertoire_distance(ga, aa.get("sequence", la), gb, ab.get("sequence", lb), mode, k, seed)
    except RepgraphError as exc:
        _fail(exc)
    click.echo(repr(float(value)))
    click.echo(json.dumps(detail, sort_keys=True, default=lambda o: o.tolist() if isinstance(o, np.ndarray) else str(o)))


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, help="Repertoire TSV to write; pairs go to <stem>.pairs.tsv.")
def synth(spec_path, out):
    """Generate a synthetic repertoire with ground truth."""
    from .synthgen import SynthSpec, generate, write_synth

    try:
        spec = SynthSpec.load(spec_path)
        ds, truth = generate(spec)
        main_path, side = write_synth(out, ds, truth)
    except (RepgraphError, json.JSONDecodeError) as exc:
        _fail(exc if isinstance(exc, RepgraphError) else SpecError(str(exc)))
    click.echo(json.dumps({"sequences": ds.n, "true_pairs": int(truth.pairs.shape[0]),
                           "out": str(main_path), "pairs": str(side)}))


if __name__ == "__main__":  # pragma: no cover
    main()
