"""From candidate pairs to a denoised similarity graph.

Run: python3 demos/02_affinity_and_graph.py
"""
# %%
from repgraph.affinity import compute_affinity_channels, edit_distance, gate_and_fuse
from repgraph.graph import assemble_similarity, rmt_bulk_cutoff, threshold_to_graph
from repgraph.sketch import build_index, query_candidates, sketch_sequences
from repgraph.synthgen import SynthSpec, generate

print("edit distance kitten/sitting:", edit_distance("kitten", "sitting"))

# %% Two channels per pair (alignment and hashed k-mer embedding) fused by softmax gates.
# With zero gate parameters the weights are equal.
print(gate_and_fuse([0.9, 0.3], [0.0, 0.0]).fused)

ds, truth = generate(SynthSpec(n=600, n_blocks=6, mutation_rate=0.08, noise=0.1, seed=2))
cands = query_candidates(build_index(sketch_sequences(ds.sequences), 32))
fused = compute_affinity_channels(ds.sequences, cands)
matrix = assemble_similarity(ds.n, fused)
print(f"{matrix.nnz} stored affinities")

# %% The noise bulk of the standardized matrix sets the edge threshold.
report = rmt_bulk_cutoff(matrix, mode="mp")
print(f"bulk edge {report.bulk_edge:.3f}, {report.n_above} eigenvalues above it, threshold {report.weight_threshold:.3f}")
graph = threshold_to_graph(matrix, report.weight_threshold)
cross = sum(truth.blocks[i] != truth.blocks[j] for i, j, _ in graph.edges)
print(f"{graph.n_edges} edges kept, {cross} of them join different planted families")
