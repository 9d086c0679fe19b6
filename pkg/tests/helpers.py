"""Instance builders shared by the unit and acceptance suites."""

import itertools

import numpy as np

from repgraph.graph import assemble_similarity


def noise_matrix(n=200, seed=0):
    """Dense i.i.d. uniform weights on every pair."""
    rng = np.random.default_rng(seed)
    pairs = list(itertools.combinations(range(n), 2))
    w = rng.random(len(pairs))
    return assemble_similarity(n, [(i, j, v) for (i, j), v in zip(pairs, w)])


def planted_two_block(n=100, within=0.9, cross_max=0.2, seed=0):
    """Within-block weights ``within``, cross-block weights uniform on [0, cross_max]."""
    rng = np.random.default_rng(seed)
    block = np.arange(n) // (n // 2)
    trip = []
    for i, j in itertools.combinations(range(n), 2):
        trip.append((i, j, within if block[i] == block[j] else rng.uniform(0, cross_max)))
    return assemble_similarity(n, trip), block


def wcd_instance(d=0.3, spread=0.05, seed=0):
    """30 points in 10 blobs on a line: five blobs hold 2 rare + 1 major point,
    each followed at distance ``d`` by a blob of 3 major points.

    Returns points, subgroup labels and the blob index of every point.
    """
    rng = np.random.default_rng(seed)
    pts, groups, blob = [], [], []
    for p in range(5):
        c = np.array([20.0 * p, 0.0])
        for g in ("rare", "rare", "major"):
            pts.append(c + rng.normal(0, spread, 2))
            groups.append(g)
            blob.append(2 * p)
        for _ in range(3):
            pts.append(c + np.array([d, 0.0]) + rng.normal(0, spread, 2))
            groups.append("major")
            blob.append(2 * p + 1)
    return np.array(pts), groups, np.array(blob)


def wcd_family(groups, blob):
    """Every partition in which each rare point sits in its home blob or the neighbouring one."""
    rare = [i for i, g in enumerate(groups) if g == "rare"]
    for bits in itertools.product((0, 1), repeat=len(rare)):
        a = blob.copy()
        for r, b in zip(rare, bits):
            a[r] += b
        yield a
