"""Seeded random instances for property suites."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import BundleConnection, EndomorphismField, random_endomorphism_field, random_unitary_connection
from .forms import FormOperator, assemble_magnetic, assemble_scalar
from .graph import WeightedGraph


@dataclass
class Instance:
    graph: WeightedGraph
    conn: BundleConnection
    w: EndomorphismField
    mag: FormOperator
    scalar: FormOperator


def random_graph(rng: np.random.Generator, n: int, density: float | None = None) -> WeightedGraph:
    """Random graph with a spanning path (so it is connected), extra random
    edges, weights in [0.2, 2), killing terms in [0, 1) (zero at ~30% of
    vertices) and measure in [0.3, 3)."""
    if density is None:
        density = min(1.0, 2.0 / max(n, 1) + 0.15 * rng.random())
    edges = {}
    order = rng.permutation(n)
    for a, b in zip(order, order[1:]):
        edges[(min(a, b), max(a, b))] = rng.uniform(0.2, 2.0)
    iu, ju = np.triu_indices(n, k=1)
    pick = rng.random(iu.size) < density
    for i, j in zip(iu[pick], ju[pick]):
        edges.setdefault((int(i), int(j)), rng.uniform(0.2, 2.0))
    c = rng.uniform(0.0, 1.0, n) * (rng.random(n) > 0.3)
    m = rng.uniform(0.3, 3.0, n)
    return WeightedGraph.from_edges(n, [(x, y, b) for (x, y), b in sorted(edges.items())], c=c, m=m)


def random_instance(seed, n_max: int = 40, d_max: int = 3, n_min: int = 2) -> Instance:
    """Graph, Haar connection and W >= c I, all from one seed."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_min, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    g = random_graph(rng, n)
    conn = random_unitary_connection(g, d, rng.integers(2**32))
    w = random_endomorphism_field(g, d, rng.integers(2**32), scale=float(rng.uniform(0, 2)))
    return Instance(g, conn, w, assemble_magnetic(g, conn, w), assemble_scalar(g))
