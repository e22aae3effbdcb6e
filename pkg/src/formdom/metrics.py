"""Intrinsic metrics, weighted degree and the form-uniqueness criteria
evaluated on finite truncations."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULTS
from .graph import FamilySpec, WeightedGraph, generate_family, last_ring_truncation
from .report import FAIL, PASS, VerificationReport, _jsonable

HOLDS = "HOLDS-ON-TRUNCATIONS"
FAILS = "FAILS"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True, eq=False)
class EdgeLengths:
    """sigma(x, y) > 0 on every edge, stored aligned with ``graph.edges``."""

    graph: WeightedGraph
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        if sigma.shape[0] != self.graph.edges.shape[0]:
            raise ValueError("need one length per edge")
        live = self.graph.weights > 0
        if np.any(sigma[live] <= 0) or not np.all(np.isfinite(sigma)):
            raise ValueError("sigma must be positive and finite on edges with b > 0")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def constant(cls, g: WeightedGraph, value: float) -> "EdgeLengths":
        return cls(g, np.full(g.edges.shape[0], float(value)))

    @classmethod
    def canonical(cls, g: WeightedGraph) -> "EdgeLengths":
        """sigma(x, y) = min over both endpoints of sqrt(m / sum_z b(., z)).

        This choice is always strongly intrinsic.
        """
        deg = np.asarray(g.adjacency.sum(axis=1)).reshape(-1)
        with np.errstate(divide="ignore"):
            local = np.sqrt(g.m / deg)
        x, y = g.edges[:, 0], g.edges[:, 1]
        return cls(g, np.minimum(local[x], local[y]))

    @classmethod
    def from_mapping(cls, g: WeightedGraph, lengths: dict, default: float | None = None) -> "EdgeLengths":
        sigma = np.full(g.edges.shape[0], np.nan if default is None else float(default))
        index = {(int(x), int(y)): k for k, (x, y) in enumerate(g.edges)}
        for (x, y), s in lengths.items():
            key = (min(x, y), max(x, y))
            if key not in index:
                raise ValueError(f"no edge {key} in the graph")
            sigma[index[key]] = s
        if np.any(np.isnan(sigma)):
            raise ValueError("missing sigma for some edges")
        return cls(g, sigma)


@dataclass(frozen=True, eq=False)
class PseudoMetric:
    d: np.ndarray

    def __call__(self, x: int, y: int) -> float:
        return float(self.d[x, y])


def path_metric(g: WeightedGraph, lengths: EdgeLengths, source: int) -> np.ndarray:
    """Single-source d_sigma by Dijkstra; unreachable vertices get +inf."""
    adj = [[] for _ in range(g.n)]
    for (x, y), b, s in zip(g.edges, g.weights, lengths.sigma):
        if x != y and b > 0:
            adj[x].append((s, y))
            adj[y].append((s, x))
    dist = np.full(g.n, np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(g.n, dtype=bool)
    while heap:
        dx, x = heapq.heappop(heap)
        if done[x]:
            continue
        done[x] = True
        for s, y in adj[x]:
            nd = dx + s
            if nd < dist[y]:
                dist[y] = nd
                heapq.heappush(heap, (nd, int(y)))
    return dist


def path_pseudo_metric(g: WeightedGraph, lengths: EdgeLengths) -> PseudoMetric:
    return PseudoMetric(np.stack([path_metric(g, lengths, s) for s in range(g.n)]) if g.n else np.zeros((0, 0)))


def check_pseudo_metric(d: PseudoMetric, samples: int = 1000, seed: int = 0, tol: float = 1e-12) -> VerificationReport:
    """Symmetry, zero diagonal, and the triangle inequality on sampled triples."""
    D = d.d
    n = D.shape[0]
    sym = float(np.max(np.abs(np.where(np.isinf(D) & np.isinf(D.T), 0, D - D.T)), initial=0.0))
    diag = float(np.max(np.abs(np.diag(D)), initial=0.0))
    rng = np.random.default_rng(seed)
    x, y, z = rng.integers(0, max(n, 1), size=(3, samples))
    with np.errstate(invalid="ignore"):
        excess = D[x, z] - (D[x, y] + D[y, z])
    excess = np.where(np.isnan(excess), 0.0, excess)
    tri = float(np.max(excess, initial=-np.inf)) if n else 0.0
    worst = max(sym, diag, tri)
    return VerificationReport(
        check="pseudo_metric",
        verdict=PASS if worst <= tol else FAIL,
        max_violation=worst,
        samples=samples,
        seed=seed,
        worst_case={"symmetry": sym, "diagonal": diag, "triangle": tri},
    )


def _ratio_report(check: str, g: WeightedGraph, per_edge: np.ndarray, tol: float) -> VerificationReport:
    """Per-vertex (1/m(x)) sum_y b(x,y) q(x,y) against 1."""
    sums = np.zeros(g.n)
    proper = g.proper
    e = g.edges[proper]
    contrib = g.weights[proper] * per_edge[proper]
    np.add.at(sums, e[:, 0], contrib)
    np.add.at(sums, e[:, 1], contrib)
    ratio = sums / g.m
    x = int(np.argmax(ratio)) if g.n else 0
    worst = float(ratio[x]) if g.n else 0.0
    failing = np.nonzero(ratio > 1 + tol)[0]
    return VerificationReport(
        check=check,
        verdict=PASS if failing.size == 0 else FAIL,
        max_violation=worst - 1.0,
        samples=g.n,
        worst_case={"vertex": x, "ratio": worst},
        violations=[{"vertex": int(v), "ratio": float(ratio[v])} for v in failing[:20]],
    )


def check_intrinsic(g: WeightedGraph, d, tol: float | None = None) -> VerificationReport:
    """(1/m(x)) sum_y b(x,y) d(x,y)^2 <= 1 at every vertex."""
    tol = DEFAULTS.intrinsic if tol is None else tol
    D = d.d if isinstance(d, PseudoMetric) else np.asarray(d)
    per_edge = D[g.edges[:, 0], g.edges[:, 1]] ** 2
    return _ratio_report("intrinsic", g, per_edge, tol)


def check_strongly_intrinsic(g: WeightedGraph, lengths: EdgeLengths, tol: float | None = None) -> VerificationReport:
    """(1/m(x)) sum_y b(x,y) sigma(x,y)^2 <= 1 at every vertex."""
    tol = DEFAULTS.intrinsic if tol is None else tol
    return _ratio_report("strongly_intrinsic", g, lengths.sigma**2, tol)


def weighted_degree(g: WeightedGraph) -> np.ndarray:
    """Deg(x) = (sum_y b(x,y) + c(x)) / m(x)."""
    return (g.row_sums + g.c) / g.m


def _distances_from(g: WeightedGraph, d, x0: int) -> np.ndarray:
    if isinstance(d, EdgeLengths):
        return path_metric(g, d, x0)
    D = d.d if isinstance(d, PseudoMetric) else np.asarray(d)
    return D[x0]


def distance_ball(g: WeightedGraph, d, x0: int, r: float) -> set[int]:
    """{x : d(x0, x) <= r}; ``d`` may be EdgeLengths (path metric) or a PseudoMetric."""
    dist = _distances_from(g, d, x0)
    # finite distances only, so r = inf gives the connected component
    return {int(x) for x in np.nonzero(np.isfinite(dist) & (dist <= r))[0]}


def combinatorial_neighborhood(g: WeightedGraph, S) -> set[int]:
    out = {int(x) for x in S}
    for x in list(out):
        out.update(int(y) for y in g.neighbors(x))
    return out


def jump_size(g: WeightedGraph, d) -> float:
    """Largest finite d(x, y) over edges with b(x, y) > 0; 0 for edgeless graphs."""
    live = g.proper & (g.weights > 0)
    if isinstance(d, EdgeLengths):
        D = path_pseudo_metric(g, d).d
    else:
        D = d.d if isinstance(d, PseudoMetric) else np.asarray(d)
    vals = D[g.edges[live, 0], g.edges[live, 1]]
    vals = vals[np.isfinite(vals)]
    return float(vals.max()) if vals.size else 0.0


# --- criteria ------------------------------------------------------------------


def cutoff_sequence(dist_from_root: np.ndarray, ks) -> list[np.ndarray]:
    """eta_k(x) = min(1, max(0, 2 - d(o, x) / k))."""
    return [np.clip(2.0 - dist_from_root / k, 0.0, 1.0) for k in ks]


def cutoff_energy_ratio(g: WeightedGraph, eta: np.ndarray) -> np.ndarray:
    """(1/m(x)) sum_y b(x,y) |eta(x) - eta(y)|^2 per vertex."""
    a = g.adjacency.tocoo()
    sums = np.zeros(g.n)
    np.add.at(sums, a.row, a.data * (eta[a.row] - eta[a.col]) ** 2)
    return sums / g.m


@dataclass
class CriterionVerdicts:
    verdicts: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _jsonable({"verdicts": self.verdicts, "tables": self.tables, "notes": self.notes})


def _resolve_lengths(g: WeightedGraph, sigma) -> EdgeLengths | None:
    if sigma is None:
        return None
    if isinstance(sigma, EdgeLengths):
        return sigma
    if sigma == "auto":
        return EdgeLengths.canonical(g)
    return EdgeLengths.constant(g, float(sigma))


def _measure_row(g, interior) -> dict:
    return {"inf_m": float(g.m[list(interior)].min())}


def _degree_row(g, lengths, radii, root) -> dict:
    dist = path_metric(g, lengths, root)
    deg = weighted_degree(g)
    row = {}
    for r in radii:
        nb = combinatorial_neighborhood(g, np.nonzero(np.isfinite(dist) & (dist <= r))[0])
        row[f"r={r:g}"] = float(deg[list(nb)].max())
    return row


def _completeness_row(g, lengths, interior, root, k_max) -> dict:
    dist = path_metric(g, lengths, root)
    inside = np.zeros(g.n, dtype=bool)
    inside[list(interior)] = True
    best_k, worst_excess = 0, -np.inf
    for k in range(1, k_max + 1):
        eta = cutoff_sequence(dist, [k])[0]
        if np.any((eta > 0) & ~inside):
            break
        excess = float(np.max(cutoff_energy_ratio(g, eta) - 1.0 / k))
        worst_excess = max(worst_excess, excess)
        if excess > DEFAULTS.intrinsic:
            break
        best_k = k
    return {"best_k": best_k, "max_excess": worst_excess}


def criterion_report(
    g: WeightedGraph | None = None,
    sigma=None,
    family: FamilySpec | None = None,
    sizes=None,
    radii=(1.0, 2.0, 4.0),
    root: int = 0,
    k_max: int = 64,
    growth_factor: float = 2.0,
) -> CriterionVerdicts:
    """Evaluate the measure, degree and completeness criteria.

    With ``family`` and ``sizes`` every member is truncated at its last BFS
    ring and the per-size witnesses are classified by trend; otherwise ``g``
    is treated as a single truncation. ``sigma`` is a constant, ``"auto"``
    (canonical strongly intrinsic lengths), an EdgeLengths, or None.
    """
    out = CriterionVerdicts()
    out.notes.append("criteria are evaluated on finite truncations only; no statement about the infinite graph is made")
    out.notes.append("the measure criterion's condition on L C_c(X) is vacuous at finite scale and is not checked")
    if family is not None:
        if not sizes:
            raise ValueError("family criteria need at least one truncation size")
        graphs = [(int(N), generate_family(family.with_size(N))) for N in sorted(sizes)]
    elif g is not None:
        graphs = [(g.n, g)]
    else:
        raise ValueError("need a graph or a family")

    measure, degree, complete = [], [], []
    for N, gN in graphs:
        t = last_ring_truncation(gN, root)
        measure.append(dict(N=N, **_measure_row(gN, t.interior)))
        lengths = None
        if sigma is not None and not (isinstance(sigma, EdgeLengths) and family is not None):
            lengths = _resolve_lengths(gN, sigma)
        if lengths is None:
            continue
        strong = check_strongly_intrinsic(gN, lengths)
        degree.append(dict(N=N, intrinsic=strong.passed, **_degree_row(gN, lengths, radii, root)))
        complete.append(dict(N=N, intrinsic=strong.passed, **_completeness_row(gN, lengths, t.interior, root, k_max)))

    # measure: inf m bounded away from zero
    infs = [row["inf_m"] for row in measure]
    if min(infs) <= 0:
        out.verdicts["measure"] = FAILS
    elif len(infs) > 1 and infs[-1] < infs[0] / growth_factor:
        out.verdicts["measure"] = FAILS
    else:
        out.verdicts["measure"] = HOLDS
    out.tables["measure"] = measure

    if not degree:
        out.verdicts["degree"] = INCONCLUSIVE
        out.verdicts["completeness"] = INCONCLUSIVE
        out.notes.append("no intrinsic sigma supplied: degree and completeness criteria are inconclusive")
        return out

    out.tables["degree"] = degree
    out.tables["completeness"] = complete
    if not all(row["intrinsic"] for row in degree):
        out.verdicts["degree"] = INCONCLUSIVE
        out.verdicts["completeness"] = INCONCLUSIVE
        out.notes.append("sigma is not strongly intrinsic on every truncation")
        return out

    keys = [k for k in degree[0] if k.startswith("r=")]
    grows = any(
        degree[-1][k] > growth_factor * degree[0][k] and all(a[k] <= b[k] for a, b in zip(degree, degree[1:]))
        for k in keys
    )
    out.verdicts["degree"] = FAILS if grows else HOLDS

    ks = [row["best_k"] for row in complete]
    if any(row["max_excess"] > DEFAULTS.intrinsic for row in complete):
        out.verdicts["completeness"] = FAILS
    elif ks[-1] >= 1 and (len(ks) == 1 or ks[-1] > ks[0]):
        out.verdicts["completeness"] = HOLDS
    else:
        out.verdicts["completeness"] = INCONCLUSIVE
    return out
