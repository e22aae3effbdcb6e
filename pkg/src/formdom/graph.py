"""Weighted graphs (X, b, c, m), truncations and generated families."""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .report import FAIL, PASS, VerificationReport


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Finite weighted graph on vertices ``0..n-1``.

    Edge weights are stored once per unordered pair in ``edges`` (rows
    ``(x, y)`` with ``x <= y``) and ``weights``. A row with ``x == y`` is a
    self-loop and is kept only so that :func:`validate_graph` can flag it.
    """

    n: int
    edges: np.ndarray
    weights: np.ndarray
    c: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        m = np.asarray(self.m, dtype=float).reshape(-1)
        if edges.shape[0] != weights.shape[0]:
            raise ValueError("edges and weights have different lengths")
        if c.shape[0] != self.n or m.shape[0] != self.n:
            raise ValueError(f"c and m must have length n={self.n}")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        edges = np.sort(edges, axis=1)
        keys = edges[:, 0] * self.n + edges[:, 1]
        if np.unique(keys).size != keys.size:
            raise ValueError("duplicate unordered pair in edge list")
        for arr in (edges, weights, c, m):
            arr.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "m", m)

    @classmethod
    def from_edges(cls, n: int, edges, c=None, m=None) -> "WeightedGraph":
        """Build from an iterable of ``(x, y, b)`` triples; ``c`` defaults to 0, ``m`` to 1."""
        triples = list(edges)
        e = np.array([(x, y) for x, y, _ in triples], dtype=np.int64).reshape(-1, 2)
        w = np.array([b for _, _, b in triples], dtype=float)
        c = np.zeros(n) if c is None else np.broadcast_to(np.asarray(c, dtype=float), (n,)).copy()
        m = np.ones(n) if m is None else np.broadcast_to(np.asarray(m, dtype=float), (n,)).copy()
        return cls(n, e, w, c, m)

    @cached_property
    def proper(self) -> np.ndarray:
        """Mask of edge rows that are not self-loops."""
        return self.edges[:, 0] != self.edges[:, 1]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric sparse matrix of off-diagonal weights b(x, y)."""
        e = self.edges[self.proper]
        w = self.weights[self.proper]
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        vals = np.concatenate([w, w])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def row_sums(self) -> np.ndarray:
        """Sum over z of b(x, z), self-loops included."""
        sums = np.asarray(self.adjacency.sum(axis=1)).reshape(-1)
        loops = self.edges[~self.proper]
        np.add.at(sums, loops[:, 0], self.weights[~self.proper])
        return sums

    def neighbors(self, x: int) -> np.ndarray:
        a = self.adjacency
        row = slice(a.indptr[x], a.indptr[x + 1])
        return a.indices[row][a.data[row] > 0]

    def weight(self, x: int, y: int) -> float:
        if x == y:
            loops = self.edges[~self.proper]
            hit = np.nonzero(loops[:, 0] == x)[0]
            return float(self.weights[~self.proper][hit[0]]) if hit.size else 0.0
        return float(self.adjacency[x, y])

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.n).tobytes())
        for arr in (self.edges, self.weights, self.c, self.m):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    def rings(self, root: int = 0) -> np.ndarray:
        """Combinatorial distance from ``root`` (-1 where unreachable)."""
        dist = np.full(self.n, -1, dtype=np.int64)
        dist[root] = 0
        queue = deque([root])
        while queue:
            x = queue.popleft()
            for y in self.neighbors(x):
                if dist[y] < 0:
                    dist[y] = dist[x] + 1
                    queue.append(y)
        return dist


def validate_graph(g: WeightedGraph) -> VerificationReport:
    """Check the graph axioms; violations are reported, never raised."""
    violations = []
    loops = g.edges[~g.proper]
    for (x, _), b in zip(loops, g.weights[~g.proper]):
        if b != 0:
            violations.append({"axiom": "b1: b(x,x) = 0", "vertex": int(x), "value": float(b)})
    for (x, y), b in zip(g.edges, g.weights):
        if not b >= 0:
            violations.append({"axiom": "b >= 0", "edge": [int(x), int(y)], "value": float(b)})
    sums = g.row_sums
    for x in np.nonzero(~np.isfinite(sums))[0]:
        violations.append({"axiom": "b3: sum_z b(x,z) < inf", "vertex": int(x)})
    for x in np.nonzero(~(g.m > 0))[0]:
        violations.append({"axiom": "m(x) > 0", "vertex": int(x), "value": float(g.m[x])})
    for x in np.nonzero(~(g.c >= 0))[0]:
        violations.append({"axiom": "c(x) >= 0", "vertex": int(x), "value": float(g.c[x])})
    # b2 holds by storage: one weight per unordered pair.
    return VerificationReport(
        check="validate_graph",
        verdict=FAIL if violations else PASS,
        max_violation=float(len(violations)),
        samples=g.n,
        worst_case=violations[0] if violations else {},
        violations=violations,
        details={"row_sums": sums.tolist(), "edges": int(g.edges.shape[0])},
    )


def formal_laplacian_apply(g: WeightedGraph, f) -> np.ndarray:
    """(L f)(x) = (1/m(x)) sum_y b(x,y) (f(x) - f(y)) + (c(x)/m(x)) f(x)."""
    f = np.asarray(f)
    if f.ndim == 2 and f.shape[1] == 1:
        f = f[:, 0]
    if f.shape != (g.n,):
        raise ValueError(f"function has shape {f.shape}, expected ({g.n},)")
    a = g.adjacency
    deg = np.asarray(a.sum(axis=1)).reshape(-1)
    return (deg * f - a @ f + g.c * f) / g.m


@dataclass(frozen=True, eq=False)
class Truncation:
    parent: WeightedGraph
    interior: tuple[int, ...]
    boundary: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.interior)


def truncate(g: WeightedGraph, S) -> Truncation:
    """Interior ``S`` (sorted) and its outer vertex boundary in ``g``."""
    S = sorted({int(x) for x in S})
    if not S:
        raise ValueError("truncation interior must be nonempty")
    if S[0] < 0 or S[-1] >= g.n:
        raise ValueError("truncation vertex out of range")
    inside = np.zeros(g.n, dtype=bool)
    inside[S] = True
    touched = np.asarray(g.adjacency[S].sum(axis=0)).reshape(-1) > 0
    boundary = np.nonzero(touched & ~inside)[0]
    return Truncation(g, tuple(S), tuple(int(x) for x in boundary))


def induced_subgraph(g: WeightedGraph, S) -> WeightedGraph:
    """Subgraph on ``S`` (relabelled ``0..|S|-1`` in sorted order) keeping c and m."""
    S = np.array(sorted({int(x) for x in S}), dtype=np.int64)
    relabel = np.full(g.n, -1, dtype=np.int64)
    relabel[S] = np.arange(S.size)
    keep = (relabel[g.edges[:, 0]] >= 0) & (relabel[g.edges[:, 1]] >= 0)
    return WeightedGraph(int(S.size), relabel[g.edges[keep]], g.weights[keep], g.c[S], g.m[S])


def last_ring_truncation(g: WeightedGraph, root: int = 0) -> Truncation:
    """Truncation whose boundary is the outermost BFS ring around ``root``.

    Unreachable vertices stay in the interior. A graph whose outermost ring is
    the root itself has no boundary.
    """
    dist = g.rings(root)
    top = dist.max()
    if top <= 0:
        return truncate(g, range(g.n))
    return truncate(g, np.nonzero(dist != top)[0])


# --- generated families -------------------------------------------------

FAMILIES = ("path", "star", "binary-tree", "random-sparse", "edgeless")
M_PROFILES = ("constant", "power", "geometric")


@dataclass(frozen=True)
class FamilySpec:
    """Recipe for one member of a graph family.

    ``size`` is the vertex count (``depth`` for ``binary-tree``). The measure
    profile at vertex index ``k`` is ``m_value`` (constant),
    ``m_value * (k + 1) ** -alpha`` (power) or ``m_value * ratio ** k``
    (geometric). Edge weights are ``b * size ** b_exponent``, so a family
    can have weights that grow with the truncation.
    """

    name: str
    size: int
    b: float = 1.0
    c: float = 0.0
    m_profile: str = "constant"
    m_value: float = 1.0
    alpha: float = 1.0
    ratio: float = 0.5
    density: float = 0.3
    seed: int = 0
    b_exponent: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    def with_size(self, size: int) -> "FamilySpec":
        from dataclasses import replace

        return replace(self, size=int(size))

    @classmethod
    def parse(cls, text: str) -> "FamilySpec":
        """Parse ``name[:key=value,...]``, e.g. ``path:b=1,m_profile=geometric``."""
        name, _, rest = text.partition(":")
        kwargs: dict = {}
        for item in filter(None, (p.strip() for p in rest.split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"bad family parameter {item!r}")
            key = key.strip().replace("-", "_")
            if key == "m":
                key = "m_value"
            if key in ("size", "seed"):
                kwargs[key] = int(value)
            elif key == "m_profile":
                kwargs[key] = value.strip()
            elif key in ("b", "c", "m_value", "alpha", "ratio", "density", "b_exponent"):
                kwargs[key] = float(value)
            else:
                raise ValueError(f"unknown family parameter {key!r}")
        kwargs.setdefault("size", 1)
        spec = cls(name=name.strip(), **kwargs)
        spec.check()
        return spec

    def check(self) -> None:
        if self.name not in FAMILIES:
            raise ValueError(f"unknown family {self.name!r}; expected one of {FAMILIES}")
        if self.m_profile not in M_PROFILES:
            raise ValueError(f"unknown m-profile {self.m_profile!r}")
        if self.name == "binary-tree":
            if self.size < 0:
                raise ValueError("binary-tree depth must be >= 0")
        elif self.size <= 0:
            raise ValueError("family size must be positive")
        if self.b <= 0 or self.m_value <= 0 or self.c < 0:
            raise ValueError("b and m must be positive, c nonnegative")
        if self.alpha <= 0 or not 0 < self.ratio <= 1:
            raise ValueError("alpha must be positive and ratio in (0, 1]")
        if not 0 < self.density <= 1:
            raise ValueError("density must lie in (0, 1]")


def _measure(spec: FamilySpec, n: int) -> np.ndarray:
    k = np.arange(n, dtype=float)
    if spec.m_profile == "constant":
        return np.full(n, spec.m_value)
    if spec.m_profile == "power":
        return spec.m_value * (k + 1.0) ** (-spec.alpha)
    return spec.m_value * spec.ratio**k


def generate_family(spec: FamilySpec) -> WeightedGraph:
    """Deterministic member of a named family."""
    spec.check()
    name, N = spec.name, spec.size
    b = spec.b * float(max(N, 1)) ** spec.b_exponent
    if name == "path":
        n = N
        edges = [(i, i + 1, b) for i in range(n - 1)]
    elif name == "star":
        n = N
        edges = [(0, i, b) for i in range(1, n)]
    elif name == "binary-tree":
        n = 2 ** (N + 1) - 1
        edges = [((i - 1) // 2, i, b) for i in range(1, n)]
    elif name == "edgeless":
        n = N
        edges = []
    else:
        n = N
        rng = np.random.default_rng(spec.seed)
        iu, ju = np.triu_indices(n, k=1)
        pick = rng.random(iu.size) < spec.density
        w = b * rng.uniform(0.5, 2.0, size=iu.size)
        edges = [(int(i), int(j), float(b)) for i, j, b in zip(iu[pick], ju[pick], w[pick])]
    return WeightedGraph.from_edges(n, edges, c=np.full(n, spec.c), m=_measure(spec, n))
