"""Hermitian bundles over a discrete base: unitary connections, endomorphism
fields, the fiberwise absolute map and polar pairing.

Sections are complex arrays of shape ``(n, d)``; scalar functions are plain
``(n,)`` arrays.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .config import DEFAULTS
from .graph import WeightedGraph
from .report import FAIL, PASS, PRECONDITION_FAILED, VerificationReport


def as_section(u, n: int, d: int | None = None) -> np.ndarray:
    """Coerce ``u`` to a complex ``(n, d)`` array (1-D input means d = 1)."""
    u = np.asarray(u)
    if u.ndim == 1:
        u = u.reshape(-1, 1)
    if u.ndim != 2 or u.shape[0] != n or (d is not None and u.shape[1] != d):
        want = f"({n}, {d if d is not None else 'd'})"
        raise ValueError(f"section has shape {u.shape}, expected {want}")
    return u.astype(complex, copy=False)


def unitarity_residual(U: np.ndarray) -> float:
    d = U.shape[-1]
    return float(np.max(np.abs(U.conj().T @ U - np.eye(d))))


def _polar_unitary(U: np.ndarray) -> np.ndarray:
    left, _, right = np.linalg.svd(U)
    return left @ right


class UnitarityError(ValueError):
    def __init__(self, edge, residual: float):
        super().__init__(f"transport on edge {edge} is not unitary (residual {residual:.2e})")
        self.edge = edge
        self.residual = residual


@dataclass(frozen=True, eq=False)
class BundleConnection:
    """Unitary transport maps along the edges of ``base``.

    ``phi[k]`` is the map Phi_{x,y} : E_y -> E_x for edge row ``base.edges[k] = (x, y)``
    with ``x < y``; the reverse direction is its conjugate transpose.
    """

    base: WeightedGraph
    dim: int
    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=complex).reshape(-1, self.dim, self.dim)
        if self.dim < 1:
            raise ValueError("fiber dimension must be >= 1")
        if phi.shape[0] != self.base.edges.shape[0]:
            raise ValueError("need one transport matrix per edge")
        tol, repair = DEFAULTS.unitarity, DEFAULTS.unitarity_repair
        for k in range(phi.shape[0]):
            res = unitarity_residual(phi[k])
            if res > repair:
                x, y = self.base.edges[k]
                raise UnitarityError((int(x), int(y)), res)
            if res > tol:
                phi[k] = _polar_unitary(phi[k])
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def trivial(cls, g: WeightedGraph, dim: int = 1) -> "BundleConnection":
        phi = np.broadcast_to(np.eye(dim, dtype=complex), (g.edges.shape[0], dim, dim))
        return cls(g, dim, phi)

    @classmethod
    def from_phases(cls, g: WeightedGraph, theta) -> "BundleConnection":
        """Line bundle with Phi_{x,y} = exp(i theta_k) on edge row k."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        return cls(g, 1, np.exp(1j * theta).reshape(-1, 1, 1))

    @classmethod
    def from_mapping(cls, g: WeightedGraph, dim: int, maps: dict) -> "BundleConnection":
        """Transport maps keyed by ``(x, y)`` with ``x < y``; absent edges get the identity."""
        phi = np.broadcast_to(np.eye(dim, dtype=complex), (g.edges.shape[0], dim, dim)).copy()
        index = {(int(x), int(y)): k for k, (x, y) in enumerate(g.edges)}
        for (x, y), U in maps.items():
            if not x < y:
                raise ValueError(f"transport listed as ({x}, {y}); expected x < y")
            if (x, y) not in index:
                raise ValueError(f"no edge ({x}, {y}) in the base graph")
            phi[index[(x, y)]] = np.asarray(U, dtype=complex).reshape(dim, dim)
        return cls(g, dim, phi)

    def transport(self, x: int, y: int) -> np.ndarray:
        """Phi_{x,y} : E_y -> E_x."""
        k = self._index.get((min(x, y), max(x, y)))
        if k is None:
            raise KeyError(f"no edge between {x} and {y}")
        return self.phi[k] if x < y else self.phi[k].conj().T

    @cached_property
    def _index(self) -> dict:
        return {(int(x), int(y)): k for k, (x, y) in enumerate(self.base.edges)}

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(self.base.digest.encode() + self.phi.tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class EndomorphismField:
    """Per-vertex d x d matrices W(x)."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=complex)
        if w.ndim != 3 or w.shape[1] != w.shape[2]:
            raise ValueError("endomorphism field must have shape (n, d, d)")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def dim(self) -> int:
        return self.w.shape[1]

    @classmethod
    def scalar(cls, values, dim: int = 1) -> "EndomorphismField":
        """W(x) = values[x] * I."""
        values = np.asarray(values, dtype=float).reshape(-1)
        return cls(values[:, None, None] * np.eye(dim)[None])

    @classmethod
    def zeros(cls, n: int, dim: int) -> "EndomorphismField":
        return cls(np.zeros((n, dim, dim), dtype=complex))

    def min_eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.w + np.conj(np.swapaxes(self.w, 1, 2)))
        return np.linalg.eigvalsh(herm)[:, 0]

    def hermitian_residual(self) -> np.ndarray:
        return np.abs(self.w - np.conj(np.swapaxes(self.w, 1, 2))).reshape(self.n, -1).max(axis=1)

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(self.w.tobytes()).hexdigest()[:16]


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))[None, :]


def random_unitary_connection(g: WeightedGraph, d: int, seed) -> BundleConnection:
    """Haar-distributed transport on every edge, reproducible from ``seed``."""
    if d < 1:
        raise ValueError("fiber dimension must be >= 1")
    rng = np.random.default_rng(seed)
    phi = np.stack([random_unitary(d, rng) for _ in range(g.edges.shape[0])]) if g.edges.size else np.zeros((0, d, d))
    return BundleConnection(g, d, phi)


def random_phase_connection(g: WeightedGraph, seed) -> BundleConnection:
    rng = np.random.default_rng(seed)
    return BundleConnection.from_phases(g, rng.uniform(0, 2 * np.pi, size=g.edges.shape[0]))


def random_endomorphism_field(g: WeightedGraph, d: int, seed, floor=None, scale: float = 1.0) -> EndomorphismField:
    """W(x) = floor(x) I + P(x) with P(x) a random positive semidefinite matrix.

    With the default ``floor = g.c`` the field satisfies W(x) >= c(x) I.
    """
    rng = np.random.default_rng(seed)
    floor = g.c if floor is None else np.broadcast_to(np.asarray(floor, dtype=float), (g.n,))
    w = np.empty((g.n, d, d), dtype=complex)
    for x in range(g.n):
        a = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) * np.sqrt(scale / (2 * d))
        p = a @ a.conj().T
        w[x] = floor[x] * np.eye(d) + 0.5 * (p + p.conj().T)
    return EndomorphismField(w)


def validate_bundle(conn: BundleConnection, w: EndomorphismField | None = None, tol=None) -> VerificationReport:
    """Unitarity of every transport map, Hermiticity and positivity of W."""
    tol = DEFAULTS if tol is None else tol
    violations = []
    worst = 0.0
    for k, (x, y) in enumerate(conn.base.edges):
        res = unitarity_residual(conn.phi[k])
        worst = max(worst, res)
        if res > tol.unitarity:
            violations.append({"invariant": "Phi unitary", "edge": [int(x), int(y)], "residual": res})
    if w is not None:
        if w.n != conn.base.n or w.dim != conn.dim:
            violations.append({"invariant": "W shape", "shape": list(w.w.shape)})
        else:
            herm = w.hermitian_residual()
            lam = w.min_eigenvalues()
            for x in range(w.n):
                if herm[x] > tol.hermitian:
                    violations.append({"invariant": "W(x) Hermitian", "vertex": x, "residual": float(herm[x])})
                if lam[x] < -tol.endomorphism_psd:
                    violations.append({"invariant": "W(x) >= 0", "vertex": x, "lambda_min": float(lam[x])})
    return VerificationReport(
        check="validate_bundle",
        verdict=FAIL if violations else PASS,
        max_violation=worst,
        samples=int(conn.base.edges.shape[0]),
        worst_case=violations[0] if violations else {},
        violations=violations,
    )


def absolute(u, g: WeightedGraph) -> np.ndarray:
    """Pointwise fiber norm |u|(x) = |u(x)|."""
    u = as_section(u, g.n)
    return np.linalg.norm(u, axis=1)


def sgn_pair(u, f) -> np.ndarray:
    """Section eta with |eta| = f that is paired with ``u``.

    eta(x) = f(x) u(x) / |u(x)| where u(x) != 0, and f(x) e_1 where u(x) = 0.
    """
    u = np.asarray(u, dtype=complex)
    if u.ndim == 1:
        u = u.reshape(-1, 1)
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.shape[0] != u.shape[0]:
        raise ValueError("f and u have different vertex counts")
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    norms = np.linalg.norm(u, axis=1)
    eta = np.zeros_like(u)
    nz = norms > 0
    eta[nz] = u[nz] * (f[nz] / norms[nz])[:, None]
    eta[~nz, 0] = f[~nz]
    return eta


def is_paired(u, v, g: WeightedGraph, tol: float = 1e-10) -> VerificationReport:
    """Fiberwise check that <u(x), v(x)> = |u(x)| |v(x)|."""
    u = as_section(u, g.n)
    v = as_section(v, g.n, u.shape[1])
    inner = np.sum(u * v.conj(), axis=1)
    gap = np.abs(inner - np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
    x = int(np.argmax(gap)) if g.n else 0
    worst = float(gap[x]) if g.n else 0.0
    return VerificationReport(
        check="is_paired",
        verdict=PASS if worst <= tol else FAIL,
        max_violation=worst,
        samples=g.n,
        worst_case={"vertex": x, "inner": complex(inner[x])} if g.n else {},
    )


def l2_inner(u, v, m) -> complex:
    """<u, v> in l2(X, m; E): linear in u, conjugate-linear in v."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.ndim == 1:
        return complex(np.sum(m * u * np.conj(v)))
    return complex(np.sum(m[:, None] * u * np.conj(v)))


@dataclass(frozen=True)
class SgnLemmaResult:
    lhs: float
    rhs: float
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict == PASS


def signed_vector_inequality_check(a, b, alpha: float, beta: float, tol: float | None = None) -> SgnLemmaResult:
    """Compare |a~ - b~|^2 with |alpha - beta|^2 + |a - b|^2, where
    a~ = alpha a / |a| (0 if a = 0) and likewise b~.

    Requires alpha <= |a| and beta <= |b|; otherwise the verdict is
    PRECONDITION_FAILED rather than FAIL.
    """
    tol = DEFAULTS.sgn_lemma if tol is None else tol
    a = np.asarray(a, dtype=complex).reshape(-1)
    b = np.asarray(b, dtype=complex).reshape(-1)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    at = alpha / na * a if na > 0 else np.zeros_like(a)
    bt = beta / nb * b if nb > 0 else np.zeros_like(b)
    lhs = float(np.linalg.norm(at - bt) ** 2)
    rhs = float(abs(alpha - beta) ** 2 + np.linalg.norm(a - b) ** 2)
    if alpha < 0 or beta < 0 or alpha > na + tol or beta > nb + tol:
        return SgnLemmaResult(lhs, rhs, PRECONDITION_FAILED)
    return SgnLemmaResult(lhs, rhs, PASS if lhs <= rhs + tol else FAIL)
