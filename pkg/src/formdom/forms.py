"""Scalar and magnetic Schrodinger forms as matrices, and form inequalities.

A :class:`FormOperator` stores the Hermitian *energy matrix* ``K`` with
``Q(u, v) = v^* K u`` for flattened sections, together with the vertex
measure. The generator in l2(X, m; E) is ``M^{-1} K`` with ``M`` the measure
repeated over each fiber; it is self-adjoint for the weighted inner product,
and ``M^{-1/2} K M^{-1/2}`` is the unitarily equivalent Hermitian matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.io
import scipy.sparse as sp

from .bundle import BundleConnection, EndomorphismField, as_section, sgn_pair
from .config import DEFAULTS, DENSE_LIMIT
from .graph import Truncation, WeightedGraph, validate_graph
from .report import FAIL, PASS, PRECONDITION_FAILED, VerificationReport, combine

NEUMANN = "neumann"
DIRICHLET = "dirichlet"


@dataclass(frozen=True, eq=False)
class FormOperator:
    energy: sp.csr_matrix
    m: np.ndarray
    dim: int = 1
    bc: str = NEUMANN
    vertices: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.m.shape[0]
        if self.energy.shape != (n * self.dim, n * self.dim):
            raise ValueError("energy matrix does not match measure and fiber dimension")
        if not self.vertices:
            object.__setattr__(self, "vertices", tuple(range(n)))

    @property
    def n(self) -> int:
        return self.m.shape[0]

    @property
    def size(self) -> int:
        return self.n * self.dim

    @cached_property
    def weights(self) -> np.ndarray:
        """Measure repeated over each fiber, aligned with matrix rows."""
        return np.repeat(self.m, self.dim)

    @cached_property
    def generator(self) -> sp.csr_matrix:
        return sp.diags(1.0 / self.weights) @ self.energy

    def symmetric(self) -> sp.csr_matrix:
        """M^{-1/2} K M^{-1/2}: Hermitian matrix with the generator's spectrum."""
        s = sp.diags(1.0 / np.sqrt(self.weights))
        return (s @ self.energy @ s).tocsr()

    def dense_symmetric(self) -> np.ndarray:
        s = 1.0 / np.sqrt(self.weights)
        return s[:, None] * self.energy.toarray() * s[None, :]

    def hermitian_residual(self) -> float:
        diff = self.energy - self.energy.conj().T
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0

    def lambda_min(self, dense_limit: int = DENSE_LIMIT) -> float:
        """Bottom of the generator's spectrum (dense eigensolve up to ``dense_limit``)."""
        if self.size == 0:
            return 0.0
        if self.size <= dense_limit:
            return float(self.eigh[0][0])
        from scipy.sparse.linalg import eigsh

        return float(eigsh(self.symmetric(), k=1, which="SA", return_eigenvectors=False)[0])

    def flat(self, u) -> np.ndarray:
        return as_section(u, self.n, self.dim).reshape(-1)

    def unflat(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(self.n, self.dim)

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenpairs of the Hermitian matrix M^{-1/2} K M^{-1/2}."""
        return np.linalg.eigh(self.dense_symmetric())


def _check_graph(g: WeightedGraph) -> None:
    report = validate_graph(g)
    if not report.passed:
        raise ValueError(f"invalid graph: {report.violations[0]}")


def assemble_scalar(g: WeightedGraph) -> FormOperator:
    """Energy matrix of Q_{b,c}(f) = 1/2 sum b(x,y)|f(x)-f(y)|^2 + sum c(x)|f(x)|^2."""
    _check_graph(g)
    a = g.adjacency
    deg = np.asarray(a.sum(axis=1)).reshape(-1)
    k = (sp.diags(deg + g.c) - a).astype(complex).tocsr()
    k.sort_indices()
    return FormOperator(k, g.m.copy(), 1, NEUMANN, meta={"graph": g.digest, "kind": "scalar"})


def assemble_magnetic(g: WeightedGraph, conn: BundleConnection, w: EndomorphismField | None = None) -> FormOperator:
    """Energy matrix of 1/2 sum b(x,y)|u(x) - Phi_{x,y} u(y)|^2 + sum <W(x)u(x), u(x)>.

    Each unordered edge contributes both orientations at once: b I on the two
    diagonal blocks, -b Phi_{x,y} at block (x, y) and -b Phi_{x,y}^* at (y, x).
    """
    _check_graph(g)
    if conn.base is not g and conn.base.digest != g.digest:
        raise ValueError("connection is defined over a different graph")
    d = conn.dim
    if w is None:
        w = EndomorphismField.zeros(g.n, d)
    if w.n != g.n or w.dim != d:
        raise ValueError("endomorphism field shape does not match graph and fiber dimension")
    if np.max(w.hermitian_residual(), initial=0.0) > DEFAULTS.hermitian:
        raise ValueError("W(x) must be Hermitian")

    proper = g.proper
    e = g.edges[proper]
    b = g.weights[proper]
    phi = conn.phi[proper]
    ii, jj = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    ii, jj = ii.reshape(-1), jj.reshape(-1)

    rows, cols, vals = [], [], []
    # W blocks
    vx = np.arange(g.n)
    rows.append((vx[:, None] * d + ii[None]).reshape(-1))
    cols.append((vx[:, None] * d + jj[None]).reshape(-1))
    vals.append(w.w.reshape(g.n, -1).reshape(-1))
    # degree terms
    deg = np.zeros(g.n)
    np.add.at(deg, e[:, 0], b)
    np.add.at(deg, e[:, 1], b)
    diag = np.repeat(deg, d)
    rows.append(np.arange(g.n * d))
    cols.append(np.arange(g.n * d))
    vals.append(diag.astype(complex))
    # off-diagonal transport blocks
    x, y = e[:, 0], e[:, 1]
    blocks = -(b[:, None, None] * phi).reshape(len(b), d * d)
    rows.append((x[:, None] * d + ii[None]).reshape(-1))
    cols.append((y[:, None] * d + jj[None]).reshape(-1))
    vals.append(blocks.reshape(-1))
    rows.append((y[:, None] * d + jj[None]).reshape(-1))
    cols.append((x[:, None] * d + ii[None]).reshape(-1))
    vals.append(np.conj(blocks).reshape(-1))

    k = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(g.n * d, g.n * d)
    ).tocsr()
    k.eliminate_zeros()
    k.sort_indices()
    meta = {"graph": g.digest, "connection": conn.digest, "endomorphism": w.digest, "kind": "magnetic"}
    return FormOperator(k, g.m.copy(), d, NEUMANN, meta=meta)


def dirichlet_restriction(form: FormOperator, t: Truncation) -> FormOperator:
    """Principal block submatrix on the interior vertices of ``t``."""
    if form.meta.get("graph") not in (None, t.parent.digest):
        raise ValueError("form was not assembled on the truncation's parent graph")
    pos = {v: i for i, v in enumerate(form.vertices)}
    try:
        idx = np.array([pos[v] for v in t.interior], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"vertex {exc.args[0]} is outside the form's index range") from None
    d = form.dim
    rows = (idx[:, None] * d + np.arange(d)[None]).reshape(-1)
    k = form.energy[rows][:, rows].tocsr()
    meta = dict(form.meta, interior=list(t.interior))
    return FormOperator(k, form.m[idx].copy(), d, DIRICHLET, tuple(form.vertices[i] for i in idx), meta)


def export_matrix_market(form: FormOperator, target) -> None:
    """Write the energy matrix as complex Hermitian Matrix Market (lower triangle)."""
    comment = f" formdom energy matrix; bc={form.bc}; dim={form.dim}; m={form.m.tolist()}"
    scipy.io.mmwrite(target, form.energy.tocoo(), comment=comment, field="complex", symmetry="hermitian")


# --- evaluation ------------------------------------------------------------


def evaluate_form(form: FormOperator, u, v) -> complex:
    """Q(u, v) = <L u, v>, linear in u and conjugate-linear in v."""
    x, y = form.flat(u), form.flat(v)
    return complex(np.vdot(y, form.energy @ x))


def quadratic(form: FormOperator, u) -> float:
    x = form.flat(u)
    return float(np.real(np.vdot(x, form.energy @ x)))


def polarize(q, f, g) -> complex:
    """Sesquilinear form from a quadratic one: 1/4 sum_k i^k q(f + i^k g)."""
    return sum((1j**k) * q(f + (1j**k) * g) for k in range(1, 5)) / 4


def form_norm(form: FormOperator, u, mu: float = 1.0) -> float:
    """sqrt(Q(u) + mu |u|^2) in l2(m)."""
    if mu <= 0:
        raise ValueError("shift mu must be positive")
    x = form.flat(u)
    return float(np.sqrt(quadratic(form, u) + mu * np.sum(form.weights * np.abs(x) ** 2)))


def magnetic_defining_sum(g: WeightedGraph, conn: BundleConnection, w: EndomorphismField | None, u) -> float:
    """Direct evaluation of the defining double sum over ordered vertex pairs."""
    u = as_section(u, g.n, conn.dim)
    total = 0.0
    for x in range(g.n):
        for y in g.neighbors(x):
            diff = u[x] - conn.transport(x, int(y)) @ u[y]
            total += 0.5 * g.weight(x, int(y)) * float(np.vdot(diff, diff).real)
    if w is not None:
        for x in range(g.n):
            total += float(np.vdot(u[x], w.w[x] @ u[x]).real)
    return total


def scalar_defining_sum(g: WeightedGraph, f) -> float:
    f = np.asarray(f).reshape(-1)
    total = 0.0
    for x in range(g.n):
        for y in g.neighbors(x):
            total += 0.5 * g.weight(x, int(y)) * abs(f[x] - f[y]) ** 2
    return float(total + np.sum(g.c * np.abs(f) ** 2))


# --- inequality checks -------------------------------------------------------


def _require_scalar(form: FormOperator) -> None:
    if form.dim != 1:
        raise ValueError("this check needs a scalar (fiber dimension 1) form")


def check_first_bd(form: FormOperator, samples: int = 500, seed: int = 0, functions=None, tol=None) -> VerificationReport:
    """Q(|f|) <= Q(f) on complex samples and Q(f+) <= Q(f) on real samples."""
    _require_scalar(form)
    tol = DEFAULTS.form if tol is None else tol
    rng = np.random.default_rng(seed)
    if functions is None:
        functions = [rng.standard_normal(form.n) + 1j * rng.standard_normal(form.n) for _ in range(samples)]
    worst, worst_case = -np.inf, {}
    count = 0
    for i, f in enumerate(functions):
        f = np.asarray(f, dtype=complex).reshape(-1)
        qf = quadratic(form, f)
        for kind, g_ in (("abs", np.abs(f)), ("positive_part", np.maximum(f.real, 0.0))):
            ref = qf if kind == "abs" else quadratic(form, f.real)
            gap = quadratic(form, g_) - ref
            count += 1
            if gap > worst:
                worst, worst_case = gap, {"sample": i, "kind": kind, "Q(f)": ref, "Q(g)": ref + gap}
    worst = float(worst) if count else 0.0
    return VerificationReport(
        check="first_beurling_deny",
        verdict=PASS if worst <= tol else FAIL,
        max_violation=worst,
        samples=count,
        seed=seed,
        worst_case=worst_case,
    )


def check_lattice_inequality(form: FormOperator, f, g, mu: float = 1.0, tol=None) -> VerificationReport:
    """|f ^ g|_q^2 <= |f|_q^2 + |g|_q^2 for real f, g."""
    _require_scalar(form)
    tol = DEFAULTS.form if tol is None else tol
    f = np.asarray(f, dtype=float).reshape(-1)
    g = np.asarray(g, dtype=float).reshape(-1)
    lhs = form_norm(form, np.minimum(f, g), mu) ** 2
    rhs = form_norm(form, f, mu) ** 2 + form_norm(form, g, mu) ** 2
    gap = lhs - rhs
    return VerificationReport(
        check="lattice_inequality",
        verdict=PASS if gap <= tol else FAIL,
        max_violation=float(gap),
        samples=1,
        worst_case={"lhs": lhs, "rhs": rhs},
    )


def check_lattice_samples(form: FormOperator, samples: int = 1000, seed: int = 0, mu: float = 1.0, tol=None) -> VerificationReport:
    rng = np.random.default_rng(seed)
    parts = []
    for i in range(samples):
        f, g = rng.standard_normal((2, form.n))
        r = check_lattice_inequality(form, f, g, mu, tol)
        r.worst_case["sample"] = i
        parts.append(r)
    out = combine("lattice_inequality", parts, seed)
    out.details = {}
    return out


def check_kato_form_inequality(mag: FormOperator, sc: FormOperator, u, v, tol=None) -> VerificationReport:
    """Form-level Kato inequality for u and u~ = v sgn u with 0 <= v <= |u|.

    Checks Re Q_Phi(u, u~) >= Q_{b,c}(|u|, v) and the domain bound
    Q_Phi(u~) <= Q_{b,c}(v) + Q_Phi(u).
    """
    _require_scalar(sc)
    tol = DEFAULTS.form if tol is None else tol
    if sc.n != mag.n:
        raise ValueError("forms live on different vertex sets")
    u = as_section(u, mag.n, mag.dim)
    v = np.asarray(v, dtype=float).reshape(-1)
    absu = np.linalg.norm(u, axis=1)
    if np.any(v < -tol) or np.any(v > absu + tol):
        bad = int(np.argmax(np.maximum(-v, v - absu)))
        return VerificationReport(
            check="kato_form_inequality",
            verdict=PRECONDITION_FAILED,
            max_violation=float(max(-v[bad], v[bad] - absu[bad])),
            samples=0,
            worst_case={"vertex": bad, "v": float(v[bad]), "|u|": float(absu[bad])},
        )
    v = np.clip(v, 0.0, absu)
    ut = sgn_pair(u, v)
    kato = float(np.real(evaluate_form(mag, u, ut))) - float(np.real(evaluate_form(sc, absu, v)))
    domain = quadratic(mag, ut) - quadratic(sc, v) - quadratic(mag, u)
    violation = max(-kato, domain)
    return VerificationReport(
        check="kato_form_inequality",
        verdict=PASS if violation <= tol else FAIL,
        max_violation=float(violation),
        samples=1,
        worst_case={"kato_margin": kato, "domain_excess": float(domain)},
    )


def random_dominated_pair(n: int, d: int, rng: np.random.Generator):
    """Random section u and 0 <= v <= |u|, with some zero fibers and equality spots."""
    u = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    u[rng.random(n) < 0.1] = 0.0
    absu = np.linalg.norm(u, axis=1)
    frac = rng.random(n)
    frac[rng.random(n) < 0.2] = 1.0
    return u, frac * absu


def check_kato_samples(mag: FormOperator, sc: FormOperator, samples: int = 500, seed: int = 0, tol=None) -> VerificationReport:
    rng = np.random.default_rng(seed)
    parts = []
    for i in range(samples):
        u, v = random_dominated_pair(mag.n, mag.dim, rng)
        r = check_kato_form_inequality(mag, sc, u, v, tol)
        r.worst_case["sample"] = i
        parts.append(r)
    out = combine("kato_form_inequality", parts, seed)
    out.details = {}
    return out
