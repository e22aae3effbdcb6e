"""Dirichlet versus Neumann forms on growing truncations.

For each size N the family member is cut at its last BFS ring around the
probe vertex; the Neumann form lives on the whole member, the Dirichlet form
is its principal restriction to the interior. The observables are the
bottom-eigenvalue difference and the resolvent difference at one vertex.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .bundle import (
    BundleConnection,
    EndomorphismField,
    random_endomorphism_field,
    random_phase_connection,
    random_unitary_connection,
)
from .config import DEFAULTS, DENSE_LIMIT, ordered_map
from .forms import FormOperator, assemble_magnetic, assemble_scalar, dirichlet_restriction
from .graph import FamilySpec, generate_family, last_ring_truncation
from .report import VerificationReport, _jsonable

SUPPORTED = "SUPPORTED"
INCONCLUSIVE = "INCONCLUSIVE"
NOT_SUPPORTED = "NOT_SUPPORTED"

CONNECTIONS = ("trivial", "random-phase", "random-unitary")
W_SPECS = ("c", "c+random")


class ResolventConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


def _conjugate_gradient(form: FormOperator, z: float, rhs: np.ndarray, tol: float, max_iter: int):
    """CG for the Hermitian positive definite system (K + z M) u = rhs."""
    A = form.energy
    w8 = form.weights
    u = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rr = np.vdot(r, r).real
    target = (tol * np.linalg.norm(rhs)) ** 2
    for _ in range(max_iter):
        if rr <= target:
            break
        Ap = A @ p + z * w8 * p
        step = rr / np.vdot(p, Ap).real
        u += step * p
        r -= step * Ap
        rr_new = np.vdot(r, r).real
        p = r + (rr_new / rr) * p
        rr = rr_new
    return u


def resolvent_apply(form: FormOperator, z: float, f, dense_limit: int = DENSE_LIMIT, tol=None, max_iter: int | None = None):
    """Solve (L + z) u = f with L the generator in l2(m)."""
    if not z > 0:
        raise ValueError("resolvent shift must be positive")
    tol = DEFAULTS.resolvent if tol is None else tol
    fx = form.flat(f)
    w8 = form.weights
    rhs = w8 * fx
    if form.size <= dense_limit:
        mat = form.energy.toarray() + z * np.diag(w8)
        u = scipy.linalg.solve(mat, rhs, assume_a="her")
    else:
        u = _conjugate_gradient(form, z, rhs, tol * 1e-2, max_iter or 10 * form.size)
    resid = (form.energy @ u) / w8 + z * u - fx
    fnorm = np.sqrt(np.sum(w8 * np.abs(fx) ** 2))
    rel = float(np.sqrt(np.sum(w8 * np.abs(resid) ** 2)) / fnorm) if fnorm > 0 else 0.0
    if rel > tol:
        raise ResolventConvergenceError("resolvent solve did not reach tolerance", rel)
    return u.reshape(np.shape(f))


@dataclass
class ProbeResult:
    family: str
    sizes: list
    scalar_gap: list
    magnetic_gap: list
    resolvent_diff: list
    magnetic_resolvent_diff: list
    scalar_slope: float | None
    magnetic_slope: float | None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["N", "scalarGap", "magneticGap", "resolventDiff"])
        for row in zip(self.sizes, self.scalar_gap, self.magnetic_gap, self.resolvent_diff):
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


def fit_slope(sizes, gaps) -> float | None:
    """Least-squares slope of log(gap) against log(N); None when any gap <= 0."""
    sizes = np.asarray(sizes, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if sizes.size < 2 or np.any(gaps <= 0):
        return None
    return float(np.polyfit(np.log(sizes), np.log(gaps), 1)[0])


def build_connection(kind: str, g, dim: int, seed) -> BundleConnection:
    if kind == "trivial":
        return BundleConnection.trivial(g, dim)
    if kind == "random-phase":
        if dim != 1:
            raise ValueError("random-phase connections are line bundles (dim 1)")
        return random_phase_connection(g, seed)
    if kind == "random-unitary":
        return random_unitary_connection(g, dim, seed)
    raise ValueError(f"unknown connection kind {kind!r}; expected one of {CONNECTIONS}")


def build_endomorphism(kind: str, g, dim: int, seed) -> EndomorphismField:
    if kind == "c":
        return EndomorphismField.scalar(g.c, dim)
    if kind == "c+random":
        return random_endomorphism_field(g, dim, seed)
    raise ValueError(f"unknown endomorphism kind {kind!r}; expected one of {W_SPECS}")


def _resolvent_difference(neu: FormOperator, dir_: FormOperator, x0: int, z: float) -> float:
    delta = np.zeros((neu.n, neu.dim), dtype=complex)
    delta[x0, 0] = 1.0
    u_n = resolvent_apply(neu, z, delta)
    inside = list(dir_.vertices)
    u_d = np.zeros_like(u_n)
    u_d[inside] = resolvent_apply(dir_, z, delta[inside])
    diff = u_n - u_d
    return float(np.sqrt(np.sum(neu.m[:, None] * np.abs(diff) ** 2)))


def probe_size(family: FamilySpec, N: int, connection: str, w: str, dim: int, seed: int, x0: int, z: float) -> dict:
    g = generate_family(family.with_size(N))
    if not 0 <= x0 < g.n:
        raise ValueError(f"probe vertex {x0} is outside the family member of size {N}")
    t = last_ring_truncation(g, x0)
    if x0 not in t.interior:
        raise ValueError(f"probe vertex {x0} is not inside the truncation of size {N}")
    sc_n = assemble_scalar(g)
    sc_d = dirichlet_restriction(sc_n, t)
    chain = [seed, N]
    conn = build_connection(connection, g, dim, chain + [0])
    mag_n = assemble_magnetic(g, conn, build_endomorphism(w, g, dim, chain + [1]))
    mag_d = dirichlet_restriction(mag_n, t)
    return {
        "N": N,
        "vertices": g.n,
        "interior": t.size,
        "scalar_gap": sc_d.lambda_min() - sc_n.lambda_min(),
        "magnetic_gap": mag_d.lambda_min() - mag_n.lambda_min(),
        "resolvent_diff": _resolvent_difference(sc_n, sc_d, x0, z),
        "magnetic_resolvent_diff": _resolvent_difference(mag_n, mag_d, x0, z),
    }


def run_probe(
    family: FamilySpec,
    sizes,
    connection: str = "random-phase",
    w: str = "c",
    dim: int = 1,
    seed: int = 0,
    x0: int = 0,
    z: float = 1.0,
) -> ProbeResult:
    sizes = [int(N) for N in sizes]
    if not sizes:
        raise ValueError("need at least one truncation size")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly increasing")
    rows = ordered_map(lambda N: probe_size(family, N, connection, w, dim, seed, x0, z), sizes)
    sg = [r["scalar_gap"] for r in rows]
    mg = [r["magnetic_gap"] for r in rows]
    return ProbeResult(
        family=family.name,
        sizes=sizes,
        scalar_gap=sg,
        magnetic_gap=mg,
        resolvent_diff=[r["resolvent_diff"] for r in rows],
        magnetic_resolvent_diff=[r["magnetic_resolvent_diff"] for r in rows],
        scalar_slope=fit_slope(sizes, sg),
        magnetic_slope=fit_slope(sizes, mg),
        meta={
            "family_spec": asdict(family),
            "connection": connection,
            "endomorphism": w,
            "dim": dim,
            "seed": seed,
            "x0": x0,
            "z": z,
            "vertices": [r["vertices"] for r in rows],
            "interior": [r["interior"] for r in rows],
            "observables": "bottom-eigenvalue difference and resolvent difference at x0 are finite-scale proxies",
        },
    )


def _decays(slope, gaps, threshold) -> bool:
    return slope is not None and slope < 0 and gaps[-1] < threshold


def transfer_evidence(result: ProbeResult, gap_threshold: float = 1e-2):
    """Does a decaying scalar gap come with a decaying magnetic gap?

    SUPPORTED when both decay (negative fitted slope, final gap below the
    threshold); INCONCLUSIVE when the scalar gap does not decay; NOT_SUPPORTED
    when the scalar gap decays but the magnetic one does not.
    """
    if not result.sizes:
        raise ValueError("probe result has no sizes")
    scalar = _decays(result.scalar_slope, result.scalar_gap, gap_threshold)
    magnetic = _decays(result.magnetic_slope, result.magnetic_gap, gap_threshold)
    if not scalar:
        verdict = INCONCLUSIVE
    elif magnetic:
        verdict = SUPPORTED
    else:
        verdict = NOT_SUPPORTED
    return VerificationReport(
        check="transfer_evidence",
        verdict=verdict,
        max_violation=float(result.magnetic_gap[-1]),
        samples=len(result.sizes),
        seed=result.meta.get("seed"),
        worst_case={},
        details={
            "scalar_trend": {"slope": result.scalar_slope, "final_gap": result.scalar_gap[-1], "decays": scalar},
            "magnetic_trend": {"slope": result.magnetic_slope, "final_gap": result.magnetic_gap[-1], "decays": magnetic},
            "gap_threshold": gap_threshold,
        },
    )
