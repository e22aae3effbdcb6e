import numpy as np
import pytest
import scipy.linalg

from formdom.bundle import BundleConnection, EndomorphismField
from formdom.forms import assemble_magnetic, assemble_scalar
from formdom.graph import FamilySpec, WeightedGraph, generate_family
from formdom.report import FAIL
from formdom.semigroup import (
    KrylovConvergenceError,
    check_domination,
    check_positivity_preserving,
    expm_dense,
    heat_kernel,
    l2_norm,
    lanczos_expm,
)
from formdom.testing import random_graph, random_instance


def theta_pi():
    g = WeightedGraph.from_edges(2, [(0, 1, 1.0)])
    return g, assemble_magnetic(g, BundleConnection.from_phases(g, [np.pi])), assemble_scalar(g)


def scipy_oracle(form, t, xi):
    # exp(-t M^{-1} K) straight from scipy, without the eigendecomposition route
    gen = form.generator.toarray()
    return scipy.linalg.expm(-t * gen) @ np.asarray(xi, dtype=complex).reshape(-1)


@pytest.mark.parametrize("t", [0.0, 0.01, 0.5, 3.0])
def test_theta_pi_closed_form(t):
    _, mag, sc = theta_pi()
    e = np.exp(-2 * t)
    got = expm_dense(mag, t, np.array([1.0, 0.0]))
    assert np.max(np.abs(got - [(1 + e) / 2, (e - 1) / 2])) <= 1e-12
    # equality case of domination
    dom = expm_dense(sc, t, np.array([1.0, 0.0]))
    assert np.max(np.abs(np.abs(got) - dom.real)) <= 1e-12


def test_time_zero_is_identity():
    inst = random_instance(0)
    xi = np.random.default_rng(0).standard_normal((inst.graph.n, inst.mag.dim))
    assert np.array_equal(expm_dense(inst.mag, 0.0, xi), xi)
    assert np.allclose(heat_kernel(inst.mag, 0.0), np.eye(inst.mag.size), atol=1e-12)


def test_eigenvector_decays_exponentially():
    g = generate_family(FamilySpec("path", 2))
    sc = assemble_scalar(g)
    # (1, -1) is the eigenvector for eigenvalue 2
    got = expm_dense(sc, 0.7, np.array([1.0, -1.0]))
    assert np.allclose(got, np.exp(-1.4) * np.array([1.0, -1.0]), atol=1e-14)


def test_negative_time_rejected():
    _, mag, _ = theta_pi()
    with pytest.raises(ValueError):
        expm_dense(mag, -1.0, np.ones(2))


@pytest.mark.parametrize("seed", range(6))
def test_dense_matches_scipy_expm(seed):
    inst = random_instance(seed, n_max=20)
    xi = np.random.default_rng(seed).standard_normal((inst.graph.n, inst.mag.dim))
    for t in (0.05, 1.0, 4.0):
        got = expm_dense(inst.mag, t, xi).reshape(-1)
        assert np.allclose(got, scipy_oracle(inst.mag, t, xi), atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_semigroup_law(seed):
    inst = random_instance(seed)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((inst.graph.n, inst.mag.dim)) + 1j * rng.standard_normal((inst.graph.n, inst.mag.dim))
    s, t = 0.3, 1.7
    lhs = expm_dense(inst.mag, s + t, xi)
    rhs = expm_dense(inst.mag, s, expm_dense(inst.mag, t, xi))
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(xi)))


@pytest.mark.parametrize("seed", range(5))
def test_self_adjoint_and_contractive(seed):
    inst = random_instance(seed)
    rng = np.random.default_rng(seed)
    shape = (inst.graph.n, inst.mag.dim)
    u = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    w8 = inst.mag.weights.reshape(shape)
    t = 0.8
    lhs = np.sum(w8 * expm_dense(inst.mag, t, u) * np.conj(v))
    rhs = np.sum(w8 * u * np.conj(expm_dense(inst.mag, t, v)))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
    assert l2_norm(inst.mag, expm_dense(inst.mag, t, u)) <= l2_norm(inst.mag, u) * (1 + 1e-12)


def test_krylov_diagonal_one_step():
    g = WeightedGraph.from_edges(4, [], c=[1.0, 2.0, 3.0, 4.0])
    sc = assemble_scalar(g)
    y, stats = lanczos_expm(sc, 1.0, np.array([0.0, 0.0, 1.0, 0.0]))
    assert stats.steps == 1
    assert np.allclose(y, [0, 0, np.exp(-3.0), 0], atol=1e-15)


def test_krylov_time_zero():
    inst = random_instance(1)
    xi = np.random.default_rng(2).standard_normal((inst.graph.n, inst.mag.dim))
    y, _ = lanczos_expm(inst.mag, 0.0, xi)
    assert np.array_equal(y, xi)


def test_krylov_path_200():
    sc = assemble_scalar(generate_family(FamilySpec("path", 200)))
    xi = np.random.default_rng(0).standard_normal(200)
    for t in (0.1, 1.0, 10.0):
        y, _ = lanczos_expm(sc, t, xi)
        ref = expm_dense(sc, t, xi)
        assert np.linalg.norm(y - ref) <= 1e-8 * np.linalg.norm(xi)


def test_krylov_substeps_on_stiff_problem():
    g = random_graph(np.random.default_rng(4), 120)
    g = WeightedGraph(g.n, g.edges, 50 * g.weights, g.c, 0.05 * g.m)
    inst_form = assemble_scalar(g)
    xi = np.random.default_rng(5).standard_normal(g.n)
    y, stats = lanczos_expm(inst_form, 5.0, xi, max_dim=12)
    assert stats.substeps > 1
    assert np.linalg.norm(y - expm_dense(inst_form, 5.0, xi)) <= 1e-8 * np.linalg.norm(xi)


def test_krylov_gives_up():
    sc = assemble_scalar(generate_family(FamilySpec("path", 50)))
    with pytest.raises(KrylovConvergenceError):
        lanczos_expm(sc, 1.0, np.random.default_rng(0).standard_normal(50), tol=1e-14, max_dim=2, max_halvings=2)


@pytest.mark.parametrize("seed", range(5))
def test_krylov_random_magnetic(seed):
    inst = random_instance(seed, n_max=80)
    rng = np.random.default_rng(seed)
    shape = (inst.graph.n, inst.mag.dim)
    xi = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    y, _ = lanczos_expm(inst.mag, 2.0, xi)
    ref = expm_dense(inst.mag, 2.0, xi)
    assert l2_norm(inst.mag, y - ref) <= 1e-8 * l2_norm(inst.mag, xi)


def test_positivity_path_and_edgeless():
    path = assemble_scalar(generate_family(FamilySpec("path", 6)))
    r = check_positivity_preserving(path)
    assert r.passed and r.details["basis_max_violation"] <= 1e-12
    edgeless = assemble_scalar(WeightedGraph.from_edges(3, [], c=[0.0, 1.0, 2.0]))
    kernel = heat_kernel(edgeless, 1.0)
    assert np.allclose(kernel, np.diag(np.exp(-np.array([0.0, 1.0, 2.0]))))
    assert check_positivity_preserving(edgeless).passed


def test_positivity_fails_for_theta_pi_as_scalar():
    _, mag, _ = theta_pi()
    r = check_positivity_preserving(mag, t_grid=[1.0])
    assert r.verdict == FAIL
    assert r.max_violation == pytest.approx((1 - np.exp(-2.0)) / 2)


@pytest.mark.parametrize("seed", range(5))
def test_positivity_random_scalar(seed):
    assert check_positivity_preserving(random_instance(seed).scalar, samples=5, seed=seed).passed


def test_domination_theta_pi_equality():
    _, mag, sc = theta_pi()
    r = check_domination(mag, sc, sections=np.array([[1.0], [0.0]]))
    assert r.passed
    assert abs(r.max_violation) <= 1e-12


def test_domination_trivial_connection():
    g = random_graph(np.random.default_rng(0), 12)
    mag = assemble_magnetic(g, BundleConnection.trivial(g, 1), EndomorphismField.scalar(g.c))
    r = check_domination(mag, assemble_scalar(g), samples=10)
    assert r.passed and abs(r.max_violation) <= 1e-10


@pytest.mark.parametrize("seed", range(8))
def test_domination_random(seed):
    inst = random_instance(seed)
    assert check_domination(inst.mag, inst.scalar, samples=10, seed=seed).passed


def test_domination_violation_witness():
    g = WeightedGraph.from_edges(2, [(0, 1, 1.0)], c=[1.0, 0.0])
    mag = assemble_magnetic(g, BundleConnection.trivial(g, 1), EndomorphismField.zeros(2, 1))
    r = check_domination(mag, assemble_scalar(g), samples=10)
    assert r.verdict == FAIL
    assert r.max_violation > 1e-3
    assert set(r.worst_case) >= {"t", "sample", "vertex"}


def test_domination_argument_checks():
    _, mag, sc = theta_pi()
    with pytest.raises(ValueError):
        check_domination(mag, sc, t_grid=[-1.0])
    g = generate_family(FamilySpec("path", 2))
    two = assemble_magnetic(g, BundleConnection.trivial(g, 2))
    with pytest.raises(ValueError):
        check_domination(two, two)
    heavy = assemble_scalar(WeightedGraph.from_edges(2, [(0, 1, 1.0)], m=[1.0, 2.0]))
    with pytest.raises(ValueError):
        check_domination(mag, heavy)
