import math

import numpy as np
import pytest
from scipy import integrate
from sklearn.base import clone

from matbern import kernelops, spectral
from matbern.errors import DomainError
from matbern.kernelops import EmpiricalIntegralOperator, KernelSpec

GAUSS = KernelSpec("gaussian", bandwidth=0.5)


def test_gram_examples():
    g = kernelops.gram(KernelSpec("gaussian", bandwidth=1.0), [0.3, 0.3])
    assert np.allclose(g, 0.5 * np.ones((2, 2)))
    assert np.allclose(kernelops.empirical_operator_eigs(g), [1, 0])
    assert np.allclose(kernelops.gram(GAUSS, [0.7]), [[1.0]])
    far = KernelSpec("gaussian", bandwidth=0.01, low=(0.0,), high=(10.0,))
    g = kernelops.gram(far, [0.0, 2.5, 5.0, 7.5])
    assert np.allclose(g, np.eye(4) / 4, atol=1e-12)
    assert np.all(kernelops.empirical_operator_eigs(np.zeros((3, 3))) == 0)
    with pytest.raises(DomainError):
        kernelops.gram(GAUSS, [1.5])


def test_gram_trace_and_psd():
    rng = np.random.default_rng(0)
    pts = GAUSS.sample(rng, 40)
    g = kernelops.gram(GAUSS, pts)
    eig = kernelops.empirical_operator_eigs(g)
    assert eig.sum() == pytest.approx(np.trace(g))
    assert np.trace(g) <= kernelops.kappa(GAUSS) + 1e-12
    assert spectral.lambda_min(g) >= -1e-10


def test_reference_operator_trace_and_refinement():
    ref = kernelops.reference_operator(GAUSS, 2048)
    assert np.trace(ref) == pytest.approx(1.0, abs=1e-6)
    a = kernelops.nystrom_reference(GAUSS, 1000).eigenvalues[:10]
    b = kernelops.nystrom_reference(GAUSS, 2000).eigenvalues[:10]
    assert np.max(np.abs(a - b)) <= 1e-4


def test_gaussian_top_eigenvalue_against_galerkin():
    # independent oracle: Legendre-Galerkin discretization of the integral operator
    deg = 30
    xs, ws = np.polynomial.legendre.leggauss(200)
    x = 0.5 * (xs + 1)
    w = 0.5 * ws
    P = np.stack([np.polynomial.legendre.Legendre.basis(k)(2 * x - 1) * math.sqrt(2 * k + 1) for k in range(deg)])
    K = np.exp(-((x[:, None] - x[None, :]) ** 2) / (2 * 0.25))
    A = (P * w) @ K @ (P * w).T
    top = np.linalg.eigvalsh(A)[::-1][:5]
    ref = kernelops.nystrom_reference(GAUSS, 4000).eigenvalues[:5]
    assert np.allclose(ref, top, atol=1e-6)


def test_polynomial_rank_one():
    spec = KernelSpec("polynomial", degree=1, offset=0.0)
    ev = kernelops.nystrom_reference(spec, 2000).eigenvalues
    assert ev[0] == pytest.approx(1 / 3, abs=1e-6)
    assert ev.size == 1 or ev[1] < 1e-10
    assert kernelops.kappa(spec) == pytest.approx(1.0)


def test_kappa_grid_search_2d():
    spec = KernelSpec("polynomial", degree=2, offset=1.0, low=(0.0, 0.0), high=(1.0, 2.0))
    # sup over the box of (|x|^2 + 1)^2 sits at the far corner
    assert kernelops.kappa(spec) == pytest.approx(36.0)


def test_deviation_zero_when_sample_is_the_node_set():
    m = 64
    nodes = kernelops.quadrature_nodes(GAUSS, m)
    assert kernelops.joint_deviation(GAUSS, nodes, m).deviation < 1e-8


def test_gram_matches_explicit_operator_spectrum():
    rng = np.random.default_rng(5)
    for n in (5, 20, 50):
        pts = GAUSS.sample(rng, n)
        g = kernelops.empirical_operator_eigs(kernelops.gram(GAUSS, pts))
        full = kernelops.empirical_operator_spectrum(GAUSS, pts, 60)
        k = int((g > 1e-8).sum())
        assert np.allclose(g[:k], full[:k], atol=1e-8)


def test_projected_matches_joint():
    rng = np.random.default_rng(8)
    for _ in range(3):
        pts = GAUSS.sample(rng, 30)
        a = kernelops.operator_deviation(GAUSS, pts, 300, method="joint")
        b = kernelops.operator_deviation(GAUSS, pts, 300, method="projected")
        assert a == pytest.approx(b, abs=1e-8)
    with pytest.raises(DomainError):
        kernelops.operator_deviation(GAUSS, pts, 300, method="other")


def test_deviation_dominates_eigenvalue_gaps():
    rng = np.random.default_rng(12)
    ref = kernelops.nystrom_reference(GAUSS, 1000)
    for _ in range(20):
        pts = GAUSS.sample(rng, 50)
        dev = kernelops.operator_deviation(GAUSS, pts, 1000)
        emp = kernelops.empirical_operator_eigs(kernelops.gram(GAUSS, pts))[:10]
        gaps = np.abs(emp - ref.eigenvalues[:10])
        assert gaps.max() <= dev + 1e-6


def test_deviation_shrinks_with_n():
    rng = np.random.default_rng(1)
    small = kernelops.operator_deviation(GAUSS, GAUSS.sample(rng, 100), 2048)
    large = kernelops.operator_deviation(GAUSS, GAUSS.sample(rng, 4000), 2048)
    assert large < small


def test_xi_norm_bounded_by_two_kappa():
    ref = kernelops.nystrom_reference(GAUSS, 1000)
    rng = np.random.default_rng(2)
    C = ref.coords(GAUSS.sample(rng, 200))
    mu = ref.eigenvalues
    for c in C.T:
        xi = np.outer(c, c) - np.diag(mu)
        assert spectral.op_norm(xi) <= 2 * kernelops.kappa(GAUSS) + 1e-8


def test_xi_parameters():
    p = kernelops.xi_parameters(GAUSS, 1000)
    assert p.kappa == 1.0
    assert p.Lk_norm <= 1.0 + 1e-9
    assert p.xi_intdim >= 1
    # E xi^2 has top eigenvalue at most kappa ||L_K||
    E2 = kernelops.nystrom_reference(GAUSS, 1000).xi_second_moment()
    assert spectral.lambda_max(E2) <= p.kappa * p.Lk_norm + 1e-9


def test_xi_second_moment_against_quadrature():
    # E xi^2 in the span: tr E xi^2 = E K(X,X)^2 ... = int int K(x,y)^2 - tr L^2 for a Gaussian with K(x,x)=1
    ref = kernelops.nystrom_reference(GAUSS, 1000)
    tr = np.trace(ref.xi_second_moment())
    mu = ref.eigenvalues
    expected = 1.0 * mu.sum() - (mu * mu).sum()
    assert tr == pytest.approx(expected, rel=1e-9)
    # and tr L_K = int K(x,x) dx = 1
    assert mu.sum() == pytest.approx(integrate.quad(lambda x: 1.0, 0, 1)[0], abs=1e-8)


def test_certificate():
    params = kernelops.XiParameters(1.0, 0.5, 4.0, 0)
    res = kernelops.cor10_certificate(GAUSS, 100, 0.3, 0, params=params)
    assert res.raw == pytest.approx(0.161477, abs=1e-5)
    res = kernelops.cor10_certificate(GAUSS, 200, 0.01, 500)
    assert not res.valid
    assert kernelops.cor10_certificate(GAUSS, 200, 5.0, 500).raw < 1e-20
    ref = kernelops.cor10_certificate(GAUSS, 200, 0.2, 400, refine=True)
    assert ref.meta["refinement_delta"] >= 0


def test_small_dominance_study():
    rep = kernelops.kernel_dominance(GAUSS, 50, np.linspace(0.15, 0.6, 5), 100, 300, seed=3)
    assert rep.passed
    assert len(rep.meta["deviations"]) == 100


def test_estimator_api():
    rng = np.random.default_rng(4)
    X = rng.random((30, 1))
    est = EmpiricalIntegralOperator(bandwidth=0.5, n_components=4).fit(X)
    assert np.allclose(est.eigenvalues_, kernelops.empirical_operator_eigs(kernelops.gram(GAUSS, X))[:4])
    F = est.transform(X)
    assert F.shape == (30, 4)
    # RKHS-normalized eigenfunctions have squared L2(P_n) norm equal to their eigenvalue
    assert np.allclose(F.T @ F / 30, np.diag(est.eigenvalues_), atol=1e-10)
    assert clone(est).get_params()["n_components"] == 4
    assert est.deviation_from_reference(200) >= 0
