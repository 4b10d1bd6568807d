"""A posteriori error estimator: sigma_min, residual norms, effectivity."""

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.stats import spearmanr

from rbadapt.estimator import (
    EstimatorContext,
    dual_quantities,
    estimate_error,
    primal_residual,
    sigma_min,
    true_error_metrics,
)
from rbadapt.fom import (
    AffineOperator,
    ParametricFOM,
    SingularOperatorError,
    build_burgers,
    build_convdiff,
    simulate,
)
from rbadapt.rom import Basis, galerkin_project, pod_extend, simulate_rom


# ---------------------------------------------------------------- sigma_min

def test_sigma_min_identity():
    assert np.isclose(sigma_min(sp.identity(5, format="csc")), 1.0)


def test_sigma_min_diagonal():
    M = sp.diags([1.0, 2.0, 3.0]).tocsc()
    assert np.isclose(sigma_min(M), 1.0, rtol=1e-6)


def test_sigma_min_matches_dense_svd_oracle():
    rng = np.random.RandomState(0)
    for trial in range(5):
        M = sp.random(50, 50, density=0.2, random_state=rng) + sp.identity(50)
        ref = np.linalg.svd(M.toarray(), compute_uv=False).min()
        assert np.isclose(sigma_min(M), ref, rtol=1e-6)


def test_sigma_min_nonsymmetric():
    rng = np.random.RandomState(1)
    M = sp.random(40, 40, density=0.3, random_state=rng) + 2.0 * sp.identity(40)
    ref = np.linalg.svd(M.toarray(), compute_uv=False).min()
    assert np.isclose(sigma_min(M), ref, rtol=1e-6)


def test_sigma_min_clustered_spectrum():
    # near-identity operators have a tightly clustered spectrum; the plain
    # power iteration stalls there and the accelerated path must take over
    fom = build_burgers(n=200, K=400)
    E = fom.E.assemble([0.001])
    ref = np.linalg.svd(E.toarray(), compute_uv=False).min()
    assert np.isclose(sigma_min(E), ref, rtol=1e-6)


def test_sigma_min_deterministic():
    rng = np.random.RandomState(2)
    M = sp.random(30, 30, density=0.3, random_state=rng) + sp.identity(30)
    assert sigma_min(M) == sigma_min(M)


def test_sigma_min_singular_raises():
    Z = sp.csc_matrix((4, 4))
    with pytest.raises(SingularOperatorError):
        sigma_min(Z)


# ---------------------------------------------------------------- residuals

def _toy_fom():
    n = 2
    E = AffineOperator([(lambda mu: 1.0, sp.csr_matrix(np.array([[2.0, 0.5],
                                                                 [0.0, 1.0]])))])
    A = AffineOperator([(lambda mu: float(mu[0]),
                         sp.csr_matrix(np.array([[0.5, 0.1], [0.2, 0.3]])))])
    B = AffineOperator([(lambda mu: 1.0, sp.csr_matrix(np.array([[1.0], [0.0]])))])
    C = AffineOperator([(lambda mu: 1.0, sp.csr_matrix(np.array([[1.0, 1.0]])))])
    return ParametricFOM(
        n=n, E=E, A=A, f=None, B=B, C=C,
        time_grid=np.linspace(0.0, 1.0, 3), input=np.ones((2, 1)),
        param_domain=np.array([[0.1, 2.0]]), x0=np.array([1.0, -1.0]),
    )


def test_primal_residual_matches_dense_oracle():
    fom = _toy_fom()
    basis = Basis(np.array([[1.0], [0.0]]))  # r = 1
    rom = galerkin_project(fom, basis)
    mu = np.array([0.7])
    traj_r = simulate_rom(rom, mu)
    norms = primal_residual(fom, rom, mu, traj_r)

    E = fom.E.assemble(mu).toarray()
    A = fom.A.assemble(mu).toarray()
    B = fom.B.assemble(mu).toarray()
    V = basis.V
    for k in range(2):
        res = (A @ (V @ traj_r.states[:, k]) + B @ fom.input[k]
               - E @ (V @ traj_r.states[:, k + 1]))
        assert np.isclose(norms[k], np.linalg.norm(res), rtol=1e-12)


def test_primal_residual_zero_for_full_basis(convdiff_small):
    fom = convdiff_small
    rom = galerkin_project(fom, Basis(np.eye(fom.n)))
    mu = np.array([0.3, 2.0])
    traj_r = simulate_rom(rom, mu)
    norms = primal_residual(fom, rom, mu, traj_r)
    scale = np.linalg.norm(traj_r.states, axis=0)[1:]
    assert np.all(norms <= 1e-10 * np.maximum(scale, 1.0))


def test_dual_quantities_zero_residual_for_full_basis(convdiff_small):
    fom = convdiff_small
    rom = galerkin_project(fom, Basis(np.eye(fom.n)))
    xdu_norm, rdu = dual_quantities(fom, rom, [0.3, 2.0])
    assert xdu_norm > 0
    assert np.all(rdu <= 1e-8 * max(1.0, xdu_norm))


# ---------------------------------------------------------------- estimate_error

@pytest.mark.parametrize("make,mu", [
    (lambda: build_burgers(n=150, K=300), [0.5]),
    (lambda: build_convdiff(n=200, K=100), [0.3, 2.0]),
])
def test_estimate_near_zero_with_identity_basis(make, mu):
    fom = make()
    rom = galerkin_project(fom, Basis(np.eye(fom.n)))
    est = estimate_error(fom, rom, mu)
    assert est.value <= 1e-8


def test_estimator_makes_zero_fom_solves(convdiff_small):
    fom = convdiff_small
    X = simulate(fom, [0.2, 1.0]).states[:, 1:]
    basis = pod_extend(Basis.empty(fom.n), X, 5)
    rom = galerkin_project(fom, basis)
    ctx = EstimatorContext()
    before = fom.stats.solves
    for mu in ([0.3, 2.0], [0.8, 4.0], [0.05, 0.7]):
        estimate_error(fom, rom, mu, ctx)
    assert fom.stats.solves == before
    assert ctx.estimate_calls == 3


def test_sigma_min_cache_reused(convdiff_small):
    fom = convdiff_small
    X = simulate(fom, [0.2, 1.0]).states[:, 1:]
    basis = pod_extend(Basis.empty(fom.n), X, 4)
    rom = galerkin_project(fom, basis)
    ctx = EstimatorContext()
    estimate_error(fom, rom, [0.3, 2.0], ctx)
    assert len(ctx.sigma_cache) == 1
    estimate_error(fom, rom, [0.3, 2.0], ctx)
    assert len(ctx.sigma_cache) == 1
    estimate_error(fom, rom, [0.4, 2.0], ctx)
    assert len(ctx.sigma_cache) == 2


def test_estimate_value_is_mean_of_steps(convdiff_small):
    fom = convdiff_small
    X = simulate(fom, [0.2, 1.0]).states[:, 1:]
    basis = pod_extend(Basis.empty(fom.n), X, 3)
    rom = galerkin_project(fom, basis)
    est = estimate_error(fom, rom, [0.6, 3.0])
    assert np.isclose(est.value, est.per_step.mean())
    assert est.value >= 0 and np.isfinite(est.value)


def test_estimator_rank_correlation_with_true_error():
    fom = build_convdiff(n=200, K=100)
    # train on a few parameters so errors vary meaningfully over the domain
    basis = Basis.empty(fom.n)
    for mu in ([0.05, 1.0], [0.8, 4.5]):
        X = simulate(fom, mu).states[:, 1:]
        basis = pod_extend(basis, X, 6)
    rom = galerkin_project(fom, basis)

    rng = np.random.default_rng(0)
    lo = fom.param_domain[:, 0]
    hi = fom.param_domain[:, 1]
    params = lo + (hi - lo) * rng.random((50, 2))
    ctx = EstimatorContext()
    deltas = np.array([estimate_error(fom, rom, mu, ctx).value for mu in params])
    eps, _ = true_error_metrics(fom, rom, list(params))
    rho = spearmanr(deltas, eps).statistic
    assert rho >= 0.8


def test_estimator_upper_bounds_true_error(convdiff_small):
    # the substitute constant is conservative: estimated >= true output error
    fom = convdiff_small
    X = simulate(fom, [0.2, 1.0]).states[:, 1:]
    basis = pod_extend(Basis.empty(fom.n), X, 5)
    rom = galerkin_project(fom, basis)
    for mu in ([0.4, 2.0], [0.9, 4.0]):
        est = estimate_error(fom, rom, mu)
        eps, _ = true_error_metrics(fom, rom, [mu])
        assert est.value >= eps[0]
