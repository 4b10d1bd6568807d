"""A posteriori output error estimation from residuals and dual quantities.

The per-step indicator is Delta^{k+1}(mu) = Psi(mu) * ||r_pr^{k+1}|| with

    Psi(mu) = (max_k ||x_du^k|| + max_k ||r_du^k|| / sigma_min(E(mu)))
              / sigma_min(E(mu)),

and the reported value is the time mean of the per-step indicators.  The
estimator never solves the full-order model: residual norms are evaluated
through offline Gram expansions of the affine terms (DEIM-approximated
nonlinearity for nonlinear models), and the dual system is solved in reduced
coordinates on the primal basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.linalg import splu

from .fom import ParametricFOM, SingularOperatorError
from .rom import ReducedModel, simulate_rom


def sigma_min(M, tol=1e-6, maxiter=500):
    """Smallest singular value via inverse power iteration on M^T M.

    Deterministic all-ones start vector; sparse LU of M solves both M and M^T.
    """
    M = sp.csc_matrix(M)
    n = M.shape[0]
    if M.shape[0] != M.shape[1]:
        raise ValueError("sigma_min needs a square matrix")
    try:
        lu = splu(M)
    except RuntimeError as exc:
        raise SingularOperatorError("singular operator in sigma_min") from exc

    Mt = M.T.tocsc()
    v = np.ones(n) / np.sqrt(n)
    theta = np.nan
    plain_iters = min(50, maxiter)
    for _ in range(plain_iters):
        w = lu.solve(v, trans="T")
        w = lu.solve(w)  # (M^T M)^{-1} v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            raise SingularOperatorError("inverse iteration collapsed to zero")
        v = w / nrm
        Mv = M @ v
        theta = float(Mv @ Mv)  # Rayleigh quotient of M^T M
        # symmetric backward-error bound: an eigenvalue of M^T M lies within
        # the residual norm of theta, so this certifies the relative accuracy
        # even when the bottom of the spectrum is clustered
        res = np.linalg.norm(Mt @ Mv - theta * v)
        if res <= tol * theta:
            return float(np.sqrt(theta))

    # a tight eigenvalue cluster at the bottom of the spectrum stalls the
    # plain iteration; polynomial (Lanczos) acceleration of the same inverse
    # operator resolves it from the current deterministic iterate
    op = spla.LinearOperator(
        (n, n), matvec=lambda x: lu.solve(lu.solve(x, trans="T"))
    )
    try:
        lam = spla.eigsh(op, k=1, which="LM", v0=v, tol=tol,
                         maxiter=maxiter, return_eigenvectors=False)
        return float(1.0 / np.sqrt(lam[0]))
    except spla.ArpackNoConvergence as exc:
        raise RuntimeError(
            f"sigma_min did not converge in {maxiter} iterations; last value "
            f"{np.sqrt(theta):.6e}"
        ) from exc


@dataclass
class ErrorEstimate:
    value: float
    per_step: np.ndarray | None
    sigma_min_used: float


@dataclass
class EstimatorContext:
    """Cross-call caches and instrumentation for estimator sweeps."""

    sigma_cache: dict = field(default_factory=dict)
    estimate_calls: int = 0

    def get_sigma_min(self, fom: ParametricFOM, mu):
        key = (id(fom), tuple(np.atleast_1d(np.asarray(mu, dtype=float))))
        if key not in self.sigma_cache:
            self.sigma_cache[key] = sigma_min(fom.E.assemble(mu))
        return self.sigma_cache[key]


class _BlockGram:
    """Gram expansion of || sum_j coeff_j * Block_j z_j || for fixed blocks.

    Blocks are tall n-by-p_j matrices fixed offline; online norms cost
    O(D^2) with D = sum p_j, independent of n.
    """

    def __init__(self, blocks):
        self.sizes = [b.shape[1] for b in blocks]
        cat = np.hstack([np.asarray(b) for b in blocks]) if blocks else np.empty((0, 0))
        # store the triangular factor instead of the Gram matrix itself:
        # ||cat z|| = ||R z|| without squaring, so the online norm keeps full
        # precision even when the residual nearly cancels
        self.R = np.linalg.qr(cat, mode="r") if cat.size else np.empty((0, 0))

    def norm(self, parts):
        z = np.concatenate(parts) if parts else np.zeros(0)
        return float(np.linalg.norm(self.R @ z))


def _dense(M):
    return sp.csr_matrix(M).toarray()


def _primal_gram(fom: ParametricFOM, rom: ReducedModel):
    if "primal_gram" not in rom._cache:
        V = rom.basis.V
        blocks = [sp.csr_matrix(M) @ V for _, M in fom.A.terms]
        blocks += [_dense(M) for _, M in fom.B.terms]
        blocks += [sp.csr_matrix(M) @ V for _, M in fom.E.terms]
        if fom.f is not None and rom.deim is not None and rom.deim.ell > 0:
            blocks += [rom.deim.U_f]
        rom._cache["primal_gram"] = _BlockGram(blocks)
    return rom._cache["primal_gram"]


def primal_residual(fom: ParametricFOM, rom: ReducedModel, mu, traj_r):
    """Euclidean norms of r_pr^{k+1} for k = 0..K-1.

    Affine (and DEIM-approximated) terms go through the offline Gram
    expansion; a nonlinearity without DEIM falls back to lifted O(n)
    evaluation.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    X = traj_r.states
    K = X.shape[1] - 1
    U = fom.input

    lifted_nonlinearity = fom.f is not None and (rom.deim is None or rom.deim.ell == 0)
    if lifted_nonlinearity:
        V = rom.basis.V
        A = sp.csr_matrix(fom.A.assemble(mu))
        B = sp.csr_matrix(fom.B.assemble(mu))
        E = sp.csr_matrix(fom.E.assemble(mu))
        norms = np.empty(K)
        for k in range(K):
            xk = V @ X[:, k]
            res = A @ xk + fom.f(xk, mu) + B @ U[k] - E @ (V @ X[:, k + 1])
            norms[k] = np.linalg.norm(res)
        return norms

    gram = _primal_gram(fom, rom)
    thA = [float(t(mu)) for t, _ in fom.A.terms]
    thB = [float(t(mu)) for t, _ in fom.B.terms]
    thE = [float(t(mu)) for t, _ in fom.E.terms]
    use_deim = fom.f is not None and rom.deim is not None and rom.deim.ell > 0

    norms = np.empty(K)
    for k in range(K):
        parts = [c * X[:, k] for c in thA]
        parts += [c * U[k] for c in thB]
        parts += [-c * X[:, k + 1] for c in thE]
        if use_deim:
            parts.append(rom.deim_coeff(X[:, k], mu))
        norms[k] = gram.norm(parts)
    return norms


def _dual_gram(fom: ParametricFOM, rom: ReducedModel):
    if "dual_gram" not in rom._cache:
        V = rom.basis.V
        blocks = [sp.csr_matrix(M).T @ V for _, M in fom.A.terms]
        blocks += [sp.csr_matrix(M).T @ V for _, M in fom.E.terms]
        blocks += [_dense(sp.csr_matrix(M).T) for _, M in fom.C.terms]
        rom._cache["dual_gram"] = _BlockGram(blocks)
    return rom._cache["dual_gram"]


def dual_quantities(fom: ParametricFOM, rom: ReducedModel, mu):
    """Reduced backward dual solve with terminal load C^T on the primal basis.

    Returns (max_k ||x_du^k||, per-step dual residual norms including the
    terminal one).
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    Er = np.asarray(rom.Er.assemble(mu))
    Ar = np.asarray(rom.Ar.assemble(mu))
    Cr = np.asarray(rom.Cr.assemble(mu))
    K = len(rom.time_grid) - 1
    r = rom.r

    lu_piv = la.lu_factor(Er.T)
    Xdu = np.empty((r, K + 1))
    Xdu[:, K] = la.lu_solve(lu_piv, Cr[0, :])
    for k in range(K - 1, -1, -1):
        Xdu[:, k] = la.lu_solve(lu_piv, Ar.T @ Xdu[:, k + 1])

    gram = _dual_gram(fom, rom)
    thA = [float(t(mu)) for t, _ in fom.A.terms]
    thE = [float(t(mu)) for t, _ in fom.E.terms]
    thC = [float(t(mu)) for t, _ in fom.C.terms]
    qa, qe = len(thA), len(thE)
    zeros_a = [np.zeros(r)] * qa
    one = np.ones(1)

    res_norms = np.empty(K + 1)
    # terminal residual C^T - E^T V x^K
    parts = zeros_a + [-c * Xdu[:, K] for c in thE] + [c * one for c in thC]
    res_norms[K] = gram.norm(parts)
    zero_c = [np.zeros(1)] * len(thC)
    for k in range(K - 1, -1, -1):
        parts = [c * Xdu[:, k + 1] for c in thA]
        parts += [-c * Xdu[:, k] for c in thE]
        parts += zero_c
        res_norms[k] = gram.norm(parts)

    traj_norm = float(np.max(np.linalg.norm(Xdu, axis=0)))
    return traj_norm, res_norms


def estimate_error(fom: ParametricFOM, rom: ReducedModel, mu,
                   ctx: EstimatorContext | None = None) -> ErrorEstimate:
    """Estimate the time-mean output error at ``mu`` without solving the FOM."""
    if ctx is None:
        ctx = EstimatorContext()
    ctx.estimate_calls += 1
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    traj_r = simulate_rom(rom, mu)
    rpr = primal_residual(fom, rom, mu, traj_r)
    xdu_norm, rdu = dual_quantities(fom, rom, mu)
    smin = ctx.get_sigma_min(fom, mu)
    psi = (xdu_norm + float(rdu.max()) / smin) / smin
    per_step = psi * rpr
    return ErrorEstimate(value=float(per_step.mean()), per_step=per_step,
                         sigma_min_used=smin)


def true_error_metrics(fom: ParametricFOM, rom: ReducedModel, test_set):
    """Time-mean output errors per test parameter and their maximum.

    Solves the FOM once per test parameter; validation only, never called
    inside the greedy loop.
    """
    from .fom import simulate

    eps = []
    for mu in test_set:
        y = simulate(fom, mu).outputs
        yr = simulate_rom(rom, mu).outputs
        diff = np.linalg.norm(y[:, 1:] - yr[:, 1:], axis=0)
        eps.append(float(diff.mean()))
    eps = np.asarray(eps)
    return eps, float(eps.max())
