"""POD basis management, DEIM hyper-reduction and reduced-model simulation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .fom import AffineOperator, DivergenceError, ParametricFOM, Trajectory

_ORTH_TOL = 1e-12
_RANK_TOL = 1e-14
_SNAPSHOT_CAP = 2000


class BasisRankWarning(UserWarning):
    """Fewer directions were appended than requested (rank shortfall)."""


@dataclass
class Basis:
    """Column-orthonormal basis V of the reduced subspace."""

    V: np.ndarray  # (n, r)

    @classmethod
    def empty(cls, n):
        return cls(np.empty((n, 0)))

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def r(self):
        return self.V.shape[1]

    def orthonormality_defect(self):
        if self.r == 0:
            return 0.0
        G = self.V.T @ self.V
        return float(np.abs(G - np.eye(self.r)).max())


def pod_extend(basis: Basis, X: np.ndarray, delta: int) -> Basis:
    """Grow (delta >= 1) or shrink (delta < 0) the basis.

    Growing projects X onto the orthogonal complement of range(V), takes the
    leading ``delta`` left singular vectors of the defect and re-orthonormalizes
    the appended block.  Shrinking drops the trailing columns (they were
    appended in decreasing-importance order).
    """
    if delta == 0:
        return basis
    if delta < 0:
        if -delta >= basis.r:
            raise ValueError(f"cannot remove {-delta} of {basis.r} basis vectors")
        return Basis(basis.V[:, : basis.r + delta].copy())

    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != basis.n and basis.r > 0:
        raise ValueError("snapshot row count does not match basis")
    if basis.r > 0:
        Xbar = X - basis.V @ (basis.V.T @ X)
    else:
        Xbar = X

    U, s, _ = np.linalg.svd(Xbar, full_matrices=False)
    # significance is judged against the snapshot scale, not the defect's own
    # leading singular value: snapshots (numerically) inside range(V) leave a
    # defect of pure rounding noise whose internal ratios are meaningless
    scale = max(np.linalg.norm(X), 1e-300)
    if s.size == 0 or s[0] <= _RANK_TOL * scale:
        warnings.warn("snapshots lie in range(V); basis unchanged", BasisRankWarning)
        return basis
    significant = int(np.sum(s >= _RANK_TOL * scale))
    take = min(delta, significant)
    if take < delta:
        warnings.warn(
            f"requested {delta} new basis vectors, defect rank supports {take}",
            BasisRankWarning,
        )
    if take == 0:
        return basis

    W = U[:, :take]
    if basis.r > 0:
        # two Gram-Schmidt passes against V, then QR of the new block
        for _ in range(2):
            W = W - basis.V @ (basis.V.T @ W)
    Q, R = np.linalg.qr(W)
    keep = np.abs(np.diag(R)) > _RANK_TOL
    Q = Q[:, keep]
    if Q.shape[1] == 0:
        warnings.warn("new directions vanished in re-orthonormalization", BasisRankWarning)
        return basis
    return Basis(np.hstack([basis.V, Q]) if basis.r else Q)


def deim_select(U: np.ndarray) -> list[int]:
    """Greedy DEIM index selection for an orthonormal column set U.

    Index j maximizes |residual| of column j interpolated on the previously
    selected indices; ties break toward the lowest index (argmax semantics).
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    ell = U.shape[1]
    indices = [int(np.argmax(np.abs(U[:, 0])))]
    for j in range(1, ell):
        sub = U[indices, :j]
        try:
            coef = np.linalg.solve(sub, U[indices, j])
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("singular DEIM interpolation matrix") from exc
        residual = U[:, j] - U[:, :j] @ coef
        indices.append(int(np.argmax(np.abs(residual))))
    if len(set(indices)) != ell:
        raise RuntimeError("DEIM selected duplicate indices")
    return indices


@dataclass
class DeimArtifacts:
    """DEIM basis, interpolation indices and the accumulated snapshot matrix."""

    U_f: np.ndarray  # (n, ell)
    P_f: list[int]
    F: np.ndarray  # (n, cols) accumulated nonlinearity snapshots

    @classmethod
    def empty(cls, n):
        return cls(np.empty((n, 0)), [], np.empty((n, 0)))

    @property
    def ell(self):
        return self.U_f.shape[1]


def deim_update(artifacts: DeimArtifacts, F_new: np.ndarray, ell_target: int) -> DeimArtifacts:
    """Append snapshots, recompute the SVD and rerun the index selection.

    The stored snapshot matrix is capped at ``_SNAPSHOT_CAP`` columns by
    truncation to the leading singular mass.
    """
    if ell_target < 1:
        raise ValueError("ell_target must be positive")
    F = np.hstack([artifacts.F, np.atleast_2d(np.asarray(F_new, dtype=float))])
    if F.shape[1] > _SNAPSHOT_CAP:
        U, s, _ = np.linalg.svd(F, full_matrices=False)
        F = U[:, :_SNAPSHOT_CAP] * s[:_SNAPSHOT_CAP]

    U, s, _ = np.linalg.svd(F, full_matrices=False)
    rank = int(np.sum(s >= _RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    ell = min(ell_target, rank)
    if ell < ell_target:
        warnings.warn(
            f"DEIM order clamped from {ell_target} to numerical rank {ell}",
            BasisRankWarning,
        )
    if ell == 0:
        return DeimArtifacts(np.empty((F.shape[0], 0)), [], F)
    U_f = U[:, :ell]
    return DeimArtifacts(U_f, deim_select(U_f), F)


@dataclass
class ReducedModel:
    """Galerkin-projected system with optional DEIM nonlinearity."""

    Er: AffineOperator
    Ar: AffineOperator
    Br: AffineOperator
    Cr: AffineOperator
    basis: Basis
    deim: DeimArtifacts | None
    x0_r: np.ndarray
    time_grid: np.ndarray
    input: np.ndarray
    f_r: object = None  # callable (x_r, mu) -> r-vector, or None
    deim_coeff: object = None  # callable (x_r, mu) -> ell-vector of DEIM coefficients
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def r(self):
        return self.basis.r


def galerkin_project(fom: ParametricFOM, basis: Basis, deim: DeimArtifacts | None = None) -> ReducedModel:
    """Project the FOM term-by-term onto range(V).

    With DEIM, precomputes W = V^T U_f (P^T U_f)^{-1} and a sampled-row
    evaluator so the online nonlinearity touches only ell entries.  Without
    DEIM a nonlinearity is lifted exactly (O(n) per step).
    """
    V = basis.V

    Er = fom.E.map_terms(lambda M: V.T @ (sp.csr_matrix(M) @ V))
    Ar = fom.A.map_terms(lambda M: V.T @ (sp.csr_matrix(M) @ V))
    Br = fom.B.map_terms(lambda M: V.T @ sp.csr_matrix(M).toarray())
    Cr = fom.C.map_terms(lambda M: sp.csr_matrix(M).toarray() @ V)

    f_r = None
    deim_coeff = None
    if fom.f is not None:
        if deim is not None and deim.ell > 0:
            PU = deim.U_f[deim.P_f, :]
            sampled = fom.f.sampled(deim.P_f, V)
            W = (V.T @ deim.U_f) @ np.linalg.inv(PU)
            lu_piv = la.lu_factor(PU)

            def f_r(x_r, mu, _W=W, _g=sampled):
                return _W @ _g(x_r, mu)

            def deim_coeff(x_r, mu, _lu=lu_piv, _g=sampled):
                return la.lu_solve(_lu, _g(x_r, mu))
        else:
            def f_r(x_r, mu, _f=fom.f, _V=V):
                return _V.T @ _f(_V @ x_r, mu)

    return ReducedModel(
        Er=Er, Ar=Ar, Br=Br, Cr=Cr,
        basis=basis, deim=deim,
        x0_r=V.T @ fom.x0,
        time_grid=fom.time_grid.copy(),
        input=fom.input.copy(),
        f_r=f_r,
        deim_coeff=deim_coeff,
    )


def simulate_rom(rom: ReducedModel, mu) -> Trajectory:
    """Integrate the reduced system; one dense factorization of Er(mu)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    Er = np.asarray(rom.Er.assemble(mu))
    Ar = np.asarray(rom.Ar.assemble(mu))
    Br = np.asarray(rom.Br.assemble(mu))
    Cr = np.asarray(rom.Cr.assemble(mu))
    lu_piv = la.lu_factor(Er)

    K = len(rom.time_grid) - 1
    r = rom.r
    X = np.empty((r, K + 1))
    Y = np.empty((Cr.shape[0], K + 1))
    x = rom.x0_r.copy()
    X[:, 0] = x
    Y[:, 0] = Cr @ x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            rhs = Ar @ x + Br @ rom.input[k]
            if rom.f_r is not None:
                rhs = rhs + rom.f_r(x, mu)
            if not np.all(np.isfinite(rhs)):
                raise DivergenceError(
                    f"divergence at step {k + 1} for mu={mu.tolist()}"
                )
            x = la.lu_solve(lu_piv, rhs)
            X[:, k + 1] = x
            Y[:, k + 1] = Cr @ x
    return Trajectory(X, Y)
