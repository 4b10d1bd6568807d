"""RBF interpolation with polynomial tails, log-space wrapping and LOOCV.

The pairwise kernel evaluation is delegated to a compiled Cython core when
available, with a numpy fallback selected at import time (see ``BACKEND``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.spatial.distance import pdist

try:  # compiled hot loop; built by setup.py
    from . import _kernels_cy as _impl
    BACKEND = "cython"
except ImportError:  # pragma: no cover - exercised when the ext is absent
    from . import _kernels_np as _impl
    BACKEND = "numpy"

from ._kernels_np import GAUSSIAN, IMQ, MQ, TPS

_KIND_CODES = {"gaussian": GAUSSIAN, "tps": TPS, "mq": MQ, "imq": IMQ}


class CoincidentCentersError(ValueError):
    """Two interpolation centers are (numerically) identical."""


class IllConditionedKernelError(RuntimeError):
    """The kernel system lost the interpolation property; change sigma."""

    def __init__(self, msg, best_sigma=None):
        super().__init__(msg)
        self.best_sigma = best_sigma


class NoShapeParameterError(ValueError):
    """The kernel kind has no shape parameter to select."""


@dataclass(frozen=True)
class KernelKind:
    """Radial kernel family plus shape parameter (absent for TPS)."""

    kind: str
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "tps":
            if self.sigma is not None:
                raise ValueError("thin-plate splines have no shape parameter")
        elif self.sigma is not None and self.sigma <= 0:
            raise ValueError("shape parameter must be positive")

    @property
    def code(self):
        return _KIND_CODES[self.kind]

    @property
    def has_shape(self):
        return self.kind != "tps"

    def with_sigma(self, sigma):
        return KernelKind(self.kind, None if self.kind == "tps" else float(sigma))


def kernel_eval(kind: KernelKind, r):
    """Phi(r) for scalar or array r >= 0."""
    r = np.asarray(r, dtype=float)
    sigma = 1.0 if kind.sigma is None else kind.sigma
    if kind.kind == "gaussian":
        return np.exp(-(sigma**2) * r**2)
    if kind.kind == "tps":
        out = np.zeros_like(r)
        mask = r > 0
        out[mask] = r[mask] ** 2 * np.log(r[mask])
        return out if out.ndim else float(out)
    if kind.kind == "mq":
        return np.sqrt(r**2 + sigma**2)
    return 1.0 / np.sqrt(r**2 + sigma**2)


def kernel_matrix(a, b, kind: KernelKind):
    sigma = 1.0 if kind.sigma is None else float(kind.sigma)
    a = np.ascontiguousarray(np.atleast_2d(a), dtype=float)
    b = np.ascontiguousarray(np.atleast_2d(b), dtype=float)
    return _impl.kernel_matrix(a, b, kind.code, sigma)


def _poly_columns(d, include_constant):
    cols = list(range(d))
    if include_constant:
        cols.append("const")
    return cols


def _poly_matrix(points, cols):
    points = np.atleast_2d(points)
    P = np.empty((points.shape[0], len(cols)))
    for j, c in enumerate(cols):
        P[:, j] = 1.0 if c == "const" else points[:, c]
    return P


def _check_distinct(centers):
    if centers.shape[0] < 2:
        return
    dists = pdist(centers)
    diam = max(np.ptp(centers, axis=0).max(), 1.0)
    bad = np.min(dists) <= 1e-12 * diam
    if bad:
        # recover the offending pair for the message
        ell = centers.shape[0]
        idx = int(np.argmin(dists))
        i = int(ell - 2 - np.floor(np.sqrt(-8 * idx + 4 * ell * (ell - 1) - 7) / 2 - 0.5))
        j = int(idx + i + 1 - ell * (ell - 1) // 2 + (ell - i) * (ell - i - 1) // 2)
        raise CoincidentCentersError(f"coincident centers at indices {i} and {j}")


@dataclass
class Surrogate:
    """Fitted RBF interpolant s(mu) = sum c_i Phi(||mu - mu_i||) + sum lam_j p_j(mu)."""

    centers: np.ndarray  # (ell, d)
    kernel: KernelKind
    c: np.ndarray
    lam: np.ndarray
    poly_cols: list
    log_space: bool = False

    @property
    def ell(self):
        return self.centers.shape[0]

    def evaluate_batch(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        vals = kernel_matrix(points, self.centers, self.kernel) @ self.c
        if self.poly_cols:
            vals = vals + _poly_matrix(points, self.poly_cols) @ self.lam
        if self.log_space:
            vals = 10.0**vals
        return vals

    def __call__(self, mu):
        return float(self.evaluate_batch(np.atleast_2d(mu))[0])


def evaluate(s: Surrogate, mu):
    return s(mu)


def fit(centers, values, kind: KernelKind, use_poly_tail=True, include_constant=False,
        log_space=False) -> Surrogate:
    """Solve the (saddle-point) interpolation system and verify exactness.

    With the polynomial tail the M = d monomials p_j(mu) = mu_j are used;
    ``include_constant`` adds the constant term of classical CPD theory.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    values = np.asarray(values, dtype=float)
    ell, d = centers.shape
    if values.shape != (ell,):
        raise ValueError("values must match the number of centers")
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite interpolation values")
    _check_distinct(centers)

    R = kernel_matrix(centers, centers, kind)
    poly_cols = _poly_columns(d, include_constant) if use_poly_tail else []
    if poly_cols:
        P = _poly_matrix(centers, poly_cols)
        rank = np.linalg.matrix_rank(P)
        if rank < P.shape[1]:
            # centers share a coordinate: drop the degenerate monomial(s)
            keep = [j for j in range(len(poly_cols))
                    if poly_cols[j] == "const" or np.ptp(P[:, j]) > 0]
            if len(keep) > rank:
                _, _, piv = la.qr(P, pivoting=True, mode="economic")
                keep = sorted(piv[:rank])
            warnings.warn(
                f"dropping degenerate polynomial tail column(s) "
                f"{[poly_cols[j] for j in range(len(poly_cols)) if j not in keep]}"
            )
            poly_cols = [poly_cols[j] for j in keep]
            P = P[:, keep]
        M = P.shape[1]
        if ell < M + 1:
            raise ValueError("need at least M+1 centers for the polynomial tail")
        K = np.zeros((ell + M, ell + M))
        K[:ell, :ell] = R
        K[:ell, ell:] = P
        K[ell:, :ell] = P.T
        rhs = np.concatenate([values, np.zeros(M)])
        try:
            sol = la.solve(K, rhs, assume_a="sym")
        except la.LinAlgError as exc:
            raise IllConditionedKernelError(
                "ill-conditioned kernel matrix; consider a different shape parameter"
            ) from exc
        c, lam = sol[:ell], sol[ell:]
    else:
        try:
            c = la.solve(R, values, assume_a="sym")
        except la.LinAlgError as exc:
            raise IllConditionedKernelError(
                "ill-conditioned kernel matrix; consider a different shape parameter"
            ) from exc
        lam = np.zeros(0)

    s = Surrogate(centers=centers, kernel=kind, c=c, lam=lam,
                  poly_cols=poly_cols, log_space=False)
    recon = s.evaluate_batch(centers)
    scale = np.maximum(np.abs(values), 1.0)
    if np.max(np.abs(recon - values) / scale) > 1e-6:
        raise IllConditionedKernelError(
            "ill-conditioned kernel matrix: interpolation check failed; "
            "consider a different shape parameter"
        )
    s.log_space = log_space
    return s


def fit_log(centers, delta_values, kind: KernelKind, use_poly_tail=True,
            include_constant=False) -> Surrogate:
    """Fit on log10 of strictly positive data; evaluation anti-logs back."""
    delta_values = np.asarray(delta_values, dtype=float)
    if np.any(delta_values <= 0):
        raise ValueError("fit_log requires strictly positive values")
    return fit(centers, np.log10(delta_values), kind,
               use_poly_tail=use_poly_tail, include_constant=include_constant,
               log_space=True)


def loocv_errors_naive(centers, values, kind: KernelKind):
    """Deleted-point prediction errors by explicit refitting (the slow oracle).

    For each i the i-th row/column of R and entry i of the data vector are
    removed, the smaller system re-solved, and the deleted point predicted.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    values = np.asarray(values, dtype=float)
    ell = centers.shape[0]
    R = kernel_matrix(centers, centers, kind)
    e = np.empty(ell)
    for i in range(ell):
        keep = np.arange(ell) != i
        c_i = la.solve(R[np.ix_(keep, keep)], values[keep], assume_a="sym")
        pred = R[i, keep] @ c_i
        e[i] = values[i] - pred
    return e


def loocv_errors_rippa(centers, values, kind: KernelKind):
    """Deleted-point errors via the Rippa shortcut e_i = c_i / (R^{-1})_ii."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    values = np.asarray(values, dtype=float)
    R = kernel_matrix(centers, centers, kind)
    Rinv = la.inv(R)
    diag = np.diag(Rinv)
    if np.any(~np.isfinite(Rinv)) or np.any(diag == 0):
        raise IllConditionedKernelError("kernel matrix numerically singular in LOOCV")
    return (Rinv @ values) / diag


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def default_sigma_bounds(centers, kind: "KernelKind | None" = None):
    """Scale-aware shape-parameter bounds from the median NN distance.

    The Gaussian sharpens as sigma grows (sigma is an inverse length), so its
    search window is [0.1/delta, 10/delta].  The multiquadrics sharpen as
    sigma shrinks toward the point spacing (sigma is an offset length), so
    their window is [0.1*delta, 10*delta].  ``kind=None`` keeps the Gaussian
    convention.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    from scipy.spatial.distance import cdist

    D = cdist(centers, centers)
    np.fill_diagonal(D, np.inf)
    fill = float(np.median(D.min(axis=1)))
    if not np.isfinite(fill) or fill <= 0:
        raise ValueError("cannot derive sigma bounds from coincident centers")
    if kind is not None and kind.kind in ("mq", "imq"):
        return (0.1 * fill, 10.0 * fill)
    return (0.1 / fill, 10.0 / fill)


def loocv_select_shape(centers, values, kind: KernelKind, sigma_bounds=None,
                       max_evals=80, rel_tol=1e-3):
    """Shape parameter minimizing ||e(sigma)||_2 by golden-section search.

    Uses the Rippa shortcut inside the objective; ill-conditioned candidates
    score +inf.  Deterministic fixed-budget search.
    """
    if not kind.has_shape:
        raise NoShapeParameterError("thin-plate splines have no shape parameter")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    values = np.asarray(values, dtype=float)
    if centers.shape[0] < 3:
        raise ValueError("LOOCV needs at least 3 centers")
    if sigma_bounds is None:
        sigma_bounds = default_sigma_bounds(centers, kind)
    lo, hi = map(float, sigma_bounds)
    if not (0 < lo < hi):
        raise ValueError("invalid sigma bounds")

    evals = {}

    def objective(sigma):
        if sigma not in evals:
            try:
                R = kernel_matrix(centers, centers, kind.with_sigma(sigma))
                if np.linalg.cond(R) > 1e12:
                    val = np.inf  # flat limit: Rippa quotients become noise
                else:
                    e = loocv_errors_rippa(centers, values, kind.with_sigma(sigma))
                    val = float(np.linalg.norm(e))
                    if not np.isfinite(val):
                        val = np.inf
            except (IllConditionedKernelError, la.LinAlgError):
                val = np.inf
            evals[sigma] = val
        return evals[sigma]

    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = objective(x1), objective(x2)
    budget = max_evals - 2
    while budget > 0 and (b - a) > rel_tol * max(abs(a), abs(b)):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = objective(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = objective(x2)
        budget -= 1

    # include the bounds as candidates
    objective(lo)
    objective(hi)
    best_sigma = min(evals, key=lambda s: (evals[s], s))
    if not np.isfinite(evals[best_sigma]):
        raise IllConditionedKernelError(
            "all candidate shape parameters ill-conditioned", best_sigma=best_sigma
        )
    return float(best_sigma)
