"""Parametric full-order models with affine operators and semi-implicit time stepping.

The discrete systems have the form

    E(mu) x^{k+1} = A(mu) x^k + f(x^k; mu) + B(mu) u^k,
    y^{k+1}       = C(mu) x^{k+1},

where each system matrix admits an affine decomposition
sum_i theta_i(mu) * M_i.  The semi-implicit splitting (stiff part in E,
convection/nonlinearity explicit) is baked into the benchmark builders.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu


class SingularOperatorError(RuntimeError):
    """E(mu) could not be factorized."""


class DivergenceError(RuntimeError):
    """The time integration produced a non-finite state."""


class ConfigurationError(ValueError):
    """A model builder was given inconsistent arguments."""


class IngestionError(RuntimeError):
    """A required model data file is missing or inconsistent."""


class AffineOperator:
    """Operator of the form sum_i theta_i(mu) * M_i.

    ``terms`` is a list of ``(theta, M)`` pairs where ``theta`` maps a
    parameter vector to a scalar and all ``M`` share one shape.  Matrices may
    be scipy sparse or dense ndarrays.
    """

    def __init__(self, terms):
        if not terms:
            raise ValueError("affine operator needs at least one term")
        shape = terms[0][1].shape
        for _, M in terms[1:]:
            if M.shape != shape:
                raise ValueError(
                    f"affine term shape mismatch: {M.shape} vs {shape}"
                )
        self.terms = list(terms)
        self.shape = shape

    @property
    def Q(self):
        return len(self.terms)

    def assemble(self, mu):
        """Evaluate sum_i theta_i(mu) * M_i at the parameter ``mu``."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        out = None
        for theta, M in self.terms:
            term = float(theta(mu)) * M
            out = term if out is None else out + term
        return out

    def map_terms(self, fn):
        """New AffineOperator with each matrix replaced by ``fn(M)``."""
        return AffineOperator([(theta, fn(M)) for theta, M in self.terms])


def assemble(op: AffineOperator, mu):
    return op.assemble(mu)


class Nonlinearity:
    """State/parameter dependent term f(x; mu).

    Subclasses may override :meth:`sampled` to evaluate only a few entries
    of f without forming the full n-vector (used by DEIM).
    """

    def __call__(self, x, mu):
        raise NotImplementedError

    def sampled(self, rows, V):
        """Return ``g(x_r, mu) -> f(V x_r; mu)[rows]``.

        The default lifts through V and is O(n) per call.
        """
        rows = np.asarray(rows, dtype=int)

        def g(x_r, mu):
            return self(V @ x_r, mu)[rows]

        return g


class ScaledConvection(Nonlinearity):
    """f(x) = scale * x .* (D x), the explicit Burgers convection term."""

    def __init__(self, D, scale):
        self.D = sp.csr_matrix(D)
        self.scale = float(scale)

    def __call__(self, x, mu):
        return self.scale * x * (self.D @ x)

    def sampled(self, rows, V):
        rows = np.asarray(rows, dtype=int)
        Vp = np.array(V[rows, :])
        DpV = self.D[rows, :] @ V

        def g(x_r, mu):
            return self.scale * (Vp @ x_r) * (DpV @ x_r)

        return g


@dataclass
class SimStats:
    """Mutable instrumentation attached to a FOM (solve-call discipline)."""

    solves: int = 0


@dataclass
class Trajectory:
    """States and outputs of one simulation, columns indexed by time step."""

    states: np.ndarray  # (n or r, K+1)
    outputs: np.ndarray  # (m, K+1)

    def __post_init__(self):
        if self.states.shape[1] != self.outputs.shape[1]:
            raise ValueError("states/outputs length mismatch")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.outputs))):
            raise ValueError("trajectory contains non-finite entries")

    @property
    def K(self):
        return self.states.shape[1] - 1


@dataclass
class ParametricFOM:
    n: int
    E: AffineOperator
    A: AffineOperator
    f: Nonlinearity | None
    B: AffineOperator
    C: AffineOperator
    time_grid: np.ndarray  # K+1 strictly increasing instants
    input: np.ndarray  # (K, q)
    param_domain: np.ndarray  # (d, 2) rows (lower, upper)
    x0: np.ndarray
    name: str = "fom"
    stats: SimStats = field(default_factory=SimStats)

    def __post_init__(self):
        self.time_grid = np.asarray(self.time_grid, dtype=float)
        self.param_domain = np.asarray(self.param_domain, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        if np.any(np.diff(self.time_grid) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if np.any(self.param_domain[:, 0] >= self.param_domain[:, 1]):
            raise ValueError("degenerate parameter domain")

    @property
    def K(self):
        return len(self.time_grid) - 1

    @property
    def d(self):
        return self.param_domain.shape[0]

    @property
    def m(self):
        return self.C.shape[0]

    def contains(self, mu):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        lo, hi = self.param_domain[:, 0], self.param_domain[:, 1]
        return mu.shape == lo.shape and np.all(mu >= lo) and np.all(mu <= hi)


def simulate(fom: ParametricFOM, mu) -> Trajectory:
    """Integrate the full-order system at ``mu``.

    One sparse LU of E(mu) is reused across all K steps.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    E = sp.csc_matrix(fom.E.assemble(mu))
    try:
        lu = splu(E)
    except RuntimeError as exc:
        raise SingularOperatorError(f"singular operator E(mu) at mu={mu}") from exc
    A = sp.csr_matrix(fom.A.assemble(mu))
    Bm = sp.csr_matrix(fom.B.assemble(mu))
    Cm = sp.csr_matrix(fom.C.assemble(mu))

    K = fom.K
    X = np.empty((fom.n, K + 1))
    Y = np.empty((Cm.shape[0], K + 1))
    x = fom.x0.copy()
    X[:, 0] = x
    Y[:, 0] = Cm @ x
    for k in range(K):
        rhs = A @ x + Bm @ fom.input[k]
        if fom.f is not None:
            rhs = rhs + fom.f(x, mu)
        x = lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"divergence at step {k + 1} for mu={mu}")
        X[:, k + 1] = x
        Y[:, k + 1] = Cm @ x
    fom.stats.solves += 1
    return Trajectory(X, Y)


def _identity_term(n):
    return (lambda mu: 1.0, sp.identity(n, format="csr"))


def build_burgers(n: int = 500, K: int = 100) -> ParametricFOM:
    """1-D viscous Burgers on [0,1] x [0,2] with viscosity q in [0.001, 1].

    Dirichlet v(0,t)=0, Neumann v_w(1,t)=0, source s==1, output y=v(1,t).
    Diffusion is implicit in E(q); convection is the explicit nonlinearity.
    """
    if n < 3:
        raise ConfigurationError("burgers needs n >= 3")
    if K < 1:
        raise ConfigurationError("burgers needs K >= 1")
    h = 1.0 / n
    dt = 2.0 / K

    # unknowns at w_j = j*h, j=1..n; ghost mirror closes the Neumann end
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    D2 = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    D2[n - 1, n - 2] = 2.0
    D2 = sp.csr_matrix(D2) / h**2

    D1 = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="lil")
    D1[n - 1, n - 2] = 0.0  # mirrored ghost node cancels the derivative
    D1 = sp.csr_matrix(D1) / (2.0 * h)

    E = AffineOperator([
        _identity_term(n),
        (lambda mu: float(mu[0]), -dt * D2),
    ])
    A = AffineOperator([_identity_term(n)])
    f = ScaledConvection(D1, -dt)
    B = AffineOperator([(lambda mu: 1.0, sp.csr_matrix(dt * np.ones((n, 1))))])
    c_row = sp.csr_matrix((np.ones(1), (np.zeros(1, dtype=int), [n - 1])), shape=(1, n))
    C = AffineOperator([(lambda mu: 1.0, c_row)])

    return ParametricFOM(
        n=n, E=E, A=A, f=f, B=B, C=C,
        time_grid=np.linspace(0.0, 2.0, K + 1),
        input=np.ones((K, 1)),
        param_domain=np.array([[0.001, 1.0]]),
        x0=np.zeros(n),
        name="burgers",
    )


def build_convdiff(n: int = 800, K: int = 100) -> ParametricFOM:
    """1-D linear convection-diffusion on [0,1] x [0,1].

    v_t = q1 v_ww + q2 v_w - q2 with homogeneous Dirichlet ends, step initial
    condition, output = average of v over [0.495, 0.505].  Fully implicit.
    """
    if n < 3:
        raise ConfigurationError("convdiff needs n >= 3")
    if K < 1:
        raise ConfigurationError("convdiff needs K >= 1")
    h = 1.0 / (n + 1)
    dt = 1.0 / K
    w = h * np.arange(1, n + 1)

    D2 = sp.diags(
        [np.ones(n - 1), np.full(n, -2.0), np.ones(n - 1)], [-1, 0, 1], format="csr"
    ) / h**2
    # first-order upwind for +q2 v_w (information travels toward w=0)
    D1 = sp.diags([np.full(n, -1.0), np.ones(n - 1)], [0, 1], format="csr") / h

    E = AffineOperator([
        _identity_term(n),
        (lambda mu: float(mu[0]), -dt * D2),
        (lambda mu: float(mu[1]), -dt * D1),
    ])
    A = AffineOperator([_identity_term(n)])
    B = AffineOperator([
        (lambda mu: float(mu[1]), sp.csr_matrix(-dt * np.ones((n, 1))))
    ])
    window = (w >= 0.495) & (w <= 0.505)
    c_row = np.zeros((1, n))
    if window.any():
        c_row[0, window] = 1.0 / window.sum()
    else:
        # coarse grids can miss the observation interval; fall back to the
        # node nearest its center so the output never degenerates to zero
        c_row[0, int(np.argmin(np.abs(w - 0.5)))] = 1.0
    C = AffineOperator([(lambda mu: 1.0, sp.csr_matrix(c_row))])

    return ParametricFOM(
        n=n, E=E, A=A, f=None, B=B, C=C,
        time_grid=np.linspace(0.0, 1.0, K + 1),
        input=np.ones((K, 1)),
        param_domain=np.array([[0.001, 1.0], [0.5, 5.0]]),
        x0=(w <= 0.5).astype(float),
        name="convdiff",
    )


THERMAL_FILES = {
    "E": "E.mtx",
    "A0": "A.mtx",
    "A1": "A1.mtx",
    "A2": "A2.mtx",
    "A3": "A3.mtx",
    "B": "B.mtx",
    "C": "C.mtx",
}


def load_thermal(directory, K: int = 100, T: float = 100.0, filenames=None) -> ParametricFOM:
    """Microthruster heat-transfer model from Matrix Market files.

    The continuous system E x' = (A0 - sum_i h_i A_i) x + B u is wrapped into
    the semi-implicit form at build time:

        (E - dt*A0 + sum_i h_i dt*A_i) x^{k+1} = E x^k + dt*B u^k.

    Film coefficients h in [1, 1e8]^3; output is the first row of C; u == 1.
    """
    from .io import read_matrix_market

    names = dict(THERMAL_FILES)
    if filenames:
        names.update(filenames)
    mats = {}
    for key, fname in names.items():
        path = os.path.join(directory, fname)
        if not os.path.exists(path):
            raise IngestionError(f"missing thermal matrix file: {path}")
        mats[key] = read_matrix_market(path)

    n = mats["E"].shape[0]
    for key in ("A0", "A1", "A2", "A3"):
        if mats[key].shape != (n, n):
            raise IngestionError(
                f"thermal matrix {names[key]} has shape {mats[key].shape}, expected {(n, n)}"
            )
    if mats["B"].shape[0] != n or mats["C"].shape[1] != n:
        raise IngestionError("thermal B/C dimensions inconsistent with E")

    dt = T / K
    Bmat = sp.csr_matrix(mats["B"])

    def h_coeff(i):
        return lambda mu: float(mu[i])

    E = AffineOperator(
        [(lambda mu: 1.0, sp.csr_matrix(mats["E"] - dt * mats["A0"]))]
        + [(h_coeff(i), sp.csr_matrix(dt * mats[f"A{i + 1}"])) for i in range(3)]
    )
    A = AffineOperator([(lambda mu: 1.0, sp.csr_matrix(mats["E"]))])
    B = AffineOperator([(lambda mu: 1.0, dt * Bmat)])
    C = AffineOperator([(lambda mu: 1.0, sp.csr_matrix(mats["C"])[[0], :])])

    return ParametricFOM(
        n=n, E=E, A=A, f=None, B=B, C=C,
        time_grid=np.linspace(0.0, T, K + 1),
        input=np.ones((K, Bmat.shape[1])),
        param_domain=np.array([[1.0, 1e8]] * 3),
        x0=np.zeros(n),
        name="thermal",
    )
