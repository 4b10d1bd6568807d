"""Greedy basis construction with fixed or adaptively sampled training sets.

Four entry points share one engine:

* ``standard_pod_greedy``        - fixed set, one POD mode per iteration.
* ``pod_greedy_adaptive``        - coarse/fine set bookkeeping with an RBF
                                   error surrogate driving additions/removals.
* ``adaptive_pod_greedy_deim``   - fixed set, adaptive RB/DEIM basis counts.
* ``fully_adaptive``             - both mechanisms combined.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rbf
from .estimator import EstimatorContext, estimate_error
from .fom import DivergenceError, ParametricFOM, simulate
from .rom import Basis, DeimArtifacts, deim_update, galerkin_project, pod_extend


def _key(mu):
    return tuple(np.atleast_1d(np.asarray(mu, dtype=float)).tolist())


class TrainingSets:
    """Disjoint ordered coarse/fine parameter sets."""

    def __init__(self, coarse, fine=()):
        self.coarse = [np.atleast_1d(np.asarray(m, dtype=float)) for m in coarse]
        self.fine = [np.atleast_1d(np.asarray(m, dtype=float)) for m in fine]
        self.consumed = set()
        ck = [_key(m) for m in self.coarse]
        if len(set(ck)) != len(ck):
            raise ValueError("duplicate points in coarse training set")
        ckset = set(ck)
        self.fine = [m for m in self.fine if _key(m) not in ckset]

    def coarse_keys(self):
        return [_key(m) for m in self.coarse]

    def assert_disjoint(self):
        assert not set(self.coarse_keys()) & {_key(m) for m in self.fine}

    def move_from_fine(self, picked_keys):
        """Move the given fine points into the coarse set (in the given order)."""
        lookup = {_key(m): m for m in self.fine}
        for k in picked_keys:
            self.coarse.append(lookup[k])
            self.consumed.add(k)
        picked = set(picked_keys)
        self.fine = [m for m in self.fine if _key(m) not in picked]

    def remove_from_coarse(self, keys):
        keys = set(keys)
        self.coarse = [m for m in self.coarse if _key(m) not in keys]


@dataclass
class GreedyConfig:
    tol: float
    max_iterations: int = 100
    n_add_mode: int | str = "adaptive"  # "adaptive" or a fixed positive count
    kernel: rbf.KernelKind = field(default_factory=lambda: rbf.KernelKind("imq", 1.0))
    loocv: bool = True
    delta_rb_min: int = -1
    delta_rb_max: int = 3
    stagnation_factor: float = 10.0
    threads: int = 1

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class IterationRecord:
    iteration: int
    mu_star: np.ndarray
    delta_max: float
    card_coarse: int
    r: int
    l_deim: int
    n_add: int
    n_del: int
    wall_seconds: float


@dataclass
class GreedyTrace:
    iterations: list = field(default_factory=list)
    converged: bool = False
    total_seconds: float = 0.0
    phase_seconds: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.iterations)


def compute_n_add(delta_max: float, tol: float) -> int:
    """Number of fine-set points to promote: floor(log10(floor(dmax/tol))).

    Clamped below at 1 whenever dmax >= tol; 0 signals convergence.
    """
    if delta_max <= 0 or tol <= 0:
        raise ValueError("compute_n_add needs positive inputs")
    if delta_max < tol:
        return 0
    # relative epsilon so exact decade ratios (1e-2 / 1e-5) survive the
    # floating-point division landing infinitesimally below the integer
    ratio = math.floor(delta_max / tol * (1.0 + 1e-12))
    if ratio < 1:
        return 0
    return max(1, math.floor(math.log10(ratio) + 1e-12))


def adaptive_basis_counts(delta_max, delta_max_prev, tol, config: GreedyConfig | None = None):
    """Substitute heuristic for the per-iteration RB/DEIM basis increments.

    delta_RB = clamp(ceil(log10(dmax/tol)), 1, 3), except that a shrink by one
    is issued on stagnation with overshoot (dmax within a decade of tol but
    larger than at the previous iteration).  Bounds configurable.
    """
    if delta_max <= 0 or tol <= 0:
        raise ValueError("adaptive_basis_counts needs positive inputs")
    lo = config.delta_rb_min if config else -1
    hi = config.delta_rb_max if config else 3
    stag = config.stagnation_factor if config else 10.0
    if delta_max < stag * tol and delta_max > delta_max_prev:
        delta_rb = max(lo, -1)
    else:
        raw = math.ceil(math.log10(delta_max / tol))
        delta_rb = min(max(raw, 1), hi)
    return delta_rb, delta_rb


def update_training_sets(sets: TrainingSets, delta_map: dict, surrogate, tol: float,
                         n_add: int):
    """Promote the n_add worst fine points by surrogate value, then drop every
    coarse point whose estimate is below tol.

    Returns (moved_pairs, n_del) where moved_pairs is a list of (key, s-value)
    in promotion order.  If removal would empty the coarse set while the
    maximum estimate is still above tol, the single worst point is retained.
    """
    moved = []
    if n_add > 0 and sets.fine:
        if n_add > len(sets.fine):
            warnings.warn(
                f"fine set exhausted: moving {len(sets.fine)} of {n_add} requested"
            )
            n_add = len(sets.fine)
        pts = np.array(sets.fine)
        svals = surrogate.evaluate_batch(pts)
        order = sorted(range(len(pts)), key=lambda i: (-svals[i], _key(pts[i])))
        picked = order[:n_add]
        moved = [(_key(pts[i]), float(svals[i])) for i in picked]
        sets.move_from_fine([k for k, _ in moved])

    removable = [k for k, v in delta_map.items() if v < tol]
    dmax = max(delta_map.values()) if delta_map else 0.0
    survivors = set(sets.coarse_keys()) - set(removable)
    if not survivors and dmax >= tol:
        worst = max(delta_map, key=lambda k: (delta_map[k],))
        removable = [k for k in removable if k != worst]
    sets.remove_from_coarse(removable)
    sets.assert_disjoint()
    return moved, len(removable)


def _fit_surrogate(sets, delta_map, config, phase):
    """Log-space RBF fit of the coarse estimates, with LOOCV when applicable."""
    centers = np.array(sets.coarse)
    values = np.array([delta_map[k] for k in sets.coarse_keys()])
    values = np.maximum(values, 1e-300)
    kernel = config.kernel
    if kernel.has_shape and config.loocv and len(values) >= 3:
        t0 = time.perf_counter()
        try:
            sigma = rbf.loocv_select_shape(centers, np.log10(values), kernel)
            kernel = kernel.with_sigma(sigma)
        except (rbf.IllConditionedKernelError, ValueError):
            pass
        phase["loocv"] += time.perf_counter() - t0
    t0 = time.perf_counter()
    candidates = [kernel]
    if kernel.has_shape and len(centers) >= 2:
        try:
            lo, hi = rbf.default_sigma_bounds(centers, kernel)
        except ValueError:
            pass
        else:
            candidates += [kernel.with_sigma(math.sqrt(lo * hi)),
                           kernel.with_sigma(lo)]
    s = None
    last_exc = None
    for cand in candidates:
        for tail in (True, False):
            try:
                s = rbf.fit_log(centers, values, cand, use_poly_tail=tail)
                break
            except (rbf.IllConditionedKernelError, ValueError) as exc:
                last_exc = exc
        if s is not None:
            break
    phase["surrogate"] += time.perf_counter() - t0
    if s is None:
        raise last_exc
    return s


_DIVERGED_ESTIMATE = 1e10


def _estimate_one(fom, rom, mu, ctx):
    try:
        return estimate_error(fom, rom, mu, ctx).value
    except DivergenceError:
        # an unstable reduced model is as wrong as it gets; a huge finite
        # sentinel makes the greedy target that parameter next
        return _DIVERGED_ESTIMATE


def _estimator_sweep(fom, rom, points, ctx, threads):
    if threads == 1 or len(points) < 2:
        return [_estimate_one(fom, rom, mu, ctx) for mu in points]
    workers = threads if threads > 0 else None
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda mu: _estimate_one(fom, rom, mu, ctx), points))


def _argmax_coarse(sets, value_map):
    """Largest value over the coarse set; ties break toward the lowest index."""
    best = None
    for i, k in enumerate(sets.coarse_keys()):
        if k in value_map and (best is None or value_map[k] > best[0]):
            best = (value_map[k], i, k)
    return best


def _greedy_loop(fom: ParametricFOM, coarse, fine, config: GreedyConfig, *,
                 adaptive_sets, adaptive_deltas, use_deim, per_iteration=None):
    sets = TrainingSets(coarse, fine if adaptive_sets else ())
    if not sets.coarse:
        raise ValueError("empty training set")
    basis = Basis.empty(fom.n)
    with_deim = use_deim and fom.f is not None
    deim_art = DeimArtifacts.empty(fom.n) if with_deim else None
    ctx = EstimatorContext()
    trace = GreedyTrace()
    phase = {"fom": 0.0, "estimator": 0.0, "surrogate": 0.0, "loocv": 0.0}

    delta_rb, l_deim = 1, 1
    dmax_prev = math.inf
    mu_star = sets.coarse[0]
    t_start = time.perf_counter()

    for it in range(1, config.max_iterations + 1):
        t_iter = time.perf_counter()
        mu_solved = mu_star

        # full-order snapshots at the selected parameter
        t0 = time.perf_counter()
        traj = simulate(fom, mu_solved)
        phase["fom"] += time.perf_counter() - t0
        # include the initial state: its direction must be representable or
        # the first residuals carry a projection-error floor forever
        X = traj.states

        step = delta_rb if adaptive_deltas else 1
        if step < 0 and -step >= basis.r:
            step = 0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if step != 0:
                basis = pod_extend(basis, X, step)
            if with_deim:
                F_new = np.column_stack(
                    [fom.f(X[:, k], mu_solved) for k in range(X.shape[1])]
                )
                deim_art = deim_update(deim_art, F_new, l_deim)

        rom = galerkin_project(
            fom, basis, deim_art if with_deim and deim_art.ell > 0 else None
        )

        t0 = time.perf_counter()
        values = _estimator_sweep(fom, rom, sets.coarse, ctx, config.threads)
        phase["estimator"] += time.perf_counter() - t0
        delta_map = dict(zip(sets.coarse_keys(), values))
        dmax, _, dmax_key = _argmax_coarse(sets, delta_map)

        if per_iteration is not None:
            per_iteration(it, rom, dmax)

        n_add_used = 0
        n_del_used = 0
        done = False

        if dmax <= config.tol:
            if adaptive_sets and sets.fine:
                surrogate = _fit_surrogate(sets, delta_map, config, phase)
                svals = surrogate.evaluate_batch(np.array(sets.fine))
                if float(svals.max()) <= config.tol:
                    done = True
                    n_del_used = len(sets.coarse)
                    sets.remove_from_coarse(sets.coarse_keys())
                else:
                    # re-seed with the worst fine points and keep going
                    n_add_used = max(compute_n_add(float(svals.max()), config.tol), 1)
                    moved, n_del_used = update_training_sets(
                        sets, delta_map, surrogate, config.tol, n_add_used
                    )
                    moved_map = dict(moved)
                    sel = _argmax_coarse(sets, moved_map)
                    mu_star = sets.coarse[sel[1]]
            else:
                done = True
        else:
            if adaptive_sets:
                surrogate = _fit_surrogate(sets, delta_map, config, phase)
                if config.n_add_mode == "adaptive":
                    n_add_used = compute_n_add(dmax, config.tol)
                else:
                    n_add_used = int(config.n_add_mode)
                moved, n_del_used = update_training_sets(
                    sets, delta_map, surrogate, config.tol, n_add_used
                )
                candidates = {k: v for k, v in delta_map.items()}
                candidates.update(dict(moved))
                sel = _argmax_coarse(sets, candidates)
                mu_star = sets.coarse[sel[1]]
            else:
                idx = sets.coarse_keys().index(dmax_key)
                mu_star = sets.coarse[idx]
            if adaptive_deltas:
                delta_rb, delta_deim = adaptive_basis_counts(
                    dmax, dmax_prev, config.tol, config
                )
                if not with_deim:
                    delta_deim = 0
                l_deim = max(1, l_deim + delta_deim)
            dmax_prev = dmax

        trace.iterations.append(IterationRecord(
            iteration=it,
            mu_star=np.atleast_1d(np.asarray(mu_solved, dtype=float)),
            delta_max=float(dmax),
            card_coarse=len(sets.coarse),
            r=basis.r,
            l_deim=deim_art.ell if with_deim else 0,
            n_add=n_add_used,
            n_del=n_del_used,
            wall_seconds=time.perf_counter() - t_iter,
        ))
        if done:
            trace.converged = True
            break

    trace.total_seconds = time.perf_counter() - t_start
    trace.phase_seconds = phase
    return basis, deim_art, trace, ctx


def standard_pod_greedy(fom, training_set, config: GreedyConfig, per_iteration=None):
    """Fixed training set, one POD mode per iteration, no hyper-reduction."""
    basis, _, trace, _ = _greedy_loop(
        fom, training_set, (), config,
        adaptive_sets=False, adaptive_deltas=False, use_deim=False,
        per_iteration=per_iteration,
    )
    return basis, trace


def pod_greedy_adaptive(fom, coarse, fine, config: GreedyConfig, per_iteration=None):
    """Adaptive coarse/fine set bookkeeping, one POD mode per iteration."""
    basis, _, trace, _ = _greedy_loop(
        fom, coarse, fine, config,
        adaptive_sets=True, adaptive_deltas=False, use_deim=False,
        per_iteration=per_iteration,
    )
    return basis, trace


def adaptive_pod_greedy_deim(fom, training_set, config: GreedyConfig, per_iteration=None):
    """Fixed training set, adaptive RB/DEIM basis counts per iteration."""
    basis, deim_art, trace, _ = _greedy_loop(
        fom, training_set, (), config,
        adaptive_sets=False, adaptive_deltas=True, use_deim=True,
        per_iteration=per_iteration,
    )
    return basis, deim_art, trace


def fully_adaptive(fom, coarse, fine, config: GreedyConfig, per_iteration=None):
    """Adaptive basis counts combined with adaptive training-set sampling."""
    basis, deim_art, trace, _ = _greedy_loop(
        fom, coarse, fine, config,
        adaptive_sets=True, adaptive_deltas=True, use_deim=True,
        per_iteration=per_iteration,
    )
    return basis, deim_art, trace
