"""POD basis growth/shrinkage, DEIM, Galerkin projection and ROM simulation."""

import numpy as np
import pytest

from rbadapt.fom import build_convdiff, simulate
from rbadapt.rom import (
    Basis,
    BasisRankWarning,
    DeimArtifacts,
    deim_select,
    deim_update,
    galerkin_project,
    pod_extend,
    simulate_rom,
)


# ---------------------------------------------------------------- pod_extend

def test_pod_extend_orthonormal_after_many_calls():
    rng = np.random.default_rng(0)
    basis = Basis.empty(80)
    for _ in range(50):
        X = rng.standard_normal((80, 4))
        basis = pod_extend(basis, X, 1)
    assert basis.r == 50
    assert basis.orthonormality_defect() <= 1e-12


def test_pod_extend_projection_error_nonincreasing():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((60, 25))
    basis = Basis.empty(60)
    errs = []
    for _ in range(12):
        basis = pod_extend(basis, X, 1)
        P = basis.V @ (basis.V.T @ X)
        errs.append(np.linalg.norm(X - P))
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_pod_extend_first_mode_is_leading_singular_vector():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((40, 10))
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    basis = pod_extend(Basis.empty(40), X, 1)
    # leading left singular vector up to sign
    assert min(np.linalg.norm(basis.V[:, 0] - U[:, 0]),
               np.linalg.norm(basis.V[:, 0] + U[:, 0])) <= 1e-10


def test_pod_extend_negative_delta_drops_trailing_columns():
    rng = np.random.default_rng(3)
    basis = pod_extend(Basis.empty(30), rng.standard_normal((30, 10)), 5)
    shrunk = pod_extend(basis, None, -2)
    assert shrunk.r == 3
    assert np.array_equal(shrunk.V, basis.V[:, :3])


def test_pod_extend_cannot_empty_basis():
    rng = np.random.default_rng(4)
    basis = pod_extend(Basis.empty(20), rng.standard_normal((20, 5)), 2)
    with pytest.raises(ValueError):
        pod_extend(basis, None, -2)


def test_pod_extend_rank_shortfall_warns():
    X = np.outer(np.arange(1.0, 11.0), np.ones(6))  # rank-1 snapshots
    with pytest.warns(BasisRankWarning):
        basis = pod_extend(Basis.empty(10), X, 3)
    assert basis.r == 1


def test_pod_extend_snapshots_in_span_warn_and_noop():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((25, 3))
    basis = pod_extend(Basis.empty(25), X, 3)
    with pytest.warns(BasisRankWarning):
        again = pod_extend(basis, X, 2)
    assert again.r == basis.r


# ---------------------------------------------------------------- DEIM

def test_deim_select_indices_distinct_and_first_is_argmax():
    rng = np.random.default_rng(6)
    M = rng.standard_normal((50, 8))
    U, _, _ = np.linalg.svd(M, full_matrices=False)
    idx = deim_select(U)
    assert len(idx) == 8 and len(set(idx)) == 8
    assert idx[0] == int(np.argmax(np.abs(U[:, 0])))


def test_deim_exact_on_range_of_basis():
    rng = np.random.default_rng(7)
    F = rng.standard_normal((40, 12))
    art = deim_update(DeimArtifacts.empty(40), F, 12)
    PU = art.U_f[art.P_f, :]
    for _ in range(5):
        f = art.U_f @ rng.standard_normal(12)  # element of range(U_f)
        rec = art.U_f @ np.linalg.solve(PU, f[art.P_f])
        assert np.linalg.norm(rec - f) <= 1e-10 * max(1.0, np.linalg.norm(f))


def test_deim_reconstruction_error_nonincreasing_in_ell():
    # travelling-bump family with exponentially decaying singular values
    t = np.linspace(0, 1, 40)
    F = np.column_stack([np.exp(-0.5 * ((t - 0.3 - 0.02 * j) / 0.1) ** 2)
                         for j in range(25)])
    errs = []
    for ell in range(1, 16):
        art = deim_update(DeimArtifacts.empty(40), F, ell)
        PU = art.U_f[art.P_f, :]
        rec = art.U_f @ np.linalg.solve(PU, F[art.P_f, :])
        errs.append(np.linalg.norm(F - rec))
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


def test_deim_update_accumulates_snapshots():
    rng = np.random.default_rng(9)
    art = DeimArtifacts.empty(20)
    art = deim_update(art, rng.standard_normal((20, 5)), 3)
    art = deim_update(art, rng.standard_normal((20, 4)), 3)
    assert art.F.shape[1] == 9
    assert art.ell == 3


def test_deim_update_clamps_ell_to_rank():
    F = np.outer(np.ones(15), np.arange(1.0, 5.0))  # rank 1
    with pytest.warns(BasisRankWarning):
        art = deim_update(DeimArtifacts.empty(15), F, 3)
    assert art.ell == 1


def test_deim_snapshot_cap():
    rng = np.random.default_rng(10)
    art = DeimArtifacts.empty(12)
    art = deim_update(art, rng.standard_normal((12, 1990)), 4)
    art = deim_update(art, rng.standard_normal((12, 30)), 4)
    assert art.F.shape[1] <= 2000


# ---------------------------------------------------------------- Galerkin / ROM

def test_full_basis_rom_reproduces_fom(convdiff_small):
    fom = convdiff_small
    basis = Basis(np.eye(fom.n))
    rom = galerkin_project(fom, basis)
    mu = [0.2, 1.0]
    t_f = simulate(fom, mu)
    t_r = simulate_rom(rom, mu)
    assert np.allclose(t_r.outputs, t_f.outputs, atol=1e-9)


def test_rom_output_error_decreases_with_r(convdiff_small):
    fom = convdiff_small
    mu = [0.1, 2.0]
    X = simulate(fom, mu).states[:, 1:]
    y = simulate(fom, mu).outputs
    errs = []
    basis = Basis.empty(fom.n)
    for _ in range(4):
        basis = pod_extend(basis, X, 3)
        rom = galerkin_project(fom, basis)
        yr = simulate_rom(rom, mu).outputs
        errs.append(np.linalg.norm(y - yr))
    # Galerkin closure error keeps this from reaching machine precision, but
    # enrichment must reduce the output error by a wide margin
    assert errs[-1] <= 0.1 * errs[0]


def test_rom_initial_condition_projection(convdiff_small):
    fom = convdiff_small
    X = simulate(fom, [0.4, 1.2]).states[:, 1:]
    basis = pod_extend(Basis.empty(fom.n), X, 5)
    rom = galerkin_project(fom, basis)
    assert np.allclose(rom.x0_r, basis.V.T @ fom.x0)


def test_rom_simulation_shapes(convdiff_small):
    fom = convdiff_small
    X = simulate(fom, [0.4, 1.2]).states[:, 1:]
    basis = pod_extend(Basis.empty(fom.n), X, 4)
    rom = galerkin_project(fom, basis)
    traj = simulate_rom(rom, [0.4, 1.2])
    assert traj.states.shape == (4, fom.K + 1)
    assert traj.outputs.shape == (1, fom.K + 1)


def test_deim_rom_matches_lifted_rom(burgers_small):
    # with ell large enough to capture the snapshots, DEIM and exact lifting
    # give nearly identical reduced trajectories
    fom = burgers_small
    mu = 0.5
    traj = simulate(fom, mu)
    X = traj.states[:, 1:]
    basis = pod_extend(Basis.empty(fom.n), X, 8)
    F = np.column_stack([fom.f(X[:, k], np.atleast_1d(mu))
                         for k in range(X.shape[1])])
    art = deim_update(DeimArtifacts.empty(fom.n), F, 25)
    rom_deim = galerkin_project(fom, basis, art)
    rom_lift = galerkin_project(fom, basis)
    y_d = simulate_rom(rom_deim, mu).outputs
    y_l = simulate_rom(rom_lift, mu).outputs
    assert np.linalg.norm(y_d - y_l) <= 1e-6 * max(1.0, np.linalg.norm(y_l))


def test_affine_structure_preserved_by_projection(convdiff_small):
    fom = convdiff_small
    basis = pod_extend(Basis.empty(fom.n),
                       simulate(fom, [0.3, 1.0]).states[:, 1:], 3)
    rom = galerkin_project(fom, basis)
    assert rom.Er.Q == fom.E.Q
    mu = np.array([0.7, 4.0])
    assert np.allclose(rom.Er.assemble(mu),
                       basis.V.T @ (fom.E.assemble(mu) @ basis.V))
