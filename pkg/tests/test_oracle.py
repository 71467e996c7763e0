import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fockfk.fock import build_context, number_diagonal
from fockfk.model import (LatticeGrid, cosine_potential, free_laplacian, harmonic_potential,
                          lattice_hamiltonian, profile_coupling, zero_coupling, zero_potential)
from fockfk.oracle import (decay_check, expm, ground_state, ionization_surrogate, ir_identity_residual,
                           number_identity, spectral)


def _herm(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (A + A.conj().T) / 2


def test_expm_zero_time(rng):
    H = _herm(rng, 6)
    assert np.allclose(expm(H, 0.0), np.eye(6))


def test_expm_diagonal():
    d = np.array([0.0, 1.0, 2.5])
    assert np.allclose(expm(np.diag(d), 0.7), np.diag(np.exp(-0.7 * d)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.01, 2.0), st.floats(0.05, 0.95))
def test_expm_semigroup(seed, t, frac):
    H = _herm(np.random.default_rng(seed), 8)
    E, resid = expm(H, t, report=True)
    assert np.abs(expm(H, frac * t) @ expm(H, (1 - frac) * t) - E).max() < 1e-10 * max(1, np.abs(E).max())
    assert np.abs(E - E.conj().T).max() < 1e-10 * np.abs(E).max()
    assert np.allclose(np.linalg.eigvalsh(E), np.sort(np.exp(-t * np.linalg.eigvalsh(H))), rtol=1e-9)
    lam = np.linalg.eigvalsh(H)
    assert resid < 1e-13 * np.exp(t * (lam[-1] - lam[0]))  # roundoff grows with the condition number


def test_oracle_rejects_non_hermitian():
    with pytest.raises(ValueError):
        spectral(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_spectral_apply(rng):
    H = _herm(rng, 5)
    v = rng.normal(size=5)
    assert np.allclose(spectral(H).apply(0.3, v), expm(H, 0.3) @ v)


def test_free_ground_state():
    ctx = build_context(2, [1.0, 2.0], 2)
    H = lattice_hamiltonian(ctx, zero_coupling(ctx), zero_potential(), LatticeGrid((np.array([0.0]),)))
    E, psi, gap = ground_state(H)
    assert E == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(psi, ctx.vacuum())
    assert gap == pytest.approx(1.0)


def test_no_photons_matches_schrodinger():
    ctx = build_context(1, [1.0], 0)
    grid = LatticeGrid.uniform(-3, 3, 31)
    V = harmonic_potential()
    H = lattice_hamiltonian(ctx, zero_coupling(ctx), V, grid)
    h1 = free_laplacian(grid) + np.diag(V.lattice_values(grid.nodes(), grid.h))
    assert ground_state(H)[0] == pytest.approx(np.linalg.eigvalsh(h1)[0], abs=1e-12)


def test_variational_lowering():
    ctx = build_context(2, [1.0, 2.0], 3)
    grid = LatticeGrid.uniform(-1.5, 1.5, 7)
    V = cosine_potential()
    E0 = ground_state(lattice_hamiltonian(ctx, zero_coupling(ctx), V, grid))[0]
    # field-only coupling: the free ground state is a trial vector with the same energy
    E1 = ground_state(lattice_hamiltonian(ctx, profile_coupling(ctx.omega, [0.0, 0.0], [0.3, 0.3]), V, grid))[0]
    assert E1 < E0
    # minimal coupling adds the positive term |G|^2/2 to that trial energy
    Eg = ground_state(lattice_hamiltonian(ctx, profile_coupling(ctx.omega, [0.5, 0.4], [0.3, 0.3]), V, grid))[0]
    assert Eg < E0 + 0.5 * 1.5 ** 2 * (0.5 ** 2 + 0.4 ** 2) + 1e-12


def test_decay_confining():
    ctx = build_context(1, [1.0], 1)
    grid = LatticeGrid.uniform(-4, 4, 41)
    H = lattice_hamiltonian(ctx, zero_coupling(ctx), harmonic_potential(), grid)
    _, psi, _ = ground_state(H)
    r = decay_check(psi, grid, ctx, a=0.5)
    assert r["finite"] and not r["edge_dominated"]
    amp = np.linalg.norm(psi.reshape(grid.size, ctx.dim), axis=1)
    right = np.log(amp[20:])
    assert np.all(np.diff(right, 2) <= 1e-9)


def test_decay_flags_uniform():
    ctx = build_context(1, [1.0], 1)
    grid = LatticeGrid.uniform(-4, 4, 41)
    psi = np.ones(grid.size * ctx.dim) / np.sqrt(grid.size * ctx.dim)
    assert decay_check(psi, grid, ctx, a=0.5)["edge_dominated"]


def test_weighted_decay_with_number_weight():
    ctx = build_context(2, [1.0, 2.0], 3)
    grid = LatticeGrid.uniform(-3, 3, 13)
    c = profile_coupling(ctx.omega, [0.5, 0.4], [0.3, 0.3])
    _, psi, _ = ground_state(lattice_hamiltonian(ctx, c, harmonic_potential(), grid))
    assert decay_check(psi, grid, ctx, a=0.3, alpha=1.0)["finite"]


def test_ionization_surrogate_above_ground():
    ctx = build_context(1, [1.0], 1)
    grid = LatticeGrid.uniform(-3, 3, 25)
    H = lattice_hamiltonian(ctx, zero_coupling(ctx), harmonic_potential(), grid)
    assert ionization_surrogate(H, grid, ctx.dim, 1.5) > ground_state(H)[0]
    assert ionization_surrogate(H, grid, ctx.dim, 10.0) == np.inf


def test_ir_identity_free():
    ctx = build_context(2, [1.0, 2.0], 2)
    grid = LatticeGrid.uniform(-1, 1, 5)
    H = lattice_hamiltonian(ctx, zero_coupling(ctx), cosine_potential(), grid)
    E, psi, _ = ground_state(H)
    r = ir_identity_residual(ctx, H, E, psi, 0, grid.size)
    assert r["residual"] < 1e-14 and r["norm_a_psi"] < 1e-14


@pytest.mark.parametrize("F", [None, [0.3]])
def test_ir_identity_one_mode(F):
    ctx = build_context(1, [1.3], 6)
    grid = LatticeGrid.uniform(-1.5, 1.5, 9)
    c = profile_coupling(ctx.omega, [0.6], F)
    H = lattice_hamiltonian(ctx, c, cosine_potential(), grid)
    E, psi, _ = ground_state(H)
    r = ir_identity_residual(ctx, H, E, psi, 0, grid.size)
    assert r["residual"] <= 1e-9
    assert r["norm_a_psi"] > 1e-3


def test_number_identity(rng):
    ctx = build_context(2, [1.0, 2.0], 3)
    psi = rng.normal(size=4 * ctx.dim) + 1j * rng.normal(size=4 * ctx.dim)
    lhs, rhs = number_identity(ctx, psi, 4)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert rhs == pytest.approx(np.sum(np.tile(number_diagonal(ctx, [1, 1]), 4) * np.abs(psi) ** 2))
