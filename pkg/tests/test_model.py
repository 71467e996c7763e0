import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fockfk.fock import WeightSpec, build_context, number_diagonal, weight_diagonal
from fockfk.model import (LatticeGrid, SpinAlgebra, constant_potential, coupling_norm,
                          cosine_potential, fiber_hamiltonian, fiber_parts, free_laplacian,
                          from_functions, harmonic_potential, lattice_hamiltonian, mho, mho_batch,
                          mho_matrix, profile_coupling, qed_coupling_preset, zero_coupling,
                          zero_potential)


def test_zero_coupling_fiber(ctx2):
    H = fiber_hamiltonian(ctx2, zero_coupling(ctx2), [0.3]).matrix
    assert np.allclose(H, np.diag(number_diagonal(ctx2, ctx2.omega)))


def test_fiber_hermitian_without_q(ctx2):
    c = profile_coupling(ctx2.omega, [0.5, 0.4], [0.3, 0.3], with_q=False)
    H = fiber_hamiltonian(ctx2, c, [0.7])
    assert H.hermitian
    assert not fiber_hamiltonian(ctx2, profile_coupling(ctx2.omega, [0.5, 0.4]), [0.7]).hermitian


def test_fiber_relative_bound():
    c = profile_coupling([1.0, 2.0], [0.5, 0.4], [0.3, 0.3], with_q=False)
    ratios = []
    for n in (4, 6, 8):
        ctx = build_context(2, [1.0, 2.0], n)
        H = fiber_hamiltonian(ctx, c, [0.4]).matrix
        R = H / (1 + number_diagonal(ctx, ctx.omega))[None, :]
        ratios.append(np.linalg.norm(R, 2))
    cn = coupling_norm(c, [0.4], "k") ** 2
    assert max(ratios) <= 3 * (1 + cn)
    assert abs(ratios[-1] - ratios[-2]) <= 0.25 * ratios[-1]


def test_x_continuity_of_field_square():
    ctx = build_context(2, [1.0, 2.0], 6)
    c = profile_coupling(ctx.omega, [0.5, 0.4])
    psi = ctx.state((1, 1))
    P0 = fiber_parts(ctx, c, [0.2])[0][0]
    diffs = []
    for d in (0.1, 0.01, 0.001):
        P = fiber_parts(ctx, c, [0.2 + d])[0][0]
        diffs.append(np.linalg.norm(P @ P @ psi - P0 @ P0 @ psi))
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[2] < 1e-2


def test_mho_zero_and_scalar():
    assert mho(profile_coupling([1.0], [0.5]), [0.0]) == 0.0
    c = profile_coupling([2.0], [0.0], [0.6 - 0.8j], a_F=0.0)
    assert mho(c, [0.3]) == pytest.approx(1.0 / 2.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2))
def test_mho_quadratic(s, x):
    c = profile_coupling([1.0, 2.0], [0.5, 0.4], [0.3, -0.2])
    assert mho(c.scaled(s), [x]) == pytest.approx(s * s * mho(c, [x]), rel=1e-12, abs=1e-15)


def test_mho_pauli_power_iteration(rng):
    sp = SpinAlgebra.pauli(1)
    Freal = rng.normal(size=(2, 3))
    M = mho_matrix(profile_coupling([1.0, 2.0], [0.1, 0.1], Freal, spin=sp), Freal)
    assert np.allclose(M, M.T)
    F = Freal + 1j * rng.normal(size=(2, 3))
    c = profile_coupling([1.0, 2.0], [0.1, 0.1], F, spin=sp, a_F=0.0)
    M = mho_matrix(c, F)
    v = np.ones(2)
    for _ in range(200):
        v = M.T @ (M @ v)
        v /= np.linalg.norm(v)
    est = np.linalg.norm(M @ v) ** 2
    assert mho(c, [0.0]) == pytest.approx(est, rel=1e-10)
    assert mho_batch(c, np.zeros((3, 1))) == pytest.approx(np.full(3, est), rel=1e-10)


def test_quadratic_form_bound():
    ctx = build_context(2, [1.0, 2.0], 6)
    c = profile_coupling(ctx.omega, [0.5, 0.4], [0.6, -0.3])
    dg = number_diagonal(ctx, ctx.omega)
    h = 1e-6
    spec = lambda t: WeightSpec("polynomial", 1.0, tuple(ctx.omega), (0.0, 0.0), 0.0, 1.0, t)
    rate = (weight_diagonal(ctx, spec(0.5 + h)) - weight_diagonal(ctx, spec(0.5 - h))) / (
        2 * h * weight_diagonal(ctx, spec(0.5)))
    for x in (-1.0, 0.0, 0.8):
        sF = fiber_parts(ctx, c, [x])[2]
        D = sF + np.diag(rate) - np.diag(0.75 * dg + 4 * mho(c, [x]) + 0.5)
        assert np.linalg.eigvalsh(D).max() <= 1e-8


def test_frak_k_norm():
    c = from_functions([2.0], 1, lambda x: np.ones(np.shape(x)[:-1] + (1, 1), complex),
                       q=lambda x: np.zeros(np.shape(x)[:-1] + (1,), complex))
    assert coupling_norm(c, [0.0], "k") == pytest.approx(np.sqrt(4.5))
    assert coupling_norm(c, [0.0], "k") == pytest.approx(2.1213203435596424)


def test_zero_vector_norms(ctx2):
    c = zero_coupling(ctx2)
    for kind, kw in [("k", {}), ("circle_poly", {"alpha": 1.0, "varpi": ctx2.omega}),
                     ("star1", {"alpha": 1.0, "kappa": ctx2.omega})]:
        assert coupling_norm(c, [0.1], kind, **kw) == 0.0


def test_circle_poly_half():
    om = np.array([1.0, 3.0])
    c = profile_coupling(om, [0.5, 0.2], with_q=False)
    n = coupling_norm(c, [0.0], "circle_poly", parts=("G",), alpha=0.5, c_alpha=1.7, kappa=om)
    G = c.G(np.zeros(1))[:, 0]
    assert n == pytest.approx(1.7 * np.linalg.norm(np.sqrt(om) * G))


def _qed():
    kg = np.array([[1.0, 0.3, 0.2], [-1.0, -0.3, -0.2], [0.2, 1.1, 0.5], [-0.2, -1.1, -0.5]])
    om = np.repeat(np.linalg.norm(kg, axis=1), 2)
    ctx = build_context(8, om, 1, L=2)
    return ctx, kg, qed_coupling_preset(ctx, kg, np.full(4, 0.5), lambda k: 1.0)


def test_qed_c_real_at_origin():
    _, _, c = _qed()
    assert c.is_c_real([0, 0, 0])


def test_qed_norm_translation_free():
    _, _, c = _qed()
    n0 = np.linalg.norm(c.G(np.zeros(3)))
    for x in ([0.3, -1.0, 2.0], [5.0, 0.1, 0.0]):
        assert np.linalg.norm(c.G(np.array(x))) == pytest.approx(n0, rel=1e-13)


def test_qed_field_bound():
    _, kg, c = _qed()
    x = np.array([0.4, -0.2, 0.9])
    kmax = np.linalg.norm(kg, axis=1).max()
    assert np.linalg.norm(c.F(x)) <= 0.5 * kmax * np.linalg.norm(c.G(x)) + 1e-14


def test_qed_asymmetric_grid_rejected():
    kg = np.array([[1.0, 0.3, 0.2], [0.2, 1.1, 0.5]])
    ctx = build_context(4, np.repeat(np.linalg.norm(kg, axis=1), 2), 1, L=2)
    with pytest.raises(ValueError):
        qed_coupling_preset(ctx, kg, np.ones(2), lambda k: 1.0)


def test_single_point_lattice(ctx2):
    g = LatticeGrid((np.array([0.0]),))
    H = lattice_hamiltonian(ctx2, zero_coupling(ctx2), zero_potential(), g)
    assert np.allclose(H, np.diag(number_diagonal(ctx2, ctx2.omega)))


def test_zero_coupling_separates():
    ctx = build_context(1, [1.5], 2)
    grid = LatticeGrid.uniform(-2, 2, 11)
    V = cosine_potential()
    H = lattice_hamiltonian(ctx, zero_coupling(ctx), V, grid)
    h1 = free_laplacian(grid) + np.diag(V.lattice_values(grid.nodes(), grid.h))
    expect = np.kron(h1, np.eye(ctx.dim)) + np.kron(np.eye(grid.size), np.diag(number_diagonal(ctx, ctx.omega)))
    assert np.abs(H - expect).max() < 1e-12
    assert np.linalg.eigvalsh(H)[0] == pytest.approx(np.linalg.eigvalsh(h1)[0], abs=1e-12)


def test_lattice_hermitian():
    ctx = build_context(2, [1.0, 2.0], 2)
    c = profile_coupling(ctx.omega, [0.5, 0.4], [0.3, 0.3])
    H = lattice_hamiltonian(ctx, c, harmonic_potential(), LatticeGrid.uniform(-1, 1, 7))
    assert np.abs(H - H.conj().T).max() == 0.0


def test_periodic_translation_covariance():
    ctx = build_context(1, [1.0], 3)
    n = 8
    grid = LatticeGrid.uniform(0, 1 - 1 / n, n, boundary="periodic")
    h = grid.h
    G = lambda s: (lambda x: (0.4 * (1 + 0.5 * np.cos(2 * np.pi * (x[..., 0] + s))))[..., None, None]
                   * np.ones((1, 1)))
    q0 = lambda x: np.zeros(np.shape(x)[:-1] + (1,), complex)
    e = [np.linalg.eigvalsh(lattice_hamiltonian(ctx, from_functions(ctx.omega, 1, G(s), q=q0),
                                                constant_potential(0.0), grid)) for s in (0.0, h)]
    assert np.abs(e[0] - e[1]).max() < 1e-10


def test_lattice_cap():
    ctx = build_context(2, [1.0, 2.0], 3)
    with pytest.raises(ValueError):
        lattice_hamiltonian(ctx, zero_coupling(ctx), zero_potential(), LatticeGrid.uniform(-1, 1, 500))

