import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fockfk.fock import (WeightSpec, annihilation_matrix, build_context, coherent_state,
                         creation_matrix, embedding, field_matrix, graded_lex_basis,
                         number_diagonal, operator_from_dict, operator_to_dict,
                         second_quantize, weight_diagonal, weyl)
from conftest import rand_modes, rand_state

complexes = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False)


def test_basis_small():
    ctx = build_context(2, [1, 2], 2)
    assert ctx.dim == 6
    assert list(ctx.basis) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_vacuum_only():
    assert build_context(1, [1.0], 0).dim == 1


def test_spin_doubles_dim():
    assert build_context(3, [1, 1, 1], 2, L=2).dim == 20


@pytest.mark.parametrize("K,n", [(1, 5), (2, 4), (3, 3)])
def test_basis_graded(K, n):
    b = graded_lex_basis(K, n)
    grades = [sum(t) for t in b]
    assert grades == sorted(grades)
    assert len(set(b)) == len(b)


def test_bad_context():
    with pytest.raises(ValueError):
        build_context(2, [1.0, -1.0], 2)
    with pytest.raises(ValueError):
        build_context(2, [1.0], 2)


def test_vacuum_ccr(rng, ctx2):
    f, g = rand_modes(rng, 2), rand_modes(rng, 2)
    Om = ctx2.vacuum()
    val = Om.conj() @ annihilation_matrix(ctx2, f) @ creation_matrix(ctx2, g) @ Om
    assert abs(val - np.vdot(f, g)) < 1e-14


def test_lowering_one_particle(ctx2):
    out = annihilation_matrix(ctx2, [1, 0]) @ ctx2.state((1, 0))
    assert np.allclose(out, ctx2.vacuum())


@settings(max_examples=30, deadline=None)
@given(st.lists(complexes, min_size=2, max_size=2), st.lists(complexes, min_size=2, max_size=2))
def test_ccr_on_safe_states(f, g):
    ctx = build_context(2, [1.0, 2.0], 4)
    a, ad = annihilation_matrix(ctx, f), creation_matrix(ctx, g)
    C = a @ ad - ad @ a - np.vdot(f, g) * np.eye(ctx.dim)
    safe = ctx.safe_mask(1)
    assert np.abs(C[:, safe]).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.lists(complexes, min_size=2, max_size=2))
def test_field_hermitian(f):
    ctx = build_context(2, [1.0, 2.0], 4)
    P = field_matrix(ctx, f)
    assert np.abs(P - P.conj().T).max() < 1e-14


def test_weyl_zero(ctx2):
    assert np.allclose(weyl(ctx2, [0, 0]).matrix, np.eye(ctx2.dim))


def test_weyl_vacuum_expectation():
    ctx = build_context(2, [1.0, 2.0], 8)
    g = np.array([0.3, 0.4j])
    val = ctx.vacuum().conj() @ weyl(ctx, g).matrix @ ctx.vacuum()
    assert abs(val - np.exp(-0.125)) < 1e-6
    W = weyl(ctx, g).matrix
    assert np.abs(W[:, ctx.safe_mask(4)][:, 0] - coherent_state(ctx, g)).max() < 1e-3


def test_weyl_inverse(rng, ctx2):
    g = rand_modes(rng, 2, 0.4)
    P = weyl(ctx2, g).matrix @ weyl(ctx2, -g).matrix
    assert np.abs(P - np.eye(ctx2.dim)).max() < 1e-12


def test_second_quantization(ctx2):
    dG = second_quantize(ctx2, ctx2.omega).matrix
    assert np.allclose(dG @ ctx2.state((1, 1)), 3.0 * ctx2.state((1, 1)))
    assert np.allclose(second_quantize(ctx2, [1, 1]).matrix @ ctx2.vacuum(), 0)


@settings(max_examples=25, deadline=None)
@given(st.lists(complexes, min_size=2, max_size=2),
       st.lists(st.floats(0.2, 3.0), min_size=2, max_size=2))
def test_form_lower_bound(f, kappa):
    ctx = build_context(2, [1.0, 2.0], 6)
    f, kappa = np.array(f), np.array(kappa)
    A = np.diag(number_diagonal(ctx, kappa)) + field_matrix(ctx, f)
    assert np.linalg.eigvalsh(A).min() >= -np.sum(np.abs(f) ** 2 / kappa) - 1e-10


@settings(max_examples=25, deadline=None)
@given(st.lists(complexes, min_size=2, max_size=2))
def test_relative_bounds(f):
    ctx = build_context(2, [1.0, 2.0], 4)
    f = np.array(f)
    kap = ctx.omega
    c = np.sqrt(np.sum(np.abs(f) ** 2 / kap))
    n = number_diagonal(ctx, kap)
    a, ad = annihilation_matrix(ctx, f), creation_matrix(ctx, f)
    safe = ctx.safe_mask(1)
    for i in range(ctx.dim):
        assert np.linalg.norm(a[:, i]) <= c * np.sqrt(n[i]) + 1e-12
        if safe[i]:
            assert np.linalg.norm(ad[:, i]) <= c * np.sqrt(n[i]) + np.linalg.norm(f) + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.lists(complexes, min_size=2, max_size=2), st.integers(0, 10 ** 6))
def test_second_order_field_bound(f, seed):
    ctx = build_context(2, [1.0, 2.0], 5)
    f = np.array(f)
    psi = rand_state(np.random.default_rng(seed), ctx, ctx.n_max - 2)
    P = field_matrix(ctx, f)
    lhs = np.linalg.norm(P @ P @ psi)
    rhs = 6 * np.sum((1 + 1 / ctx.omega) * np.abs(f) ** 2) * np.linalg.norm(
        (1 + number_diagonal(ctx, ctx.omega)) * psi)
    assert lhs <= rhs + 1e-12


def test_truncation_monotone(rng):
    small, big = build_context(2, [1, 2], 3), build_context(2, [1, 2], 5)
    f = rand_modes(rng, 2)
    J = embedding(small, big)
    assert np.abs(J.T @ field_matrix(big, f) @ J - field_matrix(small, f)).max() < 1e-14


def test_operator_dict_roundtrip(rng, ctx2):
    M = field_matrix(ctx2, rand_modes(rng, 2))
    assert np.allclose(operator_from_dict(operator_to_dict(M, ctx2)), M)


def test_weight_value(ctx2):
    spec = WeightSpec("polynomial", 1.0, (0.0, 0.0), tuple(ctx2.omega), 0.0, 1.0, 0.3)
    d = weight_diagonal(ctx2, spec)
    assert d[ctx2.index[(0, 1)]] == pytest.approx(3.0)
    assert d[ctx2.index[(2, 0)]] == pytest.approx(3.0)


@pytest.mark.parametrize("alpha,eps", [(1.0, 0.0), (0.5, 0.3), (2.0, 1.0), (-1.0, 0.2)])
def test_weight_inverse(ctx2, alpha, eps):
    t0, t = 1.0, 0.35
    vp = tuple(ctx2.omega)
    A = weight_diagonal(ctx2, WeightSpec("polynomial", alpha, vp, (0.1, 0.1), eps, t0, t0 - t))
    B = weight_diagonal(ctx2, WeightSpec("polynomial", -alpha, vp, (0.1, 0.1), eps, t0, t))
    assert np.abs(A * B - 1).max() < 1e-13


@pytest.mark.parametrize("alpha,eps", [(0.5, 0.0), (1.0, 0.0), (1.5, 0.5), (3.0, 1.0)])
def test_weight_derivative_bound(ctx2, alpha, eps):
    h = 1e-6
    vp = tuple(ctx2.omega)
    for t in (0.1, 0.5, 0.9):
        up = weight_diagonal(ctx2, WeightSpec("polynomial", alpha, vp, (0.0, 0.0), eps, 1.0, t + h))
        dn = weight_diagonal(ctx2, WeightSpec("polynomial", alpha, vp, (0.0, 0.0), eps, 1.0, t - h))
        mid = weight_diagonal(ctx2, WeightSpec("polynomial", alpha, vp, (0.0, 0.0), eps, 1.0, t))
        rate = (up - dn) / (2 * h) / mid
        assert np.all(rate <= 0.5 * number_diagonal(ctx2, ctx2.omega) + 0.5 + 1e-6)


def test_weight_validation(ctx2):
    with pytest.raises(ValueError):
        weight_diagonal(ctx2, WeightSpec("polynomial", 0.2, (0, 0), (0, 0)))
    with pytest.raises(ValueError):
        weight_diagonal(ctx2, WeightSpec("exponential", 1.5, (0, 0), (0, 0)))
    with pytest.raises(ValueError):
        weight_diagonal(ctx2, WeightSpec("polynomial", 1.0, (5.0, 0), (0, 0)))
