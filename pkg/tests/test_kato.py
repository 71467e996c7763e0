import numpy as np
import pytest

from fockfk.kato import (c_gamma, coulomb_shift_check, form_bound_check, g_r, jensen_chain,
                         kato_integral, kato_seminorm, kato_table, khasminskii_check,
                         pathwise_bounded_check, translate)
from fockfk.model import LatticeGrid, constant_potential, coulomb_potential, cosine_potential, zero_potential


def test_kernel_cutoff():
    z = np.array([[0.5, 0, 0], [2.0, 0, 0]])
    assert np.allclose(g_r(z, 1.0, 3), [2.0, 0.0])
    assert g_r(np.array([[0.5, 0.0]]), 1.0, 2)[0] == pytest.approx(np.log(2))
    with pytest.raises(ValueError):
        g_r(np.array([[0.5]]), 1.0, 1)


@pytest.mark.parametrize("r", [0.1, 0.5, 1.0])
def test_constant_potential_3d(r):
    for x in ([0, 0, 0], [1.3, -0.2, 4.0]):
        assert kato_integral(constant_potential(1.0), x, r, 3) == pytest.approx(2 * np.pi * r ** 2, rel=1e-12)


def test_constant_potential_2d():
    r = 0.5
    exact = 2 * np.pi * (r ** 2 / 4 - r ** 2 * np.log(r) / 2)
    assert kato_integral(constant_potential(1.0), [0.2, 0.1], r, 2) == pytest.approx(exact, rel=1e-7)


def test_coulomb_centered():
    for r in (0.1, 0.5, 1.0):
        assert kato_integral(coulomb_potential(), [0, 0, 0], r, 3) == pytest.approx(4 * np.pi * r, rel=1e-12)


def test_coulomb_off_centre():
    a, r = 0.3, 1.0
    exact = 4 * np.pi * (a / 2 + (r - a))
    errs = [abs(kato_integral(coulomb_potential(), [a, 0, 0], r, 3, n_ang=n) / exact - 1) for n in (48, 96)]
    assert errs[0] < 2e-4 and errs[1] < errs[0] / 3


def test_coulomb_table_monotone():
    xs = np.array([[0, 0, 0], [0.2, 0.1, 0], [1.0, 0, 0]])
    r = kato_table(coulomb_potential(), [1.0, 0.5, 0.25, 0.1, 0.05], 3, xs)
    assert r["pass"] and r["finite"]


def test_zero_potential():
    assert kato_seminorm(zero_potential(3), 0.5, 3, [[0, 0, 0]]) == 0.0
    assert kato_table(zero_potential(3), [1.0, 0.5], 3, [[0, 0, 0]])["pass"]


def test_translation_invariance():
    V = coulomb_potential(sites=((0.0, 0.0, 0.0), (1.0, 0.5, 0.0)))
    a = np.array([0.7, -1.1, 2.0])
    xs = np.array([[0.1, 0.0, 0.0], [0.5, 0.5, 0.5]])
    assert kato_seminorm(translate(V, a), 0.5, 3, xs + a) == pytest.approx(kato_seminorm(V, 0.5, 3, xs), rel=1e-12)


def test_moments_zero_potential():
    r = khasminskii_check(zero_potential(), 2.0, [0.25, 0.5], 50, 1, [[0.0]])
    assert np.allclose(r["moment"], 1.0) and r["c_envelope"] == 0.0


def test_pathwise_bounded():
    assert pathwise_bounded_check(cosine_potential(), 2.0, 0.5, [0.0], 500, 3)["pass"]
    with pytest.raises(ValueError):
        pathwise_bounded_check(coulomb_potential(), 1.0, 0.5, [0, 0, 0], 5, 1)


def test_coulomb_moments():
    zs = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]])
    r = khasminskii_check(coulomb_potential(), 1.0, [0.25, 0.5, 0.75, 1.0], 2000, 5, zs, steps=100,
                          small_times=[0.2, 0.1, 0.05])
    assert r["finite"] and r["r2"] >= 0.9
    assert r["small_time"]["pass"]


def test_form_bound_bounded():
    V = cosine_potential()
    gamma = 10.0
    cg = V.bound / gamma
    grid = LatticeGrid.uniform(-2, 2, 21)
    assert form_bound_check(V, gamma, grid, cg)["min_eig"] > 0


def test_form_bound_clamped_coulomb():
    V = coulomb_potential(clamp=0.25)
    grid = LatticeGrid.uniform(-2, 2, 9, nu=3)
    est = c_gamma(V, 4.0, [[0.0, 0.0, 0.0]], 400, 2, steps=200)
    assert form_bound_check(V, 4.0, grid, est["c_gamma"])["pass"]
    assert not form_bound_check(V, 0.5, grid, 0.05)["pass"]


def test_coulomb_shift():
    assert coulomb_shift_check(20000, 9)["pass"]


def test_jensen():
    V = coulomb_potential()
    for x in ([0.1, 0.0, 0.0], [1.0, 1.0, 0.0]):
        assert jensen_chain(V, x, 0.5, 500, 4)["pass"]
