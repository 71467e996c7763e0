"""Q-space picture of the scalar Fock space and positivity certificates.

In the conjugate-field variant |n> is sent to prod_j (-i)^{n_j} He_{n_j}(q_j) / sqrt(n_j!)
in L^2 of the standard Gaussian, so varpi(e_j) acts as multiplication by q_j
and Omega becomes the constant function 1.  The field variant drops the phase,
which is the same as composing with Gamma(i).  Functions are sampled at tensor
Gauss-Hermite nodes; a vector lies in the grid cone when its samples are >= 0.

On the truncated space the grid samples of e^{-t dGamma} are not all positive
(the cut Mehler series oscillates at the outer nodes), so operator and
ground-state certificates pair against probe vectors instead: the cone is
self-dual, and Gaussian bumps rho(varpi - a) Omega centred at the grid nodes
are genuine cone elements whose Fock coefficients decay fast.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import factorial

import numpy as np

from .fock import FockContext, conjugate_field_matrix, creation_matrix, field_matrix, number_diagonal
from .flow import evolve
from .model import CoefficientVector, LatticeGrid, PotentialSpec, lattice_hamiltonian
from .oracle import ground_state, spectral
from .stoch import TimeGrid, heat_kernel, sample_paths


@dataclass(frozen=True)
class QTransform:
    nodes: np.ndarray     # (G, K) grid points q
    weights: np.ndarray   # (G,) Gaussian quadrature weights, summing to 1
    values: np.ndarray    # (G, dim) basis functions at the nodes
    order: int
    variant: str

    @property
    def V(self) -> np.ndarray:
        """Isometry Fock -> l^2(grid, weights): rows sqrt(w_g) f_n(q_g)."""
        return np.sqrt(self.weights)[:, None] * self.values

    def evaluate(self, psi: np.ndarray) -> np.ndarray:
        """Sample values of the Q-space function of psi."""
        return self.values @ psi

    def grid_operator(self, A: np.ndarray) -> np.ndarray:
        """Integral kernel A(q_g, q_h) of A, so that (A psi)(q_g) = sum_h w_h A(q_g, q_h) psi(q_h)."""
        return self.values @ A @ self.values.conj().T

    def gram_residual(self) -> float:
        V = self.V
        return float(np.abs(V.conj().T @ V - np.eye(V.shape[1])).max())


def _hermite_e(n_max: int, q: np.ndarray) -> np.ndarray:
    """He_0..He_{n_max}(q) normalized by sqrt(n!), shape (n_max + 1, len(q))."""
    out = np.zeros((n_max + 1, len(q)))
    out[0] = 1.0
    if n_max >= 1:
        out[1] = q
    for n in range(1, n_max):
        out[n + 1] = q * out[n] - n * out[n - 1]
    return out / np.sqrt([float(factorial(n)) for n in range(n_max + 1)])[:, None]


def q_transform(ctx: FockContext, variant: str = "conjugate_field", order: int | None = None) -> QTransform:
    if ctx.L != 1:
        raise ValueError("Q-space transform needs the scalar case L = 1")
    if variant not in ("conjugate_field", "field"):
        raise ValueError(f"unknown variant {variant!r}")
    m = ctx.n_max + 1 if order is None else order
    if m < ctx.n_max + 1:
        raise ValueError(f"Gauss-Hermite order {m} < n_max + 1 = {ctx.n_max + 1}")
    x, w = np.polynomial.hermite.hermgauss(m)
    q1, w1 = np.sqrt(2) * x, w / np.sqrt(np.pi)
    he = _hermite_e(ctx.n_max, q1)
    nodes = np.array(list(product(q1, repeat=ctx.K)))
    weights = np.prod(np.array(list(product(w1, repeat=ctx.K))), axis=1)
    idx = np.array(list(product(range(m), repeat=ctx.K)))
    occ = ctx.occupations()
    vals = np.ones((len(nodes), ctx.dim), complex)
    for j in range(ctx.K):
        vals *= he[occ[:, j]][:, idx[:, j]].T
    if variant == "conjugate_field":
        vals *= (-1j) ** occ.sum(axis=1)[None, :]
    return QTransform(nodes, weights, vals, m, variant)


def multiplication_residual(ctx: FockContext, qt: QTransform) -> float:
    """max_j ||V X_j P - diag(q_j) V P|| with X_j the (conjugate) field of e_j and
    P the projection onto states below the cap."""
    P = ctx.safe_mask(1)
    V = qt.V
    res = 0.0
    for j in range(ctx.K):
        e = np.zeros(ctx.K)
        e[j] = 1
        X = conjugate_field_matrix(ctx, e) if qt.variant == "conjugate_field" else field_matrix(ctx, e)
        lhs = (V @ X)[:, P]
        rhs = (qt.nodes[:, j][:, None] * V)[:, P]
        res = max(res, float(np.abs(lhs - rhs).max()))
    return res


def gamma(ctx: FockContext, z: complex) -> np.ndarray:
    """Gamma(z) = z^{dGamma(1)} for unimodular z."""
    return np.diag(np.complex128(z) ** number_diagonal(ctx, np.ones(ctx.K)))


def is_completely_real(ctx: FockContext, psi: np.ndarray, tol: float = 1e-12) -> bool:
    """Gamma(-C) psi = psi with C the entrywise mode conjugation."""
    sign = (-1.0) ** number_diagonal(ctx, np.ones(ctx.K))
    return bool(np.abs(sign * np.conj(psi) - psi).max() <= tol * max(1.0, np.linalg.norm(psi)))


PROBE_WIDTH = 2.0


def probe_vectors(ctx: FockContext, qt: QTransform, width: float = PROBE_WIDTH, order: int = 60) -> np.ndarray:
    """(G, dim) truncated Fock coefficients of the bumps prod_j exp(-(q_j - a_j)^2 / 2 width^2),
    one per grid node a; computed by high-order Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite.hermgauss(order)
    q, w = np.sqrt(2) * x, w / np.sqrt(np.pi)
    he = _hermite_e(ctx.n_max, q)
    occ = ctx.occupations()
    out = np.ones((len(qt.nodes), ctx.dim), complex)
    for j in range(ctx.K):
        rho = np.exp(-(q[None, :] - qt.nodes[:, j, None]) ** 2 / (2 * width ** 2))
        cj = rho @ (he * w).T  # (G, n_max + 1)
        out *= cj[:, occ[:, j]]
    if qt.variant == "conjugate_field":
        out *= (1j) ** occ.sum(axis=1)[None, :]
    return out


def cone_check(psi: np.ndarray, qt: QTransform, ctx: FockContext | None = None, slack: float = 1e-10,
               mode: str = "samples", width: float = PROBE_WIDTH) -> dict:
    """Membership of psi in the positive cone, by grid samples or by pairing with probes."""
    psi = np.asarray(psi, complex)
    if mode == "dual":
        if ctx is None:
            raise ValueError("dual mode needs the context")
        vals = probe_vectors(ctx, qt, width).conj() @ psi
        mn = float(vals.real.min())
        return {"in_cone": mn >= -slack * np.linalg.norm(psi), "strict": mn > 0, "min_value": mn,
                "completely_real": bool(np.abs(vals.imag).max() <= 1e-9 * max(1.0, np.abs(vals).max()))}
    if qt.variant == "conjugate_field" and ctx is not None and not is_completely_real(ctx, psi):
        vals = qt.evaluate(psi).real
        return {"in_cone": False, "strict": False, "min_value": float(vals.min()), "completely_real": False,
                "hint": "not completely real; split the real part as psi_+ - psi_- with psi_+- = max(+-f, 0)"}
    vals = qt.evaluate(psi)
    if np.abs(vals.imag).max() > 1e-9 * max(1.0, np.abs(vals).max()):
        return {"in_cone": False, "strict": False, "min_value": float(vals.real.min()), "completely_real": False}
    mn = float(vals.real.min())
    return {"in_cone": mn >= -slack * np.linalg.norm(psi), "strict": mn > 0, "min_value": mn,
            "completely_real": True}


def factor_A(ctx: FockContext, s: float, f) -> np.ndarray:
    """A_s[f] = sum_n (i^n / n!) a^dagger(f)^n exp(-s dGamma(omega)); the series ends at n_max."""
    if s <= 0:
        raise ValueError("need s > 0")
    ad = creation_matrix(ctx, f)
    term = np.eye(ctx.dim, dtype=complex)
    S = term.copy()
    for n in range(1, ctx.n_max + 1):
        term = term @ ad * (1j / n)
        S += term
    return S * np.exp(-s * number_diagonal(ctx, ctx.omega))[None, :]


def weyl_vector_residual(ctx: FockContext, s: float, f, g) -> dict:
    """A_s[f]^* W(g)Omega against exp(-|g|^2/2 + |e^{-s omega} g|^2/2 - i<f,g>) W(e^{-s omega} g)Omega,
    both taken on the truncated space from the projected coherent vectors."""
    from .fock import coherent_state
    f = np.asarray(f, complex)
    g = np.asarray(g, complex)
    A = factor_A(ctx, s, f)
    lhs = A.conj().T @ coherent_state(ctx, g)
    gs = np.exp(-s * ctx.omega) * g
    pref = np.exp(-0.5 * np.vdot(g, g).real + 0.5 * np.vdot(gs, gs).real - 1j * np.vdot(f, g))
    rhs = pref * coherent_state(ctx, gs)
    top = ctx.total_number() == ctx.n_max
    return {"residual": float(np.linalg.norm(lhs - rhs)),
            "projection_defect": float(np.linalg.norm(coherent_state(ctx, g)[top]))}


def cone_generator(ctx: FockContext, qt: QTransform, rng: np.random.Generator, kind: str = "grid") -> np.ndarray:
    """Random cone element.

    ``grid``: the representable vector with positive random grid samples.
    ``probe``: a positive combination of probe bumps (truncated).
    """
    vals = np.abs(rng.normal(size=len(qt.weights))) + 0.05
    if kind == "probe":
        return vals @ probe_vectors(ctx, qt)
    return qt.V.conj().T @ (np.sqrt(qt.weights) * vals)


def probe_matrix(A: np.ndarray, probes: np.ndarray) -> np.ndarray:
    """<p_g, A p_h> for all probe pairs."""
    return probes.conj() @ A @ probes.T


def kernel_grid_oracle(ctx: FockContext, c: CoefficientVector, V: PotentialSpec, grid: LatticeGrid, t: float,
                       x: float, y: float, qt: QTransform, width: float = PROBE_WIDTH) -> np.ndarray:
    """Probe matrix of the lattice block e^{-tH}(x, y) / h^nu."""
    H = lattice_hamiltonian(ctx, c, V, grid)
    E = spectral(H)(t)
    i, j = grid.index_of(np.atleast_1d(x)), grid.index_of(np.atleast_1d(y))
    d = ctx.dim
    blk = E[i * d:(i + 1) * d, j * d:(j + 1) * d] / grid.h ** grid.nu
    return probe_matrix(blk, probe_vectors(ctx, qt, width))


def kernel_grid_mc(ctx: FockContext, c: CoefficientVector, V: PotentialSpec | None, t: float, x, y, N: int,
                   seed: int, qt: QTransform, steps: int = 200, width: float = PROBE_WIDTH):
    """Probe matrix of T_t^V(x, y) from bridges; returns (mean, complex SE)."""
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    paths = sample_paths("bridge", y, TimeGrid(t, steps), N, seed, y=x)
    W = evolve(ctx, c, V, paths, track_norm=False).W
    p = float(heat_kernel(t, x, y, len(x)))
    P = probe_vectors(ctx, qt, width)
    G = p * np.einsum("gn,pnm,hm->pgh", P.conj(), W, P, optimize=True)
    mean = G.mean(axis=0)
    se = np.sqrt(G.real.var(axis=0, ddof=1) + G.imag.var(axis=0, ddof=1)) / np.sqrt(N)
    return mean, se


def _coupling_kind(c: CoefficientVector, xs) -> str:
    xs = np.asarray(xs, float).reshape(-1, c.nu)
    hasF = bool(np.any(c.F(xs)))
    hasG = bool(np.any(c.G(xs)))
    if hasF and hasG:
        return "mixed"
    return "nelson" if hasF else "field"


def kernel_positivity_suite(ctx: FockContext, c: CoefficientVector, V: PotentialSpec, grid: LatticeGrid,
                            t: float, x, y, N: int, seed: int, steps: int = 200,
                            width: float = PROBE_WIDTH) -> dict:
    """Positivity improvement of T_t^V(x, y) on the Q-grid (scalar case).

    The Nelson variant (G = 0) uses the field cone, the minimal-coupling
    variant (F = 0) the conjugate-field cone.  Mixed couplings are refused.
    """
    if ctx.L != 1:
        raise ValueError("positivity suite needs L = 1")
    kind = _coupling_kind(c, grid.nodes())
    if kind == "mixed":
        return {"status": "SKIP", "reason": "both G and F nonzero; positivity is covered only for G = 0 or F = 0"}
    qt = q_transform(ctx, "field" if kind == "nelson" else "conjugate_field")
    ora = kernel_grid_oracle(ctx, c, V, grid, t, x, y, qt, width)
    mc, se = kernel_grid_mc(ctx, c, V, t, x, y, N, seed, qt, steps, width)
    H = lattice_hamiltonian(ctx, c, V, grid)
    E, psi, gap = ground_state(H)
    d = ctx.dim
    i, j = grid.index_of(np.atleast_1d(x)), grid.index_of(np.atleast_1d(y))
    raw = qt.grid_operator(spectral(H)(t)[i * d:(i + 1) * d, j * d:(j + 1) * d] / grid.h ** grid.nu)
    gs_vals = psi.reshape(-1, ctx.dim) @ probe_vectors(ctx, qt, width).conj().T
    oracle_ok = bool(np.all(ora.real > 0) and np.abs(ora.imag).max() <= 1e-9 * np.abs(ora).max())
    mc_ok = bool(np.all(mc.real > 3 * se))
    gs_ok = bool(np.all(gs_vals.real > 0) and np.abs(gs_vals.imag).max() <= 1e-9 and gap > 1e-6)
    return {"variant": qt.variant, "oracle_min": float(ora.real.min()), "raw_grid_min": float(raw.real.min()),
            "oracle_max_imag": float(np.abs(ora.imag).max()),
            "mc_min_z": float((mc.real / se).min()), "mc_min": float(mc.real.min()),
            "ground_energy": E, "gap": gap, "ground_min": float(gs_vals.real.min()),
            "oracle_positive": oracle_ok, "mc_positive": mc_ok, "ground_positive": gs_ok,
            "status": "PASS" if (oracle_ok and mc_ok and gs_ok) else "FAIL"}
