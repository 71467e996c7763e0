"""Coefficient vectors, spin algebra, fiber operators and the lattice Hamiltonian."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .fock import (FockContext, FockOperator, field_matrix,
                   number_diagonal)

PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


@dataclass(frozen=True)
class SpinAlgebra:
    sigma: np.ndarray  # (S, L, L)

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=complex)
        if s.ndim != 3 or s.shape[1] != s.shape[2]:
            raise ValueError("sigma must have shape (S, L, L)")
        if np.abs(s - s.conj().transpose(0, 2, 1)).max(initial=0) > 1e-12:
            raise ValueError("spin matrices must be Hermitian")

    @property
    def S(self) -> int:
        return self.sigma.shape[0]

    @property
    def L(self) -> int:
        return self.sigma.shape[1]

    @classmethod
    def scalar(cls, S: int = 1) -> "SpinAlgebra":
        return cls(np.ones((S, 1, 1), dtype=complex))

    @classmethod
    def pauli(cls, electrons: int = 1) -> "SpinAlgebra":
        L = 2 ** electrons
        mats = []
        for ell in range(electrons):
            for j in range(3):
                m = np.eye(1)
                for k in range(electrons):
                    m = np.kron(m, PAULI[j] if k == ell else np.eye(2))
                mats.append(m)
        return cls(np.array(mats, dtype=complex).reshape(3 * electrons, L, L))


def _zero_G(K, nu):
    return lambda x: np.zeros(np.shape(x)[:-1] + (K, nu), dtype=complex)


@dataclass(frozen=True)
class CoefficientVector:
    """x -> (G_x, q_x, F_x) on K discrete modes.

    The callables are vectorized: for x of shape (..., nu) they return arrays
    of shape (..., K, nu), (..., K) and (..., K, S).  ``conj_perm`` and
    ``conj_sign`` encode the conjugation (C f)_j = sign_j * conj(f_{perm_j}).
    ``profile`` optionally records a single real profile s(x) with
    G_x = s(x) g, which lets the flow diagonalize phi(g) once.
    """
    omega: np.ndarray
    nu: int
    G: Callable
    q: Callable
    F: Callable
    spin: SpinAlgebra
    conj_perm: np.ndarray | None = None
    conj_sign: np.ndarray | None = None
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def K(self) -> int:
        return len(self.omega)

    @property
    def L(self) -> int:
        return self.spin.L

    def conjugate(self, f: np.ndarray) -> np.ndarray:
        """Apply C along the mode axis (axis -2 for G/F arrays, -1 for q)."""
        perm = np.arange(self.K) if self.conj_perm is None else self.conj_perm
        sign = np.ones(self.K) if self.conj_sign is None else self.conj_sign
        return sign * np.conj(f[perm])

    def scaled(self, s: float, label: str | None = None) -> "CoefficientVector":
        G, q, F = self.G, self.q, self.F
        return CoefficientVector(self.omega, self.nu, lambda x: s * G(x), lambda x: s * q(x),
                                 lambda x: s * F(x), self.spin, self.conj_perm, self.conj_sign,
                                 label or f"{s}*{self.label}", dict(self.meta))

    def is_c_real(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, float).reshape(self.nu)
        G, F, q = self.G(x), self.F(x), self.q(x)
        ok = all(np.abs(self.conjugate(G[:, a]) - G[:, a]).max() <= tol for a in range(self.nu))
        ok &= all(np.abs(self.conjugate(F[:, s]) - F[:, s]).max() <= tol for s in range(F.shape[1]))
        return bool(ok and np.abs(self.conjugate(q) - q).max() <= tol)


def zero_coupling(ctx: FockContext, nu: int = 1, spin: SpinAlgebra | None = None) -> CoefficientVector:
    spin = spin or SpinAlgebra.scalar()
    K, S = ctx.K, spin.S
    return CoefficientVector(np.asarray(ctx.omega), nu, _zero_G(K, nu),
                             lambda x: np.zeros(np.shape(x)[:-1] + (K,), dtype=complex),
                             lambda x: np.zeros(np.shape(x)[:-1] + (K, S), dtype=complex),
                             spin, label="zero", meta={"zero": True})


def profile_coupling(omega, g, f=None, a_G: float = 0.5, a_F: float = 0.3, k: float = 1.0,
                     spin: SpinAlgebra | None = None, with_q: bool = True, label: str = "profile"):
    """nu = 1 coupling G_x = g (1 + a_G cos kx), F_x = f (1 + a_F sin kx).

    Real g, f give C-real coefficients for complex conjugation.  q is the
    exact derivative of G (or zero when ``with_q`` is false).
    """
    omega = np.asarray(omega, float)
    K = len(omega)
    g = np.asarray(g, complex).reshape(K)
    spin = spin or SpinAlgebra.scalar()
    S = spin.S
    f = np.zeros((K, S), complex) if f is None else np.asarray(f, complex).reshape(K, S)

    def s_G(x):
        return 1 + a_G * np.cos(k * x[..., 0])

    def G(x):
        return (s_G(x)[..., None] * g)[..., None]

    def q(x):
        if not with_q:
            return np.zeros(np.shape(x)[:-1] + (K,), complex)
        return (-a_G * k * np.sin(k * x[..., 0]))[..., None] * g

    def F(x):
        return (1 + a_F * np.sin(k * x[..., 0]))[..., None, None] * f

    return CoefficientVector(omega, 1, G, q, F, spin, label=label,
                             meta={"profile_g": g, "profile_s": s_G, "a_G": a_G, "a_F": a_F, "k": k})


def from_functions(omega, nu: int, G: Callable, F: Callable | None = None, q: Callable | None = None,
                   spin: SpinAlgebra | None = None, h_div: float = 1e-3, label: str = "custom"):
    """Coefficient vector from vectorized callables; q defaults to a central
    finite-difference divergence of G with step ``h_div``."""
    omega = np.asarray(omega, float)
    K = len(omega)
    spin = spin or SpinAlgebra.scalar()
    if F is None:
        S = spin.S
        F = lambda x: np.zeros(np.shape(x)[:-1] + (K, S), complex)
    if q is None:
        def q(x):
            x = np.asarray(x, float)
            out = np.zeros(x.shape[:-1] + (K,), complex)
            for a in range(nu):
                e = np.zeros(nu)
                e[a] = h_div
                out += (G(x + e)[..., a] - G(x - e)[..., a]) / (2 * h_div)
            return out
    return CoefficientVector(omega, nu, G, q, F, spin, label=label)


def qed_coupling_preset(ctx: FockContext, kgrid, kweights, chi: Callable, electrons: int = 1,
                        e_axis=(0.0, 0.0, 1.0), spin: bool = True, require_symmetric: bool = True):
    """Discretized minimal-coupling QED coefficients on a finite k-grid.

    Modes are the pairs (k, lambda), ordered k-major.  Quadrature weights are
    folded into amplitudes as sqrt(w_k), so mode sums reproduce the k-integrals.
    """
    kgrid = np.asarray(kgrid, float).reshape(-1, 3)
    w = np.asarray(kweights, float).reshape(len(kgrid))
    M = len(kgrid)
    if ctx.K != 2 * M:
        raise ValueError(f"context has K={ctx.K} modes but the grid needs {2 * M}")
    om_k = np.linalg.norm(kgrid, axis=1)
    if np.any(om_k <= 0):
        raise ValueError("k = 0 is not allowed (omega must be positive)")
    omega = np.repeat(om_k, 2)
    if not np.allclose(omega, ctx.omega):
        raise ValueError("context frequencies must equal |k| repeated per polarization")
    perm = np.full(M, -1)
    for i, kv in enumerate(kgrid):
        d = np.linalg.norm(kgrid + kv, axis=1)
        j = int(np.argmin(d))
        if d[j] < 1e-12:
            perm[i] = j
    if require_symmetric and np.any(perm < 0):
        raise ValueError("k-grid is not symmetric under k -> -k; C-reality cannot hold")
    e = np.asarray(e_axis, float)
    ek = np.cross(e, kgrid)
    if np.any(np.linalg.norm(ek, axis=1) < 1e-12):
        raise ValueError("reference axis e is parallel to a grid vector")
    pol0 = ek / np.linalg.norm(ek, axis=1)[:, None]
    pol1 = np.cross(kgrid / om_k[:, None], pol0)
    pol = np.stack([pol0, pol1], axis=1).reshape(2 * M, 3)  # (K, 3)
    amp = (2 * np.pi) ** -1.5 * (2 * om_k) ** -0.5 * np.array([chi(k) for k in kgrid]) * np.sqrt(w)
    amp = np.repeat(amp, 2)
    kk = np.repeat(kgrid, 2, axis=0)  # (K, 3)
    nu = 3 * electrons
    sp = SpinAlgebra.pauli(electrons) if spin else SpinAlgebra.scalar(3 * electrons)

    def G1(x1):  # x1 (..., 3) -> (..., K, 3)
        phase = np.exp(-1j * x1 @ kk.T)
        return (phase * amp)[..., None] * pol

    def G(x):
        x = np.asarray(x, float)
        return np.concatenate([G1(x[..., 3 * l:3 * l + 3]) for l in range(electrons)], axis=-1)

    def F(x):
        x = np.asarray(x, float)
        if not spin:
            return np.zeros(x.shape[:-1] + (2 * M, 3 * electrons), complex)
        parts = [-0.5j * np.cross(kk, G1(x[..., 3 * l:3 * l + 3])) for l in range(electrons)]
        return np.concatenate(parts, axis=-1)

    q = lambda x: np.zeros(np.shape(x)[:-1] + (2 * M,), complex)
    cperm = np.empty(2 * M, int)
    cperm[0::2] = 2 * np.maximum(perm, 0)
    cperm[1::2] = 2 * np.maximum(perm, 0) + 1
    csign = np.tile([-1.0, 1.0], M)  # (-1)^(1 + lambda)
    return CoefficientVector(omega, nu, G, q, F, sp, cperm, csign, label="qed",
                             meta={"kgrid": kgrid, "pol": pol})


# ---- potentials ------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    V: Callable
    tag: str = "bounded-continuous"
    singular_sites: tuple = ()
    bound: float | None = None
    label: str = ""

    def __call__(self, x):
        return self.V(np.asarray(x, float))

    def lattice_values(self, nodes: np.ndarray, h: float) -> np.ndarray:
        """Values on grid nodes with Coulomb sites clamped inside radius h/2."""
        nodes = np.asarray(nodes, float)
        vals = np.array(self.V(nodes), dtype=float)
        for R in self.singular_sites:
            R = np.asarray(R, float)
            d = np.linalg.norm(nodes - R, axis=-1)
            near = d < h / 2
            if np.any(near):
                probe = R.copy()
                probe[0] += h / 2
                vals[near] = self.V(probe[None, :])[0]
        return vals


def zero_potential(nu: int = 1) -> PotentialSpec:
    return PotentialSpec(lambda x: np.zeros(np.shape(x)[:-1]), bound=0.0, label="zero")


def constant_potential(v: float) -> PotentialSpec:
    return PotentialSpec(lambda x: np.full(np.shape(x)[:-1], float(v)), bound=abs(v), label=f"const{v}")


def cosine_potential(v0: float = 0.3, v1: float = 0.2, k: float = 1.0) -> PotentialSpec:
    return PotentialSpec(lambda x: v0 + v1 * np.cos(k * x[..., 0]), bound=abs(v0) + abs(v1),
                         label="cosine")


def harmonic_potential(w2: float = 1.0) -> PotentialSpec:
    return PotentialSpec(lambda x: 0.5 * w2 * np.sum(x ** 2, axis=-1), tag="confining", label="harmonic")


def coulomb_potential(Z: float = 1.0, sites=((0.0, 0.0, 0.0),), clamp: float = 0.0) -> PotentialSpec:
    """-Z sum_R 1/|x - R|; with clamp > 0 the distance is floored at ``clamp``."""
    sites = tuple(tuple(map(float, s)) for s in sites)
    arr = np.array(sites)

    def V(x):
        x = np.asarray(x, float)
        d = np.linalg.norm(x[..., None, :] - arr, axis=-1)
        if clamp > 0:
            d = np.maximum(d, clamp)
        return -Z * np.sum(1.0 / d, axis=-1)

    return PotentialSpec(V, tag="bounded-continuous" if clamp > 0 else "kato-coulomb",
                         singular_sites=() if clamp > 0 else sites,
                         bound=Z * len(sites) / clamp if clamp > 0 else None,
                         label=f"coulomb(Z={Z},clamp={clamp})")


# ---- fiber operators ---------------------------------------------------------

def _point(c: CoefficientVector, x) -> np.ndarray:
    return np.asarray(x, float).reshape(c.nu)


def _check(ctx: FockContext, c: CoefficientVector):
    if ctx.K != c.K or ctx.L != c.L:
        raise ValueError(f"context (K={ctx.K}, L={ctx.L}) does not match coupling (K={c.K}, L={c.L})")


def spin_field(ctx: FockContext, c: CoefficientVector, Fx: np.ndarray) -> np.ndarray:
    """sigma . phi(F) = sum_s sigma_s (x) phi(F_s) for F of shape (K, S)."""
    nb = ctx.nb
    base = FockContext(ctx.K, ctx.omega, ctx.n_max, 1, ctx.basis, ctx.index)
    out = np.zeros((ctx.dim, ctx.dim), complex)
    for s in range(c.spin.S):
        out += np.kron(c.spin.sigma[s], field_matrix(base, Fx[:, s]))
    assert out.shape == (ctx.L * nb, ctx.L * nb)
    return out


def fiber_parts(ctx: FockContext, c: CoefficientVector, x):
    """(phi(G_x) per direction, phi(q_x), sigma.phi(F_x), dGamma(omega) diagonal)."""
    _check(ctx, c)
    x = _point(c, x)
    G, q, F = c.G(x), c.q(x), c.F(x)
    phiG = np.stack([field_matrix(ctx, G[:, a]) for a in range(c.nu)])
    return phiG, field_matrix(ctx, q), spin_field(ctx, c, F), number_diagonal(ctx, ctx.omega)


def fiber_hamiltonian(ctx: FockContext, c: CoefficientVector, x) -> FockOperator:
    phiG, phiq, sF, dg = fiber_parts(ctx, c, x)
    H = 0.5 * sum(p @ p for p in phiG) - 0.5j * phiq - sF + np.diag(dg)
    herm = np.abs(c.q(_point(c, x))).max(initial=0) == 0
    return FockOperator(H, hermitian=bool(herm))


def mho_matrix(c: CoefficientVector, Fx: np.ndarray) -> np.ndarray:
    """M_ij = || omega^{-1/2} (sigma . F)_ij || for F of shape (K, S)."""
    sF = np.einsum("sij,ks->ijk", c.spin.sigma, Fx)
    return np.sqrt(np.sum(np.abs(sF) ** 2 / c.omega, axis=-1))


def mho(c: CoefficientVector, x) -> float:
    M = mho_matrix(c, c.F(_point(c, x)))
    return float(np.linalg.norm(M, 2) ** 2)


def mho_batch(c: CoefficientVector, X: np.ndarray) -> np.ndarray:
    """mho at every point of X (..., nu)."""
    X = np.asarray(X, float)
    F = c.F(X)  # (..., K, S)
    if c.L == 1:
        s = np.sum(c.spin.sigma[:, 0, 0] * F, axis=-1)
        return np.sum(np.abs(s) ** 2 / c.omega, axis=-1)
    sF = np.einsum("sij,...ks->...ijk", c.spin.sigma, F)
    M = np.sqrt(np.sum(np.abs(sF) ** 2 / c.omega, axis=-1))
    return np.linalg.norm(M, 2, axis=(-2, -1)) ** 2


def mho_sup(c: CoefficientVector, xgrid) -> float:
    return float(np.max(mho_batch(c, np.asarray(xgrid, float).reshape(-1, c.nu))))


# ---- coupling norms ------------------------------------------------------------

def _components(c: CoefficientVector, x) -> dict:
    x = _point(c, x)
    return {"G": c.G(x), "q": c.q(x)[:, None], "F": c.F(x)}


def _weighted(weight: np.ndarray, parts) -> float:
    return float(np.sqrt(sum(np.sum(weight[:, None] * np.abs(p) ** 2) for p in parts)))


def norm_weight(omega, kind: str, **kw) -> np.ndarray:
    """Per-mode multiplier w such that the norm is ||w^{1/2} v||."""
    om = np.asarray(omega, float)
    vp = np.asarray(kw.get("varpi", np.zeros_like(om)), float)
    ka = np.asarray(kw.get("kappa", np.zeros_like(om)), float)
    if kind == "k":
        return 1 / om + om ** 2
    if kind == "circle_poly":
        a, ca = kw["alpha"], kw.get("c_alpha", 1.0)
        return ca ** 2 * (vp + ka) * (1 + vp + ka) ** (2 * abs(a) - 1)
    if kind == "circle_exp":
        d, cc, t0 = kw["delta"], kw.get("c", 1.0), kw["t0"]
        u = t0 * vp / 2 + ka
        return cc ** 2 * abs(d) * np.maximum(u, u ** 2 / om) * np.exp(2 * abs(d) * u)
    if kind == "star1":
        a, ca = kw["alpha"], kw.get("c_alpha", 1.0)
        return ca ** 2 * ka * (1 + ka) ** (2 * a - 1)
    if kind == "star2":
        a, ca = kw["alpha"], kw.get("c_alpha", 1.0)
        return ca ** 2 * vp * (1 + vp) ** (2 * a - 1)
    if kind == "star3":
        d, cc = kw["delta"], kw.get("c", 1.0)
        return cc ** 2 * d * np.maximum(ka, ka ** 2 / om) * np.exp(2 * d * ka)
    if kind == "star4":
        d, cc, ts = kw["delta"], kw.get("c", 1.0), kw["t_star"]
        return (cc * ts) ** 2 * d * vp * np.exp(d * ts * vp)
    raise ValueError(f"unknown norm kind {kind!r}")


def coupling_norm(c: CoefficientVector, x, kind: str, /, parts=("G", "q", "F"), **kw) -> float:
    """Norm of the coefficient vector at x.  Star kinds return ||.||_k + ||.||_**."""
    comp = _components(c, x)
    sel = [comp[p] for p in parts]
    if kind.startswith("star"):
        return _weighted(norm_weight(c.omega, "k"), sel) + _weighted(norm_weight(c.omega, kind, **kw), sel)
    return _weighted(norm_weight(c.omega, kind, **kw), sel)


def coupling_norm_sup(c: CoefficientVector, xgrid, kind: str, /, parts=("G", "q", "F"), **kw) -> float:
    return max(coupling_norm(c, x, kind, parts, **kw) for x in np.asarray(xgrid, float).reshape(-1, c.nu))


def table1_hypothesis(c: CoefficientVector, xgrid, line: int, **kw) -> tuple[bool, str]:
    """Check the additional coupling hypothesis attached to a weight line."""
    if line in (1, 2):
        return True, "finite on a finite mode set"
    gsup = max(_weighted(norm_weight(c.omega, f"star{line}", **kw), [_components(c, x)["G"]])
               for x in np.asarray(xgrid, float).reshape(-1, c.nu))
    return gsup <= 1 / 9, f"sup ||G||_** = {gsup:.4g} (needs <= 1/9)"


# ---- lattice --------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeGrid:
    """Uniform tensor grid; ``axes`` holds node arrays per direction."""
    axes: tuple
    boundary: str = "dirichlet"

    @classmethod
    def uniform(cls, lo, hi, n, nu: int = 1, boundary: str = "dirichlet") -> "LatticeGrid":
        return cls(tuple(np.linspace(lo, hi, n) for _ in range(nu)), boundary)

    @property
    def nu(self) -> int:
        return len(self.axes)

    @property
    def h(self) -> float:
        a = self.axes[0]
        return float(a[1] - a[0]) if len(a) > 1 else 1.0

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def index_of(self, x) -> int:
        x = np.atleast_1d(np.asarray(x, float))
        idx = [int(round((x[a] - self.axes[a][0]) / self.h)) for a in range(self.nu)]
        if any(not 0 <= i < n for i, n in zip(idx, self.shape)):
            raise ValueError(f"point {x} is outside the grid")
        if np.abs(np.array([self.axes[a][i] for a, i in enumerate(idx)]) - x).max() > 1e-9:
            raise ValueError(f"point {x} is not a grid node")
        return int(np.ravel_multi_index(idx, self.shape))


def lattice_hamiltonian(ctx: FockContext, c: CoefficientVector, V: PotentialSpec, grid: LatticeGrid,
                        max_dim: int = 4000) -> np.ndarray:
    """Peierls-discretized H = 1/2 (-i grad - phi(G))^2 - sigma.phi(F) + dGamma(omega) + V.

    The forward hop x -> x + h e_a carries exp(-i h phi(G_mid)), which
    reproduces (k - A)^2 / 2 for a constant vector potential A.
    """
    _check(ctx, c)
    if grid.nu != c.nu:
        raise ValueError("grid dimension does not match coupling")
    d, n, h = ctx.dim, grid.size, grid.h
    if n * d > max_dim:
        raise ValueError(f"lattice dimension {n * d} exceeds cap {max_dim}")
    nodes = grid.nodes()
    H = np.zeros((n * d, n * d), complex)
    Vn = V.lattice_values(nodes, h)
    dg = number_diagonal(ctx, ctx.omega)
    Fall = c.F(nodes)
    kin = grid.nu / h ** 2 if n > 1 else 0.0
    for i in range(n):
        blk = np.diag(dg + Vn[i] + kin) - spin_field(ctx, c, Fall[i])
        H[i * d:(i + 1) * d, i * d:(i + 1) * d] = blk
    shape = grid.shape
    for a in range(grid.nu):
        for i in range(n):
            mi = list(np.unravel_index(i, shape))
            mi[a] += 1
            if mi[a] >= shape[a]:
                if grid.boundary != "periodic" or shape[a] == 1:
                    continue
                mi[a] = 0
                mid = nodes[i].copy()
                mid[a] += h / 2
            else:
                mid = 0.5 * (nodes[i] + nodes[int(np.ravel_multi_index(mi, shape))])
            j = int(np.ravel_multi_index(mi, shape))
            U = sla.expm(-1j * h * field_matrix(ctx, c.G(mid)[:, a]))
            H[i * d:(i + 1) * d, j * d:(j + 1) * d] += -U / (2 * h ** 2)
            H[j * d:(j + 1) * d, i * d:(i + 1) * d] += -U.conj().T / (2 * h ** 2)
    err = np.abs(H - H.conj().T).max()
    assert err <= 1e-12 * max(1.0, np.abs(H).max()), f"lattice Hamiltonian not Hermitian ({err})"
    return 0.5 * (H + H.conj().T)


def free_laplacian(grid: LatticeGrid) -> np.ndarray:
    """-1/2 Delta_h on the grid with the same boundary convention."""
    from .fock import build_context
    ctx = build_context(1, [1.0], 0)
    c = zero_coupling(ctx, grid.nu)
    return lattice_hamiltonian(ctx, c, zero_potential(grid.nu), grid).real
