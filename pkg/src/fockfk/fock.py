"""Truncated bosonic Fock space C^L (x) F_trunc and its elementary operators.

All operators are compressions P A P onto the span of occupation states with
total boson number at most ``n_max``.  The spin factor comes first in the
tensor product, so the index of (spin s, basis state b) is ``s * nb + b``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.linalg as sla


def graded_lex_basis(K: int, n_max: int) -> list[tuple[int, ...]]:
    """Occupation tuples ordered by total number, then descending lexicographically."""
    basis = []
    for n in range(n_max + 1):
        grade = [c for c in itertools.product(range(n, -1, -1), repeat=K) if sum(c) == n]
        basis.extend(grade)
    return basis


@dataclass(frozen=True)
class FockContext:
    K: int
    omega: np.ndarray
    n_max: int
    L: int = 1
    basis: tuple = field(default=(), compare=False)
    index: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def nb(self) -> int:
        return len(self.basis)

    @property
    def dim(self) -> int:
        return self.L * len(self.basis)

    def occupations(self) -> np.ndarray:
        """(nb, K) integer array of occupation numbers."""
        return np.array(self.basis, dtype=int).reshape(len(self.basis), self.K)

    def total_number(self) -> np.ndarray:
        """Total boson number of every full-space basis index (length dim)."""
        return np.tile(self.occupations().sum(axis=1), self.L)

    def safe_mask(self, margin: int = 1) -> np.ndarray:
        """Indices whose boson number is at most n_max - margin."""
        return self.total_number() <= self.n_max - margin

    def vacuum(self, spin: int = 0) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[spin * self.nb] = 1.0
        return v

    def state(self, occ, spin: int = 0) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[spin * self.nb + self.index[tuple(occ)]] = 1.0
        return v


def build_context(K: int, omega, n_max: int, L: int = 1) -> FockContext:
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if K < 1 or n_max < 0 or L < 1:
        raise ValueError(f"need K>=1, n_max>=0, L>=1; got K={K}, n_max={n_max}, L={L}")
    if omega.shape != (K,):
        raise ValueError(f"expected {K} frequencies, got {omega.shape}")
    if np.any(omega <= 0) or not np.all(np.isfinite(omega)):
        raise ValueError(f"frequencies must be positive and finite, got {omega}")
    basis = tuple(graded_lex_basis(K, n_max))
    assert len(basis) == comb(K + n_max, K)
    omega.setflags(write=False)
    return FockContext(K, omega, n_max, L, basis, {b: i for i, b in enumerate(basis)})


@dataclass(frozen=True)
class FockOperator:
    matrix: np.ndarray
    hermitian: bool = False
    diagonal: bool = False

    def __post_init__(self):
        m = self.matrix
        if self.hermitian:
            scale = max(1.0, float(np.abs(m).max(initial=0.0)))
            if np.abs(m - m.conj().T).max(initial=0.0) > 1e-12 * scale:
                raise ValueError("matrix flagged Hermitian is not Hermitian")
        if self.diagonal and np.count_nonzero(m - np.diag(np.diag(m))):
            raise ValueError("matrix flagged diagonal has off-diagonal entries")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def H(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T, self.hermitian, self.diagonal)

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            return FockOperator(self.matrix @ other.matrix)
        return self.matrix @ other

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def to_json(self, ctx: FockContext | None = None, cutoff: float = 1e-15) -> str:
        return json.dumps(operator_to_dict(self.matrix, ctx, cutoff))


def operator_to_dict(M: np.ndarray, ctx: FockContext | None = None, cutoff: float = 1e-15) -> dict:
    rows, cols = np.nonzero(np.abs(M) >= cutoff)
    entries = [[int(r), int(c), float(M[r, c].real), float(M[r, c].imag)] for r, c in zip(rows, cols)]
    basis = None
    if ctx is not None:
        basis = [[s, list(b)] for s in range(ctx.L) for b in ctx.basis]
    return {"dim": int(M.shape[0]), "basis": basis, "entries": entries}


def operator_from_dict(d: dict) -> np.ndarray:
    M = np.zeros((d["dim"], d["dim"]), dtype=complex)
    for r, c, re, im in d["entries"]:
        M[r, c] = re + 1j * im
    return M


# ---- elementary matrices -------------------------------------------------

def _mode_annihilators(ctx: FockContext) -> np.ndarray:
    """(K, nb, nb) annihilation matrices a_j on the boson factor."""
    occ = ctx.occupations()
    out = np.zeros((ctx.K, ctx.nb, ctx.nb))
    for col, n in enumerate(occ):
        for j in range(ctx.K):
            if n[j] > 0:
                m = n.copy()
                m[j] -= 1
                out[j, ctx.index[tuple(m)], col] = np.sqrt(n[j])
    return out


_cache: dict = {}


def annihilators(ctx: FockContext) -> np.ndarray:
    """(K, dim, dim) matrices id_L (x) a_j, cached per context."""
    key = (ctx.K, ctx.n_max, ctx.L)
    if key not in _cache:
        a = _mode_annihilators(ctx)
        full = np.stack([np.kron(np.eye(ctx.L), a[j]) for j in range(ctx.K)]).astype(complex)
        full.setflags(write=False)
        _cache[key] = full
    return _cache[key]


def _as_modes(ctx: FockContext, f) -> np.ndarray:
    f = np.asarray(f, dtype=complex).reshape(-1)
    if f.shape != (ctx.K,):
        raise ValueError(f"mode vector of length {f.size} does not match K={ctx.K}")
    if not np.all(np.isfinite(f)):
        raise ValueError("mode vector has non-finite entries")
    return f


def annihilation_matrix(ctx: FockContext, f) -> np.ndarray:
    """a(f) = sum_j conj(f_j) a_j, antilinear in f."""
    return np.tensordot(np.conj(_as_modes(ctx, f)), annihilators(ctx), axes=1)


def creation_matrix(ctx: FockContext, f) -> np.ndarray:
    return annihilation_matrix(ctx, f).conj().T


def field_matrix(ctx: FockContext, f) -> np.ndarray:
    a = annihilation_matrix(ctx, f)
    return a + a.conj().T


def field_basis(ctx: FockContext) -> np.ndarray:
    """(2K, dim, dim): phi(e_j) for j<K and phi(i e_j) after, so that
    phi(f) = sum_j Re f_j B_j + Im f_j B_{K+j}."""
    a = annihilators(ctx)
    ad = a.conj().transpose(0, 2, 1)
    return np.concatenate([a + ad, 1j * ad - 1j * a])


def conjugate_field_matrix(ctx: FockContext, f) -> np.ndarray:
    return field_matrix(ctx, 1j * _as_modes(ctx, f))


def number_diagonal(ctx: FockContext, kappa) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=float).reshape(ctx.K)
    return np.tile(ctx.occupations() @ kappa, ctx.L)


def ladder(ctx: FockContext, f, kind: str) -> FockOperator:
    if kind == "annihilate":
        return FockOperator(annihilation_matrix(ctx, f))
    if kind == "create":
        return FockOperator(creation_matrix(ctx, f))
    if kind == "field":
        return FockOperator(field_matrix(ctx, f), hermitian=True)
    if kind == "conjugate_field":
        return FockOperator(conjugate_field_matrix(ctx, f), hermitian=True)
    raise ValueError(f"unknown ladder kind {kind!r}")


def weyl(ctx: FockContext, g) -> FockOperator:
    """W(g) = exp(-i varpi(g)), computed on the truncated space."""
    return FockOperator(sla.expm(-1j * conjugate_field_matrix(ctx, g)))


def second_quantize(ctx: FockContext, kappa) -> FockOperator:
    return FockOperator(np.diag(number_diagonal(ctx, kappa)).astype(complex), hermitian=True, diagonal=True)


def coherent_state(ctx: FockContext, g, spin: int = 0) -> np.ndarray:
    """Projection of the exact coherent vector W(g)Omega onto the truncated space."""
    g = _as_modes(ctx, g)
    occ = ctx.occupations()
    from scipy.special import factorial
    amp = np.prod(g[None, :] ** occ / np.sqrt(factorial(occ)), axis=1)
    v = np.zeros(ctx.dim, dtype=complex)
    v[spin * ctx.nb:(spin + 1) * ctx.nb] = np.exp(-0.5 * np.vdot(g, g).real) * amp
    return v


# ---- weights -------------------------------------------------------------

@dataclass(frozen=True)
class WeightSpec:
    """Polynomial (Theta) or exponential (Xi) weight.

    ``exponent`` is alpha for the polynomial kind and delta for the
    exponential kind.  ``varpi`` and ``kappa`` are per-mode nonnegative reals.
    """
    kind: str
    exponent: float
    varpi: tuple
    kappa: tuple
    eps: float = 0.0
    t0: float = 1.0
    t: float = 0.0

    def validate(self, omega=None):
        if self.kind == "polynomial":
            if abs(self.exponent) < 0.5:
                raise ValueError(f"polynomial weight needs |alpha| >= 1/2, got {self.exponent}")
        elif self.kind == "exponential":
            if not (0 < abs(self.exponent) <= 1):
                raise ValueError(f"exponential weight needs 0 < |delta| <= 1, got {self.exponent}")
        else:
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")
        if not 0 <= self.t <= self.t0:
            raise ValueError("t must lie in [0, t0]")
        vp, ka = np.asarray(self.varpi, float), np.asarray(self.kappa, float)
        if np.any(vp < 0) or np.any(ka < 0):
            raise ValueError("varpi and kappa must be nonnegative")
        if omega is not None and np.any(vp > np.asarray(omega) + 1e-15):
            raise ValueError("varpi must not exceed omega")

    def at(self, t: float) -> "WeightSpec":
        return WeightSpec(self.kind, self.exponent, self.varpi, self.kappa, self.eps, self.t0, t)


def tau(alpha: float, t: float, t0: float) -> float:
    return t / (2 * alpha) if alpha > 0 else (t - t0) / (2 * alpha)


def theta_diagonal(ctx: FockContext, alpha: float, varpi, kappa, eps: float, t: float, t0: float) -> np.ndarray:
    varpi = np.asarray(varpi, float)
    tau_t = tau(alpha, t, t0)
    v = tau_t * varpi + np.asarray(kappa, float)
    v_eps = v / (1 + eps * v)
    iota = 1.0 if np.any(varpi != 0) else 0.0
    base = 1 + iota * tau_t + number_diagonal(ctx, v_eps)
    return base ** alpha * (1 + eps * base) ** (-alpha)


def weight_diagonal(ctx: FockContext, spec: WeightSpec) -> np.ndarray:
    spec.validate(ctx.omega)
    if spec.kind == "polynomial":
        return theta_diagonal(ctx, spec.exponent, spec.varpi, spec.kappa, spec.eps, spec.t, spec.t0)
    d = spec.exponent
    s = spec.t if d > 0 else spec.t0 - spec.t
    return np.exp(d * theta_diagonal(ctx, 1.0, spec.varpi, spec.kappa, spec.eps, s, spec.t0))


def weight_operator(ctx: FockContext, spec: WeightSpec) -> FockOperator:
    return FockOperator(np.diag(weight_diagonal(ctx, spec)).astype(complex), hermitian=True, diagonal=True)


def embedding(small: FockContext, big: FockContext) -> np.ndarray:
    """Isometry from a smaller truncation into a larger one (same K, L)."""
    if small.K != big.K or small.L != big.L or small.n_max > big.n_max:
        raise ValueError("contexts are not nested")
    J = np.zeros((big.dim, small.dim))
    for s in range(small.L):
        for i, b in enumerate(small.basis):
            J[s * big.nb + big.index[b], s * small.nb + i] = 1.0
    return J
