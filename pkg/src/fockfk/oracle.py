"""Exact references on the lattice (x) truncated Fock space."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fock import FockContext, annihilators, number_diagonal
from .model import LatticeGrid


@dataclass
class SpectralExp:
    """Eigendecomposition of a Hermitian H, reusable for many times t."""
    evals: np.ndarray
    evecs: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        return (self.evecs * np.exp(-t * self.evals)) @ self.evecs.conj().T

    def apply(self, t: float, v: np.ndarray) -> np.ndarray:
        v2 = v.reshape(len(self.evals), -1)
        out = self.evecs @ (np.exp(-t * self.evals)[:, None] * (self.evecs.conj().T @ v2))
        return out.reshape(v.shape)


def spectral(H: np.ndarray, tol: float = 1e-10) -> SpectralExp:
    scale = max(1.0, float(np.abs(H).max()))
    if np.abs(H - H.conj().T).max() > tol * scale:
        raise ValueError("oracle needs a Hermitian matrix")
    w, U = np.linalg.eigh(0.5 * (H + H.conj().T))
    return SpectralExp(w, U)


def expm(H: np.ndarray, t: float, report: bool = False):
    """exp(-tH) for Hermitian H via eigendecomposition."""
    S = spectral(H)
    E = S(t)
    if report:
        resid = float(np.abs(E @ S(-t) - np.eye(len(H))).max())
        return E, resid
    return E


def ground_state(H: np.ndarray, gap_tol: float = 1e-10):
    """Lowest eigenpair (E, psi) and the spectral gap above it.

    The eigenvector is re-phased so that its largest-modulus entry is real
    and positive.
    """
    w, U = np.linalg.eigh(0.5 * (H + H.conj().T))
    psi = U[:, 0]
    k = int(np.argmax(np.abs(psi)))
    psi = psi * np.exp(-1j * np.angle(psi[k]))
    gap = float(w[1] - w[0]) if len(w) > 1 else np.inf
    if gap < gap_tol:
        warnings.warn(f"ground state looks degenerate (gap {gap:.3e})")
    return float(w[0]), psi, gap


def split_sites(psi: np.ndarray, d: int) -> np.ndarray:
    """Lattice vector (n*d,) -> (n, d)."""
    return psi.reshape(-1, d)


def decay_check(psi: np.ndarray, grid: LatticeGrid, ctx: FockContext, a: float, alpha: float = 0.0,
                edge_frac: float = 0.1) -> dict:
    """sup_x e^{a|x|} ||(1 + dGamma(omega))^alpha Psi(x)|| on the grid.

    The edge flag is raised when the maximizer lies within ``edge_frac`` of
    the grid extent from the boundary.
    """
    P = split_sites(psi, ctx.dim)
    nodes = grid.nodes()
    r = np.linalg.norm(nodes, axis=1)
    w = (1 + number_diagonal(ctx, ctx.omega)) ** alpha
    vals = np.exp(a * r) * np.linalg.norm(P * w, axis=1)
    i = int(np.argmax(vals))
    extent = max(float(np.max(np.abs(ax))) for ax in grid.axes)
    edge = bool(np.max(np.abs(nodes[i])) >= (1 - edge_frac) * extent)
    return {"sup": float(vals[i]), "argmax": nodes[i].tolist(), "edge_dominated": edge,
            "finite": bool(np.isfinite(vals[i]))}


def ionization_surrogate(H: np.ndarray, grid: LatticeGrid, d: int, R: float) -> float:
    """Lowest Rayleigh quotient over states supported outside radius R."""
    r = np.linalg.norm(grid.nodes(), axis=1)
    keep = np.repeat(r > R, d)
    if not np.any(keep):
        return np.inf
    return float(np.linalg.eigvalsh(H[np.ix_(keep, keep)])[0])


def lattice_annihilator(ctx: FockContext, n_sites: int, j: int) -> np.ndarray:
    return np.kron(np.eye(n_sites), annihilators(ctx)[j])


def ir_identity_residual(ctx: FockContext, H: np.ndarray, E: float, psi: np.ndarray, j: int,
                         n_sites: int) -> dict:
    """Residual of (H - E + omega_j) a_j Psi = [H - dGamma(omega), a_j] Psi.

    Restricted to lattice components with at most n_max - 1 bosons, where
    the truncated CCR are exact.
    """
    a = lattice_annihilator(ctx, n_sites, j)
    dG = np.kron(np.eye(n_sites), np.diag(number_diagonal(ctx, ctx.omega)))
    Hint = H - dG
    lhs = (H - E * np.eye(len(H)) + ctx.omega[j] * np.eye(len(H))) @ (a @ psi)
    rhs = (Hint @ a - a @ Hint) @ psi
    safe = np.tile(ctx.safe_mask(1), n_sites)
    diff = lhs - rhs
    return {"residual": float(np.linalg.norm(diff[safe])), "edge_residual": float(np.linalg.norm(diff[~safe])),
            "norm_a_psi": float(np.linalg.norm(a @ psi))}


def number_identity(ctx: FockContext, psi: np.ndarray, n_sites: int) -> tuple[float, float]:
    """(sum_j ||a_j Psi||^2, ||dGamma(1)^{1/2} Psi||^2)."""
    lhs = sum(np.linalg.norm(lattice_annihilator(ctx, n_sites, j) @ psi) ** 2 for j in range(ctx.K))
    N = np.tile(number_diagonal(ctx, np.ones(ctx.K)), n_sites)
    return float(lhs), float(np.sum(N * np.abs(psi) ** 2))
