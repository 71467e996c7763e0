"""Kato-class diagnostics: g_r seminorms, exponential path moments and the
form bound against the Laplacian."""
from __future__ import annotations

import numpy as np

from .model import LatticeGrid, PotentialSpec, free_laplacian
from .semigroup import monotone_table
from .stoch import TimeGrid, integrate_potential, sample_paths


def g_r(z, r: float, nu: int) -> np.ndarray:
    """Kato kernel: -ln|z| (nu = 2) or |z|^{2-nu} (nu > 2), cut off at |z| < r."""
    d = np.linalg.norm(np.atleast_2d(z), axis=-1)
    inside = (d < r) & (d > 0)
    out = np.zeros_like(d)
    if nu == 2:
        out[inside] = -np.log(d[inside])
    elif nu > 2:
        out[inside] = d[inside] ** (2.0 - nu)
    else:
        raise ValueError("the Kato kernel is defined for nu >= 2")
    return out


def _radial_weight(rho, nu):
    """g_r(rho) times the radial Jacobian rho^{nu-1}."""
    return -np.log(rho) * rho if nu == 2 else rho ** (2.0 - nu) * rho ** (nu - 1)


def _directions(nu: int, n_ang: int, axis=None):
    """Unit vectors and weights of a product rule on the sphere (weights sum to |S^{nu-1}|)."""
    if nu == 2:
        phi = 2 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
        return np.stack([np.cos(phi), np.sin(phi)], -1), np.full(n_ang, 2 * np.pi / n_ang)
    u, wu = np.polynomial.legendre.leggauss(n_ang)
    phi = 2 * np.pi * (np.arange(2 * n_ang) + 0.5) / (2 * n_ang)
    U, P = np.meshgrid(u, phi, indexing="ij")
    s = np.sqrt(1 - U ** 2)
    dirs = np.stack([s * np.cos(P), s * np.sin(P), U], -1).reshape(-1, 3)
    w = (wu[:, None] * np.full(2 * n_ang, np.pi / n_ang)).reshape(-1)
    if axis is not None and np.linalg.norm(axis) > 0:
        dirs = dirs @ _rotation_to(axis).T
    return dirs, w


def _rotation_to(a) -> np.ndarray:
    """Rotation taking e_3 to a / |a|."""
    a = np.asarray(a, float) / np.linalg.norm(a)
    e = np.array([0.0, 0.0, 1.0])
    v, c = np.cross(e, a), float(e @ a)
    if np.linalg.norm(v) < 1e-14:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1 + c)


def kato_integral(V, x, r: float, nu: int, n_rad: int = 64, n_ang: int = 48) -> float:
    """int_{|z|<r} g_r(z) |V(x - z)| dz by Gauss-Legendre in the radius.

    The radial interval is split at the distance to each singular site and the
    angular rule is aligned with the direction to the nearest one.
    """
    if nu not in (2, 3):
        raise ValueError("only nu = 2 and nu = 3 are supported")
    x = np.asarray(x, float).reshape(nu)
    sites = [np.asarray(R, float) for R in getattr(V, "singular_sites", ())]
    cuts = sorted({0.0, r, *[d for d in (np.linalg.norm(x - R) for R in sites) if 0 < d < r]})
    axis = None
    if sites and nu == 3:
        R = min(sites, key=lambda R: np.linalg.norm(x - R))
        axis = x - R if np.linalg.norm(x - R) > 0 else None
    dirs, wd = _directions(nu, n_ang, axis)
    t, wt = np.polynomial.legendre.leggauss(n_rad)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        rho = 0.5 * (b - a) * (t + 1) + a
        wr = 0.5 * (b - a) * wt * _radial_weight(rho, nu)
        pts = x - rho[:, None, None] * dirs[None, :, :]
        vals = np.abs(V(pts.reshape(-1, nu))).reshape(len(rho), len(wd))
        total += float(wr @ vals @ wd)
    return total


def kato_seminorm(V, r: float, nu: int, xgrid, **quad) -> float:
    """sup over the declared x-grid of int g_r(x - y) |V(y)| dy."""
    xgrid = np.atleast_2d(np.asarray(xgrid, float))
    return max(kato_integral(V, x, r, nu, **quad) for x in xgrid)


def kato_table(V, rs, nu: int, xgrid, **quad) -> dict:
    """Seminorm along decreasing r; passes when finite and strictly decreasing."""
    rs = sorted(rs, reverse=True)
    vals = [kato_seminorm(V, r, nu, xgrid, **quad) for r in rs]
    finite = bool(np.all(np.isfinite(vals)))
    dec = all(b < a for a, b in zip(vals, vals[1:])) or all(v == 0 for v in vals)
    return {"r": list(rs), "seminorm": vals, "finite": finite, "decreasing": dec, "pass": finite and dec}


def negative_part(V):
    return lambda x: np.maximum(-np.asarray(V(x), float), 0.0)


def _moment(V, z, t: float, p: float, N: int, seed: int, steps: int):
    paths = sample_paths("brownian", z, TimeGrid(t, steps), N, seed)
    I = integrate_potential(V, paths)
    vals = np.exp(p * I)
    return vals, I


def khasminskii_check(V, p: float, tgrid, N: int, seed: int, zgrid, steps: int = 100, small_times=None,
                      r2_min: float = 0.9) -> dict:
    """Exponential moments sup_z E[exp(p int_0^t V_-(B^z))] over a t-grid.

    ``V`` is the full potential; the moments use its negative part.  A
    log-linear fit in t gives c_fit.  The small-time table reports
    sup_z E|exp(-int_0^s V) - 1|^p along decreasing s.
    """
    Vm = negative_part(V)
    zgrid = np.atleast_2d(np.asarray(zgrid, float))
    tgrid = np.asarray(sorted(tgrid), float)
    sup, se, advisory = [], [], False
    for k, t in enumerate(tgrid):
        best = (-np.inf, 0.0)
        for j, z in enumerate(zgrid):
            vals, _ = _moment(Vm, z, t, p, N, seed + 7919 * k + 104729 * j, steps)
            m, s = float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(N))
            advisory |= s > m
            if m > best[0]:
                best = (m, s)
        sup.append(best[0])
        se.append(best[1])
    sup = np.array(sup)
    logm = np.log(sup)
    A = np.stack([np.ones_like(tgrid), tgrid], 1)
    coef, *_ = np.linalg.lstsq(A, logm, rcond=None)
    pred = A @ coef
    ss = float(np.sum((logm - logm.mean()) ** 2))
    r2 = 1.0 - float(np.sum((logm - pred) ** 2)) / ss if ss > 0 else 1.0
    c_env = float(max(0.0, np.max(np.log(sup / 2) / tgrid)))
    out = {"t": tgrid.tolist(), "moment": sup.tolist(), "se": se, "c_fit": float(coef[1]),
           "intercept": float(coef[0]), "r2": r2, "c_envelope": c_env,
           "finite": bool(np.all(np.isfinite(sup))), "advisory": "increase N" if advisory else None}
    out["envelope_pass"] = bool(out["finite"] and r2 >= r2_min)
    if small_times is not None:
        vals, errs = [], []
        for k, s in enumerate(sorted(small_times, reverse=True)):
            best = (-np.inf, 0.0)
            for j, z in enumerate(zgrid):
                paths = sample_paths("brownian", z, TimeGrid(s, steps), N, seed + 31 * k + 17 * j + 1)
                d = np.abs(np.exp(-integrate_potential(V, paths)) - 1) ** p
                m = float(np.mean(d))
                if m > best[0]:
                    best = (m, float(np.std(d, ddof=1) / np.sqrt(N)))
            vals.append(best[0])
            errs.append(best[1])
        out["small_time"] = {"s": sorted(small_times, reverse=True), **monotone_table(vals, errs, "small-time")}
    out["pass"] = bool(out["envelope_pass"] and out.get("small_time", {"pass": True})["pass"])
    return out


def pathwise_bounded_check(V: PotentialSpec, p: float, t: float, z, N: int, seed: int, steps: int = 100) -> dict:
    """For bounded V: exp(p int V) <= exp(p ||V||_inf t) on every sampled path."""
    if V.bound is None:
        raise ValueError("potential carries no sup bound")
    paths = sample_paths("brownian", z, TimeGrid(t, steps), N, seed)
    vals = np.exp(p * integrate_potential(V, paths))
    cap = np.exp(p * V.bound * t)
    return {"max": float(vals.max()), "cap": float(cap), "pass": bool(np.all(vals <= cap * (1 + 1e-12)))}


def c_gamma(V, gamma: float, xgrid, N: int, seed: int, T: float | None = None, steps: int = 400) -> dict:
    """MC estimate of sup_x int_0^infty e^{-gamma t} E|V(B_t^x)| dt, truncated at T.

    The tail beyond T is bounded by sup|V| e^{-gamma T} / gamma when V is bounded.
    """
    T = T if T is not None else 30.0 / gamma
    grid = TimeGrid(T, steps)
    tn = grid.nodes
    best = (-np.inf, 0.0)
    xgrid = np.atleast_2d(np.asarray(xgrid, float))
    for j, x in enumerate(xgrid):
        paths = sample_paths("brownian", x, grid, N, seed + 1009 * j)
        X = paths.values
        mid = 0.5 * (X[:, 1:] + X[:, :-1])
        w = np.exp(-gamma * 0.5 * (tn[1:] + tn[:-1])) * grid.dt
        per_path = np.abs(V(mid)) @ w
        m = float(per_path.mean())
        if m > best[0]:
            best = (m, float(per_path.std(ddof=1) / np.sqrt(N)))
    tail = getattr(V, "bound", None)
    tail = tail * np.exp(-gamma * T) / gamma if tail is not None else None
    return {"c_gamma": best[0], "se": best[1], "tail_bound": tail, "T": T}


def form_bound_check(V: PotentialSpec, gamma: float, grid: LatticeGrid, cg: float, slack: float = 1e-9) -> dict:
    """Smallest eigenvalue of c_g (-Delta_h / 2) + gamma c_g - |V| on the lattice."""
    Hf = free_laplacian(grid)
    Vn = np.abs(V.lattice_values(grid.nodes(), grid.h))
    M = cg * Hf + gamma * cg * np.eye(grid.size) - np.diag(Vn)
    lam = float(np.linalg.eigvalsh(M)[0])
    return {"min_eig": lam, "slack": slack, "c_gamma": cg, "gamma": gamma, "pass": bool(lam >= -slack)}


def coulomb_shift_check(n: int, seed: int, scale: float = 3.0) -> dict:
    """|1/|y-R| - 1/|y|| <= |R|^{1/2} (|y-R|^{-3/2} + |y|^{-3/2}) on random points in R^3."""
    rng = np.random.default_rng(seed)
    y = rng.normal(scale=scale, size=(n, 3))
    R = rng.normal(scale=scale, size=(n, 3))
    a, b = np.linalg.norm(y - R, axis=1), np.linalg.norm(y, axis=1)
    lhs = np.abs(1 / a - 1 / b)
    rhs = np.sqrt(np.linalg.norm(R, axis=1)) * (a ** -1.5 + b ** -1.5)
    return {"max_ratio": float(np.max(lhs / rhs)), "pass": bool(np.all(lhs <= rhs))}


def jensen_chain(V, x, t: float, N: int, seed: int, steps: int = 100) -> dict:
    """exp(int_0^t E|V(B_s)| ds) <= E exp(int_0^t |V(B_s)| ds) for the empirical measure."""
    paths = sample_paths("brownian", x, TimeGrid(t, steps), N, seed)
    I = integrate_potential(lambda y: np.abs(V(y)), paths)
    lhs, rhs = float(np.exp(I.mean())), float(np.exp(I).mean())
    return {"lhs": lhs, "rhs": rhs, "pass": bool(lhs <= rhs * (1 + 1e-12))}


def translate(V: PotentialSpec, a) -> PotentialSpec:
    """x -> V(x - a), with singular sites moved along."""
    a = np.asarray(a, float)
    sites = tuple(tuple(np.asarray(R, float) + a) for R in V.singular_sites)
    return PotentialSpec(lambda x: V(np.asarray(x, float) - a), V.tag, sites, V.bound, V.label + "+shift")
