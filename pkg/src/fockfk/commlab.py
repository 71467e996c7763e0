"""Iterated differences, pull-through and multiple commutators of functions of
second quantized multiplication operators, and measured norm ratios for the
weighted commutators that drive the moment bounds."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, permutations, product
from math import comb, factorial

import numpy as np

from .fock import FockContext, annihilators, build_context, field_matrix, number_diagonal, theta_diagonal
from .model import CoefficientVector, fiber_parts, norm_weight


# ---- difference operators ----------------------------------------------------

def feps(t, eps: float, E: float = 0.0):
    """F_{eps,E}(t) = (E + t) / (1 + eps (E + t)); E = 0 gives F_eps."""
    u = np.asarray(t, float) + E
    return u / (1 + eps * u)


def library(name: str, **p):
    """Scalar test functions used by the difference scans."""
    if name == "power":
        n = p["n"]
        return lambda t: np.asarray(t, float) ** n
    if name == "feps_pow":
        a, e, E = p["alpha"], p.get("eps", 0.0), p.get("E", 0.0)
        return lambda t: feps(t, e, E) ** a
    if name == "exp_feps":
        a, e, E = p["a"], p.get("eps", 0.0), p.get("E", 0.0)
        return lambda t: np.exp(a * feps(t, e, E))
    raise ValueError(f"unknown library function {name!r}")


@dataclass(frozen=True)
class DifferenceSpec:
    func: object
    shifts: tuple
    deltas: tuple = field(default=())

    def __post_init__(self):
        if any(s <= 0 for s in self.shifts):
            raise ValueError("shifts must be positive")
        if self.deltas and (len(self.deltas) != len(self.shifts) or any(not 0 <= d <= 1 for d in self.deltas)):
            raise ValueError("deltas must lie in [0, 1], one per shift")


def difference_op(spec: DifferenceSpec | object, t, shifts=None):
    """Delta_{s_L} F(t) = sum_{A subset L} (-1)^{|L|-|A|} F(t + |s_A|)."""
    if isinstance(spec, DifferenceSpec):
        F, shifts = spec.func, spec.shifts
    else:
        F = spec
    t = np.asarray(t, float)
    s = [np.asarray(x, float) for x in shifts]
    L = len(s)
    out = np.zeros(np.broadcast(t, *s).shape) if s else np.zeros(t.shape)
    for mask in product((0, 1), repeat=L):
        shift = sum((m * x for m, x in zip(mask, s)), 0.0)
        out = out + (-1) ** (L - sum(mask)) * F(t + shift)
    return out


def difference_sequential(F, t, shifts):
    """Delta_{s_1} ... Delta_{s_L} F(t) applied one shift at a time in the given order."""
    G = F
    for s in shifts:
        G = (lambda H, s: (lambda u: H(np.asarray(u) + s) - H(u)))(G, s)
    return G(np.asarray(t, float))


def power_difference_closed(n: int, t, shifts):
    """Closed form of Delta_{s_L} t^n as a sum over kappa in N^L with |kappa| <= n."""
    t = np.asarray(t, float)
    L = len(shifts)
    out = 0.0
    for kap in product(range(1, n + 1), repeat=L):
        k = sum(kap)
        if k > n:
            continue
        coef = factorial(n) / (factorial(n - k) * np.prod([factorial(x) for x in kap]))
        out = out + coef * t ** (n - k) * np.prod([s ** x for s, x in zip(shifts, kap)])
    return out


def product_rule_residual(F1, F2, t, shifts) -> float:
    """|Delta_{s_L}(F1 F2) - sum_{A u B = L} (Delta_{s_A} F1) tau_{s_A} Delta_{s_B} F2|."""
    L = len(shifts)
    lhs = difference_op(lambda u: F1(u) * F2(u), t, shifts)
    rhs = 0.0
    for mask in product((0, 1), repeat=L):
        A = [s for m, s in zip(mask, shifts) if m]
        B = [s for m, s in zip(mask, shifts) if not m]
        sA = sum(A)
        rhs = rhs + difference_op(F1, t, A) * difference_op(F2, np.asarray(t) + sA, B)
    return float(np.max(np.abs(lhs - rhs)))


def faa_di_bruno(a: float, eps: float, k: int, t):
    """k-th derivative of exp(a F_eps(t)) from the closed coefficient formula."""
    t = np.asarray(t, float)
    tot = 0.0
    for l in range(1, k + 1):
        c = factorial(k) / factorial(l) * comb(k - 1, l - 1)
        tot = tot + c * a ** l * (-eps) ** (k - l) / (1 + eps * t) ** (k + l)
    return np.exp(a * feps(t, eps)) * tot


def central_derivative(F, k: int, t, h: float):
    """Symmetric k-th difference quotient, accurate to O(h^2)."""
    t = np.asarray(t, float)
    out = 0.0
    for j in range(k + 1):
        out = out + (-1) ** j * comb(k, j) * F(t + (k / 2 - j) * h)
    return out / h ** k


def _bound(kind: str, t, s, deltas, p):
    """Right side of the difference bound without its constant; s has shape (L, ...)."""
    sd = np.prod([si ** d for si, d in zip(s, deltas)], axis=0)
    dsum = sum(deltas)
    eps = p.get("eps", 0.0)
    if kind == "inv":
        return feps(t, eps) ** (-p["alpha"]) * t ** (-dsum) * sd
    if kind == "pos":
        tot = feps(t, eps) ** p["alpha"] * t ** (-dsum)
        for si in s:
            tot = tot + feps(t + si, eps) ** p["alpha"] * (t + si) ** (-dsum)
        return tot * sd
    if kind == "exp":
        a = p["a"]
        return a ** dsum * np.exp(a * feps(t, eps)) * np.exp(a * np.sum(s, axis=0)) * sd
    raise ValueError(kind)


def difference_ratio_sup(kind: str, params: dict, deltas, n_grid: int = 40, t_range=(1e-3, 1e3),
                         s_range=(1e-3, 1e3)) -> float:
    """sup over log grids of |Delta_{s_L} F(t)| / bound(t, s_L)."""
    L = len(deltas)
    tg = np.geomspace(*t_range, n_grid)
    sg = np.geomspace(*s_range, n_grid)
    mesh = np.meshgrid(tg, *([sg] * L), indexing="ij")
    t, s = mesh[0], mesh[1:]
    eps = params.get("eps", 0.0)
    if kind == "inv":
        F = library("feps_pow", alpha=-params["alpha"], eps=eps)
    elif kind == "pos":
        F = library("feps_pow", alpha=params["alpha"], eps=eps)
    else:
        F = library("exp_feps", a=params["a"], eps=eps)
    with np.errstate(over="ignore", invalid="ignore"):
        lhs = np.abs(difference_op(F, t, s))
        rhs = _bound(kind, t, np.array(s), deltas, params)
        r = lhs / rhs
    r = r[np.isfinite(r)]
    return float(r.max()) if r.size else float("nan")


def difference_bound_scan(kind: str, sweep: list[dict], deltas, n_grid: int = 40, tol: float = 0.10, **ranges) -> dict:
    """Measured constants of the difference bounds over a parameter sweep.

    ``kind``: inv (negative powers of F_eps), pos (positive powers) or exp
    (exp(a F_eps)).  Each entry is refined once by doubling the grid.  The
    exponential case is refused when eps > a.
    """
    rows = []
    ok = True
    for p in sweep:
        if kind == "exp" and p.get("eps", 0.0) > p["a"]:
            rows.append({**p, "status": "REFUSED", "reason": "eps > a"})
            continue
        coarse = difference_ratio_sup(kind, p, deltas, n_grid, **ranges)
        fine = difference_ratio_sup(kind, p, deltas, 2 * n_grid, **ranges)
        rel = abs(fine - coarse) / abs(coarse) if coarse else 0.0
        stable = bool(np.isfinite(fine) and rel < tol)
        ok &= stable
        rows.append({**p, "ratio": fine, "ratio_coarse": coarse, "refinement_delta": rel,
                     "status": "PASS" if stable else "FAIL"})
    return {"kind": kind, "deltas": list(deltas), "rows": rows, "pass": ok}


# ---- pull-through and multiple commutators ----------------------------------

def _a_string(ctx: FockContext, modes) -> np.ndarray:
    a = annihilators(ctx)
    out = np.eye(ctx.dim, dtype=complex)
    for p in modes:
        out = a[p] @ out
    return out


def pull_through_residual(ctx: FockContext, F, v, modes, psi) -> float:
    """|| a(p_L) F(dGamma(v)) psi - F(dGamma(v) + sum v(p_l)) a(p_L) psi ||."""
    v = np.asarray(v, float)
    nv = number_diagonal(ctx, v)
    A = _a_string(ctx, modes)
    lhs = A @ (F(nv) * psi)
    rhs = F(nv + sum(v[p] for p in modes)) * (A @ psi)
    return float(np.linalg.norm(lhs - rhs))


def _ad(S, T):
    return S @ T - T @ S


def nested_commutator(ctx: FockContext, F2, v2, g_create, g_annih) -> np.ndarray:
    """(prod_j ad_{a^dagger(g_j)})(prod_l ad_{a(g_l)}) F2(dGamma(v2)) as a matrix."""
    from .fock import annihilation_matrix, creation_matrix
    X = np.diag(F2(number_diagonal(ctx, v2))).astype(complex)
    for g in g_annih:
        X = _ad(annihilation_matrix(ctx, g), X)
    for g in g_create:
        X = _ad(creation_matrix(ctx, g), X)
    return X


def _safe_support(ctx: FockContext, vec, depth: int) -> bool:
    bad = ctx.total_number() > ctx.n_max - depth
    return bool(np.all(np.abs(vec[bad]) == 0))


def multi_commutator_residual(ctx: FockContext, F, v, g_create, g_annih, phi, psi) -> dict:
    """Matrix element of the nested commutator against its partition-sum expansion.

    ``F`` and ``v`` are triples (F1, F2, F3), (v1, v2, v3).  phi and psi must
    vanish above n_max - (M + N) bosons.
    """
    F1, F2, F3 = F
    v1, v2, v3 = (np.asarray(x, float) for x in v)
    J, L = list(range(len(g_create))), list(range(len(g_annih)))
    N, M = len(J), len(L)
    if not (_safe_support(ctx, phi, M + N) and _safe_support(ctx, psi, M + N)):
        raise ValueError("support condition violated: states must have at most n_max - (M + N) bosons")
    gJ = [np.asarray(g, complex) for g in g_create]
    gL = [np.asarray(g, complex) for g in g_annih]
    n1, n2, n3 = (number_diagonal(ctx, x) for x in (v1, v2, v3))

    X = nested_commutator(ctx, F2, v2, gJ, gL)
    lhs = np.vdot(F1(n1) * phi, X @ (F3(n3) * psi))

    rhs = 0.0
    K = ctx.K
    for nA in range(N + 1):
        for A in combinations(J, nA):
            B = [j for j in J if j not in A]
            if len(B) > M:
                continue
            for C in combinations(L, M - len(B)):
                D = [l for l in L if l not in C]
                # integration variables: one mode per index of A (creation) and of L
                for pa in product(range(K), repeat=len(A)):
                    for pl in product(range(K), repeat=M):
                        pL = dict(zip(L, pl))
                        pAd = dict(zip(A, pa))
                        coef = np.prod([np.conj(gL[l][pL[l]]) for l in L]) if L else 1.0
                        coef *= np.prod([gJ[a][pAd[a]] for a in A]) if A else 1.0
                        bij = 0.0
                        for perm in permutations(D):
                            bij += np.prod([gJ[b][pL[d]] for b, d in zip(B, perm)]) if B else 1.0
                        coef *= bij
                        if coef == 0:
                            continue
                        shifts2 = [v2[pAd[a]] for a in A] + [v2[pL[l]] for l in L]
                        d1 = F1(n1 + sum(v1[pAd[a]] for a in A))
                        d3 = F3(n3 + sum(v3[pL[c]] for c in C))
                        d2 = difference_op(F2, n2, shifts2) if shifts2 else F2(n2)
                        left = _a_string(ctx, [pAd[a] for a in A]) @ phi
                        right = _a_string(ctx, [pL[c] for c in C]) @ psi
                        rhs += coef * np.vdot(left, d1 * d2 * d3 * right)
    rhs *= (-1) ** N
    return {"lhs": complex(lhs), "rhs": complex(rhs), "residual": float(abs(lhs - rhs)), "N": N, "M": M}


# ---- weighted commutator norms -------------------------------------------------

@dataclass(frozen=True)
class WeightParams:
    """Weight for the commutator checks: polynomial (alpha) or exponential (delta)."""
    kind: str
    exponent: float
    varpi: tuple
    kappa: tuple
    eps: float = 0.0
    t0: float = 1.0
    s: float = 0.5


def weight_diag(ctx: FockContext, w: WeightParams, sign: int = 1) -> np.ndarray:
    """Diagonal of Theta_s (polynomial) or Xi_s (exponential); sign=-1 gives the inverse."""
    if w.kind == "polynomial":
        d = theta_diagonal(ctx, w.exponent, w.varpi, w.kappa, w.eps, w.s, w.t0)
    else:
        dl = w.exponent
        s = w.s if dl > 0 else w.t0 - w.s
        d = np.exp(dl * theta_diagonal(ctx, 1.0, w.varpi, w.kappa, w.eps, s, w.t0))
    return d ** sign


def _vartheta(ctx: FockContext, w: WeightParams) -> np.ndarray:
    if w.kind == "polynomial":
        return np.ones(ctx.dim)
    return 1 + number_diagonal(ctx, ctx.omega)


def t_operators(ctx: FockContext, c: CoefficientVector, x, w: WeightParams) -> dict:
    """T1, T2 and the vector T^+- at position x as matrices (lists over spatial components)."""
    th = weight_diag(ctx, w)
    Th, Ti = np.diag(th), np.diag(1 / th)
    vt = np.diag(_vartheta(ctx, w) ** -0.5)
    phiG, phq, sF, _ = fiber_parts(ctx, c, x)
    T1 = sum(0.5 * vt @ Ti @ _ad(_ad(Th @ Th, P), P) @ Ti @ vt for P in phiG)
    Tp = [2 * _ad(Th, P) @ Ti @ vt for P in phiG]
    Tm = [2 * _ad(Ti, P) @ Th @ vt for P in phiG]
    T2 = 0.5j * _ad(Th, phq) @ Ti @ vt + 0.5 * Ti @ _ad(Th, _ad(Th, sF)) @ Ti @ vt
    return {"T1": T1, "T2": T2, "T+": Tp, "T-": Tm}


def _vec_norm(ops) -> float:
    return float(np.sqrt(np.linalg.norm(sum(P.conj().T @ P for P in ops), 2)))


def circle_weight(omega, w: WeightParams) -> np.ndarray:
    """Per-mode weight of the circle norm without its constant."""
    if w.kind == "polynomial":
        sq = norm_weight(omega, "circle_poly", alpha=w.exponent, varpi=w.varpi, kappa=w.kappa)
    else:
        sq = norm_weight(omega, "circle_exp", delta=w.exponent, t0=w.t0, varpi=w.varpi, kappa=w.kappa)
    return np.sqrt(sq)


def commutator_norm_check(ctx: FockContext, c: CoefficientVector, x, w: WeightParams, extra: int = 2,
                          tol: float = 0.15) -> dict:
    """||T1||, ||T2||, ||T^+-|| against the circle norms of G and (q, sigma.F),
    with refinement stability under n_max -> n_max + extra.

    Norms are taken on inputs with at most n_max bosons, where the assembled
    matrices agree with the untruncated operators.
    """
    x = np.atleast_1d(np.asarray(x, float))
    wk = circle_weight(ctx.omega, w)
    G = c.G(x)
    nG = float(np.sqrt(np.sum(wk[:, None] ** 2 * np.abs(G) ** 2)))
    qF = np.concatenate([c.q(x)[:, None], c.F(x)], axis=1)
    nqF = float(np.sqrt(np.sum(wk[:, None] ** 2 * np.abs(qF) ** 2)))
    rows = {}
    for label, n in (("base", ctx.n_max), ("refined", ctx.n_max + extra)):
        # inputs capped at n, operator assembled with two extra quanta of headroom: no truncation edge
        cx = build_context(ctx.K, ctx.omega, n + 2, ctx.L)
        T = t_operators(cx, c, x, w)
        inp = np.tile(cx.total_number() <= n, ctx.L)
        rows[label] = {"T1": float(np.linalg.norm(T["T1"][:, inp], 2)),
                       "T2": float(np.linalg.norm(T["T2"][:, inp], 2)),
                       "T+": _vec_norm([P[:, inp] for P in T["T+"]]),
                       "T-": _vec_norm([P[:, inp] for P in T["T-"]])}
    den = {"T1": nG ** 2, "T+": nG, "T-": nG, "T2": nqF}
    out = {"x": x.tolist(), "norm_G": nG, "norm_qF": nqF, "rows": []}
    ok = True
    for key in ("T1", "T2", "T+", "T-"):
        if den[key] == 0:
            r0 = r1 = 0.0 if rows["base"][key] < 1e-12 else np.inf
        else:
            r0, r1 = rows["base"][key] / den[key], rows["refined"][key] / den[key]
        delta = abs(r1 - r0) / r0 if r0 else 0.0
        stable = bool(np.isfinite(r1) and delta < tol)
        ok &= stable
        out["rows"].append({"operator": key, "norm": rows["base"][key], "norm_refined": rows["refined"][key],
                            "ratio": r0, "ratio_refined": r1, "refinement_delta": delta, "stable": stable})
    out["inversion_residual"] = inversion_identities_residual(ctx, c, x, w)
    out["pass"] = bool(ok and out["inversion_residual"] <= 1e-10)
    return out


def inversion_identities_residual(ctx: FockContext, c: CoefficientVector, x, w: WeightParams) -> float:
    """Residual of the first- and second-order inversion identities for ad_{phi(G)}
    acting on Theta and its inverse (both signs)."""
    x = np.atleast_1d(np.asarray(x, float))
    th = weight_diag(ctx, w)
    P = fiber_parts(ctx, c, x)[0][0]
    res = 0.0
    for sgn in (1, -1):
        A, B = np.diag(th ** -sgn), np.diag(th ** sgn)   # Theta^{-+1}, Theta^{+-1}
        r1 = _ad(P, A) @ B + A @ _ad(P, B)
        ad2A, ad2B = _ad(P, _ad(P, A)), _ad(P, _ad(P, B))
        X = (np.diag(th ** -1) @ _ad(P, np.diag(th))) if sgn == 1 else (_ad(P, np.diag(th)) @ np.diag(th ** -1))
        r2 = ad2A @ B + A @ ad2B - 2 * X @ X
        res = max(res, float(np.abs(r1).max()), float(np.abs(r2).max()))
    return res


def half_power_ratio(ctx: FockContext, f) -> float:
    """||[theta^{1/2}, phi(f)] theta^{-1/2}|| / ||omega^{1/2} f|| with theta = 1 + dGamma(omega)."""
    th = 1 + number_diagonal(ctx, ctx.omega)
    P = field_matrix(ctx, f)
    Y = _ad(np.diag(np.sqrt(th)), P) @ np.diag(th ** -0.5)
    den = np.linalg.norm(np.sqrt(ctx.omega) * np.asarray(f))
    return float(np.linalg.norm(Y, 2) / den) if den > 0 else 0.0


# ---- the general lemmas on the truncated space ------------------------------

def lemma_poly_operator(ctx: FockContext, g_create, g_annih, alpha: float, beta: float, gamma: float,
                        sigma: float, tau_: float, kappa: float, m: int, n: int, v, eps: float = 0.0,
                        E: float = 1.0) -> np.ndarray:
    """(1+dGamma(v))^{-n/2} F^{sigma-beta+kappa} {ad... F^alpha} F^{tau-gamma-kappa} (1+dGamma(v))^{-m/2}
    with F = F_{eps,E}(dGamma(v_eps))."""
    v = np.asarray(v, float)
    ve = v / (1 + eps * v)
    f = feps(number_diagonal(ctx, ve), eps, E)
    nv = 1 + number_diagonal(ctx, v)
    X = nested_commutator(ctx, lambda u: feps(u, eps, E) ** alpha, ve, g_create, g_annih)
    left = nv ** (-n / 2) * f ** (sigma - beta + kappa)
    right = f ** (tau_ - gamma - kappa) * nv ** (-m / 2)
    return left[:, None] * X * right[None, :]


def lemma_poly_bound(omega, g_all, alpha, sigma, tau_, kappa, m, n, M, N, v, E: float = 1.0) -> float:
    """Right side of the polynomial commutator bound without its constant."""
    v = np.asarray(v, float)
    mu = max(abs(kappa) + sigma + tau_, alpha + abs(kappa) + sigma + tau_ - (M + N + m + n) / 2)
    w0 = np.sqrt(v)
    wmu = np.sqrt(v) * (1 + v / E) ** mu
    wk = np.sqrt(v) * (1 + v / E) ** (abs(kappa) + sigma + tau_)
    nrm = lambda w, g: float(np.linalg.norm(w * g))
    idx = range(len(g_all))
    tot = 0.0
    for a in idx:
        for b in idx:
            if a != b:
                tot += nrm(wmu, g_all[a]) * nrm(wk, g_all[b]) * np.prod(
                    [nrm(w0, g_all[c]) for c in idx if c not in (a, b)])
    for a in idx:
        tot += nrm(wmu, g_all[a]) * np.prod([nrm(w0, g_all[c]) for c in idx if c != a])
    return E ** (-(M + N + m + n) / 2 + sigma + tau_) * tot


def lemma_exp_operator(ctx: FockContext, g_create, g_annih, delta: float, beta: float, gamma: float, m: int,
                       n: int, v, eps: float = 0.0, E: float = 1.0) -> np.ndarray:
    """(1+dGamma(omega))^{-n/2} e^{-beta F} {ad... e^{delta F}} e^{-gamma F} (1+dGamma(omega))^{-m/2}."""
    if eps > delta:
        raise ValueError("need eps <= delta")
    v = np.asarray(v, float)
    ve = v / (1 + eps * v)
    f = feps(number_diagonal(ctx, ve), eps, E)
    nw = 1 + number_diagonal(ctx, ctx.omega)
    X = nested_commutator(ctx, lambda u: np.exp(delta * feps(u, eps, E)), ve, g_create, g_annih)
    left = nw ** (-n / 2) * np.exp(-beta * f)
    right = np.exp(-gamma * f) * nw ** (-m / 2)
    return left[:, None] * X * right[None, :]


def lemma_exp_bound(omega, g_all, delta: float, v) -> float:
    v = np.asarray(v, float)
    omega = np.asarray(omega, float)
    u = np.maximum(delta * v, (delta * v) ** 2 / omega)
    w = np.sqrt(u) * np.exp(delta * v)
    return float(np.prod([np.linalg.norm(w * g) for g in g_all]))


def lemma_ratio_stability(kind: str, ctx: FockContext, g_create, g_annih, extra: int = 2, tol: float = 0.15,
                          **p) -> dict:
    """Measured ||T|| / bound for either lemma at n_max and n_max + extra."""
    g_all = list(g_create) + list(g_annih)
    M, N = len(g_annih), len(g_create)
    vals = []
    for cx in (ctx, build_context(ctx.K, ctx.omega, ctx.n_max + extra, ctx.L)):
        if kind == "poly":
            T = lemma_poly_operator(cx, g_create, g_annih, **p)
            b = lemma_poly_bound(cx.omega, g_all, p["alpha"], p["sigma"], p["tau_"], p["kappa"], p["m"], p["n"],
                                 M, N, p["v"], p.get("E", 1.0))
        else:
            T = lemma_exp_operator(cx, g_create, g_annih, **p)
            b = lemma_exp_bound(cx.omega, g_all, p["delta"], p["v"])
        vals.append(float(np.linalg.norm(T, 2)) / b if b > 0 else (0.0 if np.linalg.norm(T) < 1e-14 else np.inf))
    delta = abs(vals[1] - vals[0]) / vals[0] if vals[0] else 0.0
    return {"ratio": vals[0], "ratio_refined": vals[1], "refinement_delta": delta,
            "stable": bool(np.isfinite(vals[1]) and delta < tol)}
