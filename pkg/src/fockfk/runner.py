"""Command line driver: parse a config, build the model, run suites and write reports."""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fock import WeightSpec, build_context
from .model import (LatticeGrid, constant_potential, cosine_potential, harmonic_potential, lattice_hamiltonian,
                    profile_coupling, zero_coupling, zero_potential)
from .stoch import PathBundle, TimeGrid, derive_seed, sample_paths

DEFAULT_CONFIG = """\
[run]
seed = 20240601
paths = 10000
steps = 200
t = 0.5

[model]
K = 2
omega = 1, 2
n_max = 3
coupling = profile
g = 0.5, 0.4
f = 0.3, 0.3
a_G = 0.5
a_F = 0.3

[potential]
kind = cosine
v0 = 0.3
v1 = 0.2

[lattice]
lo = -2
hi = 2
n = 21
"""

SCHEMA = {
    "run_id": "str",
    "seed": "int",
    "config_echo": "str",
    "suites": [{"name": "str", "paper_anchor": "str", "status": "PASS|FAIL|SKIP", "lhs": "float|null",
                "rhs": "float|null", "se": "float|null", "tolerance": "float|str|null",
                "runtime_s": "float|null"}],
}

_KEYS = {
    "run": {"seed", "paths", "steps", "t"},
    "model": {"k", "omega", "n_max", "coupling", "g", "f", "a_g", "a_f"},
    "potential": {"kind", "v0", "v1", "value", "w2"},
    "lattice": {"lo", "hi", "n"},
}


class ConfigError(ValueError):
    pass


def report_schema() -> str:
    return json.dumps(SCHEMA, indent=2)


# ---- config ------------------------------------------------------------------

def _line_of(text: str, section: str, key: str | None = None) -> int:
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
            if key is None and cur == section:
                return i
        elif cur == section and key is not None and s.split("=")[0].strip().lower() == key:
            return i
    return 0


def parse_config(text: str) -> configparser.ConfigParser:
    """Parse and validate; unknown sections or keys raise ConfigError with a line number."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(DEFAULT_CONFIG)
        user = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        user.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"config parse error: {e}") from None
    for sec in user.sections():
        if sec not in _KEYS:
            raise ConfigError(f"line {_line_of(text, sec)}: unknown section [{sec}]")
        for key, val in user[sec].items():
            if key not in _KEYS[sec]:
                raise ConfigError(f"line {_line_of(text, sec, key)}: unknown key '{key}' in [{sec}]")
            cp[sec][key] = val
    try:
        Model.from_config(cp)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"invalid value: {e}") from None
    return cp


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


@dataclass
class Model:
    K: int
    omega: np.ndarray
    n_max: int
    coupling: str
    g: list
    f: list
    a_G: float
    a_F: float
    potential: dict
    lattice: tuple
    t: float
    paths: int
    steps: int
    seed: int
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, cp: configparser.ConfigParser) -> "Model":
        m = cp["model"]
        K = m.getint("k")
        omega = np.array(_floats(m["omega"]))
        g, f = _floats(m["g"]), _floats(m["f"])
        if len(omega) != K or len(g) != K or len(f) != K:
            raise ValueError("omega, g and f need K entries each")
        if np.any(omega <= 0):
            raise ValueError("omega must be positive")
        if m["coupling"] not in ("profile", "zero", "field", "nelson"):
            raise ValueError(f"unknown coupling {m['coupling']!r}")
        if cp["potential"]["kind"] not in ("zero", "constant", "cosine", "harmonic"):
            raise ValueError(f"unknown potential {cp['potential']['kind']!r}")
        r, lat = cp["run"], cp["lattice"]
        out = cls(K, omega, m.getint("n_max"), m["coupling"], g, f, m.getfloat("a_g"), m.getfloat("a_f"),
                  dict(cp["potential"]), (lat.getfloat("lo"), lat.getfloat("hi"), lat.getint("n")),
                  r.getfloat("t"), r.getint("paths"), r.getint("steps"), r.getint("seed"))
        if out.t <= 0 or out.paths < 2 or out.steps < 1 or out.n_max < 1:
            raise ValueError("need t > 0, paths >= 2, steps >= 1, n_max >= 1")
        return out

    def context(self, n_max: int | None = None):
        return build_context(self.K, self.omega, self.n_max if n_max is None else n_max)

    def coupling_vector(self, kind: str | None = None):
        kind = kind or self.coupling
        ctx = self.context()
        if kind == "zero":
            return zero_coupling(ctx)
        f = None if kind == "field" else [[v] for v in self.f]
        g = np.zeros(self.K) if kind == "nelson" else self.g
        return profile_coupling(self.omega, g, f, self.a_G, self.a_F)

    def V(self, kind: str | None = None):
        p = self.potential
        kind = kind or p["kind"]
        if kind == "zero":
            return zero_potential()
        if kind == "constant":
            return constant_potential(float(p.get("value", 0.3)))
        if kind == "harmonic":
            return harmonic_potential(float(p.get("w2", 1.0)))
        return cosine_potential(float(p.get("v0", 0.3)), float(p.get("v1", 0.2)))

    def grid(self, h: float | None = None) -> LatticeGrid:
        lo, hi, n = self.lattice
        if h is not None:
            n = int(round((hi - lo) / h)) + 1
        return LatticeGrid.uniform(lo, hi, n)


# ---- suite results -------------------------------------------------------------

@dataclass
class Result:
    name: str
    anchor: str
    status: str
    lhs: float | None = None
    rhs: float | None = None
    se: float | None = None
    tolerance: object = None
    rows: list = field(default_factory=list)
    plot: dict | None = None
    detail: dict = field(default_factory=dict)


def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _f(x):
    return None if x is None else float(x)


# ---- suites ------------------------------------------------------------------

def s_pull_through(m: Model, seed: int):
    from .commlab import pull_through_residual
    ctx = m.context(max(m.n_max, 5))
    rng = np.random.default_rng(seed % 2 ** 32)
    psi = rng.normal(size=ctx.dim) + 1j * rng.normal(size=ctx.dim)
    rows = []
    for F, lab in ((lambda u: u, "id"), (lambda u: np.exp(-0.3 * u), "exp"), (lambda u: 1 / (1 + u), "inv")):
        for modes in ([0], [0, 1], [1, 1, 0]):
            rows.append({"F": lab, "modes": str(modes),
                         "residual": pull_through_residual(ctx, F, m.omega, modes, psi)})
    worst = max(r["residual"] for r in rows)
    return Result("pull-through", "pull-through", _status(worst <= 1e-12), worst, 1e-12, 0.0, 1e-12, rows)


def s_multi_commutator(m: Model, seed: int):
    from .commlab import multi_commutator_residual
    ctx = m.context(max(m.n_max, 6))
    rng = np.random.default_rng(seed % 2 ** 32)

    def state(depth):
        v = rng.normal(size=ctx.dim) + 1j * rng.normal(size=ctx.dim)
        v[ctx.total_number() > ctx.n_max - depth] = 0
        return v

    def coef():
        return rng.normal(size=ctx.K) + 1j * rng.normal(size=ctx.K)

    F = (lambda u: 1 / (1 + u), lambda u: np.sqrt(1 + u), lambda u: np.exp(-0.3 * u))
    v = (m.omega, 0.5 + m.omega, np.ones(ctx.K) * 0.2)
    rows = []
    for N, M in ((0, 0), (1, 0), (0, 1), (1, 1), (2, 1), (1, 2)):
        r = multi_commutator_residual(ctx, F, v, [coef() for _ in range(N)], [coef() for _ in range(M)],
                                      state(N + M), state(N + M))
        rows.append({"N": N, "M": M, "residual": r["residual"], "abs_lhs": abs(r["lhs"])})
    worst = max(r["residual"] for r in rows)
    return Result("multi-commutator", "multiple-commutator-expansion", _status(worst <= 1e-10), worst, 1e-10, 0.0,
                  1e-10, rows)


def s_weyl_vector(m: Model, seed: int):
    from .positivity import weyl_vector_residual
    ctx = m.context(8)
    rows = []
    for s, f, g in ((0.5, [0.3, 0.2], [0.4, -0.2]), (1.0, [0.0, 0.5], [0.3, 0.3j]), (0.2, [0.1, 0.1], [0.2, 0.1])):
        r = weyl_vector_residual(ctx, s, np.asarray(f, complex), np.asarray(g, complex))
        rows.append({"s": s, **r})
    worst = max(r["residual"] for r in rows)
    return Result("weyl-vector", "factorized-weyl-vector", _status(worst <= 1e-6), worst, 1e-6, 0.0, 1e-6, rows)


def s_differences(m: Model, seed: int):
    from .commlab import (difference_op, difference_sequential, library, power_difference_closed,
                          product_rule_residual)
    t = np.geomspace(0.05, 20, 25)
    rows = []
    for n, sh in ((2, [0.3, 0.7]), (3, [0.2, 0.5]), (4, [0.1, 0.4, 0.9])):
        F = library("power", n=n)
        a = difference_op(F, t, sh)
        closed = power_difference_closed(n, t, sh)
        rows.append({"check": f"power-closed-form n={n}",
                     "residual": float(np.max(np.abs(a - closed) / (1 + np.abs(a))))})
        rows.append({"check": f"order n={n}", "residual": float(np.max(np.abs(
            difference_sequential(F, t, sh[::-1]) - a) / (1 + np.abs(a))))})
    F1, F2 = library("feps_pow", alpha=-0.7, eps=0.3), library("exp_feps", a=0.5, eps=0.2)
    rows.append({"check": "product rule", "residual": product_rule_residual(F1, F2, t, [0.3, 0.5, 0.2])})
    worst = max(r["residual"] for r in rows)
    return Result("difference-identities", "iterated-differences", _status(worst <= 1e-10), worst, 1e-10, 0.0,
                  1e-10, rows)


def s_q_transform(m: Model, seed: int):
    from .positivity import multiplication_residual, q_transform
    ctx = m.context()
    rows = []
    for variant in ("conjugate_field", "field"):
        qt = q_transform(ctx, variant)
        rows.append({"variant": variant, "gram": qt.gram_residual(),
                     "multiplication": multiplication_residual(ctx, qt)})
    worst = max(max(r["gram"], r["multiplication"]) for r in rows)
    return Result("q-transform", "q-space-unitary", _status(worst <= 1e-10), worst, 1e-10, 0.0, 1e-10, rows)


def s_inversion(m: Model, seed: int):
    from .commlab import WeightParams, inversion_identities_residual
    ctx = m.context()
    c = m.coupling_vector("profile")
    rows = []
    for w in (WeightParams("polynomial", 1.0, (0.5,) * m.K, (0.2,) * m.K),
              WeightParams("polynomial", -1.0, (0.5,) * m.K, (0.2,) * m.K),
              WeightParams("exponential", 0.5, (0.5,) * m.K, (0.2,) * m.K)):
        rows.append({"weight": f"{w.kind}:{w.exponent}", "residual": inversion_identities_residual(ctx, c, 0.3, w)})
    worst = max(r["residual"] for r in rows)
    return Result("inversion-identities", "weight-inversion-identities", _status(worst <= 1e-10), worst, 1e-10,
                  0.0, 1e-10, rows)


def s_composition(m: Model, seed: int):
    from .flow import flow_composition_residual
    ctx = m.context()
    r = flow_composition_residual(ctx, m.coupling_vector(), m.V(), [0.0], m.t, m.t / 2, min(m.paths, 200), seed,
                                  m.steps)
    return Result("flow-composition", "flow-composition", _status(r["residual"] <= 1e-10), r["residual"], 1e-10,
                  0.0, 1e-10, [r])


def _psi(ctx, seed=1, sigma=0.8):
    eta = np.random.default_rng(seed).normal(size=ctx.dim) + 1j * np.random.default_rng(seed + 1).normal(
        size=ctx.dim)
    eta = eta / np.linalg.norm(eta)
    return (lambda X: np.exp(-np.asarray(X)[..., 0] ** 2 / (2 * sigma ** 2))[..., None] * eta), eta


def s_fk_apply(m: Model, seed: int):
    from .oracle import spectral
    from .semigroup import apply
    ctx = m.context()
    c, V, grid = m.coupling_vector(), m.V(), m.grid()
    Psi, _ = _psi(ctx)
    H = lattice_hamiltonian(ctx, c, V, grid)
    ref = spectral(H).apply(m.t, Psi(grid.nodes()).reshape(-1)).reshape(-1, ctx.dim)
    rows, worst, se_ok = [], 0.0, True
    lo, hi, _ = m.lattice
    pts = [grid.axes[0][np.argmin(np.abs(grid.axes[0] - (lo + fr * (hi - lo))))] for fr in (0.3, 0.4, 0.5, 0.6, 0.7)]
    for i, x in enumerate(pts):
        mean, se = apply(ctx, c, V, Psi, m.t, [x], m.paths, derive_seed(seed, f"x{i}"), m.steps)
        r = ref[grid.index_of([x])]
        z = np.abs(mean - r) / np.maximum(se, 1e-300)
        worst = max(worst, float(z.max()))
        se_ok &= bool(se.max() <= 0.05 * np.abs(r).max())
        rows.append({"x": float(x), "max_abs_diff": float(np.abs(mean - r).max()), "max_se": float(se.max()),
                     "max_z": float(z.max()), "scale": float(np.abs(r).max())})
    return Result("fk-apply", "feynman-kac-formula", _status(worst <= 3 and se_ok), worst, 3.0, 1.0, "3 se", rows,
                  {"x": "x", "y": ["max_abs_diff", "max_se"], "logy": True})


def s_pathwise(m: Model, seed: int):
    from .flow import evolve, pathwise_bound
    ctx = m.context()
    c, V = m.coupling_vector(), m.V()
    paths = sample_paths("brownian", [0.0], TimeGrid(m.t, m.steps), m.paths, seed)
    r = pathwise_bound(evolve(ctx, c, V, paths), c, paths)
    return Result("pathwise-bound", "pathwise-norm-bound", _status(r["pass"]), r["max_excess"], r["tolerance"],
                  0.0, r["tolerance"], [r])


def s_kernel_identities(m: Model, seed: int):
    from .semigroup import kernel_identities_residual
    ctx = m.context()
    r = kernel_identities_residual(ctx, m.coupling_vector(), m.V(), m.t, m.t / 2, [0.0], [0.3], m.paths, seed,
                                   m.steps, quad_paths=max(2, m.paths // 2))
    return Result("kernel-identities", "kernel-symmetry-and-chapman-kolmogorov", _status(r["pass"]),
                  max(r["symmetry"] / r["symmetry_err"], r["ck"] / r["ck_err"]), 3.0, 1.0, "3 se", [r])


def _continuity_rows(tab, key, seq):
    return [{key: s, "value": v, "se": e} for s, v, e in zip(seq, tab["values"], tab["errors"])]


def s_continuity(m: Model, seed: int):
    from .model import PotentialSpec
    from .semigroup import (coupling_sequence_table, equicontinuity_table, kernel_sequence_table,
                            potential_sequence_table, time_continuity_table)
    ctx = m.context()
    c, V = m.coupling_vector(), m.V()
    Psi, _ = _psi(ctx)
    N, out = m.paths, []
    ns = [1, 2, 3, 4, 5]
    Vs = [PotentialSpec((lambda k: lambda x: V(x) + 0.4 * 2.0 ** -k * np.cos(2 * x[..., 0]))(k)) for k in ns]
    cs = [c.scaled(1 + 0.5 * 2.0 ** -k) for k in ns]
    tabs = {
        "potential": (potential_sequence_table(ctx, c, V, Vs, Psi, m.t, [0.0], N, derive_seed(seed, "V"),
                                               m.steps), "n", ns),
        "coupling": (coupling_sequence_table(ctx, cs, c, V, m.t, [0.0, 0.3], max(2, N // 4),
                                             derive_seed(seed, "c"), max(1, m.steps // 2)), "n", ns),
        "time": (time_continuity_table(ctx, c, V, Psi, [0.2, 0.1, 0.05, 0.025, 0.0125], [0.0], N,
                                       derive_seed(seed, "t")), "t", [0.2, 0.1, 0.05, 0.025, 0.0125]),
        "equicontinuity": (equicontinuity_table(ctx, c, V, Psi, m.t, [0.0], [0.2, 0.1, 0.05, 0.025], N,
                                                derive_seed(seed, "e"), m.steps), "delta", [0.2, 0.1, 0.05, 0.025]),
        "kernel": (kernel_sequence_table(ctx, cs, Vs, c, V, m.t, [0.0], [0.3], N, derive_seed(seed, "k"),
                                         max(1, m.steps // 2)), "n", ns),
    }
    for name, (tab, key, seq) in tabs.items():
        out.append(Result(f"continuity-{name}", f"{name}-continuity", _status(tab["pass"]), tab["values"][-1],
                          tab["values"][0], tab["errors"][-1], "strict decrease above 3 se",
                          _continuity_rows(tab, key, seq), {"x": key, "y": ["value", "se"], "logy": True}))
    return out


def s_weighted_moment(m: Model, seed: int):
    from .flow import weighted_moment_check
    ctx = m.context()
    c = m.coupling_vector()
    paths = sample_paths("brownian", [0.0], TimeGrid(m.t, m.steps), m.paths, seed)
    w = WeightSpec("polynomial", 1.0, (0.5,) * m.K, (0.2,) * m.K, 0.0, m.t)
    rows = []
    for i, eta in enumerate((ctx.vacuum(), ctx.state([1] + [0] * (m.K - 1)), _psi(ctx, 5)[1])):
        r = weighted_moment_check(ctx, c, paths, w, 2, eta)
        rows.append({"eta": i, "lhs": r["lhs"], "se": r["se"], "rhs": r["rhs"], "status": r["status"]})
    ok = all(r["status"] == "PASS" for r in rows)
    worst = max(rows, key=lambda r: (r["lhs"] - 3 * r["se"]) / r["rhs"])
    return Result("weighted-moment", "polynomial-weight-moment-bound", _status(ok), worst["lhs"], worst["rhs"],
                  worst["se"], "lhs - 3 se <= rhs", rows)


def s_weighted_norm(m: Model, seed: int):
    from .semigroup import weighted_norm_suite
    ctx = m.context()
    grid = LatticeGrid.uniform(m.lattice[0], m.lattice[1], 11)
    rows = []
    for p, q in ((2, 2), (1, 2), (2, np.inf)):
        r = weighted_norm_suite(ctx, m.coupling_vector(), m.V(), grid, m.t, p, q, seed=seed,
                                moment_paths=min(m.paths, 500))
        rows.append({"p": p, "q": q, **{k: r.get(k) for k in ("lhs", "rhs", "status")}})
    ok = all(r["status"] != "FAIL" for r in rows)
    worst = max(rows, key=lambda r: r["lhs"] / r["rhs"])
    return Result("weighted-norm", "weighted-lp-lq-bound", _status(ok), worst["lhs"], worst["rhs"], 0.0,
                  "lhs <= rhs", rows)


def s_positivity(m: Model, seed: int):
    from .positivity import kernel_positivity_suite
    ctx = m.context()
    c = m.coupling_vector("field" if m.coupling != "nelson" else "nelson")
    r = kernel_positivity_suite(ctx, c, m.V(), m.grid(0.1), m.t, [0.0], [0.3], m.paths, seed, m.steps)
    if r["status"] == "SKIP":
        return Result("kernel-positivity", "positivity-improvement", "SKIP", detail=r)
    return Result("kernel-positivity", "positivity-improvement", r["status"], r["oracle_min"], 0.0, None,
                  "probe pairings > 0", [r])


def s_difference_bounds(m: Model, seed: int):
    from .commlab import difference_bound_scan
    out = []
    specs = (("inv", [{"alpha": a, "eps": e} for a in (0.5, 2.0) for e in (0.0, 0.5)], (1.0, 0.5)),
             ("pos", [{"alpha": a, "eps": e} for a in (0.5, 2.0) for e in (0.0, 0.5)], (0.5, 1.0)),
             ("exp", [{"a": a, "eps": e} for a in (0.5, 1.0) for e in (0.0, 0.5)] + [{"a": 1.0, "eps": 1.5}],
              (1.0, 0.5)))
    for kind, sweep, deltas in specs:
        r = difference_bound_scan(kind, sweep, deltas, n_grid=30)
        ratios = [row["ratio"] for row in r["rows"] if "ratio" in row]
        worst = max(row.get("refinement_delta", 0.0) for row in r["rows"])
        out.append(Result(f"difference-bound-{kind}", f"difference-bound-{kind}", _status(r["pass"]), worst, 0.10,
                          None, "refinement change < 10%", r["rows"], detail={"max_ratio": max(ratios)}))
    return out


def s_commutator_norms(m: Model, seed: int):
    from .commlab import WeightParams, commutator_norm_check, half_power_ratio, lemma_ratio_stability
    ctx = m.context()
    c = m.coupling_vector("profile")
    rows, ok = [], True
    for w in (WeightParams("polynomial", 1.0, (0.5,) * m.K, (0.2,) * m.K),
              WeightParams("polynomial", -1.0, (0.5,) * m.K, (0.2,) * m.K),
              WeightParams("exponential", 0.5, (0.5,) * m.K, (0.2,) * m.K),
              WeightParams("exponential", -0.5, (0.5,) * m.K, (0.2,) * m.K)):
        for x in (0.0, 0.7):
            r = commutator_norm_check(ctx, c, x, w)
            ok &= r["pass"]
            for row in r["rows"]:
                rows.append({"weight": f"{w.kind}:{w.exponent}", "x": x, **row})
    rng = np.random.default_rng(seed % 2 ** 32)
    for i in range(3):
        f = rng.normal(size=m.K) + 1j * rng.normal(size=m.K)
        a, b = half_power_ratio(ctx, f), half_power_ratio(m.context(m.n_max + 2), f)
        d = abs(b - a) / a
        ok &= d < 0.15
        rows.append({"weight": "half-power", "x": i, "operator": "Y(f)", "ratio": a, "ratio_refined": b,
                     "refinement_delta": d, "stable": d < 0.15})
    g1, g2 = rng.normal(size=m.K) + 1j * rng.normal(size=m.K), rng.normal(size=m.K) + 1j * rng.normal(size=m.K)
    for label, kind, p in (("lemma-poly", "poly", dict(alpha=1.0, beta=0.5, gamma=0.5, sigma=0.0, tau_=0.0,
                                                        kappa=0.0, m=1, n=1, v=m.omega)),
                           ("lemma-exp", "exp", dict(delta=0.5, beta=0.25, gamma=0.25, m=1, n=1,
                                                     v=0.5 * np.ones(m.K), eps=0.1))):
        r = lemma_ratio_stability(kind, ctx, [g1], [g2], **p)
        ok &= r["stable"]
        rows.append({"weight": label, "x": 0, "operator": "T", **r})
    worst = max(r["refinement_delta"] for r in rows)
    return Result("commutator-norms", "weighted-commutator-norms", _status(ok), worst, 0.15, None,
                  "refinement change < 15%", rows)


def s_kato(m: Model, seed: int):
    from .kato import (c_gamma, coulomb_shift_check, form_bound_check, jensen_chain, kato_seminorm, kato_table,
                       khasminskii_check, pathwise_bounded_check)
    from .model import PotentialSpec, coulomb_potential
    out = []
    C = coulomb_potential(1.0)
    xg = [[0, 0, 0], [0.1, 0, 0], [0.3, 0.2, 0]]
    rs = [1.0, 0.5, 0.25, 0.1, 0.05]
    tab = kato_table(C, rs, 3, xg)
    out.append(Result("kato-seminorm", "kato-class", _status(tab["pass"]), tab["seminorm"][-1], tab["seminorm"][0],
                      None, "strictly decreasing in r", [{"r": r, "seminorm": v} for r, v in zip(tab["r"],
                                                                                            tab["seminorm"])],
                      {"x": "r", "y": ["seminorm"], "logy": True}))
    one = PotentialSpec(lambda x: np.ones(np.shape(x)[:-1]), bound=1.0)
    zero = PotentialSpec(lambda x: np.zeros(np.shape(x)[:-1]), bound=0.0)
    exact = abs(kato_seminorm(one, 0.5, 3, [[0, 0, 0]]) - 2 * np.pi * 0.25) + kato_seminorm(zero, 0.5, 3, [[0, 0, 0]])
    pw = pathwise_bounded_check(constant_potential(-0.4), 1.0, m.t, [0.0], min(m.paths, 1000), seed)
    ok = exact <= 1e-10 and pw["pass"]
    out.append(Result("kato-trivial", "kato-class", _status(ok), exact, 1e-10, 0.0, 1e-10, [pw]))
    kh = khasminskii_check(C, 1.0, [0.1, 0.25, 0.5, 0.75, 1.0], m.paths, seed, [[0, 0, 0], [0.5, 0, 0]], m.steps,
                           small_times=[0.4, 0.2, 0.1, 0.05, 0.02])
    rows = [{"t": t, "moment": v, "se": e} for t, v, e in zip(kh["t"], kh["moment"], kh["se"])]
    out.append(Result("khasminskii", "exponential-path-moments", _status(kh["pass"]), kh["r2"], 0.9, None,
                      "R^2 >= 0.9", rows, {"x": "t", "y": ["moment"], "logy": True},
                      {"c_fit": kh["c_fit"], "small_time": kh["small_time"]}))
    cs = coulomb_shift_check(20000, seed % 2 ** 32)
    jc = jensen_chain(C, [0, 0, 0], m.t, min(m.paths, 1000), seed)
    out.append(Result("kato-inequalities", "coulomb-shift-and-jensen", _status(cs["pass"] and jc["pass"]),
                      cs["max_ratio"], 1.0, None, "ratio <= 1", [cs, jc]))
    cb = coulomb_potential(1.0, clamp=0.25)
    grid3 = LatticeGrid.uniform(-2, 2, 9, nu=3)
    rows, ok = [], True
    for gam in (2.0, 4.0, 8.0):
        cg = c_gamma(cb, gam, [[0, 0, 0]], min(m.paths, 1000), derive_seed(seed, f"cg{gam}"))
        r = form_bound_check(cb, gam, grid3, cg["c_gamma"])
        ok &= r["pass"]
        rows.append({**r, "se": cg["se"]})
    out.append(Result("form-bound", "form-bound", _status(ok), min(r["min_eig"] for r in rows), 0.0, None,
                      "min eigenvalue >= 0", rows))
    return out


def s_groundstate(m: Model, seed: int):
    from .oracle import decay_check, ground_state, ionization_surrogate, ir_identity_residual
    ctx = m.context()
    grid = m.grid()
    c = m.coupling_vector()
    H = lattice_hamiltonian(ctx, c, harmonic_potential(1.0), grid)
    E, psi, gap = ground_state(H)
    rows = [{"mode": j, **ir_identity_residual(ctx, H, E, psi, j, grid.size)} for j in range(ctx.K)]
    dc = decay_check(psi, grid, ctx, a=1.0, alpha=0.5)
    sig = ionization_surrogate(H, grid, ctx.dim, 1.0)
    worst = max(r["residual"] for r in rows)
    ok = worst <= 1e-9 and dc["finite"] and not dc["edge_dominated"]
    rows.append({"mode": "decay", **dc, "ionization": sig, "energy": E, "gap": gap})
    return Result("ground-state", "infrared-identity-and-localization", _status(ok), worst, 1e-9, 0.0, 1e-9, rows)


def s_converge(m: Model, seed: int):
    from .flow import adjoint_apply
    ctx = m.context()
    c, V = m.coupling_vector(), m.V()
    Psi, _ = _psi(ctx)
    fine = 8 * max(1, -(-2 * m.steps // 8))  # divisible by every subsampling factor
    P = sample_paths("brownian", [0.0], TimeGrid(m.t, fine), min(m.paths, 2000), seed)
    est, rows = [], []
    for sub_m in (8, 4, 2, 1):
        sub = PathBundle("brownian", P.x, None, P.values[:, ::sub_m].copy(), P.seeds, TimeGrid(m.t, fine // sub_m))
        est.append(adjoint_apply(ctx, c, V, sub, Psi(sub.end)).mean(0))
    diffs = [float(np.linalg.norm(est[i] - est[i + 1])) for i in range(len(est) - 1)]
    for i, d in enumerate(diffs):
        rows.append({"steps": fine // 8 * 2 ** i, "error": d,
                     "ratio": diffs[i - 1] / d if i > 0 and d > 0 else None})
    ratios = [r["ratio"] for r in rows if r["ratio"] is not None]
    ok = all(1.5 <= r <= 2.5 for r in ratios)
    return Result("step-convergence", "weak-order", _status(ok), min(ratios), 2.0, None,
                  "successive ratio 2 within 25%", rows, {"x": "steps", "y": ["error"], "logy": True, "logx": True})


SUITES = {
    "pull-through": s_pull_through,
    "multi-commutator": s_multi_commutator,
    "weyl-vector": s_weyl_vector,
    "difference-identities": s_differences,
    "q-transform": s_q_transform,
    "inversion-identities": s_inversion,
    "flow-composition": s_composition,
    "fk-apply": s_fk_apply,
    "pathwise-bound": s_pathwise,
    "kernel-identities": s_kernel_identities,
    "continuity": s_continuity,
    "weighted-moment": s_weighted_moment,
    "weighted-norm": s_weighted_norm,
    "kernel-positivity": s_positivity,
    "difference-bounds": s_difference_bounds,
    "commutator-norms": s_commutator_norms,
    "kato": s_kato,
    "ground-state": s_groundstate,
    "step-convergence": s_converge,
}

GROUPS = {
    "validate": ["pull-through", "multi-commutator", "weyl-vector", "difference-identities", "q-transform",
                 "inversion-identities", "flow-composition"],
    "semigroup": ["fk-apply", "pathwise-bound", "kernel-identities", "continuity"],
    "bounds": ["weighted-moment", "weighted-norm"],
    "positivity": ["kernel-positivity"],
    "commutators": ["difference-bounds", "commutator-norms"],
    "kato": ["kato"],
    "groundstate": ["ground-state"],
    "converge": ["step-convergence"],
}


# ---- execution -------------------------------------------------------------------

def _run_suite(args):
    name, config_text, seed = args
    m = Model.from_config(parse_config(config_text))
    m.seed = seed
    t0 = time.perf_counter()
    try:
        res = SUITES[name](m, derive_seed(seed, name))
    except Exception as e:  # a crashing suite is a failure, not a crash of the run
        res = Result(name, name, "FAIL", detail={"error": f"{type(e).__name__}: {e}"})
    res = res if isinstance(res, list) else [res]
    return res, time.perf_counter() - t0


def _clean(x):
    """JSON-safe, deterministic representation (floats to 12 significant digits)."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not np.isfinite(x):
            return str(x)
        return float(f"{x:.12g}")
    if isinstance(x, complex):
        return {"re": _clean(x.real), "im": _clean(x.imag)}
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if x is None or isinstance(x, str):
        return x
    return str(x)


def suite_entry(r: Result) -> dict:
    return {"name": r.name, "paper_anchor": r.anchor, "status": r.status, "lhs": _f(r.lhs), "rhs": _f(r.rhs),
            "se": _f(r.se), "tolerance": r.tolerance, "runtime_s": None}


def write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: json.dumps(_clean(v)) if isinstance(v, (dict, list)) else _clean(v)
                        for k, v in r.items()})


def run(config_text: str, names: list[str], out: Path, seed: int, jobs: int = 1, plots: bool = True,
        label: str = "run") -> int:
    run_id = hashlib.sha256(f"{config_text}\n{seed}".encode()).hexdigest()[:12]
    outdir = Path(out) / run_id / label
    outdir.mkdir(parents=True, exist_ok=True)
    tasks = [(n, config_text, seed) for n in names]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            done = list(ex.map(_run_suite, tasks))
    else:
        done = [_run_suite(t) for t in tasks]
    results, timings = [], {}
    for (res, dt), name in zip(done, names):
        results.extend(res)
        timings[name] = round(dt, 3)
    report = {"run_id": run_id, "seed": int(seed), "config_echo": config_text,
              "suites": [suite_entry(r) for r in results]}
    (outdir / "report.json").write_text(json.dumps(_clean(report), indent=2) + "\n")
    (outdir / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    for r in results:
        write_csv(outdir / f"{r.name}.csv", r.rows)
        if r.detail:
            (outdir / f"{r.name}.detail.json").write_text(json.dumps(_clean(r.detail), indent=2) + "\n")
    if plots:
        from .plotting import render
        for r in results:
            render(r, outdir / f"{r.name}.png")
    for r in results:
        print(f"{r.status:4s}  {r.name}")
    print(f"report: {outdir / 'report.json'}")
    return 1 if any(r.status == "FAIL" for r in results) else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fockfk", description="Feynman-Kac experiments on a truncated Fock space.")
    p.add_argument("command", choices=sorted(GROUPS) + ["all", "schema"])
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, default=Path("fockfk-out"))
    p.add_argument("--seed", type=int)
    p.add_argument("--suites", help="comma separated subset of suite names")
    p.add_argument("--paths", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-plots", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(report_schema())
        return 0
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else DEFAULT_CONFIG
        cp = parse_config(text)
        if args.paths is not None:
            cp["run"]["paths"] = str(args.paths)
        if args.steps is not None:
            cp["run"]["steps"] = str(args.steps)
        seed = args.seed
        if seed is None and os.environ.get("FOCKFK_SEED"):
            seed = int(os.environ["FOCKFK_SEED"])
        if seed is None:
            seed = cp["run"].getint("seed")
        cp["run"]["seed"] = str(seed)
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp[sec].items())
            lines.append("")
        effective = "\n".join(lines)
        parse_config(effective)
        names = [n for g in (sorted(GROUPS) if args.command == "all" else [args.command]) for n in GROUPS[g]]
        if args.suites:
            wanted = [s.strip() for s in args.suites.split(",") if s.strip()]
            unknown = [s for s in wanted if s not in SUITES]
            if unknown:
                raise ConfigError(f"unknown suites: {', '.join(unknown)}")
            names = [n for n in names if n in wanted] or wanted
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except (ConfigError, OSError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    return run(effective, names, args.out, seed, args.jobs, not args.no_plots, args.command)


if __name__ == "__main__":
    sys.exit(main())
