"""Acceptance criteria on the reference model (N = 1e4, 200 steps, t = 0.5).

One status line per criterion is printed in the terminal summary.
"""
import time

import numpy as np
import pytest

from conftest import CRITERIA
from fockfk import runner
from fockfk.commlab import multi_commutator_residual
from fockfk.runner import DEFAULT_CONFIG, Model, parse_config
from fockfk.semigroup import kernel_identities_residual
from fockfk.stoch import derive_seed

pytestmark = pytest.mark.acceptance

SEED = 20240601


@pytest.fixture(scope="module")
def model():
    return Model.from_config(parse_config(DEFAULT_CONFIG))


def _verdict(n, ok, elapsed, limit, msg):
    status = "PASS" if ok and elapsed <= limit else "FAIL"
    line = f"criterion {n}: {status}  ({elapsed:.1f}s / {limit:.0f}s)  {msg}"
    CRITERIA.append(line)
    print("\n" + line)
    assert ok, msg
    assert elapsed <= limit, f"runtime {elapsed:.1f}s over {limit}s"


def _suite(fn, m, name):
    t0 = time.perf_counter()
    res = fn(m, derive_seed(SEED, name))
    return (res if isinstance(res, list) else [res]), time.perf_counter() - t0


def test_c01_fk_oracle(model):
    (r,), dt = _suite(runner.s_fk_apply, model, "fk-apply")
    msg = "; ".join(f"x={row['x']:+.1f} z={row['max_z']:.2f} se/scale={row['max_se'] / row['scale']:.3f}"
                    for row in r.rows)
    _verdict(1, r.status == "PASS", dt, 120, msg)


def test_c02_pathwise(model):
    (r,), dt = _suite(runner.s_pathwise, model, "pathwise-bound")
    d = r.rows[0]
    _verdict(2, r.status == "PASS", dt, 60, f"{d['n_ok']}/{d['n_paths']} paths ok, max_excess={r.lhs:.3e}")


def test_c03_kernel_identities(model):
    ctx = model.context()
    c, V = model.coupling_vector(), model.V()
    t0 = time.perf_counter()
    rows = []
    for i, (x, y) in enumerate(((0.0, 0.3), (-0.5, 0.2), (0.4, -0.3))):
        r = kernel_identities_residual(ctx, c, V, model.t, model.t / 2, [x], [y], model.paths,
                                       derive_seed(SEED, f"ck{i}"), model.steps, quad_paths=model.paths // 2)
        rows.append(r)
    dt = time.perf_counter() - t0
    ok = all(r["pass"] for r in rows)
    msg = "; ".join(f"sym {r['symmetry'] / r['symmetry_err']:.2f}se ck {r['ck'] / r['ck_err']:.2f}se" for r in rows)
    _verdict(3, ok, dt, 180, msg)


def test_c04_weighted_moment(model):
    (r,), dt = _suite(runner.s_weighted_moment, model, "weighted-moment")
    msg = "; ".join(f"eta{row['eta']}: {row['lhs']:.3g}-3*{row['se']:.2g} <= {row['rhs']:.3g}" for row in r.rows)
    _verdict(4, r.status == "PASS" and len(r.rows) == 3, dt, 120, msg)


def test_c05_exact_identities(model):
    t0 = time.perf_counter()
    (pt,), _ = _suite(runner.s_pull_through, model, "pull-through")
    ctx = model.context(6)
    rng = np.random.default_rng(5)
    F = (lambda u: 1 / (1 + u), lambda u: np.sqrt(1 + u), lambda u: np.exp(-0.3 * u))
    v = (model.omega, 0.5 + model.omega, np.full(ctx.K, 0.2))
    mc = 0.0
    for N, M in ((0, 0), (1, 0), (0, 1), (1, 1)):
        def state():
            s = rng.normal(size=ctx.dim) + 1j * rng.normal(size=ctx.dim)
            s[ctx.total_number() > ctx.n_max - N - M] = 0
            return s

        def coef():
            return rng.normal(size=ctx.K) + 1j * rng.normal(size=ctx.K)

        r = multi_commutator_residual(ctx, F, v, [coef() for _ in range(N)], [coef() for _ in range(M)],
                                      state(), state())
        mc = max(mc, r["residual"])
    (wv,), _ = _suite(runner.s_weyl_vector, model, "weyl-vector")
    dt = time.perf_counter() - t0
    ok = pt.lhs <= 1e-10 and mc <= 1e-10 and wv.lhs <= 1e-6
    _verdict(5, ok, dt, 30, f"pull-through={pt.lhs:.2e} multi-commutator={mc:.2e} weyl-vector={wv.lhs:.2e}")


def test_c06_positivity(model):
    (r,), dt = _suite(runner.s_positivity, model, "kernel-positivity")
    d = r.rows[0]
    msg = (f"probe_min={d['oracle_min']:.3e} raw_grid_min={d['raw_grid_min']:.3e} mc_min_z={d['mc_min_z']:.1f} "
           f"ground_min={d['ground_min']:.3e} gap={d['gap']:.3e}")
    ok = d["oracle_positive"] and d["mc_min_z"] > 3 and d["ground_positive"] and d["gap"] > 1e-6
    _verdict(6, ok, dt, 120, msg)


def test_c07_difference_bounds(model):
    res, dt = _suite(runner.s_difference_bounds, model, "difference-bounds")
    refused = [row for r in res for row in r.rows if row.get("status") == "REFUSED"]
    swept = {r.name: sum("ratio" in row for row in r.rows) for r in res}
    ok = all(r.status == "PASS" for r in res) and len(refused) == 1 and all(n == 4 for n in swept.values())
    msg = "; ".join(f"{r.name[len('difference-bound-'):]} max_delta={r.lhs:.3f}" for r in res)
    _verdict(7, ok, dt, 30, msg + f"; refused={len(refused)}")


def test_c08_commutator_norms(model):
    (r,), dt = _suite(runner.s_commutator_norms, model, "commutator-norms")
    _verdict(8, r.status == "PASS", dt, 60, f"max refinement change={r.lhs:.3f} over {len(r.rows)} rows")


def test_c09_continuity(model):
    res, dt = _suite(runner.s_continuity, model, "continuity")
    msg = "; ".join(f"{r.name[len('continuity-'):]}={r.status}" for r in res)
    _verdict(9, all(r.status == "PASS" for r in res), dt, 300, msg)


def test_c10_ground_state(model):
    (r,), dt = _suite(runner.s_groundstate, model, "ground-state")
    dec = r.rows[-1]
    msg = f"ir_residual={r.lhs:.2e} decay_finite={dec['finite']} edge={dec['edge_dominated']}"
    _verdict(10, r.status == "PASS", dt, 60, msg)


def test_c11_kato(model):
    res, dt = _suite(runner.s_kato, model, "kato")
    by = {r.name: r for r in res}
    need = ("kato-seminorm", "kato-trivial", "khasminskii")
    ok = all(by[n].status == "PASS" for n in need) and len(by["kato-seminorm"].rows) == 5
    semi = [round(x["seminorm"], 4) for x in by["kato-seminorm"].rows]
    msg = f"trivial_err={by['kato-trivial'].lhs:.1e} seminorm={semi} R2={by['khasminskii'].lhs:.3f}"
    _verdict(11, ok, dt, 120, msg)


def test_c12_reproducible(tmp_path):
    t0 = time.perf_counter()
    args = ["semigroup", "--suites", "fk-apply,pathwise-bound,kernel-identities", "--paths", "300",
            "--steps", "40", "--no-plots", "--seed", "7"]
    runner.main(args + ["--jobs", "1", "--out", str(tmp_path / "a")])
    runner.main(args + ["--jobs", "2", "--out", str(tmp_path / "b")])
    (a,) = (tmp_path / "a").glob("*/*/report.json")
    (b,) = (tmp_path / "b").glob("*/*/report.json")
    same = a.read_bytes() == b.read_bytes()
    _verdict(12, same, time.perf_counter() - t0, 300, f"report.json byte-identical={same}")
