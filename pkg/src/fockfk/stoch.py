"""Brownian motions and bridges on uniform time grids, with counter-based seeding."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def path_seed(master_seed: int, index: int) -> int:
    """Per-path 64-bit seed; depends only on (master_seed, index)."""
    return splitmix64((splitmix64(int(master_seed) & MASK64) + int(index)) & MASK64)


def derive_seed(master_seed: int, label: str) -> int:
    h = splitmix64(int(master_seed) & MASK64)
    for ch in label.encode():
        h = splitmix64(h ^ ch)
    return h


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    steps: int

    def __post_init__(self):
        if self.t0 <= 0 or self.steps < 1:
            raise ValueError("need t0 > 0 and steps >= 1")

    @property
    def dt(self) -> float:
        return self.t0 / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.t0, self.steps + 1)


@dataclass(frozen=True)
class PathBundle:
    kind: str
    x: np.ndarray
    y: np.ndarray | None
    values: np.ndarray  # (N, steps + 1, nu)
    seeds: np.ndarray
    grid: TimeGrid
    reversed: bool = False

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def nu(self) -> int:
        return self.values.shape[2]

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=1)

    @property
    def end(self) -> np.ndarray:
        return self.values[:, -1]

    def subset(self, sl) -> "PathBundle":
        return replace(self, values=self.values[sl], seeds=self.seeds[sl])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_index", "node_index"] + [f"x{a}" for a in range(self.nu)])
            for i in range(self.N):
                for k in range(self.values.shape[1]):
                    w.writerow([i, k] + [repr(float(v)) for v in self.values[i, k]])


def _gaussian_increments(seeds: np.ndarray, steps: int, nu: int, dt: float) -> np.ndarray:
    out = np.empty((len(seeds), steps, nu))
    for i, s in enumerate(seeds):
        out[i] = np.random.default_rng(int(s)).standard_normal((steps, nu))
    return out * np.sqrt(dt)


def sample_paths(kind: str, x, grid: TimeGrid, N: int, master_seed: int, y=None,
                 start_index: int = 0) -> PathBundle:
    """Brownian paths from x, or bridges from x to y, on ``grid``.

    Path i uses the seed ``path_seed(master_seed, start_index + i)`` so a
    bundle can be produced in chunks without changing any path.
    """
    if N < 1:
        raise ValueError("need at least one path")
    x = np.atleast_1d(np.asarray(x, float))
    nu = x.size
    seeds = np.array([path_seed(master_seed, start_index + i) for i in range(N)], dtype=np.uint64)
    inc = _gaussian_increments(seeds, grid.steps, nu, grid.dt)
    B = np.concatenate([np.zeros((N, 1, nu)), np.cumsum(inc, axis=1)], axis=1)
    if kind == "brownian":
        vals = x + B
        yv = None
    elif kind == "bridge":
        if y is None:
            raise ValueError("bridge paths need an end point y")
        yv = np.atleast_1d(np.asarray(y, float))
        s = (grid.nodes / grid.t0)[None, :, None]
        vals = x + s * (yv - x) + (B - s * B[:, -1:, :])
        vals[:, -1, :] = yv
    else:
        raise ValueError(f"unknown path kind {kind!r}")
    vals[:, 0, :] = x
    return PathBundle(kind, x, yv, vals, seeds, grid)


def reverse(paths: PathBundle) -> PathBundle:
    """(R X)_tau = X_{t - tau}."""
    return replace(paths, values=paths.values[:, ::-1, :].copy(), reversed=not paths.reversed)


def integrate_potential(V, paths: PathBundle, rule: str = "midpoint") -> np.ndarray:
    """Quadrature of int_0^t V(X_s) ds per path; non-finite results are NaN."""
    X = paths.values
    dt = paths.grid.dt
    if rule == "midpoint":
        vals = V(0.5 * (X[:, 1:] + X[:, :-1]))
        out = vals.sum(axis=1) * dt
    elif rule == "trapezoid":
        vals = V(X)
        out = (vals[:, 1:] + vals[:, :-1]).sum(axis=1) * dt / 2
    elif rule == "left":
        out = V(X[:, :-1]).sum(axis=1) * dt
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    out = np.asarray(out, float)
    out[~np.isfinite(out)] = np.nan
    return out


def null_set_hits(paths: PathBundle, points) -> int:
    """Number of paths whose nodes or midpoints coincide exactly with a point."""
    pts = np.atleast_2d(np.asarray(points, float))
    X = paths.values
    mids = 0.5 * (X[:, 1:] + X[:, :-1])
    hits = np.zeros(paths.N, bool)
    for p in pts:
        hits |= np.any(np.all(X == p, axis=-1), axis=1) | np.any(np.all(mids == p, axis=-1), axis=1)
    return int(hits.sum())


def heat_kernel(t: float, x, y, nu: int | None = None) -> np.ndarray:
    """p_t(x, y) = (2 pi t)^{-nu/2} exp(-|x - y|^2 / 2t); broadcasts over leading axes."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("heat kernel needs t > 0")
    x, y = np.asarray(x, float), np.asarray(y, float)
    if nu is None:
        nu = x.shape[-1] if x.ndim else 1
    if x.ndim == 0 or (x.ndim == 1 and nu == 1 and x.shape[-1] != 1):
        d2 = (x - y) ** 2
    else:
        d2 = np.sum((x - y) ** 2, axis=-1)
    return (2 * np.pi * t) ** (-nu / 2) * np.exp(-d2 / (2 * t))
