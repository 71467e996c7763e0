"""Figures for suite results (matplotlib, headless)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _num(v):
    try:
        x = float(v)
    except (TypeError, ValueError):
        return None
    return x if np.isfinite(x) else None


def render(result, path) -> bool:
    """Line plot when the suite declares series, otherwise lhs against rhs. Returns False if nothing to draw."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    spec = result.plot
    drawn = False
    if spec and result.rows:
        xs = [_num(r.get(spec["x"])) for r in result.rows]
        for key in spec["y"]:
            pts = [(x, _num(r.get(key))) for x, r in zip(xs, result.rows)]
            pts = [(x, y) for x, y in pts if x is not None and y is not None and (not spec.get("logy") or y > 0)]
            if pts:
                ax.plot(*zip(*pts), marker="o", label=key)
                drawn = True
        ax.set_xlabel(spec["x"])
        if spec.get("logy") and drawn:
            ax.set_yscale("log")
        if spec.get("logx") and drawn:
            ax.set_xscale("log")
        if drawn:
            ax.legend()
    elif _num(result.lhs) is not None and _num(result.rhs) is not None:
        ax.bar(["lhs", "rhs"], [_num(result.lhs), _num(result.rhs)], color=["tab:blue", "tab:gray"])
        drawn = True
    if not drawn:
        plt.close(fig)
        return False
    ax.set_title(f"{result.name}: {result.status}")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return True
