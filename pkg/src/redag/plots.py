"""Figure rendering for sweep and comparison reports.

Every function takes the same tables that are written to CSV and saves one
PNG. The Agg backend is forced so this works headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

POLICY_STYLE = {
    "redag": dict(color="tab:blue", label="rate-priority"),
    "fifo-multi": dict(color="tab:orange", label="FIFO multi-worker"),
    "fifo-single": dict(color="tab:red", label="FIFO single-worker"),
}


def _rc():
    plt.rcParams.update({
        "figure.figsize": (6.4, 4.0),
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 10,
        "legend.fontsize": 8,
    })


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_mr_vs_workers(table: Sequence[dict], path) -> Path:
    _rc()
    fig, ax = plt.subplots()
    for pol in sorted({e["policy"] for e in table}):
        rows = [e for e in table if e["policy"] == pol]
        xs = [e["workers"] for e in rows]
        style = POLICY_STYLE.get(pol, {})
        ax.plot(xs, [e["combined_mr_mean"] for e in rows], "o-", color=style.get("color"),
                label=f"{style.get('label', pol)} combined")
        if any(e["dag1_mr_mean"] is not None for e in rows):
            ax.plot(xs, [e["dag1_mr_mean"] for e in rows], "s--", color=style.get("color"), alpha=0.6,
                    label="DAG 1")
        if any(e["dag2_mr_mean"] is not None for e in rows):
            ax.plot(xs, [e["dag2_mr_mean"] for e in rows], "^:", color=style.get("color"), alpha=0.6,
                    label="DAG 2")
    ax.set_xlabel("worker threads")
    ax.set_ylabel("deadline miss rate")
    ax.legend()
    return _save(fig, path)


def plot_mr_vs_scale(table: Sequence[dict], path) -> Path:
    _rc()
    fig, ax = plt.subplots()
    for pol in sorted({e["policy"] for e in table}):
        rows = [e for e in table if e["policy"] == pol]
        style = POLICY_STYLE.get(pol, {})
        ax.plot([e["deadline_scale"] for e in rows], [e["combined_mr_mean"] for e in rows], "o-",
                color=style.get("color"), label=style.get("label", pol))
    ax.set_xlabel("deadline scale")
    ax.set_ylabel("combined miss rate")
    ax.legend()
    return _save(fig, path)


def plot_cap_heatmap(table: Sequence[dict], path, policy: str = "redag") -> Path:
    _rc()
    rows = [e for e in table if e["policy"] == policy]
    order = lambda c: (isinstance(c, str), c)  # noqa: E731
    c1 = sorted({e["cap1"] for e in rows}, key=order)
    c2 = sorted({e["cap2"] for e in rows}, key=order)
    lookup = {(e["cap1"], e["cap2"]): e["combined_mr_mean"] for e in rows}
    grid = [[lookup.get((a, b), float("nan")) for b in c2] for a in c1]
    fig, ax = plt.subplots(figsize=(4.8, 4.0))
    im = ax.imshow(grid, cmap="viridis_r", origin="lower", aspect="auto")
    for i, a in enumerate(c1):
        for j, b in enumerate(c2):
            v = lookup.get((a, b))
            if v is None:
                ax.text(j, i, "not run", ha="center", va="center", fontsize=7, color="gray")
            else:
                # viridis_r is pale at the low end, so switch to dark text there
                color = "k" if im.norm(v) < 0.5 else "w"
                ax.text(j, i, f"{v:.3f}", ha="center", va="center", fontsize=8, color=color)
    ax.set_xticks(range(len(c2)), [str(c) for c in c2])
    ax.set_yticks(range(len(c1)), [str(c) for c in c1])
    ax.set_xlabel("max_active DAG 2")
    ax.set_ylabel("max_active DAG 1")
    ax.grid(False)
    fig.colorbar(im, ax=ax, label="combined miss rate")
    return _save(fig, path)


def plot_response_cdf(cdfs: Mapping[str, Sequence[tuple[int, float]]], path) -> Path:
    _rc()
    fig, ax = plt.subplots()
    for pol, table in sorted(cdfs.items()):
        if not table:
            continue
        style = POLICY_STYLE.get(pol, {})
        xs = [v / 1000 for v, _ in table]
        ys = [f for _, f in table]
        ax.step(xs, ys, where="post", color=style.get("color"), label=style.get("label", pol))
    ax.set_xscale("log")
    ax.set_xlabel("response time (ms)")
    ax.set_ylabel("cumulative fraction")
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower right")
    return _save(fig, path)


def plot_policy_comparison(rows: Sequence[dict], path) -> Path:
    _rc()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.6))
    names = [r["policy"] for r in rows]
    colors = [POLICY_STYLE.get(n, {}).get("color", "gray") for n in names]
    ax1.bar(names, [r["combined_mr"] or 0 for r in rows], color=colors)
    ax1.set_ylabel("combined miss rate")
    ax2.bar(names, [(r["p99_us"] or 0) / 1000 for r in rows], color=colors)
    ax2.set_ylabel("p99 response (ms)")
    for ax in (ax1, ax2):
        ax.tick_params(axis="x", labelrotation=20)
    return _save(fig, path)
