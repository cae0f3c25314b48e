"""Static charts for the experiment tables (needs matplotlib)."""

from __future__ import annotations

from pathlib import Path

from .experiments import MAP_HEADER, QUANTILES, VARIANTS, Table


def _pyplot():
    try:
        import matplotlib
    except ImportError as e:
        raise RuntimeError("plotting needs matplotlib; install the 'plot' extra") from e
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_table(table: Table, out_dir) -> Path:
    plt = _pyplot()
    path = Path(out_dir) / f"{table.name}.png"
    fig = {"cpu_per_packet": _cpu, "latency_dist": _latency,
           "mitigation_map": _map, "headroom": _headroom}[table.name](plt, table)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def _cpu(plt, t):
    fig, ax = plt.subplots(figsize=(6, 4))
    for v in VARIANTS:
        pts = [(r[0], r[2]) for r in t.rows if r[1] == v]
        if pts:
            ax.plot(*zip(*pts), marker="o", label=v)
    ax.set_xscale("log")
    ax.set_xlabel("packet rate [pkt/s]")
    ax.set_ylabel("CPU time per packet [us]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def _latency(plt, t):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for y, row in enumerate(t.rows):
        vals = [v for v in row[1:] if v is not None]
        if vals:
            ax.hlines(y, min(vals), max(vals), color="grey")
            ax.plot(vals, [y] * len(vals), "|", markersize=14)
    ax.set_yticks(range(len(t.rows)), [r[0] for r in t.rows])
    ax.set_xlabel(f"ISR duration [us], quantiles {', '.join(f'{q:g}%' for q in QUANTILES)}")
    fig.tight_layout()
    return fig


def _map(plt, t):
    systems = sorted({r[0] for r in t.rows})
    fig, axes = plt.subplots(2, len(systems), figsize=(5 * len(systems), 8), squeeze=False)
    for j, system in enumerate(systems):
        rows = [r for r in t.rows if r[0] == system]
        hp = sorted({r[1] for r in rows})
        lp = sorted({r[2] for r in rows})
        for i, col in enumerate(("cpu_util", "hp_liveness")):
            k = MAP_HEADER.index(col)
            grid = [[next(r[k] for r in rows if r[1] == h and r[2] == l) for h in hp] for l in lp]
            ax = axes[i][j]
            im = ax.imshow(grid, origin="lower", aspect="auto", vmin=0, vmax=1 if col == "hp_liveness" else None)
            ax.set_xticks(range(len(hp)), [f"{h:g}" for h in hp], rotation=60, fontsize=7)
            ax.set_yticks(range(len(lp)), [f"{l:g}" for l in lp], fontsize=7)
            ax.set_xlabel("HP rate [pkt/s]")
            ax.set_ylabel("LP rate [pkt/s]")
            ax.set_title(f"{system}: {col}")
            fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return fig


def _headroom(plt, t):
    fig, ax = plt.subplots(figsize=(4, 3.5))
    ax.bar([r[0] for r in t.rows], [r[3] for r in t.rows])
    ax.set_ylabel("polling onset [pkt/s]")
    fig.tight_layout()
    return fig
