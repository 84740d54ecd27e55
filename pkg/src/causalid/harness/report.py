"""Correlation matrices and loss-curve plots from run outputs."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import yaml

TRACE_PREFIX = ["seed", "t", "sample", "intervention_kind", "intervention_values"]
PLOT_COLUMNS = ["label", "t", "mean", "std", "n_seeds"]


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], rows[1:]


def correlation_matrix(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson correlations of the columns; constant columns get 0 off-diagonal and a flag."""
    data = np.asarray(data, dtype=float)
    if data.shape[0] < 2:
        raise ValueError("correlation needs at least 2 rows")
    centered = data - data.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    constant = norms <= 1e-12 * np.maximum(1.0, np.abs(data).max(axis=0))
    safe = np.where(constant, 1.0, norms)
    z = centered / safe
    rho = np.clip(z.T @ z, -1.0, 1.0)
    rho[constant, :] = 0.0
    rho[:, constant] = 0.0
    np.fill_diagonal(rho, 1.0)
    return rho, constant


def emit_correlation(trace_path, out_path=None) -> Path:
    """Write the variable-by-variable correlation matrix of a trace CSV."""
    header, rows = _read_csv(trace_path)
    cols = [c for c in header if c not in TRACE_PREFIX]
    idx = [header.index(c) for c in cols]
    data = np.array([[float(r[i]) for i in idx] for r in rows])
    rho, constant = correlation_matrix(data)
    out_path = Path(out_path) if out_path else Path(trace_path).with_name("correlation.csv")
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", *cols, "constant"])
        for c, row, flag in zip(cols, rho, constant):
            w.writerow([c, *(f"{x:.6f}" for x in row), int(flag)])
    return out_path


def loss_curves(records_path) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Per-t mean and standard deviation of ``loss_total`` over seeds."""
    header, rows = _read_csv(records_path)
    it, il = header.index("t"), header.index("loss_total")
    by_t: dict[int, list[float]] = {}
    for r in rows:
        by_t.setdefault(int(r[it]), []).append(float(r[il]))
    return {t: (np.mean(v), np.std(v), len(v)) for t, v in sorted(by_t.items())}


def _switches(records_path) -> list[int]:
    cfg_path = Path(records_path).with_name("config.resolved.yaml")
    if not cfg_path.exists():
        return []
    env = (yaml.safe_load(cfg_path.read_text()) or {}).get("environment", {})
    if env.get("name") == "mesh" and env.get("scenario") == 2:
        return [int(env.get("switch_t", 11))]
    return []


def render_plot(plot_data_path, png_path, switches=()) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    header, rows = _read_csv(plot_data_path)
    curves: dict[str, list] = {}
    for label, t, mean, std, _ in rows:
        curves.setdefault(label, []).append((int(t), float(mean), float(std)))
    fig, ax = plt.subplots(figsize=(7, 3.5), dpi=100)
    for label, pts in curves.items():
        t, m, s = (np.array(x) for x in zip(*pts))
        ax.plot(t, m, label=label)
        ax.fill_between(t, m - s, m + s, alpha=0.25)
    for sw in switches:
        ax.axvline(sw, color="k", linestyle="--", linewidth=1)
        ax.annotate("system change", (sw, ax.get_ylim()[1]), ha="left", va="top", fontsize=8)
    ax.set_xlabel("time step t")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, metadata={"Software": None})
    plt.close(fig)
    return Path(png_path)


def emit_plots(records, out_dir, switch_t=None) -> tuple[Path, Path]:
    """Loss curves (mean +- 1 std over seeds), one per records file, as PNG and CSV.

    ``records`` maps labels to records.csv paths (a list labels each by its
    directory name). Scenario-2 switch steps are read from a sibling
    ``config.resolved.yaml`` unless ``switch_t`` is given.
    """
    if not isinstance(records, dict):
        records = {Path(p).parent.name or Path(p).stem: p for p in records}
    if not records:
        raise ValueError("no records given")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / "loss_curves.csv"
    switches = set() if switch_t is None else {int(switch_t)}
    with open(data_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for label, path in records.items():
            if switch_t is None:
                switches.update(_switches(path))
            for t, (mean, std, n) in loss_curves(path).items():
                w.writerow([label, t, repr(float(mean)), repr(float(std)), n])
    png = render_plot(data_path, out_dir / "loss_curves.png", sorted(switches))
    return png, data_path
