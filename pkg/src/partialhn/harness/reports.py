"""Report generation from stored run artifacts.

Everything here reads files written by :func:`partialhn.harness.run.run` (or a
config alone) and writes CSV or SVG next to them. Nothing trains.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import matplotlib
from matplotlib.figure import Figure

from ..hypernet import HyperConfig, HyperNetwork, compression_report
from ..metrics import AccuracyMatrix, format_mib, memory_hn, memory_lr
from ..models import build_slim_resnet, decompose, latent_shape
from .config import RunConfig

DEPTHS = range(5)
COMPRESSION_DS = (4, 8, 16, 32, 64)
# Deterministic SVG output: no creation date, fixed salt for element ids.
SVG_METADATA = {"Date": None}
SVG_SALT = "partialhn"


def _hn_config(cfg: RunConfig, d: int | None = None) -> HyperConfig:
    return HyperConfig(emb_dim=cfg.emb_dim, d=cfg.hn_d if d is None else d, seed=cfg.seed, emb_std=cfg.emb_std)


def _write_rows(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path


def compression_rows(cfg: RunConfig, ds=COMPRESSION_DS) -> list[dict]:
    model = build_slim_resnet(cfg.classes_per_exp, nf=cfg.nf, seed=cfg.seed)
    return compression_report(model, _hn_config(cfg), ds, num_tasks=cfg.n_experiences, classifier_classes=cfg.classes_per_exp)


def emit_compression_table(cfg: RunConfig, out_path=None) -> list[dict]:
    """Full hypernetwork size for each lookup size d, written as CSV when ``out_path`` is given."""
    rows = compression_rows(cfg)
    if out_path is not None:
        _write_rows(Path(out_path), rows)
    return rows


def memory_rows(cfg: RunConfig) -> list[dict]:
    """Latent-replay buffer bytes and hypernetwork bytes for every freeze depth.

    The replay rows follow the buffer capacity in ``cfg``; the hypernetwork
    rows count parameters of the constructed partial hypernetwork at each k
    with one embedding per experience.
    """
    model = build_slim_resnet(cfg.classes_per_exp, nf=cfg.nf, seed=cfg.seed)
    rows = []
    for k in DEPTHS:
        shape = latent_shape(cfg.nf, k, cfg.image_size)
        nbytes = memory_lr(shape, cfg.buffer_capacity)
        rows.append({"method": "latent-replay", "k": k, "detail": "x".join(map(str, shape)), "bytes": nbytes, "mib": format_mib(nbytes)})
    for k in DEPTHS:
        hn = HyperNetwork(decompose(model, k, cfg.classes_per_exp), _hn_config(cfg))
        count = hn.num_parameters(cfg.n_experiences)
        nbytes = memory_hn(count)
        rows.append({"method": "partial-hn", "k": k, "detail": count, "bytes": nbytes, "mib": format_mib(nbytes)})
    return rows


def emit_memory_table(cfg: RunConfig, out_path=None) -> list[dict]:
    rows = memory_rows(cfg)
    if out_path is not None:
        _write_rows(Path(out_path), rows)
    return rows


def matrix_series(R) -> list[tuple[list[int], list[float]]]:
    """One (x, y) series per experience i: accuracy on i after each t >= i."""
    R = R.R if isinstance(R, AccuracyMatrix) else np.asarray(R, dtype=float)
    series = []
    for i in range(R.shape[0]):
        xs = [t + 1 for t in range(i, R.shape[0]) if not np.isnan(R[t, i])]
        series.append((xs, [float(R[x - 1, i]) for x in xs]))
    return series


def _save(fig: Figure, path: Path) -> Path:
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT}):
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
    return path


def _accuracy_axes(fig: Figure, n: int):
    ax = fig.add_subplot(1, 1, 1)
    ax.set_xlabel("experiences trained")
    ax.set_ylabel("test accuracy")
    ax.set_xticks(range(1, n + 1))
    ax.set_ylim(0.0, 1.0)
    ax.grid(alpha=0.3)
    return ax


def plot_matrix(csv_path, out_path=None) -> Path:
    """Accuracy on every experience over time, one line per experience."""
    csv_path = Path(csv_path)
    m = AccuracyMatrix.from_csv(csv_path)
    out = Path(out_path) if out_path else csv_path.with_name("accuracy_over_time.svg")
    fig = Figure(figsize=(6, 4))
    ax = _accuracy_axes(fig, m.size)
    for i, (xs, ys) in enumerate(matrix_series(m)):
        if xs:
            ax.plot(xs, ys, marker="o", label=f"experience {i + 1}")
    ax.legend(fontsize="small")
    return _save(fig, out)


def plot_experience_over_time(runs: dict[str, Path], out_path, experience: int = 1) -> Path:
    """Accuracy on one experience across several runs, one line per run label."""
    fig = Figure(figsize=(6, 4))
    n = 1
    ax = None
    for label, csv_path in runs.items():
        m = AccuracyMatrix.from_csv(csv_path)
        n = max(n, m.size)
        ax = ax or _accuracy_axes(fig, m.size)
        xs, ys = matrix_series(m)[experience - 1]
        ax.plot(xs, ys, marker="o", label=label)
    if ax is None:
        raise FileNotFoundError("no accuracy matrices given")
    ax.set_xticks(range(1, n + 1))
    ax.set_title(f"accuracy on experience {experience}")
    ax.legend(fontsize="small")
    return _save(fig, Path(out_path))


def read_steps(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def plot_cosine(steps_path, out_path=None) -> Path | None:
    """Cosine between the CE and regularizer gradients per step; None when the log has none."""
    steps_path = Path(steps_path)
    records = [r for r in read_steps(steps_path) if r.get("cos") is not None]
    if not records:
        return None
    out = Path(out_path) if out_path else steps_path.with_name("gradient_cosine.svg")
    fig = Figure(figsize=(6, 3))
    ax = fig.add_subplot(1, 1, 1)
    for exp in sorted({r["experience"] for r in records}):
        rs = [r for r in records if r["experience"] == exp]
        ax.plot([r["step"] for r in rs], [r["cos"] for r in rs], lw=0.8, label=f"experience {exp}")
    ax.axhline(0.0, color="black", lw=0.5)
    ax.set_ylim(-1.0, 1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("cosine(g1, g2)")
    ax.legend(fontsize="small")
    return _save(fig, out)
