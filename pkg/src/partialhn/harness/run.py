from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..checkpoint import save_tensors
from ..hypernet import HyperConfig
from ..metrics import AccuracyMatrix, MemoryEntry, aca, forgetting, learning_accuracy, memory_hn, memory_lr, write_memory_csv
from ..models import build_slim_resnet, decompose, save_model
from ..streams import (
    Stream,
    load_cifar100_binary,
    make_noisy_stream,
    make_split_stream,
    make_synthetic_splits,
    make_two_experience_stream,
)
from ..strategies import JsonlLog, LatentReplay, Naive, PartialHN, Strategy, TrainConfig
from .config import RunConfig

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


@dataclass
class RunArtifacts:
    out_dir: Path
    matrix: AccuracyMatrix
    files: list[str] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)

    def path(self, name: str) -> Path:
        return self.out_dir / name


def _datasets(cfg: RunConfig, seed: int):
    if cfg.source == "cifar100":
        root = Path(cfg.data_dir)
        return load_cifar100_binary(root / "train.bin"), load_cifar100_binary(root / "test.bin")
    return make_synthetic_splits(
        cfg.num_classes, cfg.train_per_class, cfg.test_per_class, cfg.image_size, seed=seed, noise=cfg.noise
    )


def build_stream(cfg: RunConfig) -> Stream:
    train, test = _datasets(cfg, cfg.stream_seed)
    source = f"{cfg.source}(seed={cfg.stream_seed})" if cfg.source == "synthetic" else f"cifar100({cfg.data_dir})"
    if cfg.stream == "split":
        return make_split_stream(train, test, cfg.n_experiences, cfg.classes_per_exp, cfg.stream_seed, source)
    if cfg.stream in ("noisy", "noisy-clean"):
        return make_noisy_stream(train, test, cfg.stream_seed, clean=cfg.stream == "noisy-clean", source=source)
    # two-experience: the second dataset is a synthetic one with fresh templates
    size = train.image_shape[-1]
    second = make_synthetic_splits(
        cfg.num_classes, cfg.train_per_class, cfg.test_per_class, size, seed=cfg.stream_seed + 1, noise=cfg.noise
    )
    return make_two_experience_stream(
        (train, test), second, cfg.classes_per_exp, cfg.stream_seed, (source, f"synthetic(seed={cfg.stream_seed + 1})")
    )


def build_strategy(cfg: RunConfig, num_classes: int) -> Strategy:
    dtype = np.float64 if cfg.precision == "float64" else np.float32
    model = build_slim_resnet(num_classes, nf=cfg.nf, seed=cfg.seed, dtype=dtype)
    d = decompose(model, cfg.k, num_classes)
    tc = TrainConfig(**cfg.train_kwargs())
    if cfg.strategy == "partial-hn":
        hc = HyperConfig(emb_dim=cfg.emb_dim, d=cfg.hn_d, seed=cfg.seed, emb_std=cfg.emb_std)
        return PartialHN(d, tc, hc)
    if cfg.strategy == "latent-replay":
        return LatentReplay(d, tc)
    return Naive(d, tc)


def memory_entries(strategy: Strategy) -> list[MemoryEntry]:
    model = strategy.d.model
    entries = [MemoryEntry("main_model_parameters", memory_hn(model.num_parameters()))]
    if isinstance(strategy, PartialHN):
        entries.append(MemoryEntry("hypernetwork_snapshot", memory_hn(strategy.hn.num_parameters())))
    elif isinstance(strategy, LatentReplay) and strategy.use_buffer and strategy.cfg.buffer_capacity > 0:
        entries.append(MemoryEntry("replay_buffer_capacity", memory_lr(strategy.latent_shape, strategy.cfg.buffer_capacity)))
        entries.append(MemoryEntry("replay_buffer_used", strategy.buffer.nbytes()))
    return entries


def _write_metrics(path: Path, rows: list[dict]) -> None:
    keys = ["after_exp", "aca", "forgetting", "learning_accuracy", "wall_time_s", "steps", "final_train_loss"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row[k] is None else row[k]) for k in keys})


def _save_checkpoints(out: Path, strategy: Strategy, cfg: RunConfig) -> list[str]:
    names = ["model.phnt"]
    save_model(out / "model.phnt", strategy.d, {"run": cfg.run_name})
    if isinstance(strategy, PartialHN):
        strategy.save(out / "hypernet.phnt")
        names.append("hypernet.phnt")
    elif isinstance(strategy, LatentReplay):
        tensors = {n: p.data for n, p in strategy.heads.named_parameters().items()}
        if isinstance(strategy, LatentReplay) and not isinstance(strategy, Naive):
            z, y, t = strategy.buffer.arrays()
            tensors.update({"buffer/latents": z, "buffer/labels": y, "buffer/tasks": t})
        save_tensors(out / "heads.phnt", tensors, {"kind": "task_heads", "strategy": strategy.name})
        names.append("heads.phnt")
    return names


def write_manifest(out: Path, names: list[str]) -> Path:
    entries = []
    for name in sorted(set(names)):
        data = (out / name).read_bytes()
        entries.append({"name": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
    path = out / MANIFEST
    path.write_text(json.dumps({"files": entries}, indent=2) + "\n", encoding="utf-8")
    return path


def run(cfg: RunConfig) -> RunArtifacts:
    """Train through the stream, evaluating after every experience, and write artifacts."""
    cfg.validate()
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    files = ["config.txt"]

    stream = build_stream(cfg)
    (out / "provenance.txt").write_text(stream.provenance_header(), encoding="utf-8")
    files.append("provenance.txt")

    strategy = build_strategy(cfg, stream[0].num_classes)
    matrix = AccuracyMatrix(len(stream))
    rows = []
    with JsonlLog(out / "steps.jsonl") as sink:
        for i, exp in enumerate(stream):
            summary = strategy.train_experience(exp, sink)
            t = i + 1
            matrix.set_row(t, strategy.evaluate(stream, t))
            rows.append(
                {
                    "after_exp": t,
                    "aca": f"{aca(matrix, t):.6f}",
                    "forgetting": f"{forgetting(matrix, t):.6f}" if t >= 2 else None,
                    "learning_accuracy": f"{learning_accuracy(matrix, t):.6f}",
                    "wall_time_s": f"{summary.wall_time:.3f}",
                    "steps": summary.steps,
                    "final_train_loss": f"{summary.epoch_losses[-1]:.6f}" if summary.epoch_losses else None,
                }
            )
            log.info("%s: experience %d/%d accuracies %s", cfg.run_name, t, len(stream), np.round(matrix.R[i, :t], 3).tolist())
    files.append("steps.jsonl")

    matrix.to_csv(out / "accuracy_matrix.csv")
    _write_metrics(out / "metrics.csv", rows)
    write_memory_csv(out / "memory.csv", memory_entries(strategy))
    files += ["accuracy_matrix.csv", "metrics.csv", "memory.csv"]
    if cfg.checkpoints:
        files += _save_checkpoints(out, strategy, cfg)
    write_manifest(out, files)
    return RunArtifacts(out, matrix, files + [MANIFEST], rows)
