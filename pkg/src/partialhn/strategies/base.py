from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ..models import DecomposedModel
from ..numerics import ContractError, Rng, Tensor
from ..streams import Experience
from .config import TrainConfig

PLATEAU_TOL = 1e-3
PLATEAU_EPOCHS = 3


@dataclass
class StepReport:
    """One optimizer step; ``experience`` is the 1-based position in the stream."""

    step: int
    experience: int
    ce: float
    reg: float | None = None
    cos: float | None = None
    replay_ce: float | None = None
    wall_time: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperienceSummary:
    experience: int
    task_id: int
    epoch_losses: list[float] = field(default_factory=list)
    steps: int = 0
    wall_time: float = 0.0
    stopped_early: bool = False


class JsonlLog:
    """Line-delimited JSON sink for step reports (truncates an existing file)."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8")

    def __call__(self, report: StepReport) -> None:
        self._fh.write(json.dumps(report.as_dict()) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def plateaued(losses: list[float], tol: float = PLATEAU_TOL, window: int = PLATEAU_EPOCHS) -> bool:
    """True when each of the last ``window`` epochs improved by less than ``tol`` (relative)."""
    if len(losses) <= window:
        return False
    recent = losses[-window - 1 :]
    for prev, cur in zip(recent[:-1], recent[1:]):
        if prev - cur >= tol * abs(prev):
            return False
    return True


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float((logits.argmax(axis=1) == labels).mean())


class Strategy:
    """Shared experience loop. Subclasses supply the per-step updates.

    The first experience trains g and h jointly and freezes g at the end.
    Afterwards g runs in eval mode only, so its outputs for a whole experience
    are computed once and the steps operate on cached latents.
    """

    name = "strategy"

    def __init__(self, decomposed: DecomposedModel, cfg: TrainConfig):
        self.d = decomposed
        self.cfg = cfg
        self.rng = Rng(cfg.seed).child("strategy", self.name)
        self.seen_tasks: list[int] = []
        self.step_count = 0
        self._latent_cache: dict[tuple[int, str], np.ndarray] = {}
        self.latent_shape: tuple[int, ...] | None = None

    # -- hooks ---------------------------------------------------------------------
    def _begin_experience(self, exp: Experience) -> None:
        pass

    def _first_step(self, x: np.ndarray, y: np.ndarray, task_id: int) -> StepReport:
        raise NotImplementedError

    def _step(self, z: np.ndarray, y: np.ndarray, task_id: int) -> StepReport:
        raise NotImplementedError

    def _end_experience(self, exp: Experience, first: bool) -> None:
        pass

    def logits(self, z: np.ndarray, task_id: int) -> Tensor:
        raise NotImplementedError

    # -- shared machinery -----------------------------------------------------------
    def latents(self, images: np.ndarray) -> np.ndarray:
        """g(x) in eval mode, batched."""
        bs = self.cfg.eval_batch_size
        dtype = self.d.model.dtype
        if self.d.k == 0:
            return images.astype(dtype, copy=False)
        out = [self.d.g(images[i : i + bs].astype(dtype, copy=False), train=False).data for i in range(0, len(images), bs)]
        return np.concatenate(out, axis=0)

    def batches(self, n: int, exp_index: int, epoch: int):
        order = self.rng.child("batches", exp_index, epoch).permutation(n)
        bs = self.cfg.batch_size
        chunks = [order[i : i + bs] for i in range(0, n, bs)]
        if len(chunks) > 1 and len(chunks[-1]) < 2:
            chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
        return chunks

    def train_experience(self, exp: Experience, on_step: Callable[[StepReport], None] | None = None) -> ExperienceSummary:
        if len(exp.train.labels) == 0:
            raise ContractError(f"experience {exp.task_id} has no training samples")
        if exp.task_id in self.seen_tasks:
            raise ContractError(f"task {exp.task_id} was already trained")
        t0 = time.perf_counter()
        first = not self.d.frozen
        index = len(self.seen_tasks)
        shape = self.d.latent_shape(exp.train.images.shape[-1])
        if self.latent_shape is not None and shape != self.latent_shape:
            raise ContractError(f"experience {exp.task_id} yields latents {shape}, expected {self.latent_shape}")
        self.latent_shape = shape
        self._begin_experience(exp)
        x_all = exp.train.images.astype(self.d.model.dtype, copy=False) if first else self.latents(exp.train.images)
        y_all = exp.train.labels
        summary = ExperienceSummary(index + 1, exp.task_id)
        for epoch in range(self.cfg.epochs):
            losses = []
            for idx in self.batches(len(y_all), index, epoch):
                s0 = time.perf_counter()
                step = self._first_step if first else self._step
                report = step(x_all[idx], y_all[idx], exp.task_id)
                report.step = self.step_count
                report.experience = index + 1
                report.wall_time = time.perf_counter() - s0
                self.step_count += 1
                summary.steps += 1
                losses.append(report.ce)
                if on_step is not None:
                    on_step(report)
            summary.epoch_losses.append(float(np.mean(losses)))
            if self.cfg.early_stop and plateaued(summary.epoch_losses):
                summary.stopped_early = True
                break
        if first:
            self.d.freeze()
        self._end_experience(exp, first)
        self.seen_tasks.append(exp.task_id)
        self.d.assert_phi_intact()
        summary.wall_time = time.perf_counter() - t0
        return summary

    def _test_latents(self, exp: Experience) -> np.ndarray:
        key = (exp.task_id, "test")
        if key not in self._latent_cache:
            self._latent_cache[key] = self.latents(exp.test.images)
        return self._latent_cache[key]

    def evaluate(self, stream, upto_t: int) -> list[float]:
        """Test accuracy on experiences 1..upto_t using each task's own weights."""
        if not self.d.frozen:
            raise ContractError("evaluate is only defined once the first experience has been trained")
        accs = []
        bs = self.cfg.eval_batch_size
        for exp in list(stream)[:upto_t]:
            z = self._test_latents(exp)
            logits = np.concatenate([self.logits(z[i : i + bs], exp.task_id).data for i in range(0, len(z), bs)])
            accs.append(accuracy(logits, exp.test.labels))
        return accs
