from __future__ import annotations

import numpy as np

from ..models import DecomposedModel, MultiHeadClassifier
from ..numerics import ContractError, Tensor, grad, sgd_step
from ..numerics import functional as F
from ..streams import Experience
from .base import StepReport, Strategy
from .buffer import ReplayBuffer
from .config import TrainConfig


class LatentReplay(Strategy):
    """Multi-head network whose h is rehearsed on stored g-latents.

    The h body is shared across tasks, each task owns a linear head, and the
    h batch-norm running statistics are shared, as in a single network.
    The buffer is filled from the frozen g: with the whole first experience
    once g is frozen, then after every step with the current batch.
    """

    name = "latent-replay"
    use_buffer = True

    def __init__(self, decomposed: DecomposedModel, cfg: TrainConfig):
        super().__init__(decomposed, cfg)
        m = decomposed.model
        self.heads = MultiHeadClassifier(m.feature_dim, seed=cfg.seed, dtype=m.dtype)
        self.h_names = [n for n in decomposed.omega_shapes if not n.startswith("classifier.")]
        self.buffer = ReplayBuffer(cfg.buffer_capacity if self.use_buffer else 0, seed=cfg.seed)
        self._replay_rng = self.rng.child("replay_sample").generator

    @property
    def h_params(self) -> list[Tensor]:
        return [self.d.model.params[n] for n in self.h_names]

    def features(self, z, train: bool) -> Tensor:
        m = self.d.model
        x = m.run_blocks(z, self.d.h_range[0], 5, m.params, m.bn_state, train)
        return F.global_avg_pool(x)

    def _head_logits(self, feats: Tensor, task_id: int) -> Tensor:
        head = self.heads[task_id]
        return F.linear(feats, head["classifier.weight"], head["classifier.bias"])

    def logits(self, z, task_id) -> Tensor:
        return self._head_logits(self.features(z, train=False), task_id)

    def _begin_experience(self, exp: Experience) -> None:
        self.heads.add_head(exp.task_id, exp.num_classes)

    def _first_step(self, x, y, task_id) -> StepReport:
        params = self.d.trainable_phi() + self.h_params + list(self.heads[task_id].values())
        feats = self.features(self.d.g(x, train=True), train=True)
        loss = F.cross_entropy(self._head_logits(feats, task_id), y)
        sgd_step(params, grad(loss, params, allow_unused=True), self.cfg.alpha)
        return StepReport(0, 0, float(loss.data))

    def _step(self, z, y, task_id) -> StepReport:
        return self.latent_replay_step(z, y, task_id)

    def replay_loss(self, feats: Tensor, yr, tr) -> tuple[Tensor, list[int]]:
        """Mean CE of replayed features, each row routed to its own task head.

        Rows of a buffer sample are grouped by task, so each task's rows form a
        contiguous slice of ``feats``.
        """
        total, tasks = None, []
        for t in np.unique(tr):
            rows = np.flatnonzero(tr == t)
            lo, hi = int(rows[0]), int(rows[-1]) + 1
            part = F.cross_entropy(self._head_logits(F.take(feats, lo, hi), int(t)), yr[lo:hi])
            term = F.mul(part, (hi - lo) / len(tr))
            total = term if total is None else F.add(total, term)
            tasks.append(int(t))
        return total, tasks

    def latent_replay_step(self, z, y, task_id) -> StepReport:
        """CE on the current batch plus ``replay_coef`` times CE on a buffer sample.

        Current and replayed latents go through h as one concatenated batch, so
        batch-norm statistics cover both (and a one-latent sample is fine).
        """
        if self.latent_shape is not None and tuple(z.shape[1:]) != self.latent_shape:
            raise ContractError(f"latent shape {z.shape[1:]} does not match depth {self.d.k} ({self.latent_shape})")
        c = self.cfg.replay_coef
        replay = self.use_buffer and c > 0 and len(self.buffer) > 0
        n = len(y)
        tasks, replay_ce = [task_id], None
        if replay:
            zr, yr, tr = self.buffer.sample(self.cfg.replay_batch_size or self.cfg.batch_size, self._replay_rng)
            if zr.shape[1:] != z.shape[1:]:
                raise ContractError(f"replayed latent shape {zr.shape[1:]} != {z.shape[1:]}")
            feats = self.features(np.concatenate([z, zr.astype(z.dtype)]), train=True)
            ce = F.cross_entropy(self._head_logits(F.take(feats, 0, n), task_id), y)
            rl, replay_tasks = self.replay_loss(F.take(feats, n, n + len(yr)), yr, tr)
            loss = F.add(ce, F.mul(rl, c))
            replay_ce = float(rl.data)
            tasks += [t for t in replay_tasks if t != task_id]
        else:
            ce = F.cross_entropy(self._head_logits(self.features(z, train=True), task_id), y)
            loss = ce
        params = self.h_params + [p for t in tasks for p in self.heads[t].values()]
        sgd_step(params, grad(loss, params, allow_unused=True), self.cfg.alpha)
        if self.use_buffer:
            self.buffer_update(z, y, task_id)
        return StepReport(0, 0, float(ce.data), replay_ce=replay_ce)

    def buffer_update(self, latents, labels, task_id) -> None:
        if self.use_buffer:
            self.buffer.update(latents, labels, task_id)

    def _end_experience(self, exp: Experience, first: bool) -> None:
        if first and self.use_buffer:
            self.buffer_update(self.latents(exp.train.images), exp.train.labels, exp.task_id)


class Naive(LatentReplay):
    """Same network as :class:`LatentReplay`, fine-tuned without rehearsal."""

    name = "naive"
    use_buffer = False
