from __future__ import annotations

import copy

import numpy as np

from ..hypernet import HNSnapshot, HyperConfig, HyperNetwork, save_hypernet
from ..models import DecomposedModel
from ..numerics import ContractError, Tensor, grad, sgd_step
from ..numerics import functional as F
from ..streams import Experience
from .base import StepReport, Strategy
from .config import TrainConfig
from .core import lookahead_gradient, output_distance, regularized_gradient


class PartialHN(Strategy):
    """Hypernetwork-generated h with an output-preserving regulariser.

    Experience 1 trains φ and ψ jointly with cross-entropy. At every later
    step the update is either the look-ahead combination or, with
    ``lookahead=False``, the gradient of L_CE + λ·L_H at ψ.

    The second-order look-ahead term would slot into :func:`lookahead_gradient`
    as a Hessian-vector correction to g2; only the first-order form is built.
    """

    name = "partial-hn"

    def __init__(self, decomposed: DecomposedModel, cfg: TrainConfig, hn_config: HyperConfig | None = None):
        super().__init__(decomposed, cfg)
        self.hn = HyperNetwork(decomposed, hn_config or HyperConfig(seed=cfg.seed))
        self.snapshot: HNSnapshot | None = None
        self.snapshot_bn: dict[int, dict] = {}
        self.bn: dict[int, dict] = {}
        self._targets: dict[int, np.ndarray] = {}

    @property
    def psi(self) -> dict[str, Tensor]:
        return self.hn.params

    # -- losses ------------------------------------------------------------------------
    def _ce_fn(self, z, y, task_id):
        bn = self.bn[task_id]

        def ce(params):
            return F.cross_entropy(self.d.h(z, self.hn.generate(task_id, params), bn, train=True), y)

        return ce

    def _reg_fn(self, params):
        return output_distance(self.hn, self._targets, params)

    def _require_snapshot(self):
        if self.snapshot is None or not self._targets:
            raise ContractError("partial-hn step needs a snapshot from a previous experience")

    # -- experience hooks --------------------------------------------------------------
    def _begin_experience(self, exp: Experience) -> None:
        self.hn.ensure_task(exp.task_id)
        self.bn[exp.task_id] = self.d.fresh_h_bn_state()

    def _first_step(self, x, y, task_id) -> StepReport:
        return self.train_first_step(x, y, task_id)

    def _step(self, z, y, task_id) -> StepReport:
        if self.cfg.lookahead:
            return self.lookahead_step(z, y, task_id)
        return self.naive_regularized_step(z, y, task_id)

    def _end_experience(self, exp: Experience, first: bool) -> None:
        self.take_snapshot()

    def take_snapshot(self) -> None:
        self.snapshot = HNSnapshot.take(self.hn)
        self.snapshot_bn = copy.deepcopy(self.bn)
        self._targets = {t: self.hn.flat_output(t, self.snapshot.params).data for t in self.snapshot.task_ids}

    # -- steps -------------------------------------------------------------------------
    def train_first_step(self, x, y, task_id) -> StepReport:
        """Joint SGD on φ (rate alpha) and ψ (rate beta) with plain cross-entropy."""
        phi = self.d.trainable_phi()
        psi = list(self.psi.values())
        logits = self.d.forward(x, self.hn.generate(task_id), bn_state=self.bn[task_id], train=True)
        loss = F.cross_entropy(logits, y)
        gs = grad(loss, phi + psi, allow_unused=True)
        sgd_step(phi, gs[: len(phi)], self.cfg.alpha)
        sgd_step(psi, gs[len(phi) :], self.cfg.beta)
        return StepReport(0, 0, float(loss.data))

    def ce_step(self, z, y, task_id) -> StepReport:
        """ψ <- ψ - beta·∂L_CE/∂ψ, with no regularisation."""
        psi = list(self.psi.values())
        loss = self._ce_fn(z, y, task_id)(self.psi)
        gs = grad(loss, psi, allow_unused=True)
        sgd_step(psi, gs, self.cfg.beta)
        return StepReport(0, 0, float(loss.data))

    def lookahead_step(self, z, y, task_id) -> StepReport:
        self._require_snapshot()
        res = lookahead_gradient(self.psi, self._ce_fn(z, y, task_id), self._reg_fn, self.cfg.beta, self.cfg.lam)
        sgd_step(list(self.psi.values()), res.combined, self.cfg.beta)
        return StepReport(0, 0, res.ce, res.reg, res.cos)

    def naive_regularized_step(self, z, y, task_id) -> StepReport:
        self._require_snapshot()
        ce_fn = self._ce_fn(z, y, task_id)
        gs, ce, reg = regularized_gradient(self.psi, ce_fn, self._reg_fn, self.cfg.lam)
        sgd_step(list(self.psi.values()), gs, self.cfg.beta)
        return StepReport(0, 0, ce, reg, None)

    def regularizer_value(self, params=None) -> float:
        self._require_snapshot()
        return float(self._reg_fn(params).data)

    # -- evaluation ------------------------------------------------------------------
    def logits(self, z, task_id) -> Tensor:
        return self.d.h(z, self.hn.generate(task_id), self.bn[task_id], train=False)

    def save(self, path):
        extra = {"strategy": self.name, "seen_tasks": self.seen_tasks}
        arrays_bn = {
            f"{t}/{layer}/{key}": v.tolist() for t, st in self.snapshot_bn.items() for layer, s in st.items() for key, v in s.items()
        }
        extra["snapshot_bn"] = arrays_bn
        return save_hypernet(path, self.hn, self.snapshot, extra)

