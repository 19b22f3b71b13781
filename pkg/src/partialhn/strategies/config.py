from __future__ import annotations

from dataclasses import asdict, dataclass

from ..numerics import ContractError


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings shared by all strategies.

    ``alpha`` is the learning rate of the main model (φ and, for the
    baselines, h); ``beta`` that of the hypernetwork. Optimisation is plain
    SGD without momentum.
    """

    alpha: float = 0.001
    beta: float = 0.001
    lam: float = 0.5
    epochs: int = 1
    batch_size: int = 32
    seed: int = 0
    lookahead: bool = True
    replay_coef: float = 1.0
    buffer_capacity: int = 200
    replay_batch_size: int | None = None
    early_stop: bool = False
    eval_batch_size: int = 256

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ContractError(f"learning rates must be positive, got alpha={self.alpha} beta={self.beta}")
        if not 0.0 <= self.lam <= 1.0:
            raise ContractError(f"lam must lie in [0, 1], got {self.lam}")
        if self.epochs < 0:
            raise ContractError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ContractError("batch sizes must be >= 1")
        if self.replay_coef < 0:
            raise ContractError(f"replay_coef must be >= 0, got {self.replay_coef}")
        if self.buffer_capacity < 0:
            raise ContractError(f"buffer_capacity must be >= 0, got {self.buffer_capacity}")

    def as_dict(self) -> dict:
        return asdict(self)
