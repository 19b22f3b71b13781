from __future__ import annotations

import numpy as np

from ..numerics import ContractError, Rng


class ReplayBuffer:
    """Class-balanced reservoir of latent exemplars.

    Classes are keyed by ``(task_id, label)``. The capacity is split as evenly
    as possible across every class seen so far (the first ``capacity % n``
    classes in key order get one extra slot). Within a class, entries are a
    uniform reservoir sample of everything offered for that class.
    """

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 0:
            raise ContractError(f"capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self._rng = Rng(seed).child("replay_buffer").generator
        self._slots: dict[tuple[int, int], list[np.ndarray]] = {}
        self._seen: dict[tuple[int, int], int] = {}
        self.latent_shape: tuple[int, ...] | None = None

    def __len__(self) -> int:
        return sum(len(v) for v in self._slots.values())

    def quotas(self) -> dict[tuple[int, int], int]:
        keys = sorted(self._slots)
        if not keys:
            return {}
        base, extra = divmod(self.capacity, len(keys))
        return {key: base + (1 if i < extra else 0) for i, key in enumerate(keys)}

    def class_counts(self) -> dict[tuple[int, int], int]:
        return {key: len(v) for key, v in sorted(self._slots.items())}

    def _rebalance(self) -> None:
        for key, quota in self.quotas().items():
            slot = self._slots[key]
            if len(slot) > quota:
                keep = np.sort(self._rng.choice(len(slot), size=quota, replace=False))
                self._slots[key] = [slot[i] for i in keep]

    def add(self, z: np.ndarray, label: int, task_id: int) -> None:
        z = np.asarray(z)
        if self.latent_shape is None:
            self.latent_shape = z.shape
        elif z.shape != self.latent_shape:
            raise ContractError(f"latent shape {z.shape} does not match buffer shape {self.latent_shape}")
        key = (int(task_id), int(label))
        if key not in self._slots:
            self._slots[key] = []
            self._seen[key] = 0
            self._rebalance()
        self._seen[key] += 1
        quota = self.quotas()[key]
        slot = self._slots[key]
        if len(slot) < quota:
            slot.append(z.copy())
        elif quota > 0:
            j = int(self._rng.integers(0, self._seen[key]))
            if j < quota:
                slot[j] = z.copy()

    def update(self, latents: np.ndarray, labels, task_id: int) -> None:
        for z, y in zip(latents, labels):
            self.add(z, int(y), task_id)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All entries as (latents, labels, task_ids), in class-key order."""
        zs, ys, ts = [], [], []
        for (t, y), slot in sorted(self._slots.items()):
            zs.extend(slot)
            ys.extend([y] * len(slot))
            ts.extend([t] * len(slot))
        if not zs:
            shape = (0,) + (self.latent_shape or ())
            return np.zeros(shape, np.float32), np.zeros(0, np.int64), np.zeros(0, np.int64)
        return np.stack(zs), np.asarray(ys, np.int64), np.asarray(ts, np.int64)

    def sample(self, n: int, rng: np.random.Generator):
        z, y, t = self.arrays()
        if len(y) == 0 or n <= 0:
            return z[:0], y[:0], t[:0]
        idx = np.sort(rng.choice(len(y), size=min(n, len(y)), replace=False))
        return z[idx], y[idx], t[idx]

    def nbytes(self) -> int:
        if self.latent_shape is None:
            return 0
        return len(self) * int(np.prod(self.latent_shape)) * 4
