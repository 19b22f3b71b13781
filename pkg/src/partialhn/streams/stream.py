from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import ContractError, Rng
from .datasets import Dataset
from .transforms import TRANSFORMS

NOISY_SCHEDULE = ("none", "solarize", "gaussian_blur", "contrast_blur_grayscale")


@dataclass
class Experience:
    train: Dataset
    test: Dataset
    task_id: int
    classes: list[int]
    transform: str = "none"

    @property
    def num_classes(self) -> int:
        return len(self.classes)


@dataclass
class Stream:
    experiences: list[Experience]
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.experiences)

    def __iter__(self):
        return iter(self.experiences)

    def __getitem__(self, i) -> Experience:
        return self.experiences[i]

    def provenance_header(self) -> str:
        lines = ["# stream provenance"]
        for key in sorted(self.provenance):
            value = self.provenance[key]
            if isinstance(value, (list, tuple)):
                value = " ".join(str(v) for v in value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"


def class_order(num_classes: int, seed: int) -> list[int]:
    return [int(c) for c in Rng(seed).child("class_order").permutation(num_classes)]


def _experiences(train, test, order, n_exp, per_exp, transforms=None):
    exps = []
    for i in range(n_exp):
        cls = order[i * per_exp : (i + 1) * per_exp]
        tr, te = train.select(cls), test.select(cls)
        name = "none" if transforms is None else transforms[i]
        if name != "none":
            fn = TRANSFORMS[name]
            tr = Dataset(fn(tr.images), tr.labels, tr.num_classes)
            te = Dataset(fn(te.images), te.labels, te.num_classes)
        exps.append(Experience(tr, te, i, list(cls), name))
    return exps


def make_split_stream(train: Dataset, test: Dataset, n_experiences: int, classes_per_exp: int, seed: int = 0, source: str = "dataset") -> Stream:
    """Shuffle classes by seed and partition them into consecutive experiences."""
    if n_experiences * classes_per_exp > train.num_classes:
        raise ContractError(
            f"{n_experiences} experiences x {classes_per_exp} classes needs "
            f"{n_experiences * classes_per_exp} classes, dataset has {train.num_classes}"
        )
    order = class_order(train.num_classes, seed)
    exps = _experiences(train, test, order, n_experiences, classes_per_exp)
    prov = {"type": "split", "source": source, "seed": seed, "class_order": order[: n_experiences * classes_per_exp]}
    return Stream(exps, prov)


def make_noisy_stream(train: Dataset, test: Dataset, seed: int = 0, clean: bool = False, source: str = "dataset") -> Stream:
    """Four experiences of five classes; experiences 2-4 are corrupted.

    ``clean=True`` builds the twin stream with the same class partition and no
    corruption.
    """
    if train.num_classes < 20:
        raise ContractError(f"noisy stream needs at least 20 classes, dataset has {train.num_classes}")
    order = class_order(train.num_classes, seed)
    schedule = ("none",) * 4 if clean else NOISY_SCHEDULE
    exps = _experiences(train, test, order, 4, 5, schedule)
    prov = {"type": "clean" if clean else "noisy", "source": source, "seed": seed, "class_order": order[:20], "transforms": list(schedule)}
    return Stream(exps, prov)


def make_two_experience_stream(first: tuple[Dataset, Dataset], second: tuple[Dataset, Dataset], classes_per_exp: int = 5, seed: int = 0, sources=("a", "b")) -> Stream:
    """Cross-dataset stream: random classes from ``first`` then from ``second``."""
    exps, orders = [], []
    for i, (tr, te) in enumerate((first, second)):
        if classes_per_exp > tr.num_classes:
            raise ContractError(f"dataset {sources[i]} has only {tr.num_classes} classes")
        order = class_order(tr.num_classes, seed + i)[:classes_per_exp]
        orders.append(order)
        exps.append(Experience(tr.select(order), te.select(order), i, order))
    prov = {"type": "two-experience", "source": "->".join(sources), "seed": seed, "class_order": orders[0] + orders[1]}
    return Stream(exps, prov)
