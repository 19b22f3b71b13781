"""Task-conditioned weight generation for the stateless suffix of a model.

A task id selects a learnable embedding, a two-hidden-layer MLP trunk maps it
to a conditioning vector ``c`` of width ``h_out``, and one head per target
layer turns ``c`` into that layer's weights:

* conv layers use channel-wise generation: every output channel owns a
  learnable lookup vector of size ``d``; ``[c, lookup[o]]`` is mapped by one
  shared linear layer to the ``in * k * k`` values of output channel ``o``'s
  kernel.
* batch-norm layers get a direct map ``c -> (gamma, beta)``.
* linear layers get a direct map ``c -> (W, b)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import load_tensors, save_tensors
from .models import DecomposedModel, LayerSpec, MainModel, decompose
from .numerics import ContractError, Rng, Tensor
from .numerics import functional as F


@dataclass
class HyperConfig:
    emb_dim: int = 32
    hidden: tuple[int, int] = (50, 32)
    d: int = 8
    seed: int = 0
    emb_std: float = 1.0

    @property
    def h_out(self) -> int:
        return self.hidden[-1]


def conv_head_param_count(in_channels: int, out_channels: int, kernel_size: int, h_out: int, d: int) -> int:
    """Parameters of a channel-wise conv head: lookup table plus shared map."""
    return d * out_channels + (h_out + d) * in_channels * kernel_size * kernel_size


class ConvChannelwiseHead:
    def __init__(self, spec: LayerSpec, h_out: int, d: int, rng: Rng, dtype):
        if d < 1:
            raise ContractError(f"lookup dimension d must be >= 1, got {d}")
        self.spec = spec
        self.slot = f"{spec.name}.weight"
        self.shape = spec.param_shapes()[self.slot]
        out_c, in_c, k, _ = self.shape
        self.d = d
        fan = in_c * k * k
        # assume unit-scale head inputs; BN downstream absorbs the kernel scale
        bound = math.sqrt(3.0) * math.sqrt(2.0 / fan) / math.sqrt(h_out + d)
        lb = 1.0 / math.sqrt(d)
        self.init = {
            f"head.{spec.name}.lookup": rng.child("lookup").uniform(-lb, lb, (out_c, d), dtype),
            f"head.{spec.name}.weight": rng.child("weight").uniform(-bound, bound, (fan, h_out + d), dtype),
        }

    def __call__(self, c: Tensor, params) -> dict[str, Tensor]:
        out_c = self.shape[0]
        lookup = params[f"head.{self.spec.name}.lookup"]
        x = F.concat([F.broadcast_to(c, (out_c, c.shape[1])), lookup], axis=1)
        kernels = F.linear(x, params[f"head.{self.spec.name}.weight"])
        return {self.slot: F.reshape(kernels, self.shape)}


class BatchNormHead:
    def __init__(self, spec: LayerSpec, h_out: int, rng: Rng, dtype):
        self.spec = spec
        c = spec.out_channels
        self.channels = c
        bound = 0.1 / math.sqrt(h_out)
        self.init = {
            f"head.{spec.name}.weight": rng.child("weight").uniform(-bound, bound, (2 * c, h_out), dtype),
            f"head.{spec.name}.bias": np.concatenate([np.ones(c), np.zeros(c)]).astype(dtype),
        }

    def __call__(self, c: Tensor, params) -> dict[str, Tensor]:
        n = self.spec.name
        out = F.reshape(F.linear(c, params[f"head.{n}.weight"], params[f"head.{n}.bias"]), (-1,))
        ch = self.channels
        return {f"{n}.weight": F.take(out, 0, ch), f"{n}.bias": F.take(out, ch, 2 * ch)}


class LinearHead:
    def __init__(self, name: str, out_features: int, in_features: int, h_out: int, rng: Rng, dtype):
        self.name = name
        self.out_features = out_features
        self.in_features = in_features
        n_out = out_features * in_features + out_features
        bound = math.sqrt(3.0) / math.sqrt(in_features) / math.sqrt(h_out)
        self.init = {
            f"head.{name}.weight": rng.child("weight").uniform(-bound, bound, (n_out, h_out), dtype),
            f"head.{name}.bias": np.zeros(n_out, dtype),
        }

    def __call__(self, c: Tensor, params) -> dict[str, Tensor]:
        n = self.name
        flat = F.reshape(F.linear(c, params[f"head.{n}.weight"], params[f"head.{n}.bias"]), (-1,))
        w_size = self.out_features * self.in_features
        return {
            f"{n}.weight": F.reshape(F.take(flat, 0, w_size), (self.out_features, self.in_features)),
            f"{n}.bias": F.take(flat, w_size, flat.shape[0]),
        }


class HyperNetwork:
    """Generates a WeightSet (slot name -> tensor) for a task id.

    ``params`` holds the live parameters ψ. ``generate`` accepts an alternative
    parameter mapping so that snapshots and virtual updates never touch ψ.
    """

    def __init__(self, target: DecomposedModel, config: HyperConfig | None = None, dtype=None):
        self.config = config or HyperConfig()
        cfg = self.config
        if cfg.d < 1:
            raise ContractError(f"lookup dimension d must be >= 1, got {cfg.d}")
        self.dtype = np.dtype(dtype or target.model.dtype)
        self.manifest = dict(target.omega_shapes)
        if not self.manifest:
            raise ContractError("hypernetwork target has no stateless slots")
        self.rng = Rng(cfg.seed).child("hypernet")
        self.params: dict[str, Tensor] = {}

        widths = [cfg.emb_dim, *cfg.hidden]
        self.trunk_layers = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            r = self.rng.child("trunk", i)
            bound = 1.0 / math.sqrt(fan_in)
            self._add(f"trunk.{i}.weight", r.child("w").uniform(-bound, bound, (fan_out, fan_in), self.dtype))
            self._add(f"trunk.{i}.bias", r.child("b").uniform(-bound, bound, fan_out, self.dtype))
            self.trunk_layers.append(i)

        self.heads = []
        h_out = cfg.h_out
        for spec in target.h_specs:
            r = self.rng.child("head", spec.name)
            if spec.kind == "conv":
                head = ConvChannelwiseHead(spec, h_out, cfg.d, r, self.dtype)
            elif spec.kind == "batchnorm":
                head = BatchNormHead(spec, h_out, r, self.dtype)
            elif spec.kind == "linear":
                out_f, in_f = self.manifest[f"{spec.name}.weight"]
                head = LinearHead(spec.name, out_f, in_f, h_out, r, self.dtype)
            else:
                continue
            for n, v in head.init.items():
                self._add(n, v)
            self.heads.append(head)
        self._check_coverage()

    def _add(self, name, value):
        self.params[name] = Tensor(value, requires_grad=True, name=name)

    def _check_coverage(self):
        c = Tensor(np.zeros((1, self.config.h_out), dtype=self.dtype))
        produced = {}
        for head in self.heads:
            for n, t in head(c, self.params).items():
                if n in produced:
                    raise ContractError(f"slot {n} produced by more than one head")
                produced[n] = t.shape
        if set(produced) != set(self.manifest):
            raise ContractError(
                f"heads do not cover the manifest: missing {sorted(set(self.manifest) - set(produced))}, "
                f"extra {sorted(set(produced) - set(self.manifest))}"
            )
        for n, shape in produced.items():
            if tuple(shape) != tuple(self.manifest[n]):
                raise ContractError(f"head for {n} produces {shape}, slot expects {self.manifest[n]}")

    # -- embeddings ------------------------------------------------------------
    @staticmethod
    def embedding_name(task_id: int) -> str:
        return f"embed.{int(task_id)}"

    def ensure_task(self, task_id: int) -> Tensor:
        """Return the embedding row for task_id, creating it on first use."""
        name = self.embedding_name(task_id)
        if name not in self.params:
            row = self.rng.child("embed", int(task_id)).normal(0.0, self.config.emb_std, self.config.emb_dim, self.dtype)
            self._add(name, row)
        return self.params[name]

    @property
    def task_ids(self) -> list[int]:
        return sorted(int(n.split(".")[1]) for n in self.params if n.startswith("embed."))

    # -- generation ----------------------------------------------------------------
    def conditioning(self, task_id: int, params=None) -> Tensor:
        if params is None:
            params = self.params
            self.ensure_task(task_id)
        name = self.embedding_name(task_id)
        if name not in params:
            raise ContractError(f"no embedding for task {task_id}")
        x = F.reshape(params[name], (1, self.config.emb_dim))
        for i in self.trunk_layers:
            x = F.relu(F.linear(x, params[f"trunk.{i}.weight"], params[f"trunk.{i}.bias"]))
        return x

    def generate(self, task_id: int, params=None) -> dict[str, Tensor]:
        c = self.conditioning(task_id, params)
        p = self.params if params is None else params
        out = {}
        for head in self.heads:
            out.update(head(c, p))
        return out

    def flat_output(self, task_id: int, params=None) -> Tensor:
        ws = self.generate(task_id, params)
        return F.concat([F.reshape(ws[n], (-1,)) for n in sorted(ws)], axis=0)

    # -- bookkeeping ---------------------------------------------------------------
    def param_names(self, task_ids=None) -> list[str]:
        names = [n for n in self.params if not n.startswith("embed.")]
        ids = self.task_ids if task_ids is None else task_ids
        return names + [self.embedding_name(t) for t in ids]

    def num_parameters(self, num_tasks: int | None = None) -> int:
        body = sum(p.size for n, p in self.params.items() if not n.startswith("embed."))
        rows = len(self.task_ids) if num_tasks is None else num_tasks
        return body + rows * self.config.emb_dim

    def manifest_entries(self) -> list[dict]:
        return [{"name": n, "shape": list(s)} for n, s in sorted(self.manifest.items())]


@dataclass(frozen=True)
class HNSnapshot:
    """Immutable copy of hypernetwork parameters taken at an experience boundary."""

    params: dict = field(repr=False)
    task_ids: tuple[int, ...]

    @classmethod
    def take(cls, hn: HyperNetwork) -> "HNSnapshot":
        frozen = {}
        for n, p in hn.params.items():
            arr = p.data.copy()
            arr.setflags(write=False)
            frozen[n] = Tensor(arr, requires_grad=False, name=n)
        return cls(frozen, tuple(hn.task_ids))


def store_snapshot(hn: HyperNetwork) -> HNSnapshot:
    return HNSnapshot.take(hn)


def generate_from_snapshot(hn: HyperNetwork, snap: HNSnapshot, task_id: int) -> dict[str, Tensor]:
    return hn.generate(task_id, params=snap.params)


def save_hypernet(path, hn: HyperNetwork, snapshot: HNSnapshot | None = None, extra: dict | None = None):
    cfg = hn.config
    tensors = {n: p.data for n, p in hn.params.items()}
    if snapshot is not None:
        tensors.update({f"snapshot/{n}": p.data for n, p in snapshot.params.items()})
    meta = {"kind": "hypernetwork", "emb_dim": cfg.emb_dim, "hidden": list(cfg.hidden), "d": cfg.d, "seed": cfg.seed}
    meta.update(extra or {})
    return save_tensors(path, tensors, meta, hn.manifest_entries())


def load_hypernet_tensors(path) -> tuple[dict, dict | None, dict, list]:
    """Return (live params, snapshot params or None, meta, manifest)."""
    tensors, meta, manifest = load_tensors(path)
    live = {n: v for n, v in tensors.items() if not n.startswith("snapshot/")}
    snap = {n[len("snapshot/") :]: v for n, v in tensors.items() if n.startswith("snapshot/")}
    return live, (snap or None), meta, manifest


def snapshot_from_arrays(arrays: dict) -> HNSnapshot:
    frozen = {}
    for n, a in arrays.items():
        a = a.copy()
        a.setflags(write=False)
        frozen[n] = Tensor(a, requires_grad=False, name=n)
    ids = tuple(sorted(int(n.split(".")[1]) for n in arrays if n.startswith("embed.")))
    return HNSnapshot(frozen, ids)


def full_hypernet_size(model: MainModel, k: int, classifier_classes: int, num_tasks: int, config: HyperConfig) -> int:
    d = decompose(model, k, classifier_classes)
    return HyperNetwork(d, config).num_parameters(num_tasks)


def compression_report(
    model: MainModel,
    config: HyperConfig | None = None,
    ds=(4, 8, 16, 32, 64),
    num_tasks: int = 20,
    classifier_classes: int | None = None,
    k: int = 0,
) -> list[dict]:
    """Total hypernetwork parameters per lookup size d, relative to the largest d.

    Counts come from enumerating the parameters of actually constructed
    hypernetworks (embedding rows for ``num_tasks`` tasks included).
    """
    base = config or HyperConfig()
    classes = classifier_classes or model.num_classes
    totals = {}
    for d in ds:
        cfg = replace(base, d=d)
        totals[d] = full_hypernet_size(model, k, classes, num_tasks, cfg)
    ref = totals[max(ds)]
    return [
        {"d": d, "total_hn_params": totals[d], "compression_pct": round(100.0 * (1.0 - totals[d] / ref))}
        for d in ds
    ]
