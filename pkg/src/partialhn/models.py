"""Slim ResNet-18, depth-wise decomposition and freezing.

The network is an ordered list of six blocks: the stem (conv + BN), four
residual stages of two basic blocks each, and the head (global average pool +
linear classifier). Freeze depth ``k`` puts the stem and stages ``1..k`` in the
frozen prefix ``g``; everything after goes to the suffix ``h`` whose weights
are supplied per call.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from .checkpoint import load_tensors, save_tensors
from .numerics import ContractError, Rng, Tensor
from .numerics import functional as F

NUM_BLOCKS = 6  # stem, stage1..stage4, head
MAX_DEPTH = 4


class WeightSetMismatch(ContractError):
    pass


class AlreadyFrozenError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # conv | batchnorm | linear
    block: int
    in_channels: int = 0
    out_channels: int = 0
    kernel_size: int = 1
    stride: int = 1
    stateful: bool = False

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        if self.kind == "conv":
            k = self.kernel_size
            return {f"{self.name}.weight": (self.out_channels, self.in_channels, k, k)}
        if self.kind == "batchnorm":
            c = self.out_channels
            return {f"{self.name}.weight": (c,), f"{self.name}.bias": (c,)}
        if self.kind == "linear":
            return {
                f"{self.name}.weight": (self.out_channels, self.in_channels),
                f"{self.name}.bias": (self.out_channels,),
            }
        return {}


def _conv(name, block, cin, cout, k, stride=1):
    return LayerSpec(name, "conv", block, cin, cout, k, stride)


def _bn(name, block, c):
    return LayerSpec(name, "batchnorm", block, c, c)


class _Stem:
    def __init__(self, cin, nf):
        self.block = 0
        self.layers = [_conv("stem.conv", 0, cin, nf, 3), _bn("stem.bn", 0, nf)]

    def __call__(self, x, w, bn_state, train):
        out = F.conv2d(x, w["stem.conv.weight"], 1, 1)
        out = F.batch_norm(out, w["stem.bn.weight"], w["stem.bn.bias"], bn_state.get("stem.bn"), train)
        return F.relu(out)


class _BasicBlock:
    def __init__(self, name, block, cin, cout, stride):
        self.name = name
        self.stride = stride
        self.layers = [
            _conv(f"{name}.conv1", block, cin, cout, 3, stride),
            _bn(f"{name}.bn1", block, cout),
            _conv(f"{name}.conv2", block, cout, cout, 3, 1),
            _bn(f"{name}.bn2", block, cout),
        ]
        self.has_shortcut = stride != 1 or cin != cout
        if self.has_shortcut:
            self.layers += [
                _conv(f"{name}.shortcut.conv", block, cin, cout, 1, stride),
                _bn(f"{name}.shortcut.bn", block, cout),
            ]

    def _bn(self, x, layer, w, bn_state, train):
        key = f"{self.name}.{layer}"
        return F.batch_norm(x, w[f"{key}.weight"], w[f"{key}.bias"], bn_state.get(key), train)

    def __call__(self, x, w, bn_state, train):
        n = self.name
        out = F.relu(self._bn(F.conv2d(x, w[f"{n}.conv1.weight"], self.stride, 1), "bn1", w, bn_state, train))
        out = self._bn(F.conv2d(out, w[f"{n}.conv2.weight"], 1, 1), "bn2", w, bn_state, train)
        if self.has_shortcut:
            short = self._bn(F.conv2d(x, w[f"{n}.shortcut.conv.weight"], self.stride, 0), "shortcut.bn", w, bn_state, train)
        else:
            short = x
        return F.relu(out + short)


class _Stage:
    def __init__(self, index, cin, cout, stride):
        self.block = index
        self.blocks = [
            _BasicBlock(f"stage{index}.block0", index, cin, cout, stride),
            _BasicBlock(f"stage{index}.block1", index, cout, cout, 1),
        ]
        self.layers = [spec for b in self.blocks for spec in b.layers]

    def __call__(self, x, w, bn_state, train):
        for b in self.blocks:
            x = b(x, w, bn_state, train)
        return x


class _Head:
    def __init__(self, cin, num_classes):
        self.block = 5
        self.layers = [LayerSpec("classifier", "linear", 5, cin, num_classes)]

    def __call__(self, x, w, bn_state, train):
        return F.linear(F.global_avg_pool(x), w["classifier.weight"], w["classifier.bias"])


def kaiming_uniform(rng: Rng, shape, fan_in: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, shape, dtype)


def init_layer(spec: LayerSpec, rng: Rng, dtype) -> dict[str, np.ndarray]:
    r = rng.child(spec.name)
    if spec.kind == "conv":
        fan_in = spec.in_channels * spec.kernel_size**2
        return {f"{spec.name}.weight": kaiming_uniform(r, spec.param_shapes()[f"{spec.name}.weight"], fan_in, dtype)}
    if spec.kind == "batchnorm":
        c = spec.out_channels
        return {f"{spec.name}.weight": np.ones(c, dtype), f"{spec.name}.bias": np.zeros(c, dtype)}
    if spec.kind == "linear":
        fan_in = spec.in_channels
        bound = 1.0 / math.sqrt(fan_in)
        return {
            f"{spec.name}.weight": kaiming_uniform(r.child("w"), (spec.out_channels, fan_in), fan_in, dtype),
            f"{spec.name}.bias": r.child("b").uniform(-bound, bound, spec.out_channels, dtype),
        }
    return {}


def fresh_bn_state(specs, dtype=np.float32) -> dict[str, dict[str, np.ndarray]]:
    return {
        s.name: {"mean": np.zeros(s.out_channels, dtype), "var": np.ones(s.out_channels, dtype)}
        for s in specs
        if s.kind == "batchnorm"
    }


class MainModel:
    """Slim ResNet-18 with stage widths nf, 2nf, 4nf, 8nf.

    ``params`` maps parameter names to trainable tensors and ``bn_state`` maps
    batch-norm layer names to running statistics.
    """

    def __init__(self, num_classes: int, nf: int = 20, in_channels: int = 3, seed: int = 0, dtype=np.float32):
        if nf < 1:
            raise ContractError(f"nf must be >= 1, got {nf}")
        self.nf = nf
        self.num_classes = num_classes
        self.in_channels = in_channels
        self.dtype = np.dtype(dtype)
        self.seed = seed
        widths = [nf, 2 * nf, 4 * nf, 8 * nf]
        self.blocks = [_Stem(in_channels, nf)]
        cin = nf
        for i, cout in enumerate(widths, start=1):
            self.blocks.append(_Stage(i, cin, cout, 1 if i == 1 else 2))
            cin = cout
        self.blocks.append(_Head(cin, num_classes))
        self.layer_specs = [s for b in self.blocks for s in b.layers]
        rng = Rng(seed).child("main_model")
        self.params: dict[str, Tensor] = {}
        for spec in self.layer_specs:
            for name, value in init_layer(spec, rng, self.dtype).items():
                self.params[name] = Tensor(value, requires_grad=True, name=name)
        self.bn_state = fresh_bn_state(self.layer_specs, self.dtype)

    @property
    def feature_dim(self) -> int:
        return 8 * self.nf

    def param_shapes(self, blocks=None) -> dict[str, tuple[int, ...]]:
        out = {}
        for spec in self.layer_specs:
            if blocks is None or spec.block in blocks:
                out.update(spec.param_shapes())
        return out

    def num_parameters(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    def run_blocks(self, x, start: int, stop: int, weights, bn_state, train: bool):
        if not isinstance(x, Tensor):
            x = Tensor(x, dtype=self.dtype)
        for block in self.blocks[start:stop]:
            x = block(x, weights, bn_state, train)
        return x

    def forward(self, x, train: bool = False):
        return self.run_blocks(x, 0, NUM_BLOCKS, self.params, self.bn_state, train)

    def stage_outputs(self, x, train: bool = False) -> list[Tensor]:
        """Feature maps after the stem and after each of the four stages."""
        if not isinstance(x, Tensor):
            x = Tensor(x, dtype=self.dtype)
        outs = []
        for block in self.blocks[:5]:
            x = block(x, self.params, self.bn_state, train)
            outs.append(x)
        return outs


def build_slim_resnet(num_classes_per_task: int, nf: int = 20, seed: int = 0, dtype=np.float32, in_channels: int = 3) -> MainModel:
    return MainModel(num_classes_per_task, nf=nf, in_channels=in_channels, seed=seed, dtype=dtype)


def latent_shape(nf: int, k: int, image_size: int = 32, in_channels: int = 3) -> tuple[int, int, int]:
    """Shape of g's output at depth k for a square input."""
    if k == 0:
        return (in_channels, image_size, image_size)
    width = nf * 2 ** (k - 1)
    side = image_size // 2 ** (k - 1)
    return (width, side, side)


class MultiHeadClassifier:
    """One independent linear head per task id."""

    def __init__(self, in_features: int, seed: int = 0, dtype=np.float32):
        self.in_features = in_features
        self.dtype = np.dtype(dtype)
        self.rng = Rng(seed).child("multihead")
        self.heads: dict[int, dict[str, Tensor]] = {}

    def add_head(self, task_id: int, num_classes: int) -> dict[str, Tensor]:
        if task_id not in self.heads:
            spec = LayerSpec("classifier", "linear", 5, self.in_features, num_classes)
            init = init_layer(spec, self.rng.child(task_id), self.dtype)
            self.heads[task_id] = {
                "classifier.weight": Tensor(init["classifier.weight"], requires_grad=True, name=f"classifier.{task_id}.weight"),
                "classifier.bias": Tensor(init["classifier.bias"], requires_grad=True, name=f"classifier.{task_id}.bias"),
            }
        return self.heads[task_id]

    def __getitem__(self, task_id: int) -> dict[str, Tensor]:
        return self.heads[task_id]

    def named_parameters(self) -> dict[str, Tensor]:
        return {f"classifier.{t}.{n.split('.')[1]}": p for t, h in self.heads.items() for n, p in h.items()}


class DecomposedModel:
    """A MainModel split at freeze depth k into g (stateful) and h (stateless)."""

    def __init__(self, model: MainModel, k: int, classifier_classes: int | None = None):
        if not 0 <= k <= MAX_DEPTH:
            raise ContractError(f"freeze depth must lie in [0, {MAX_DEPTH}], got {k}")
        self.model = model
        self.k = k
        self.g_range = (0, k + 1) if k >= 1 else (0, 0)
        self.h_range = (k + 1, NUM_BLOCKS) if k >= 1 else (0, NUM_BLOCKS)
        g_blocks = set(range(*self.g_range))
        self.layer_specs = [replace(s, stateful=s.block in g_blocks) for s in model.layer_specs]
        self.phi_names = [n for s in self.layer_specs if s.stateful for n in s.param_shapes()]
        self.omega_shapes = {n: sh for s in self.layer_specs if not s.stateful for n, sh in s.param_shapes().items()}
        if classifier_classes is not None:
            self.omega_shapes["classifier.weight"] = (classifier_classes, model.feature_dim)
            self.omega_shapes["classifier.bias"] = (classifier_classes,)
        self.g_bn_names = [s.name for s in self.layer_specs if s.stateful and s.kind == "batchnorm"]
        self.h_specs = [s for s in self.layer_specs if not s.stateful]
        self.frozen = False
        self.frozen_hash: str | None = None

    @property
    def phi(self) -> dict[str, Tensor]:
        return {n: self.model.params[n] for n in self.phi_names}

    def trainable_phi(self) -> list[Tensor]:
        """φ tensors still open to updates; empty once frozen."""
        return [] if self.frozen else list(self.phi.values())

    def model_omega(self) -> dict[str, Tensor]:
        """The model's own stored values for the h slots."""
        return {n: self.model.params[n] for n in self.omega_shapes}

    def fresh_h_bn_state(self) -> dict:
        return fresh_bn_state(self.h_specs, self.model.dtype)

    def latent_shape(self, image_size: int) -> tuple[int, int, int]:
        return latent_shape(self.model.nf, self.k, image_size, self.model.in_channels)

    def g(self, x, train: bool = False) -> Tensor:
        """Frozen prefix. After freezing it always runs with running statistics."""
        if self.k == 0:
            return x if isinstance(x, Tensor) else Tensor(x, dtype=self.model.dtype)
        return self.model.run_blocks(x, *self.g_range, self.model.params, self.model.bn_state, train and not self.frozen)

    def check_weights(self, weights) -> None:
        names = set(weights)
        expected = set(self.omega_shapes)
        if names != expected:
            raise WeightSetMismatch(
                f"weight set mismatch: missing {sorted(expected - names)}, extra {sorted(names - expected)}"
            )
        for n, shape in self.omega_shapes.items():
            got = tuple(weights[n].shape)
            if n.startswith("classifier."):
                if got[1:] != shape[1:]:
                    raise WeightSetMismatch(f"{n}: shape {got} incompatible with {shape}")
            elif got != shape:
                raise WeightSetMismatch(f"{n}: shape {got}, expected {shape}")

    def h(self, z, weights, bn_state=None, train: bool = False) -> Tensor:
        self.check_weights(weights)
        if bn_state is None:
            bn_state = self.model.bn_state
        return self.model.run_blocks(z, *self.h_range, weights, bn_state, train)

    def forward(self, x, weights, task_id: int | None = None, bn_state=None, train: bool = False) -> Tensor:
        return self.h(self.g(x, train), weights, bn_state, train)

    def phi_hash(self) -> str:
        digest = hashlib.sha256()
        for n in self.phi_names:
            digest.update(n.encode())
            digest.update(np.ascontiguousarray(self.model.params[n].data).tobytes())
        for n in self.g_bn_names:
            for key in ("mean", "var"):
                digest.update(np.ascontiguousarray(self.model.bn_state[n][key]).tobytes())
        return digest.hexdigest()

    def freeze(self) -> None:
        if self.frozen:
            raise AlreadyFrozenError("φ is already frozen")
        self.frozen = True
        for n in self.phi_names:
            self.model.params[n].requires_grad = False
        self.frozen_hash = self.phi_hash()

    def assert_phi_intact(self) -> None:
        if self.frozen and self.phi_hash() != self.frozen_hash:
            raise RuntimeError("frozen parameters changed after freeze")


def decompose(model: MainModel, k: int, classifier_classes: int | None = None) -> DecomposedModel:
    return DecomposedModel(model, k, classifier_classes)


def forward_decomposed(d: DecomposedModel, weights, x, task_id: int | None = None, bn_state=None, train: bool = False) -> Tensor:
    """logits = h(g(x); weights)."""
    return d.forward(x, weights, task_id, bn_state, train)


def freeze(d: DecomposedModel) -> None:
    d.freeze()


def save_model(path, d: DecomposedModel, extra: dict | None = None):
    m = d.model
    tensors = {n: p.data for n, p in m.params.items()}
    for n, st in m.bn_state.items():
        tensors[f"bn_state.{n}.mean"] = st["mean"]
        tensors[f"bn_state.{n}.var"] = st["var"]
    meta = {
        "kind": "main_model",
        "nf": m.nf,
        "k": d.k,
        "num_classes": m.num_classes,
        "in_channels": m.in_channels,
        "frozen": d.frozen,
        "frozen_hash": d.frozen_hash,
    }
    meta.update(extra or {})
    return save_tensors(path, tensors, meta)


def load_model(path) -> DecomposedModel:
    tensors, meta, _ = load_tensors(path)
    dtype = tensors["stem.conv.weight"].dtype
    m = MainModel(meta["num_classes"], meta["nf"], meta["in_channels"], dtype=dtype)
    for n in m.params:
        m.params[n].data = tensors[n]
    for n in m.bn_state:
        m.bn_state[n] = {"mean": tensors[f"bn_state.{n}.mean"], "var": tensors[f"bn_state.{n}.var"]}
    d = DecomposedModel(m, meta["k"])
    if meta.get("frozen"):
        d.freeze()
        if d.frozen_hash != meta["frozen_hash"]:
            raise ValueError(f"{path}: frozen hash mismatch after load")
    return d
