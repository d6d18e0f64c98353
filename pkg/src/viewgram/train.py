"""Deterministic mini-batch training loop and checkpoint format.

One epoch is a seeded shuffle, mini-batches of batch_size (last batch kept),
per-batch mean cross entropy, backward, elementwise clip, momentum-SGD step.
Everything random flows through one generator, so (seed, data, config)
fully determines the result; checkpoints capture parameters, optimizer
velocities, epoch counter, and the generator state, and resuming from one
reproduces an uninterrupted run exactly.

Checkpoint layout (little-endian): magic "VNC1", u32 version, u32 length +
UTF-8 JSON config, then per tensor a u32 name length, the name bytes, u32
rank, u32 extents, and a float64 payload.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import GradientTape, backward, cross_entropy, scale
from .errors import ConfigurationError, DataError, FormatError, NumericError
from .model import (
    BranchConfig,
    BranchParams,
    ModelParameters,
    init_parameters,
    multi_scale_forward,
)
from .optim import OptimizerState, clip_gradients, sgd_step
from .rng import Rng

CHECKPOINT_MAGIC = b"VNC1"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 1e-4
    clip_bound: float = 0.01
    epochs: int = 150
    batch_size: int = 8
    seed: int = 0
    branch_sizes: tuple[int, ...] = (3, 5, 7)
    d_prime: int = 512
    circular: bool = False
    aggregation: str = "attention"

    def __post_init__(self):
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise ConfigurationError("need learning_rate >= 0 and momentum in [0, 1)")
        if self.weight_decay < 0 or self.clip_bound <= 0:
            raise ConfigurationError("need weight_decay >= 0 and clip_bound > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("need epochs >= 0 and batch_size >= 1")
        if not self.branch_sizes or any(n < 1 for n in self.branch_sizes):
            raise ConfigurationError(f"bad branch sizes {self.branch_sizes}")

    def branches(self) -> list[BranchConfig]:
        return [
            BranchConfig(n=n, d_prime=self.d_prime, circular=self.circular)
            for n in self.branch_sizes
        ]


@dataclass
class Checkpoint:
    model: ModelParameters
    optimizer: OptimizerState
    epoch: int
    seed: int
    rng_state: tuple[int, int, int, int]


def _check_dataset(dataset) -> tuple[int, int]:
    """Validate samples and return (feature_dim, num_classes)."""
    if not dataset:
        raise DataError("dataset is empty")
    dim = dataset[0][2].shape[1]
    num_classes = 0
    for sid, label, feats in dataset:
        if feats.ndim != 2 or feats.shape[1] != dim:
            raise DataError(
                f"sample {sid!r} has dim {feats.shape[1]}, expected {dim}"
            )
        if label < 0:
            raise DataError(f"sample {sid!r} has negative label {label}")
        num_classes = max(num_classes, label + 1)
    return dim, num_classes


def train_step(batch, model: ModelParameters, state: OptimizerState) -> float:
    """One optimizer application on a batch; returns the mean batch loss."""
    if not batch:
        raise DataError("empty batch")
    model.zero_grads()
    with GradientTape() as tape:
        total = None
        for sid, label, feats in batch:
            logits, _ = multi_scale_forward(feats, model)
            loss = cross_entropy(logits, label)
            if not np.isfinite(loss.data):
                raise NumericError(f"non-finite loss for sample {sid!r}")
            total = loss if total is None else ad.add(total, loss)
        mean_loss = scale(total, 1.0 / len(batch))
    backward(mean_loss, tape)
    clip_gradients(model.parameters(), state.clip_bound)
    sgd_step(model.parameters(), state)
    return float(mean_loss.data)


def train(
    dataset: list[tuple[str, int, np.ndarray]],
    config: TrainConfig,
    checkpoint: Checkpoint | None = None,
) -> tuple[Checkpoint, list[float]]:
    """Train for config.epochs and return (checkpoint, per-epoch mean loss).

    Passing a checkpoint resumes from its epoch counter with its exact
    parameter, velocity, and generator state.
    """
    dim, num_classes = _check_dataset(dataset)

    if checkpoint is None:
        rng = Rng(config.seed)
        model = init_parameters(
            dim, config.branches(), num_classes, rng, config.aggregation
        )
        state = OptimizerState(
            learning_rate=config.learning_rate,
            momentum=config.momentum,
            weight_decay=config.weight_decay,
            clip_bound=config.clip_bound,
        )
        state.init_velocities(model.parameters())
        start_epoch = 0
    else:
        model = checkpoint.model
        state = checkpoint.optimizer
        rng = Rng(0)
        rng.set_state(checkpoint.rng_state)
        start_epoch = checkpoint.epoch
        if model.feature_dim != dim:
            raise DataError(
                f"checkpoint feature dim {model.feature_dim} vs data dim {dim}"
            )

    history = []
    n = len(dataset)
    for _epoch in range(start_epoch, config.epochs):
        order = list(range(n))
        rng.shuffle(order)
        epoch_sum = 0.0
        for lo in range(0, n, config.batch_size):
            batch = [dataset[i] for i in order[lo:lo + config.batch_size]]
            epoch_sum += train_step(batch, model, state) * len(batch)
        history.append(epoch_sum / n)

    final_epoch = max(config.epochs, start_epoch)
    return Checkpoint(model, state, final_epoch, config.seed, rng.state), history


# ---------------------------------------------------------------------------
# checkpoint serialization


def _config_doc(ckpt: Checkpoint, tensor_names: list[str]) -> dict:
    model = ckpt.model
    return {
        "feature_dim": model.feature_dim,
        "num_classes": model.num_classes,
        "branches": [
            {
                "n": b.n,
                "d_prime": b.d_prime,
                "circular": b.circular,
                "post_conv_activation": b.post_conv_activation,
            }
            for b in model.branches
        ],
        "aggregation": model.aggregation,
        "optimizer": {
            "learning_rate": ckpt.optimizer.learning_rate,
            "momentum": ckpt.optimizer.momentum,
            "weight_decay": ckpt.optimizer.weight_decay,
            "clip_bound": ckpt.optimizer.clip_bound,
        },
        "epoch": ckpt.epoch,
        "seed": ckpt.seed,
        "rng_state": list(ckpt.rng_state),
        "tensors": tensor_names,
    }


def _named_tensors(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    named = [(f"param/{name}", p.data) for name, p in ckpt.model.named_parameters()]
    for (name, _), vel in zip(ckpt.model.named_parameters(), ckpt.optimizer.velocities):
        named.append((f"velocity/{name}", vel))
    return named


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    tensors = _named_tensors(ckpt)
    config = json.dumps(_config_doc(ckpt, [n for n, _ in tensors]),
                        separators=(",", ":"), ensure_ascii=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(config)))
        fh.write(config)
        for name, arr in tensors:
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, config_len = struct.unpack("<II", raw[4:12])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if len(raw) < 12 + config_len:
        raise FormatError(f"{path}: truncated config block")
    config = json.loads(raw[12:12 + config_len].decode("utf-8"))

    pos = 12 + config_len
    tensors: dict[str, np.ndarray] = {}
    for expected_name in config["tensors"]:
        if pos + 4 > len(raw):
            raise FormatError(f"{path}: truncated before tensor {expected_name!r}")
        (name_len,) = struct.unpack("<I", raw[pos:pos + 4])
        pos += 4
        name = raw[pos:pos + name_len].decode("utf-8")
        if name != expected_name:
            raise FormatError(f"{path}: tensor {name!r} where {expected_name!r} expected")
        pos += name_len
        (rank,) = struct.unpack("<I", raw[pos:pos + 4])
        pos += 4
        shape = struct.unpack(f"<{rank}I", raw[pos:pos + 4 * rank])
        pos += 4 * rank
        count = int(np.prod(shape)) if shape else 1
        end = pos + 8 * count
        if end > len(raw):
            raise FormatError(f"{path}: truncated payload for {name!r}")
        # copy: frombuffer views are read-only and these tensors get trained
        tensors[name] = np.frombuffer(raw[pos:end], dtype="<f8").reshape(shape).copy()
        pos = end
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes")

    branches = [
        BranchConfig(
            n=b["n"],
            d_prime=b["d_prime"],
            circular=b["circular"],
            post_conv_activation=b["post_conv_activation"],
        )
        for b in config["branches"]
    ]
    branch_params = [
        BranchParams(
            ad.Tensor(tensors[f"param/branch{i}.kernel"], requires_grad=True),
            ad.Tensor(tensors[f"param/branch{i}.bias"], requires_grad=True),
        )
        for i in range(len(branches))
    ]
    model = ModelParameters(
        config["feature_dim"],
        config["num_classes"],
        branches,
        branch_params,
        ad.Tensor(tensors["param/fc1.weight"], requires_grad=True),
        ad.Tensor(tensors["param/fc1.bias"], requires_grad=True),
        ad.Tensor(tensors["param/fc2.weight"], requires_grad=True),
        ad.Tensor(tensors["param/fc2.bias"], requires_grad=True),
        config["aggregation"],
    )
    opt = config["optimizer"]
    state = OptimizerState(
        learning_rate=opt["learning_rate"],
        momentum=opt["momentum"],
        weight_decay=opt["weight_decay"],
        clip_bound=opt["clip_bound"],
    )
    dtype = ad.compute_dtype()
    state.velocities = [
        tensors[f"velocity/{name}"].astype(dtype)
        for name, _ in model.named_parameters()
    ]
    return Checkpoint(
        model, state, config["epoch"], config["seed"], tuple(config["rng_state"])
    )
