"""Multi-branch n-gram aggregation head over per-view feature sequences.

Each branch slides a window of n consecutive view-feature rows over the
input matrix, maps every window through a learned affine kernel (optionally
relu), and aggregates the resulting gram features with a parameter-free
attention step: max-pool proxy, scaled inner-product scores, softmax
weights, weighted sum, residual, layer norm.  Branch outputs are
concatenated and fed to a two-layer recognition head; the 512-d
post-activation output of the first layer is the retrieval descriptor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .errors import ConfigurationError
from .rng import Rng

DESCRIPTOR_DIM = 512
LAYER_NORM_EPS = 1e-5

AGGREGATION_MODES = ("attention", "max")


@dataclass(frozen=True)
class BranchConfig:
    """One n-gram branch: window size, output width, and mode toggles."""

    n: int
    d_prime: int
    circular: bool = False
    post_conv_activation: bool = True

    def __post_init__(self):
        if self.n < 1 or self.d_prime < 1:
            raise ConfigurationError(
                f"branch needs n >= 1 and d_prime >= 1, got n={self.n}, d_prime={self.d_prime}"
            )


@dataclass
class BranchParams:
    kernel: Tensor  # (d_prime, n * feature_dim)
    bias: Tensor  # (d_prime,)


class ModelParameters:
    """All learnable tensors plus the static configuration they belong to.

    The attention stage and layer norm contribute no parameters; everything
    learnable lives in the branch kernels and the two head layers.
    """

    def __init__(
        self,
        feature_dim: int,
        num_classes: int,
        branches: list[BranchConfig],
        branch_params: list[BranchParams],
        fc1_weight: Tensor,
        fc1_bias: Tensor,
        fc2_weight: Tensor,
        fc2_bias: Tensor,
        aggregation: str = "attention",
    ):
        if aggregation not in AGGREGATION_MODES:
            raise ConfigurationError(f"unknown aggregation mode {aggregation!r}")
        self.feature_dim = feature_dim
        self.num_classes = num_classes
        self.branches = branches
        self.branch_params = branch_params
        self.fc1_weight = fc1_weight
        self.fc1_bias = fc1_bias
        self.fc2_weight = fc2_weight
        self.fc2_bias = fc2_bias
        self.aggregation = aggregation

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """Learnable tensors in a stable, checkpoint-friendly order."""
        named = []
        for i, bp in enumerate(self.branch_params):
            named.append((f"branch{i}.kernel", bp.kernel))
            named.append((f"branch{i}.bias", bp.bias))
        named.append(("fc1.weight", self.fc1_weight))
        named.append(("fc1.bias", self.fc1_bias))
        named.append(("fc2.weight", self.fc2_weight))
        named.append(("fc2.bias", self.fc2_bias))
        return named

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_learnable_scalars(self) -> int:
        return sum(p.size for p in self.parameters())


def init_parameters(
    feature_dim: int,
    branches: list[BranchConfig],
    num_classes: int,
    seed_or_rng,
    aggregation: str = "attention",
) -> ModelParameters:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    if not branches:
        raise ConfigurationError("at least one branch is required")
    rng = seed_or_rng if isinstance(seed_or_rng, Rng) else Rng(seed_or_rng)

    branch_params = []
    for cfg in branches:
        fan_in = cfg.n * feature_dim
        bound = 1.0 / math.sqrt(fan_in)
        kernel = Tensor(rng.uniform(-bound, bound, (cfg.d_prime, fan_in)), requires_grad=True)
        bias = Tensor(np.zeros(cfg.d_prime), requires_grad=True)
        branch_params.append(BranchParams(kernel, bias))

    concat_dim = sum(cfg.d_prime for cfg in branches)
    b1 = 1.0 / math.sqrt(concat_dim)
    fc1_weight = Tensor(rng.uniform(-b1, b1, (DESCRIPTOR_DIM, concat_dim)), requires_grad=True)
    fc1_bias = Tensor(np.zeros(DESCRIPTOR_DIM), requires_grad=True)
    b2 = 1.0 / math.sqrt(DESCRIPTOR_DIM)
    fc2_weight = Tensor(rng.uniform(-b2, b2, (num_classes, DESCRIPTOR_DIM)), requires_grad=True)
    fc2_bias = Tensor(np.zeros(num_classes), requires_grad=True)

    return ModelParameters(
        feature_dim, num_classes, list(branches), branch_params,
        fc1_weight, fc1_bias, fc2_weight, fc2_bias, aggregation,
    )


def nglu_forward(feats, branch: BranchConfig, kernel: Tensor, bias: Tensor) -> Tensor:
    """Window-stack the view rows and apply the branch's affine kernel.

    Produces |V| - n + 1 gram rows (|V| in circular mode), each of width
    d_prime; relu follows when the branch enables post_conv_activation.
    """
    feats = as_tensor(feats)
    num_views = feats.shape[0]
    if not branch.circular and num_views < branch.n:
        raise ConfigurationError(
            f"{num_views} views cannot form {branch.n}-grams without circular mode"
        )
    expected = (branch.d_prime, branch.n * feats.shape[1])
    if kernel.shape != expected:
        raise ConfigurationError(
            f"kernel shape {kernel.shape} does not match expected {expected}"
        )
    windows = ad.gram_windows(feats, branch.n, branch.circular)
    pre = ad.linear_rows(windows, kernel, bias)
    return ad.relu(pre) if branch.post_conv_activation else pre


row_max_pool = ad.row_max_pool


def attention_scores(grams: Tensor, pooled: Tensor) -> Tensor:
    """Softmax over scaled inner products of each gram row with the proxy."""
    grams, pooled = as_tensor(grams), as_tensor(pooled)
    raw = ad.matmul(grams, pooled)
    scaled = ad.scale(raw, 1.0 / math.sqrt(pooled.size))
    return ad.softmax(scaled)


def attention_aggregate(grams: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Parameter-free aggregation of gram rows into one vector.

    Max-pool proxy, attention-weighted sum, residual add of the proxy, then
    non-affine layer norm.  No learnable parameters anywhere in this chain.
    """
    grams = as_tensor(grams)
    pooled = ad.row_max_pool(grams)
    weights = attention_scores(grams, pooled)
    weighted = ad.matmul(weights, grams)
    return ad.layer_norm(ad.add(weighted, pooled), eps)


def branch_forward(feats, branch: BranchConfig, params: BranchParams,
                   aggregation: str = "attention") -> Tensor:
    grams = nglu_forward(feats, branch, params.kernel, params.bias)
    if aggregation == "max":
        return ad.row_max_pool(grams)
    return attention_aggregate(grams)


def multi_scale_forward(feats, model: ModelParameters) -> tuple[Tensor, Tensor]:
    """Full head forward pass; returns (logits, descriptor)."""
    if not model.branches:
        raise ConfigurationError("model has no branches")
    feats = as_tensor(feats)
    outputs = [
        branch_forward(feats, cfg, bp, model.aggregation)
        for cfg, bp in zip(model.branches, model.branch_params)
    ]
    combined = outputs[0] if len(outputs) == 1 else ad.concat(outputs)
    descriptor = ad.relu(ad.linear(combined, model.fc1_weight, model.fc1_bias))
    logits = ad.linear(descriptor, model.fc2_weight, model.fc2_bias)
    return logits, descriptor


def extract_descriptor(feats, model: ModelParameters) -> np.ndarray:
    """Deterministic 512-d retrieval descriptor (no gradients recorded)."""
    _, descriptor = multi_scale_forward(feats, model)
    return descriptor.data.copy()
