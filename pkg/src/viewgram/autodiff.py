"""Minimal dense-tensor arithmetic with reverse-mode gradients.

Only the operations the aggregation head needs: affine maps, relu, softmax,
layer norm, cross entropy, max pooling over rows, window stacking, and a few
elementwise primitives.  Operations executed while a GradientTape is active
are recorded on it; `backward` replays the records in reverse and
accumulates gradients into `.grad` of every tensor that requires them.

Compute precision defaults to float64; `set_compute_dtype("float32")`
switches new tensors to single precision.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import NumericError, ShapeMismatchError, TapeConsumedError

_COMPUTE_DTYPE = np.float64

# Names listed here get a deliberately wrong adjoint (scaled by 2); used by
# the gradcheck CLI to prove the checker detects broken backward passes.
_BROKEN_ADJOINTS: set[str] = set()


def set_compute_dtype(name: str) -> None:
    global _COMPUTE_DTYPE
    if name not in ("float32", "float64"):
        raise ValueError(f"unsupported compute dtype {name!r}")
    _COMPUTE_DTYPE = np.dtype(name).type


def compute_dtype():
    return np.dtype(_COMPUTE_DTYPE)


class Tensor:
    """A dense array plus gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_COMPUTE_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_TAPE_STACK: list["GradientTape"] = []


class GradientTape:
    """Ordered record of executed operations, consumed by one backward pass."""

    def __init__(self):
        self._records: list[tuple[str, Tensor, tuple[Tensor, ...], Callable]] = []
        self._produced: set[int] = set()
        self.consumed = False

    def __enter__(self) -> "GradientTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def __len__(self) -> int:
        return len(self._records)


def _emit(name: str, out: Tensor, inputs: tuple[Tensor, ...], bwd: Callable) -> Tensor:
    if _TAPE_STACK and any(t.requires_grad for t in inputs):
        tape = _TAPE_STACK[-1]
        out.requires_grad = True
        tape._records.append((name, out, inputs, bwd))
        tape._produced.add(id(out))
    return out


def backward(loss: Tensor, tape: GradientTape) -> None:
    """Accumulate gradients of a scalar loss into every requires_grad tensor.

    Parameters that never influenced the loss are left untouched (their
    gradient is zero by the optimizer's None-means-zero convention).
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    if tape.consumed:
        raise TapeConsumedError("gradient tape already consumed")
    if id(loss) not in tape._produced:
        raise ValueError("loss was not produced on this tape")
    tape.consumed = True

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for name, out, inputs, bwd in reversed(tape._records):
        g = pending.pop(id(out), None)
        if g is None:
            continue
        out.grad = g if out.grad is None else out.grad + g
        in_grads = bwd(g)
        if name in _BROKEN_ADJOINTS:
            in_grads = tuple(None if ig is None else 2.0 * ig for ig in in_grads)
        for inp, ig in zip(inputs, in_grads):
            if ig is None:
                continue
            if id(inp) in tape._produced:
                acc = pending.get(id(inp))
                pending[id(inp)] = ig if acc is None else acc + ig
            elif inp.requires_grad:
                if inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
                inp.grad += ig


# ---------------------------------------------------------------------------
# operations


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatchError(msg)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """weight @ x + bias for a single vector x."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    _require(
        x.data.ndim == 1 and weight.data.ndim == 2 and weight.shape[1] == x.shape[0],
        f"linear: weight {weight.shape} incompatible with input {x.shape}",
    )
    _require(
        bias.shape == (weight.shape[0],),
        f"linear: bias {bias.shape} incompatible with weight {weight.shape}",
    )
    out = Tensor(weight.data @ x.data + bias.data)

    def bwd(g):
        dx = weight.data.T @ g if x.requires_grad else None
        dw = np.outer(g, x.data) if weight.requires_grad else None
        db = g if bias.requires_grad else None
        return dx, dw, db

    return _emit("linear", out, (x, weight, bias), bwd)


def linear_rows(rows: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """rows @ weight.T + bias, applied to every row of a matrix."""
    rows, weight, bias = as_tensor(rows), as_tensor(weight), as_tensor(bias)
    _require(
        rows.data.ndim == 2 and weight.data.ndim == 2
        and rows.shape[1] == weight.shape[1],
        f"linear_rows: weight {weight.shape} incompatible with rows {rows.shape}",
    )
    _require(
        bias.shape == (weight.shape[0],),
        f"linear_rows: bias {bias.shape} incompatible with weight {weight.shape}",
    )
    out = Tensor(rows.data @ weight.data.T + bias.data)

    def bwd(g):
        dr = g @ weight.data if rows.requires_grad else None
        dw = g.T @ rows.data if weight.requires_grad else None
        db = g.sum(axis=0) if bias.requires_grad else None
        return dr, dw, db

    return _emit("linear_rows", out, (rows, weight, bias), bwd)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(x, 0); gradient is zero at exactly 0 (tie rule)."""
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))

    def bwd(g):
        return (g * (x.data > 0.0),)

    return _emit("relu", out, (x,), bwd)


def softmax(scores: Tensor) -> Tensor:
    """Stable softmax of a vector (max-subtracted)."""
    scores = as_tensor(scores)
    if scores.data.ndim != 1 or scores.size == 0:
        raise ValueError(f"softmax needs a non-empty vector, got shape {scores.shape}")
    shifted = scores.data - scores.data.max()
    e = np.exp(shifted)
    out = Tensor(e / e.sum())

    def bwd(g):
        p = out.data
        return (p * (g - np.dot(g, p)),)

    return _emit("softmax", out, (scores,), bwd)


def layer_norm(v: Tensor, eps: float = 1e-5) -> Tensor:
    """(v - mean) / sqrt(population variance + eps); no learnable gain/bias."""
    v = as_tensor(v)
    if v.data.ndim != 1 or v.size < 2:
        raise ValueError(f"layer_norm needs a vector of length >= 2, got {v.shape}")
    if eps < 0:
        raise ValueError("layer_norm eps must be non-negative")
    mu = v.data.mean()
    sigma = np.sqrt(v.data.var() + eps)
    if sigma == 0.0:
        raise NumericError("layer_norm: zero variance and eps=0")
    out = Tensor((v.data - mu) / sigma)

    def bwd(g):
        y = out.data
        return ((g - g.mean() - y * np.mean(g * y)) / sigma,)

    return _emit("layer_norm", out, (v,), bwd)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """-log softmax(logits)[label], computed via log-sum-exp."""
    logits = as_tensor(logits)
    if logits.data.ndim != 1:
        raise ValueError(f"cross_entropy expects a logit vector, got {logits.shape}")
    if not 0 <= label < logits.size:
        raise IndexError(f"label {label} out of range for {logits.size} classes")
    m = logits.data.max()
    lse = m + np.log(np.exp(logits.data - m).sum())
    out = Tensor(lse - logits.data[label])

    def bwd(g):
        p = np.exp(logits.data - lse)
        p[label] -= 1.0
        return (g * p,)

    return _emit("cross_entropy", out, (logits,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product: (m,k)@(k,), (m,k)@(k,n), or (k,)@(k,n)."""
    a, b = as_tensor(a), as_tensor(b)
    _require(
        1 <= a.data.ndim <= 2 and 1 <= b.data.ndim <= 2 and not (a.data.ndim == b.data.ndim == 1),
        f"matmul: unsupported ranks {a.shape} @ {b.shape}",
    )
    _require(
        a.shape[-1] == b.shape[0],
        f"matmul: inner dimensions differ, {a.shape} @ {b.shape}",
    )
    out = Tensor(a.data @ b.data)

    def bwd(g):
        if a.data.ndim == 2 and b.data.ndim == 1:
            da = np.outer(g, b.data) if a.requires_grad else None
            db = a.data.T @ g if b.requires_grad else None
        elif a.data.ndim == 1:
            da = b.data @ g if a.requires_grad else None
            db = np.outer(a.data, g) if b.requires_grad else None
        else:
            da = g @ b.data.T if a.requires_grad else None
            db = a.data.T @ g if b.requires_grad else None
        return da, db

    return _emit("matmul", out, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _require(a.shape == b.shape, f"add: shapes differ, {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)

    def bwd(g):
        return (g if a.requires_grad else None, g if b.requires_grad else None)

    return _emit("add", out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _require(a.shape == b.shape, f"mul: shapes differ, {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)

    def bwd(g):
        da = g * b.data if a.requires_grad else None
        db = g * a.data if b.requires_grad else None
        return da, db

    return _emit("mul", out, (a, b), bwd)


def scale(x: Tensor, factor: float) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data * factor)

    def bwd(g):
        return (g * factor,)

    return _emit("scale", out, (x,), bwd)


def concat(parts: Sequence[Tensor]) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    for p in parts:
        _require(p.data.ndim == 1, f"concat expects vectors, got shape {p.shape}")
    out = Tensor(np.concatenate([p.data for p in parts]))
    offsets = np.cumsum([0] + [p.size for p in parts])

    def bwd(g):
        return tuple(
            g[offsets[i]:offsets[i + 1]] if p.requires_grad else None
            for i, p in enumerate(parts)
        )

    return _emit("concat", out, parts, bwd)


def row_max_pool(rows: Tensor) -> Tensor:
    """Columnwise maximum over the rows of a matrix.

    Ties route the gradient to the first maximal row of each column.
    """
    rows = as_tensor(rows)
    if rows.data.ndim != 2 or rows.shape[0] < 1:
        raise ValueError(f"row_max_pool needs a non-empty matrix, got {rows.shape}")
    winners = rows.data.argmax(axis=0)
    cols = np.arange(rows.shape[1])
    out = Tensor(rows.data[winners, cols])

    def bwd(g):
        dr = np.zeros_like(rows.data)
        dr[winners, cols] = g
        return (dr,)

    return _emit("row_max_pool", out, (rows,), bwd)


def gram_windows(feats: Tensor, n: int, circular: bool = False) -> Tensor:
    """Flatten each run of n consecutive rows into one window row."""
    feats = as_tensor(feats)
    _require(feats.data.ndim == 2, f"gram_windows expects a matrix, got {feats.shape}")
    num_views = feats.shape[0]
    out = Tensor(kernels.gram_windows(np.ascontiguousarray(feats.data), n, circular))

    def bwd(g):
        if not feats.requires_grad:
            return (None,)
        return (kernels.gram_windows_backward(np.ascontiguousarray(g), n, num_views, circular),)

    return _emit("gram_windows", out, (feats,), bwd)


# ---------------------------------------------------------------------------
# gradient verification


def finite_diff_report(
    loss_fn: Callable[[], Tensor],
    named_params: Sequence[tuple[str, Tensor]],
    step: float = 1e-5,
) -> tuple[float, str]:
    """Compare analytic gradients with central differences.

    Returns (max relative error, name of the worst parameter).  The relative
    error of one element is |analytic - numeric| / max(|analytic|, |numeric|,
    1e-8).  loss_fn must be deterministic; it is re-evaluated with each
    parameter element nudged by +-step.
    """
    params = [p for _, p in named_params]
    for p in params:
        p.grad = None
    with GradientTape() as tape:
        loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise NumericError("finite_diff_report: loss is not finite")
    backward(loss, tape)

    worst = 0.0
    worst_name = named_params[0][0] if named_params else ""
    for name, p in named_params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(loss_fn().data.reshape(-1)[0])
            flat[i] = orig - step
            down = float(loss_fn().data.reshape(-1)[0])
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            err = abs(float(aflat[i]) - numeric) / max(abs(float(aflat[i])), abs(numeric), 1e-8)
            if err > worst:
                worst = err
                worst_name = name
    return worst, worst_name


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients."""
    named = [(f"param{i}", p) for i, p in enumerate(params)]
    return finite_diff_report(loss_fn, named, step)[0]
