"""Dense tensors with reverse-mode automatic differentiation.

Only the operations the color upsampling network needs are provided. Shapes
must match exactly; the single exception is ``add_bias`` which adds a vector to
every row. Each op records its parents and a closure that maps the upstream
gradient to parent gradients; ``Tensor.backward`` runs those closures in
reverse topological order and accumulates into ``.grad``.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from colorflow.errors import DegenerateBatchError, ShapeError

DTYPES = {"float32": np.float32, "float64": np.float64}

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


def resolve_dtype(precision: str | np.dtype | type) -> np.dtype:
    """Map ``"float32"``/``"float64"`` (or a numpy dtype) to a numpy dtype."""
    if isinstance(precision, str):
        if precision not in DTYPES:
            raise ValueError(f"unsupported precision {precision!r}, expected one of {sorted(DTYPES)}")
        return np.dtype(DTYPES[precision])
    return np.dtype(precision)


class Tensor:
    """A numpy array with an optional gradient and a link to the op that made it."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data: np.ndarray | float | Sequence,
        requires_grad: bool = False,
        dtype: np.dtype | str | None = None,
        name: str | None = None,
    ):
        if dtype is not None:
            array = np.asarray(data, dtype=resolve_dtype(dtype))
        else:
            array = np.asarray(data)
            if not np.issubdtype(array.dtype, np.floating):
                array = array.astype(np.float64)
        self.data = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn) -> Tensor:
        """Create the output of a differentiable op.

        ``backward`` receives the gradient w.r.t. ``data`` and returns one
        gradient (or None) per parent, in order.
        """
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf that requires grad.

        Args:
            grad: upstream gradient; defaults to 1 for scalar tensors
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.shape:
            raise ShapeError(f"gradient shape {grad.shape} does not match tensor shape {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward is None:
                node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(node_grad), strict=True):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


def parameter(data: np.ndarray, name: str | None = None, dtype: np.dtype | str | None = None) -> Tensor:
    """Trainable leaf tensor."""
    return Tensor(np.array(data, copy=True), requires_grad=True, dtype=dtype, name=name)


def _check_2d(t: Tensor, op: str) -> None:
    if t.data.ndim != 2:
        raise ShapeError(f"{op} expects a 2D tensor, got shape {t.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(M, K) @ (K, N) -> (M, N)."""
    _check_2d(a, "matmul")
    _check_2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g: np.ndarray):
        return g @ b.data.T, a.data.T @ g

    return Tensor.from_op(a.data @ b.data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}")
    return Tensor.from_op(a.data + b.data, (a, b), lambda g: (g, g))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a (C,) vector to every row of an (N, C) tensor."""
    _check_2d(x, "add_bias")
    if bias.shape != (x.shape[1],):
        raise ShapeError(f"bias shape {bias.shape} does not match {x.shape[1]} columns")
    return Tensor.from_op(x.data + bias.data, (x, bias), lambda g: (g, g.sum(axis=0)))


def relu(x: Tensor) -> Tensor:
    # NaN compares false against 0 and must pass through
    keep = ~(x.data <= 0)
    return Tensor.from_op(np.where(keep, x.data, 0).astype(x.dtype), (x,), lambda g: (g * keep,))


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate 2D tensors along columns."""
    if not tensors:
        raise ShapeError("concat_cols needs at least one tensor")
    for t in tensors:
        _check_2d(t, "concat_cols")
    rows = tensors[0].shape[0]
    if any(t.shape[0] != rows for t in tensors):
        raise ShapeError(f"concat_cols row mismatch: {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(g: np.ndarray):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(tensors)))

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), backward)


def _check_indices(indices: np.ndarray, n_rows: int, op: str) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    if indices.size and (indices.min() < 0 or indices.max() >= n_rows):
        raise ShapeError(f"{op} index out of range for {n_rows} rows")
    return indices


def gather_rows(t: Tensor, indices: np.ndarray) -> Tensor:
    """out[j] = t[indices[j]]."""
    _check_2d(t, "gather_rows")
    indices = _check_indices(indices, t.shape[0], "gather_rows")
    n_rows = t.shape[0]

    def backward(g: np.ndarray):
        return (_scatter_add(g, indices, n_rows),)

    return Tensor.from_op(t.data[indices], (t,), backward)


def _scatter_add(values: np.ndarray, indices: np.ndarray, n_out: int) -> np.ndarray:
    out = np.zeros((n_out, values.shape[1]), dtype=values.dtype)
    np.add.at(out, indices, values)
    return out


def scatter_add_rows(t: Tensor, indices: np.ndarray, n_out: int) -> Tensor:
    """out[indices[j]] += t[j]; the adjoint of ``gather_rows``."""
    _check_2d(t, "scatter_add_rows")
    indices = _check_indices(indices, n_out, "scatter_add_rows")
    if len(indices) != t.shape[0]:
        raise ShapeError(f"scatter_add_rows needs one index per row: {len(indices)} vs {t.shape[0]}")
    return Tensor.from_op(_scatter_add(t.data, indices, n_out), (t,), lambda g: (g[indices],))


def mse_loss(pred: Tensor, target: Tensor | np.ndarray) -> Tensor:
    """Mean squared error over every element, as a scalar tensor."""
    if not isinstance(target, Tensor):
        target = Tensor(np.asarray(target, dtype=pred.dtype))
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = max(diff.size, 1)
    value = np.asarray(np.mean(diff * diff), dtype=pred.dtype)

    def backward(g: np.ndarray):
        scaled = (2.0 / n) * g * diff
        return scaled.astype(pred.dtype), (-scaled).astype(target.dtype)

    return Tensor.from_op(value, (pred, target), backward)


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPSILON,
    update_running: bool = True,
) -> Tensor:
    """Per-channel batch normalization of an (N, C) tensor.

    In training mode the batch statistics normalize the input and the running
    statistics are updated in place by exponential moving average (the running
    variance uses the unbiased batch variance). In eval mode the running
    statistics are used.

    Raises:
        DegenerateBatchError: training mode with fewer than two rows
    """
    _check_2d(x, "batchnorm")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(f"batchnorm affine shape must be ({channels},), got {gamma.shape} / {beta.shape}")
    n = x.shape[0]

    if training:
        if n < 2:
            raise DegenerateBatchError(f"batch normalization in training mode needs >= 2 rows, got {n}")
        mean = x.data.mean(axis=0)
        centered = x.data - mean
        var = (centered * centered).mean(axis=0)
        if update_running:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * var * (n / (n - 1))
    else:
        mean = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)
        centered = x.data - mean

    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    x_hat = centered * inv_std
    out = x_hat * gamma.data + beta.data

    def backward(g: np.ndarray):
        g_gamma = (g * x_hat).sum(axis=0)
        g_beta = g.sum(axis=0)
        g_xhat = g * gamma.data
        if training:
            g_x = inv_std / n * (n * g_xhat - g_xhat.sum(axis=0) - x_hat * (g_xhat * x_hat).sum(axis=0))
        else:
            g_x = g_xhat * inv_std
        return g_x.astype(x.dtype), g_gamma, g_beta

    return Tensor.from_op(out.astype(x.dtype), (x, gamma, beta), backward)


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    seed: int = 0,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``fn`` is re-evaluated with each input element perturbed by +/-eps. The
    output is contracted with a fixed random direction so every output element
    contributes. Use 64-bit inputs.

    Returns:
        max over inputs of ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12)
    """
    rng = np.random.default_rng(seed)
    out = fn()
    direction = rng.standard_normal(out.shape).astype(out.dtype)
    for t in inputs:
        t.zero_grad()
    out.backward(direction)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    worst = 0.0
    for t, grad in zip(inputs, analytic, strict=True):
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + eps
            plus = float(np.sum(fn().data * direction))
            flat[k] = original - eps
            minus = float(np.sum(fn().data * direction))
            flat[k] = original
            numeric.reshape(-1)[k] = (plus - minus) / (2 * eps)
        scale = max(np.linalg.norm(grad), np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(grad - numeric) / scale))
    return worst
