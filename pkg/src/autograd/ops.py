"""
Differentiable Operations
Every operation the network needs: affine maps, entrywise arithmetic and
activations, softmax (single sequence and segmented over a batch),
concatenation, embedding gathers and the cross-entropy loss.
"""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from autograd.tensor import Context, Function, Tensor
from errors import ArgumentError, DimensionError, EmptySequenceError

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-12


class MatMul(Function):
    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ctx.save_for_backward(a, b)
        return a @ b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        a, b = ctx.saved
        return grad @ b.T, a.T @ grad


class Add(Function):
    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return grad, grad


class Mul(Function):
    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ctx.save_for_backward(a, b)
        return a * b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        a, b = ctx.saved
        return grad * b, grad * a


class Relu(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        # subgradient at exactly 0 is 0
        mask = x > 0
        ctx.save(mask=mask)
        return np.where(mask, x, 0.0)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (grad * ctx.values["mask"],)


class Sigmoid(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        out = expit(x)
        ctx.save(out=out)
        return out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        out = ctx.values["out"]
        return (grad * out * (1.0 - out),)


class Exp(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        out = np.exp(x)
        ctx.save(out=out)
        return out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (grad * ctx.values["out"],)


class SegmentSoftmax(Function):
    """Softmax computed independently inside each segment of a flat score vector"""

    @staticmethod
    def forward(ctx: Context, scores: np.ndarray, segments: np.ndarray, n_segments: int) -> np.ndarray:
        maxima = np.full(n_segments, -np.inf)
        np.maximum.at(maxima, segments, scores)
        shifted = np.exp(scores - maxima[segments])
        totals = np.zeros(n_segments)
        np.add.at(totals, segments, shifted)
        weights = shifted / totals[segments]
        ctx.save(weights=weights, segments=segments, n_segments=n_segments)
        return weights

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        weights = ctx.values["weights"]
        segments = ctx.values["segments"]
        weighted = grad * weights
        sums = np.zeros(ctx.values["n_segments"])
        np.add.at(sums, segments, weighted)
        return (weighted - weights * sums[segments],)


class SegmentWeightedSum(Function):
    """out[s] = sum of weights[i] * rows[i] over items i in segment s; empty segments give zero rows"""

    @staticmethod
    def forward(
        ctx: Context, weights: np.ndarray, rows: np.ndarray, segments: np.ndarray, n_segments: int
    ) -> np.ndarray:
        ctx.save_for_backward(weights, rows)
        ctx.save(segments=segments)
        out = np.zeros((n_segments, rows.shape[1]))
        np.add.at(out, segments, weights[:, None] * rows)
        return out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        weights, rows = ctx.saved
        per_item = grad[ctx.values["segments"]]
        return np.sum(per_item * rows, axis=1), weights[:, None] * per_item


class Concat(Function):
    @staticmethod
    def forward(ctx: Context, *parts: np.ndarray, axis: int = 0) -> np.ndarray:
        ctx.save(widths=[p.shape[axis] for p in parts], axis=axis)
        return np.concatenate(parts, axis=axis)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        widths = ctx.values["widths"]
        cuts = np.cumsum(widths)[:-1]
        return tuple(np.split(grad, cuts, axis=ctx.values["axis"]))


class Transpose(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        return x.T.copy()

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (grad.T,)


class Reshape(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray, shape: Tuple[int, ...] = ()) -> np.ndarray:
        ctx.save(original=x.shape)
        return x.reshape(shape)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (grad.reshape(ctx.values["original"]),)


class TakeRows(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray, index: Optional[np.ndarray] = None) -> np.ndarray:
        ctx.save(index=index, n_rows=x.shape[0])
        return x[index]

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        out = np.zeros((ctx.values["n_rows"],) + grad.shape[1:])
        np.add.at(out, ctx.values["index"], grad)
        return (out,)


class GatherFields(Function):
    """
    Batched field lookup against a D x N table.

    index and weights have shape (B, F, K): K member features per field,
    padded members carry weight 0. Output row b is the concatenation over
    fields of the weighted member columns, shape (B, F * D).
    """

    @staticmethod
    def forward(
        ctx: Context, table: np.ndarray, index: Optional[np.ndarray] = None, weights: Optional[np.ndarray] = None
    ) -> np.ndarray:
        columns = table.T[index]
        pooled = np.einsum("bfkd,bfk->bfd", columns, weights)
        ctx.save(index=index, weights=weights, table_shape=table.shape)
        batch, n_fields, dim = pooled.shape
        return pooled.reshape(batch, n_fields * dim)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        dim, n_features = ctx.values["table_shape"]
        index = ctx.values["index"]
        weights = ctx.values["weights"]
        batch, n_fields, _ = index.shape
        per_field = grad.reshape(batch, n_fields, dim)
        contributions = per_field[:, :, None, :] * weights[..., None]
        table_grad = np.zeros((n_features, dim))
        np.add.at(table_grad, index, contributions)
        return (table_grad.T,)


class ScaleRows(Function):
    """Multiply row b of x by scale[b]"""

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, scale: np.ndarray) -> np.ndarray:
        ctx.save_for_backward(x, scale)
        return x * scale.reshape(-1, 1)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        x, scale = ctx.saved
        return grad * scale.reshape(-1, 1), np.sum(grad * x, axis=1).reshape(scale.shape)


class AddBias(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray, bias: np.ndarray) -> np.ndarray:
        return x + bias

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return grad, grad.reshape(-1, grad.shape[-1]).sum(axis=0)


class Sum(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        ctx.save(shape=x.shape)
        return np.asarray(x.sum())

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (np.full(ctx.values["shape"], float(grad)),)


class Scale(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray, factor: float = 1.0) -> np.ndarray:
        ctx.save(factor=factor)
        return x * factor

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (grad * ctx.values["factor"],)


class BinaryCrossEntropy(Function):
    """Mean cross-entropy of probabilities against 0/1 labels, probabilities clamped away from 0 and 1"""

    @staticmethod
    def forward(ctx: Context, probs: np.ndarray, labels: Optional[np.ndarray] = None) -> np.ndarray:
        clamped = np.clip(probs, PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
        ctx.save(clamped=clamped, labels=labels, inside=(probs == clamped))
        losses = labels * np.log(clamped) + (1.0 - labels) * np.log(1.0 - clamped)
        return np.asarray(-np.mean(losses))

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        p = ctx.values["clamped"]
        y = ctx.values["labels"]
        d_probs = -(y / p - (1.0 - y) / (1.0 - p)) / p.size
        return (float(grad) * d_probs * ctx.values["inside"],)


# Functional interface


def _check_same_shape(a: Tensor, b: Tensor, what: str):
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m x k and a k x n tensor"""
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return MatMul.apply(a, b)


def elementwise(a: Tensor, b: Tensor, op: str) -> Tensor:
    """Entrywise add or mul of two tensors with identical shapes"""
    _check_same_shape(a, b, f"elementwise {op}")
    if op == "add":
        return Add.apply(a, b)
    if op == "mul":
        return Mul.apply(a, b)
    raise ArgumentError(f"unknown elementwise op: {op}")


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "mul")


_ACTIVATIONS = {"relu": Relu, "sigmoid": Sigmoid, "exp": Exp}


def activation(x: Tensor, kind: str) -> Tensor:
    """Entrywise relu, sigmoid or exp"""
    try:
        function = _ACTIVATIONS[kind]
    except KeyError:
        raise ArgumentError(f"unknown activation: {kind}") from None
    return function.apply(x)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def segment_softmax(scores: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """
    Softmax of a flat score vector taken separately per segment.

    Args:
        scores: Vector of n scores
        segments: Segment id in [0, n_segments) for every score
        n_segments: Number of segments (some may be empty)

    Returns:
        Vector of n weights summing to 1 within each non-empty segment
    """
    if len(scores.shape) != 1:
        raise DimensionError(f"segment_softmax expects a vector, got {scores.shape}")
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape[0] != scores.shape[0]:
        raise DimensionError(f"segment ids {list(segments.shape)} do not match scores {scores.shape}")
    return SegmentSoftmax.apply(scores, segments=segments, n_segments=n_segments)


def softmax_weights(scores: Union[Tensor, Sequence[float]]) -> Tensor:
    """Max-shifted softmax over a single score vector; plain float sequences are accepted as constants"""
    if not isinstance(scores, Tensor):
        if len(scores) == 0:
            raise EmptySequenceError("softmax over an empty score vector")
        scores = Tensor(scores)
    if len(scores.shape) != 1:
        raise DimensionError(f"softmax_weights expects a vector, got {scores.shape}")
    return segment_softmax(scores, np.zeros(scores.shape[0], dtype=np.int64), 1)


def segment_weighted_sum(weights: Tensor, rows: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """Per-segment weighted sum of rows; returns an n_segments x width matrix"""
    if len(rows.shape) != 2 or weights.shape != [rows.shape[0]]:
        raise DimensionError(f"segment_weighted_sum: weights {weights.shape} vs rows {rows.shape}")
    segments = np.asarray(segments, dtype=np.int64)
    return SegmentWeightedSum.apply(weights, rows, segments=segments, n_segments=n_segments)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate vectors end to end"""
    if not parts:
        raise ArgumentError("concat needs at least one part")
    for part in parts:
        if len(part.shape) != 1:
            raise DimensionError(f"concat expects vectors, got shape {part.shape}")
    if len(parts) == 1:
        return parts[0]
    return Concat.apply(*parts, axis=0)


def concat_columns(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate matrices with equal row counts side by side"""
    if not parts:
        raise ArgumentError("concat_columns needs at least one part")
    rows = {part.shape[0] for part in parts}
    if len(rows) != 1 or any(len(part.shape) != 2 for part in parts):
        raise DimensionError(f"concat_columns: incompatible shapes {[p.shape for p in parts]}")
    if len(parts) == 1:
        return parts[0]
    return Concat.apply(*parts, axis=1)


def transpose(x: Tensor) -> Tensor:
    return Transpose.apply(x)


def reshape(x: Tensor, *shape: int) -> Tensor:
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"cannot reshape {x.shape} to {list(shape)}")
    return Reshape.apply(x, shape=tuple(shape))


def take_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Rows of x selected (with repetition) by index"""
    return TakeRows.apply(x, index=np.asarray(index, dtype=np.int64))


def gather_fields(table: Tensor, index: np.ndarray, weights: np.ndarray) -> Tensor:
    return GatherFields.apply(table, index=index, weights=weights)


def scale_rows(x: Tensor, scale: Tensor) -> Tensor:
    if len(x.shape) != 2 or scale.size != x.shape[0]:
        raise DimensionError(f"scale_rows: {scale.shape} does not match rows of {x.shape}")
    return ScaleRows.apply(x, scale)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x W^T (+ b) for a batch x of shape B x in and W of shape out x in"""
    if len(x.shape) != 2 or len(weight.shape) != 2 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f"linear: input {x.shape} does not fit weight {weight.shape}")
    out = MatMul.apply(x, Transpose.apply(weight))
    if bias is not None:
        out = AddBias.apply(out, bias)
    return out


def project(x: Tensor, vector: Tensor) -> Tensor:
    """x v for a batch x of shape B x k and a k-vector v; returns B x 1"""
    if len(x.shape) != 2 or vector.shape != [x.shape[1]]:
        raise DimensionError(f"project: {x.shape} against vector {vector.shape}")
    return MatMul.apply(x, Reshape.apply(vector, shape=(vector.size, 1)))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    if bias.shape != [x.shape[-1]]:
        raise DimensionError(f"add_bias: bias {bias.shape} does not match {x.shape}")
    return AddBias.apply(x, bias)


def total(x: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor"""
    return Sum.apply(x)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=float(factor))


def binary_cross_entropy(probs: Tensor, labels: Sequence[float]) -> Tensor:
    """Mean clamped cross-entropy; labels are constants"""
    label_array = np.asarray(labels, dtype=np.float64).reshape(probs.data.shape)
    return BinaryCrossEntropy.apply(probs, labels=label_array)


def split_segments(weights: np.ndarray, segments: np.ndarray, n_segments: int) -> List[np.ndarray]:
    """Break a flat per-item array back into one array per segment"""
    return [weights[segments == s] for s in range(n_segments)]
