"""
Module: sr_brcnn.models.neuralcore
Purpose: Dense 64-bit tensor primitives with explicit reverse-mode rules
Dependencies: torch, numpy

Each differentiable primitive is a ``torch.autograd.Function`` with a
hand-written backward rule; torch's autograd engine replays them in reverse
order. A :class:`Tape` records every primitive applied during one forward
pass and checks that each output is finite.

A tape belongs to a single computation graph and must not be shared across
threads. Parallelism happens across independent instances.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
import torch
from torch import nn, Tensor
from torch.autograd import Function

from sr_brcnn.errors import NumericError, ShapeError

logger = logging.getLogger(__name__)

DTYPE = torch.float64


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TapeRecord:
    op: str
    input_shapes: Tuple[Tuple[int, ...], ...]
    output_shape: Tuple[int, ...]


class Tape:
    """
    Ordered record of the primitives applied in one forward pass.

    The gradient itself comes from torch's reverse-mode engine walking the
    recorded graph backwards; the tape keeps the op sequence for inspection
    and turns a scalar loss into per-parameter gradients.

    Example:
        >>> tape = Tape()
        >>> y = affine(x, W, b, tape=tape)
        >>> grads = tape.backward(y.sum(), {"W": W, "b": b})
    """

    def __init__(self):
        self.records: List[TapeRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def record(self, op: str, output: Tensor, *inputs: Tensor) -> Tensor:
        self.records.append(TapeRecord(
            op=op,
            input_shapes=tuple(tuple(t.shape) for t in inputs),
            output_shape=tuple(output.shape),
        ))
        return output

    def op_counts(self) -> Counter:
        return Counter(r.op for r in self.records)

    def backward(self, loss: Tensor, params: Mapping[str, Tensor]) -> Dict[str, Tensor]:
        """
        Gradient of a scalar loss with respect to each named parameter.

        Parameters the loss does not depend on get zero gradients.
        """
        if loss.dim() != 0:
            raise ShapeError("backward", tuple(loss.shape), detail="loss must be a scalar")
        _check_finite("loss", loss)
        names = list(params.keys())
        tensors = [params[n] for n in names]
        grads = torch.autograd.grad(loss, tensors, allow_unused=True)
        return {
            name: g if g is not None else torch.zeros_like(p)
            for name, p, g in zip(names, tensors, grads)
        }


def _check_finite(op: str, output: Tensor) -> None:
    if not bool(torch.isfinite(output).all()):
        raise NumericError(f"{op} produced non-finite values")


def _emit(op: str, output: Tensor, tape: Optional[Tape], *inputs: Tensor) -> Tensor:
    _check_finite(op, output)
    if tape is not None:
        tape.record(op, output, *inputs)
    return output


# ---------------------------------------------------------------------------
# Backward rules
# ---------------------------------------------------------------------------

class AffineFunction(Function):
    """y = W x + b for a vector x."""

    @staticmethod
    def forward(ctx, x, W, b):
        ctx.save_for_backward(x, W)
        return torch.mv(W, x) + b

    @staticmethod
    def backward(ctx, gy):
        x, W = ctx.saved_tensors
        return torch.mv(W.t(), gy), torch.outer(gy, x), gy


class TanhFunction(Function):

    @staticmethod
    def forward(ctx, x):
        y = torch.tanh(x)
        ctx.save_for_backward(y)
        return y

    @staticmethod
    def backward(ctx, gy):
        (y,) = ctx.saved_tensors
        return gy * (1.0 - y * y)


class SigmoidFunction(Function):

    @staticmethod
    def forward(ctx, x):
        y = torch.sigmoid(x)
        ctx.save_for_backward(y)
        return y

    @staticmethod
    def backward(ctx, gy):
        (y,) = ctx.saved_tensors
        return gy * y * (1.0 - y)


class MaxPoolFunction(Function):
    """Elementwise max over equal-shape inputs; ties go to the first input."""

    @staticmethod
    def forward(ctx, *units):
        stacked = torch.stack(units)
        top = stacked.max(dim=0).values
        positions = torch.arange(len(units)).view(-1, *([1] * top.dim())).expand_as(stacked)
        hits = torch.where(stacked == top.unsqueeze(0), positions, torch.full_like(positions, len(units)))
        argmax = hits.min(dim=0).values
        ctx.save_for_backward(argmax)
        ctx.count = len(units)
        return top

    @staticmethod
    def backward(ctx, gy):
        (argmax,) = ctx.saved_tensors
        zeros = torch.zeros_like(gy)
        return tuple(torch.where(argmax == k, gy, zeros) for k in range(ctx.count))


class SoftmaxCrossEntropyFunction(Function):
    """Returns (loss, probs); probs are not differentiable."""

    @staticmethod
    def forward(ctx, logits, target):
        shifted = logits - logits.max()
        log_probs = shifted - torch.log(torch.exp(shifted).sum())
        probs = torch.exp(log_probs)
        loss = -log_probs[target]
        ctx.save_for_backward(probs)
        ctx.target = target
        ctx.mark_non_differentiable(probs)
        return loss, probs

    @staticmethod
    def backward(ctx, gloss, gprobs):
        (probs,) = ctx.saved_tensors
        grad = probs.clone()
        grad[ctx.target] -= 1.0
        return grad * gloss, None


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def affine(x: Tensor, W: Tensor, b: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """
    y = W x + b.

    Raises:
        ShapeError: If x is not a vector of W's column count or b does not match W's rows
    """
    if x.dim() != 1 or W.dim() != 2 or b.dim() != 1 or W.shape[1] != x.shape[0] or W.shape[0] != b.shape[0]:
        raise ShapeError("affine", tuple(W.shape), tuple(x.shape), tuple(b.shape))
    return _emit("affine", AffineFunction.apply(x, W, b), tape, x, W, b)


def tanh(x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    return _emit("tanh", TanhFunction.apply(x), tape, x)


def sigmoid(x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    return _emit("sigmoid", SigmoidFunction.apply(x), tape, x)


def concat(parts: Sequence[Tensor], tape: Optional[Tape] = None) -> Tensor:
    if not parts or any(p.dim() != 1 for p in parts):
        raise ShapeError("concat", *(tuple(p.shape) for p in parts), detail="expects non-empty list of vectors")
    return _emit("concat", torch.cat(list(parts)), tape, *parts)


class LSTMParams(nn.Module):
    """
    One LSTM direction: a single affine map over [x; h_prev] producing the
    input, forget, candidate and output pre-activations (in that order).
    """

    def __init__(self, input_dim: int, hidden_dim: int):
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.weight = nn.Parameter(torch.zeros(4 * hidden_dim, input_dim + hidden_dim, dtype=DTYPE))
        self.bias = nn.Parameter(torch.zeros(4 * hidden_dim, dtype=DTYPE))


class BiLSTMParams(nn.Module):
    """Left-to-right and right-to-left LSTM directions."""

    def __init__(self, input_dim: int, hidden_dim: int):
        super().__init__()
        self.forward_cell = LSTMParams(input_dim, hidden_dim)
        self.backward_cell = LSTMParams(input_dim, hidden_dim)

    @property
    def hidden_dim(self) -> int:
        return self.forward_cell.hidden_dim


def lstm_cell(
    x_t: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
    params: LSTMParams,
    tape: Optional[Tape] = None,
) -> Tuple[Tensor, Tensor]:
    """
    One LSTM step.

    i, f, o = sigmoid(...), g = tanh(...), c_t = f * c_prev + i * g, h_t = o * tanh(c_t)

    Raises:
        ShapeError: If x_t, h_prev or c_prev do not match the parameter dimensions
    """
    H = params.hidden_dim
    if x_t.shape != (params.input_dim,) or h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ShapeError(
            "lstm_cell", tuple(x_t.shape), tuple(h_prev.shape), tuple(c_prev.shape),
            detail=f"expected input {params.input_dim}, hidden {H}",
        )
    z = affine(concat([x_t, h_prev], tape), params.weight, params.bias, tape)
    i = sigmoid(z[:H], tape)
    f = sigmoid(z[H:2 * H], tape)
    g = tanh(z[2 * H:3 * H], tape)
    o = sigmoid(z[3 * H:], tape)
    c_t = _emit("lstm_cell.c", f * c_prev + i * g, tape, f, c_prev, i, g)
    h_t = _emit("lstm_cell.h", o * tanh(c_t, tape), tape, o, c_t)
    return h_t, c_t


def _run_direction(seq: Sequence[Tensor], params: LSTMParams, tape: Optional[Tape]) -> List[Tensor]:
    h = torch.zeros(params.hidden_dim, dtype=DTYPE)
    c = torch.zeros(params.hidden_dim, dtype=DTYPE)
    states = []
    for x_t in seq:
        h, c = lstm_cell(x_t, h, c, params, tape)
        states.append(h)
    return states


def lstm(seq: Sequence[Tensor], params: LSTMParams, tape: Optional[Tape] = None) -> List[Tensor]:
    """Unidirectional left-to-right run from zero states."""
    if not seq:
        raise ShapeError("lstm", detail="empty sequence")
    return _run_direction(seq, params, tape)


def bilstm(
    seq: Sequence[Tensor],
    params: BiLSTMParams,
    tape: Optional[Tape] = None,
) -> List[Tuple[Tensor, Tensor]]:
    """
    Bidirectional LSTM over a sequence.

    Returns:
        (h_fwd, h_bwd) per position; h_bwd at position t has read seq[t:] right to left

    Raises:
        ShapeError: Empty sequence or inputs of different sizes
    """
    if not seq:
        raise ShapeError("bilstm", detail="empty sequence")
    if len({tuple(x.shape) for x in seq}) != 1:
        raise ShapeError("bilstm", *(tuple(x.shape) for x in seq), detail="inputs differ in size")
    forward_states = _run_direction(seq, params.forward_cell, tape)
    backward_states = _run_direction(list(reversed(seq)), params.backward_cell, tape)[::-1]
    return list(zip(forward_states, backward_states))


def conv_unit(
    h_a: Tensor,
    h_ab: Tensor,
    h_b: Tensor,
    W_con: Tensor,
    b_con: Tensor,
    tape: Optional[Tape] = None,
) -> Tensor:
    """Dependency-unit convolution: tanh(W_con [h_a; h_ab; h_b] + b_con)."""
    joined = concat([h_a, h_ab, h_b], tape)
    if W_con.dim() != 2 or W_con.shape[1] != joined.shape[0]:
        raise ShapeError("conv_unit", tuple(W_con.shape), tuple(joined.shape))
    return tanh(affine(joined, W_con, b_con, tape), tape)


def max_pool(units: Sequence[Tensor], tape: Optional[Tape] = None) -> Tensor:
    """Elementwise maximum; the gradient goes to the first maximal unit per coordinate."""
    if not units:
        raise ShapeError("max_pool", detail="empty list")
    if len({tuple(u.shape) for u in units}) != 1:
        raise ShapeError("max_pool", *(tuple(u.shape) for u in units))
    return _emit("max_pool", MaxPoolFunction.apply(*units), tape, *units)


def softmax_xent(logits: Tensor, target: int, tape: Optional[Tape] = None) -> Tuple[Tensor, Tensor]:
    """
    Softmax probabilities and cross-entropy -log p[target].

    Stabilized by subtracting the maximum logit.

    Raises:
        ShapeError: If logits is not 1-D
        ValueError: If target is outside [0, len(logits))
    """
    if logits.dim() != 1:
        raise ShapeError("softmax_xent", tuple(logits.shape), detail="logits must be 1-D")
    target = int(target)
    if not 0 <= target < logits.shape[0]:
        raise ValueError(f"target class {target} outside [0, {logits.shape[0]})")
    loss, probs = SoftmaxCrossEntropyFunction.apply(logits, target)
    _emit("softmax_xent", loss, tape, logits)
    return probs, loss


def l2_penalty(weights: Iterable[Tensor], lam: float, tape: Optional[Tape] = None) -> Tensor:
    """lam * sum of squares of every given weight tensor."""
    if lam < 0:
        raise ValueError(f"L2 coefficient must be non-negative, got {lam}")
    total = torch.zeros((), dtype=DTYPE)
    for w in weights:
        total = total + (w * w).sum()
    return _emit("l2_penalty", lam * total, tape)


def make_generator(seed: Union[int, torch.Generator]) -> torch.Generator:
    if isinstance(seed, torch.Generator):
        return seed
    return torch.Generator().manual_seed(int(seed) & ((1 << 64) - 1))


def dropout(
    x: Tensor,
    keep: float,
    seed: Union[int, torch.Generator],
    training: bool,
    tape: Optional[Tape] = None,
) -> Tensor:
    """
    Inverted dropout: in training each coordinate survives with probability
    ``keep`` and survivors are scaled by 1/keep; evaluation is the identity.
    """
    if not 0.0 < keep <= 1.0:
        raise ValueError(f"keep probability must be in (0, 1], got {keep}")
    if not training or keep == 1.0:
        return x
    mask = torch.bernoulli(torch.full(x.shape, keep, dtype=DTYPE), generator=make_generator(seed))
    return _emit("dropout", x * mask / keep, tape, x)


# ---------------------------------------------------------------------------
# Finite-difference checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradCheckEntry:
    param: str
    index: int
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    """Outcome of a central-difference gradient check."""

    tolerance: float
    step: float
    entries: List[GradCheckEntry] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries), default=0.0)

    @property
    def worst(self) -> Optional[GradCheckEntry]:
        return max(self.entries, key=lambda e: e.rel_error, default=None)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def per_param(self) -> Dict[str, float]:
        errors: Dict[str, float] = {}
        for e in self.entries:
            errors[e.param] = max(errors.get(e.param, 0.0), e.rel_error)
        return errors

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        worst = self.worst
        where = f" ({worst.param}[{worst.index}])" if worst else ""
        return (
            f"{status}: max relative error {self.max_rel_error:.3e}{where} "
            f"over {len(self.entries)} coordinates, tolerance {self.tolerance:g}"
        )


def relative_error(analytic: float, numeric: float, floor: float = 1e-5) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps vanishing gradients comparable."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    step: float = 1e-4,
    tolerance: float = 1e-4,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare autograd gradients of ``f`` against central differences.

    Args:
        f: Rebuilds the graph from ``params`` and returns a scalar
        params: Leaf tensors (requires_grad) the check perturbs in place
        step: Finite-difference step
        tolerance: Pass threshold on the maximum relative error
        max_coords: Check at most this many coordinates per tensor (seeded sample)
        seed: Seed of the coordinate sample

    Raises:
        NumericError: If f is not finite at the checked point
    """
    names = list(params.keys())
    tensors = [params[n] for n in names]
    loss = f()
    if loss.dim() != 0 or not bool(torch.isfinite(loss)):
        raise NumericError(f"gradient check needs a finite scalar, got {loss}")
    analytic = torch.autograd.grad(loss, tensors, allow_unused=True)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance, step=step)
    with torch.no_grad():
        for name, p, grad in zip(names, tensors, analytic):
            grad = torch.zeros_like(p) if grad is None else grad
            flat = p.view(-1)
            flat_grad = grad.reshape(-1)
            coords = np.arange(flat.numel())
            if max_coords is not None and coords.size > max_coords:
                coords = np.sort(rng.choice(coords, size=max_coords, replace=False))
            for k in coords:
                k = int(k)
                original = float(flat[k])
                flat[k] = original + step
                plus = float(f())
                flat[k] = original - step
                minus = float(f())
                flat[k] = original
                if not (math.isfinite(plus) and math.isfinite(minus)):
                    raise NumericError(f"non-finite objective while perturbing {name}[{k}]")
                numeric = (plus - minus) / (2.0 * step)
                a = float(flat_grad[k])
                report.entries.append(GradCheckEntry(name, k, a, numeric, relative_error(a, numeric)))

    logger.debug(str(report))
    return report
