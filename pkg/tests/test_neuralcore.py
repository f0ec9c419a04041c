"""
Module: tests.test_neuralcore
Purpose: Primitive ops, their backward rules and the finite-difference checker
"""

import math
import sys
from pathlib import Path

import pytest
import torch
from torch.autograd import Function

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from sr_brcnn.errors import NumericError, ShapeError
from sr_brcnn.models.neuralcore import (
    DTYPE,
    BiLSTMParams,
    LSTMParams,
    Tape,
    affine,
    bilstm,
    concat,
    conv_unit,
    dropout,
    grad_check,
    l2_penalty,
    lstm,
    lstm_cell,
    make_generator,
    max_pool,
    relative_error,
    softmax_xent,
    tanh,
)


def _randn(gen, *shape, scale=1.0, grad=False):
    t = scale * torch.randn(*shape, dtype=DTYPE, generator=gen)
    return t.requires_grad_(grad)


def _fill(module, gen, scale=0.5):
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(scale * torch.randn(p.shape, dtype=DTYPE, generator=gen))
    return module


def test_affine_matches_loops():
    gen = make_generator(1)
    W, x, b = _randn(gen, 3, 4), _randn(gen, 4), _randn(gen, 3)
    y = affine(x, W, b)
    for i in range(3):
        expected = sum(float(W[i, j]) * float(x[j]) for j in range(4)) + float(b[i])
        assert abs(float(y[i]) - expected) < 1e-12


def test_affine_shape_error():
    with pytest.raises(ShapeError) as info:
        affine(torch.zeros(3, dtype=DTYPE), torch.zeros(2, 4, dtype=DTYPE), torch.zeros(2, dtype=DTYPE))
    assert "affine" in str(info.value)


def test_lstm_cell_formula():
    """h and c follow the gate equations with the i, f, g, o row order."""
    gen = make_generator(2)
    cell = _fill(LSTMParams(3, 2), gen)
    x, h, c = _randn(gen, 3), _randn(gen, 2), _randn(gen, 2)

    h_t, c_t = lstm_cell(x, h, c, cell)

    z = cell.weight.detach() @ torch.cat([x, h]) + cell.bias.detach()
    i, f, g, o = torch.sigmoid(z[:2]), torch.sigmoid(z[2:4]), torch.tanh(z[4:6]), torch.sigmoid(z[6:])
    c_ref = f * c + i * g
    assert torch.allclose(c_t, c_ref, atol=1e-12, rtol=0)
    assert torch.allclose(h_t, o * torch.tanh(c_ref), atol=1e-12, rtol=0)


def test_lstm_cell_zero_params():
    cell = LSTMParams(3, 2)
    h_t, c_t = lstm_cell(torch.ones(3, dtype=DTYPE), torch.zeros(2, dtype=DTYPE), torch.zeros(2, dtype=DTYPE), cell)
    assert torch.equal(c_t, torch.zeros(2, dtype=DTYPE))
    assert torch.equal(h_t, torch.zeros(2, dtype=DTYPE))
    with pytest.raises(ShapeError):
        lstm_cell(torch.ones(4, dtype=DTYPE), torch.zeros(2, dtype=DTYPE), torch.zeros(2, dtype=DTYPE), cell)


def test_bilstm_is_two_unidirectional_runs():
    gen = make_generator(3)
    params = _fill(BiLSTMParams(3, 2), gen)
    seq = [_randn(gen, 3) for _ in range(5)]

    pairs = bilstm(seq, params)
    forward = lstm(seq, params.forward_cell)
    backward = lstm(list(reversed(seq)), params.backward_cell)[::-1]

    assert len(pairs) == 5
    for (hf, hb), rf, rb in zip(pairs, forward, backward):
        assert torch.equal(hf, rf) and torch.equal(hb, rb)

    with pytest.raises(ShapeError):
        bilstm([], params)
    with pytest.raises(ShapeError):
        bilstm([torch.zeros(3, dtype=DTYPE), torch.zeros(4, dtype=DTYPE)], params)


def test_conv_unit_composition():
    gen = make_generator(4)
    h_a, h_ab, h_b = _randn(gen, 4), _randn(gen, 2), _randn(gen, 4)
    W, b = _randn(gen, 5, 10), _randn(gen, 5)
    expected = torch.tanh(W @ torch.cat([h_a, h_ab, h_b]) + b)
    assert torch.allclose(conv_unit(h_a, h_ab, h_b, W, b), expected, atol=1e-12, rtol=0)
    with pytest.raises(ShapeError):
        conv_unit(h_a, h_ab, h_b, _randn(gen, 5, 9), b)


def test_max_pool_and_ties():
    """Gradient of a tie goes to the first maximal unit only."""
    u1 = torch.tensor([1.0, 5.0, 2.0], dtype=DTYPE, requires_grad=True)
    u2 = torch.tensor([3.0, 5.0, 0.0], dtype=DTYPE, requires_grad=True)
    pooled = max_pool([u1, u2])
    assert pooled.tolist() == [3.0, 5.0, 2.0]

    g1, g2 = torch.autograd.grad(pooled.sum(), [u1, u2])
    assert g1.tolist() == [0.0, 1.0, 1.0]
    assert g2.tolist() == [1.0, 0.0, 0.0]

    single = torch.tensor([1.0, -2.0], dtype=DTYPE)
    assert torch.equal(max_pool([single]), single)
    with pytest.raises(ShapeError):
        max_pool([])


def test_softmax_xent_values():
    probs, loss = softmax_xent(torch.zeros(7, dtype=DTYPE), 3)
    assert abs(float(loss) - math.log(7)) < 1e-12
    assert torch.allclose(probs, torch.full((7,), 1 / 7, dtype=DTYPE))

    _, loss = softmax_xent(torch.tensor([1000.0, 0.0], dtype=DTYPE), 0)
    assert math.isfinite(float(loss)) and float(loss) < 1e-12, "stabilized against overflow"

    with pytest.raises(ValueError):
        softmax_xent(torch.zeros(3, dtype=DTYPE), 3)
    with pytest.raises(ShapeError):
        softmax_xent(torch.zeros(2, 3, dtype=DTYPE), 0)


def test_softmax_xent_gradient_tight():
    gen = make_generator(5)
    logits = _randn(gen, 6, grad=True)
    report = grad_check(lambda: softmax_xent(logits, 4)[1], {"logits": logits}, tolerance=1e-6)
    assert report.passed, str(report)


def test_l2_penalty():
    gen = make_generator(6)
    weights = [_randn(gen, 2, 3), _randn(gen, 4)]
    naive = sum(float(v) ** 2 for w in weights for v in w.reshape(-1))
    assert abs(float(l2_penalty(weights, 0.1)) - 0.1 * naive) < 1e-12
    assert float(l2_penalty(weights, 0.0)) == 0.0
    with pytest.raises(ValueError):
        l2_penalty(weights, -1.0)


def test_dropout():
    x = torch.arange(1.0, 2001.0, dtype=DTYPE)
    assert dropout(x, 0.5, seed=1, training=False) is x
    assert dropout(x, 1.0, seed=1, training=True) is x

    a = dropout(x, 0.5, seed=9, training=True)
    b = dropout(x, 0.5, seed=9, training=True)
    assert torch.equal(a, b), "same seed, same mask"

    kept = a != 0
    assert torch.allclose(a[kept], 2.0 * x[kept]), "survivors scaled by 1/keep"
    assert 800 < int(kept.sum()) < 1200

    with pytest.raises(ValueError):
        dropout(x, 0.0, seed=1, training=True)


@pytest.mark.parametrize("keep", [0.5, 0.8])
def test_dropout_preserves_the_mean(keep):
    """Over 10^5 coordinates the inverted-dropout output averages to the input."""
    x = torch.ones(100_000, dtype=DTYPE)
    y = dropout(x, keep, seed=2026, training=True)
    assert abs(float(y.mean()) - 1.0) < 0.02
    assert abs(float((y != 0).to(DTYPE).mean()) - keep) < 0.02 * keep


def test_concat_and_tape():
    tape = Tape()
    x = torch.ones(2, dtype=DTYPE, requires_grad=True)
    W = torch.full((3, 4), 0.5, dtype=DTYPE, requires_grad=True)
    b = torch.zeros(3, dtype=DTYPE, requires_grad=True)
    unused = torch.ones(5, dtype=DTYPE, requires_grad=True)

    y = tanh(affine(concat([x, x], tape), W, b, tape), tape)
    assert tape.op_counts() == {"concat": 1, "affine": 1, "tanh": 1}

    grads = tape.backward(y.sum(), {"x": x, "W": W, "b": b, "unused": unused})
    assert torch.equal(grads["unused"], torch.zeros(5, dtype=DTYPE))
    assert grads["W"].shape == (3, 4)

    with pytest.raises(ShapeError):
        tape.backward(y, {"x": x})
    with pytest.raises(ShapeError):
        concat([])


def test_non_finite_raises():
    with pytest.raises(NumericError):
        tanh(torch.tensor([float("nan")], dtype=DTYPE))


def test_relative_error_floor():
    assert relative_error(1.0, 1.0) == 0.0
    assert relative_error(0.0, 1e-9) == pytest.approx(1e-4)
    assert relative_error(2.0, 1.0) == pytest.approx(0.5)


def test_grad_check_primitives():
    """Every primitive's backward rule agrees with central differences."""
    gen = make_generator(8)
    cell = _fill(LSTMParams(3, 4), gen)
    x, h, c = _randn(gen, 3, grad=True), _randn(gen, 4, scale=0.5, grad=True), _randn(gen, 4, scale=0.5, grad=True)
    wh, wc = _randn(gen, 4), _randn(gen, 4)

    def objective():
        h_t, c_t = lstm_cell(x, h, c, cell)
        return (h_t * wh).sum() + (c_t * wc).sum()

    report = grad_check(objective, {"x": x, "h": h, "c": c, "weight": cell.weight, "bias": cell.bias})
    print(f"\nlstm_cell: {report}")
    assert report.passed, str(report)
    assert set(report.per_param()) == {"x", "h", "c", "weight", "bias"}


class _BrokenTanh(Function):
    """tanh whose backward forgets the chain rule factor."""

    @staticmethod
    def forward(ctx, x):
        return torch.tanh(x)

    @staticmethod
    def backward(ctx, gy):
        return gy


def test_grad_check_catches_broken_rule():
    x = torch.tensor([0.5, 1.0, -1.5, 2.0, 0.8], dtype=DTYPE, requires_grad=True)
    report = grad_check(lambda: (_BrokenTanh.apply(x) * 2.0).sum(), {"x": x})
    assert not report.passed, "a wrong backward rule must fail the check"
    assert report.max_rel_error > 1e-2
    assert str(report).startswith("FAIL")


def test_grad_check_non_finite():
    x = torch.tensor([1.0], dtype=DTYPE, requires_grad=True)
    with pytest.raises(NumericError):
        grad_check(lambda: (x / 0.0).sum(), {"x": x})


def test_grad_check_coordinate_sample():
    gen = make_generator(10)
    W = _randn(gen, 6, 6, grad=True)
    v = _randn(gen, 6)
    report = grad_check(lambda: torch.tanh(W @ v).sum(), {"W": W}, max_coords=5)
    assert len(report.entries) == 5
    assert report.passed
