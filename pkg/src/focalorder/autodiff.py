"""Minimal reverse-mode differentiation on an explicit tape.

Everything is double precision. Ops append a record to the tape; backward
walks the records in reverse, accumulating gradients into ``Tensor.grad``.
There is no broadcasting beyond scalar-times-tensor, which keeps shapes
honest for the small dense models this engine serves.
"""

from __future__ import annotations

import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

NEG_INF = -np.inf


class Tensor:
    """A dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed ops for reverse traversal."""

    def __init__(self):
        self._records: List[Tuple[Tensor, Tuple[Tensor, ...], Callable]] = []

    def record(self, output: Tensor, inputs: Sequence[Tensor], backward_fn: Callable):
        self._records.append((output, tuple(inputs), backward_fn))

    def __len__(self):
        return len(self._records)


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)

    def backward(g):
        return g, g

    tape.record(out, (a, b), backward)
    return out


def mul(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data

    def backward(g):
        return g * bd, g * ad

    tape.record(out, (a, b), backward)
    return out


def scale(tape: Tape, a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)

    def backward(g):
        return (g * c,)

    tape.record(out, (a,), backward)
    return out


def matvec(tape: Tape, m: Tensor, v: Tensor) -> Tensor:
    if m.data.ndim != 2 or v.data.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec: incompatible shapes {m.shape} and {v.shape}")
    out = Tensor(m.data @ v.data)
    md, vd = m.data, v.data

    def backward(g):
        return g[:, None] * vd[None, :], md.T @ g

    tape.record(out, (m, v), backward)
    return out


def transpose(tape: Tape, m: Tensor) -> Tensor:
    if m.data.ndim != 2:
        raise ValueError("transpose expects a matrix")
    out = Tensor(m.data.T)

    def backward(g):
        return (g.T,)

    tape.record(out, (m,), backward)
    return out


def matmul(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)
    ad, bd = a.data, b.data

    def backward(g):
        return g @ bd.T, ad.T @ g

    tape.record(out, (a, b), backward)
    return out


def concat(tape: Tape, parts: Sequence[Tensor]) -> Tensor:
    """Concatenate scalars and vectors into one vector."""
    flats = [p.data.reshape(-1) for p in parts]
    sizes = [f.size for f in flats]
    out = Tensor(np.concatenate(flats))
    shapes = [p.data.shape for p in parts]

    def backward(g):
        grads, pos = [], 0
        for size, shp in zip(sizes, shapes):
            grads.append(g[pos : pos + size].reshape(shp))
            pos += size
        return tuple(grads)

    tape.record(out, tuple(parts), backward)
    return out


def stack_rows(tape: Tape, rows: Sequence[Tensor]) -> Tensor:
    out = Tensor(np.stack([r.data for r in rows]))

    def backward(g):
        return tuple(g[i] for i in range(len(rows)))

    tape.record(out, tuple(rows), backward)
    return out


def row_select(tape: Tape, m: Tensor, idx: int) -> Tensor:
    if m.data.ndim != 2:
        raise ValueError("row_select expects a matrix")
    out = Tensor(m.data[idx])
    shape = m.shape

    def backward(g):
        grad = np.zeros(shape)
        grad[idx] = g
        return (grad,)

    tape.record(out, (m,), backward)
    return out


def tanh(tape: Tape, a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))
    od = out.data

    def backward(g):
        return (g * (1.0 - od * od),)

    tape.record(out, (a,), backward)
    return out


def masked_log_softmax(tape: Tape, logits: Tensor, mask: np.ndarray) -> Tensor:
    """Log-softmax over the unmasked subset; masked entries come out as -inf
    and must not be gathered downstream."""
    if logits.data.ndim != 1:
        raise ValueError("masked_log_softmax expects a vector")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise ValueError("mask shape must match logits")
    if not mask.any():
        raise ValueError("masked_log_softmax: all entries are masked")
    vals = logits.data[mask]
    m = vals.max()
    z = m + math.log(np.exp(vals - m).sum())
    out_data = np.full(logits.shape, NEG_INF)
    out_data[mask] = logits.data[mask] - z
    out = Tensor(out_data)
    probs = np.zeros(logits.shape)
    probs[mask] = np.exp(out_data[mask])

    def backward(g):
        gm = np.where(mask, g, 0.0)
        return (gm - probs * gm.sum(),)

    tape.record(out, (logits,), backward)
    return out


def gather(tape: Tape, v: Tensor, idx: int) -> Tensor:
    if v.data.ndim != 1:
        raise ValueError("gather expects a vector")
    out = Tensor(v.data[idx])
    size = v.shape[0]

    def backward(g):
        grad = np.zeros(size)
        grad[idx] = g
        return (grad,)

    tape.record(out, (v,), backward)
    return out


def tsum(tape: Tape, a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())
    shape = a.data.shape

    def backward(g):
        return (np.full(shape, g),)

    tape.record(out, (a,), backward)
    return out


def tmean(tape: Tape, a: Tensor) -> Tensor:
    n = a.data.size
    if n == 0:
        raise ValueError("mean of an empty tensor")
    out = Tensor(a.data.mean())
    shape = a.data.shape

    def backward(g):
        return (np.full(shape, g / n),)

    tape.record(out, (a,), backward)
    return out


def hinge(tape: Tape, x: Tensor) -> Tensor:
    """max(0, x) for a scalar; the subgradient at exactly 0 is 0."""
    if x.data.ndim != 0:
        raise ValueError("hinge expects a scalar")
    active = float(x.data) > 0.0
    out = Tensor(x.data if active else 0.0)

    def backward(g):
        return (g if active else np.zeros(()),)

    tape.record(out, (x,), backward)
    return out


def backward(tape: Tape, output: Tensor) -> None:
    """Populate gradients of everything on the tape with d(output)/d(tensor).

    Gradients of tensors touched by the tape are reset first, so repeated
    calls yield the true derivative rather than an accumulation.
    """
    if output.data.ndim != 0:
        raise ValueError("backward requires a scalar output")
    produced = False
    for out, inputs, _ in tape._records:
        out.grad = None
        for t in inputs:
            t.grad = None
        if out is output:
            produced = True
    if not produced:
        raise ValueError("output was not produced on this tape")
    output.grad = np.ones(())
    for out, inputs, backward_fn in reversed(tape._records):
        if out.grad is None:
            continue
        grads = backward_fn(out.grad)
        for t, g in zip(inputs, grads):
            if g is None:
                continue
            if t.grad is None:
                t.grad = np.zeros(t.data.shape)
            t.grad = t.grad + g


def grad_check(
    f: Callable[[Sequence[Tensor]], Tuple[Tape, Tensor]],
    params: Sequence[Tensor],
    step: float = 1e-5,
) -> float:
    """Compare analytic gradients of f against central finite differences.

    ``f`` must deterministically rebuild its computation from the parameter
    values and return the tape plus the scalar output. Returns the maximum
    relative error over every parameter component, with the relative error
    denominator floored at 1e-8.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    tape, out = f(params)
    if not math.isfinite(float(out.data)):
        raise ValueError("objective is not finite")
    backward(tape, out)
    analytic = [
        np.array(p.grad) if p.grad is not None else np.zeros(p.data.shape)
        for p in params
    ]

    max_err = 0.0
    for p, ana in zip(params, analytic):
        flat = p.data.reshape(-1)
        ana_flat = np.asarray(ana).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            _, hi = f(params)
            flat[i] = orig - step
            _, lo = f(params)
            flat[i] = orig
            hi_v, lo_v = float(hi.data), float(lo.data)
            if not (math.isfinite(hi_v) and math.isfinite(lo_v)):
                raise ValueError("objective is not finite during perturbation")
            numeric = (hi_v - lo_v) / (2 * step)
            denom = max(1e-8, abs(ana_flat[i]) + abs(numeric))
            max_err = max(max_err, abs(ana_flat[i] - numeric) / denom)
    return max_err
