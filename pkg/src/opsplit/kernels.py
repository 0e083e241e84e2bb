"""Reference tensor kernels and split/combine primitives.

Everything here is float32 with a fixed per-output-unit accumulation order
(ascending input index), so a computation decomposed into unit ranges and
recombined is bit-identical to the single-tensor reference regardless of how
the ranges were partitioned or replicated.

Kernel dispatch follows the operator kind: element-wise nodes run ReLU,
block-wise nodes run a 1-D convolution over their block parameters, row-wise
nodes run a per-row affine map, and global nodes run softmax. A global node's
single schedulable unit carries its entire output tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoverageGap, InsufficientHalo, RangeOutOfBounds, ReplicaMismatch
from .graph import (
    EMPTY_RANGE,
    ModelGraph,
    OperatorKind,
    OperatorNode,
    UnitRange,
    required_input_range,
)


@dataclass
class Tensor1D:
    """Full tensor along the partition axis, one float32 per unit."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)

    @property
    def units(self) -> int:
        return len(self.values)


@dataclass
class TensorPart:
    """Values for a contiguous unit range.

    For local operators the payload is one float per unit. For a global
    operator's single unit the payload is the operator's whole output tensor.
    """

    range: UnitRange
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)


def payload_width(node: OperatorNode) -> int:
    """Float count of the node's full output payload."""
    if node.kind is OperatorKind.GLOBAL:
        return node.in_units
    return node.out_units


def split(t: Tensor1D, ranges: list[UnitRange]) -> list[TensorPart]:
    """Copy out the selected unit ranges; overlapping ranges are permitted."""
    parts = []
    for r in ranges:
        if r.lo < 0 or r.hi > t.units:
            raise RangeOutOfBounds(f"range {r} outside [0,{t.units})")
        parts.append(TensorPart(r.normalized(), t.values[r.lo:r.hi].copy()))
    return parts


def combine(parts: list[TensorPart], total: int) -> Tensor1D:
    """Reassemble a full tensor from parts covering [0, total).

    Raises CoverageGap if any unit is missing and ReplicaMismatch if two parts
    disagree on a replicated unit.
    """
    out = np.zeros(total, dtype=np.float32)
    filled = np.zeros(total, dtype=bool)
    for p in parts:
        r = p.range
        if r.lo < 0 or r.hi > total:
            raise RangeOutOfBounds(f"part range {r} outside [0,{total})")
        if len(p.values) != r.width:
            raise RangeOutOfBounds(f"part {r} carries {len(p.values)} values")
        seen = filled[r.lo:r.hi]
        if seen.any():
            prev = out[r.lo:r.hi]
            if not np.array_equal(prev[seen], p.values[seen]):
                raise ReplicaMismatch(f"replicated units disagree within {r}")
        out[r.lo:r.hi] = p.values
        filled[r.lo:r.hi] = True
    if not filled.all():
        missing = int(np.flatnonzero(~filled)[0])
        raise CoverageGap(f"unit {missing} not covered by any part")
    return Tensor1D(out)


def _conv1d(node: OperatorNode, taps: np.ndarray, part: TensorPart, out: UnitRange) -> np.ndarray:
    b = node.block
    taps = np.asarray(taps, dtype=np.float32)
    if len(taps) != b.kernel:
        raise RangeOutOfBounds(f"{node.name}: {len(taps)} taps for kernel {b.kernel}")
    # Window of input positions feeding `out`, zero outside the real input.
    t0 = out.lo * b.stride - b.padding
    t1 = (out.hi - 1) * b.stride - b.padding + b.span
    window = np.zeros(t1 - t0, dtype=np.float32)
    lo = max(t0, 0, part.range.lo)
    hi = min(t1, node.in_units, part.range.hi)
    if lo < hi:
        window[lo - t0:hi - t0] = part.values[lo - part.range.lo:hi - part.range.lo]
    acc = np.zeros(out.width, dtype=np.float32)
    last = (out.width - 1) * b.stride + 1
    for i in range(b.kernel):
        acc += taps[i] * window[i * b.dilation:i * b.dilation + last:b.stride]
    return acc


def _softmax(values: np.ndarray) -> np.ndarray:
    m = np.float32(values.max())
    e = np.exp(values - m, dtype=np.float32)
    s = np.float32(0.0)
    for x in e:  # fixed ascending summation order
        s = np.float32(s + x)
    return (e / s).astype(np.float32)


def apply_range(op: OperatorNode, weights, input_part: TensorPart, out: UnitRange) -> TensorPart:
    """Compute output units ``out`` of ``op`` from a sufficient input part.

    The result is numerically identical to slicing the full-tensor reference:
    the accumulation order per output unit never depends on the range bounds.
    """
    if out.lo < 0 or out.hi > op.out_units:
        raise RangeOutOfBounds(f"output range {out} outside [0,{op.out_units}) of {op.name}")
    out = out.normalized()
    if out.is_empty:
        return TensorPart(EMPTY_RANGE, np.zeros(0, dtype=np.float32))
    need = required_input_range(op, out)
    if not input_part.range.contains(need):
        raise InsufficientHalo(
            f"{op.name}: need input {need}, have {input_part.range}")

    if op.kind is OperatorKind.ELEMENT_WISE:
        off = out.lo - input_part.range.lo
        vals = np.maximum(input_part.values[off:off + out.width], np.float32(0.0))
    elif op.kind is OperatorKind.ROW_WISE:
        w, bias = np.float32(weights[0]), np.float32(weights[1])
        off = out.lo - input_part.range.lo
        vals = (w * input_part.values[off:off + out.width]) + bias
    elif op.kind is OperatorKind.BLOCK_WISE:
        vals = _conv1d(op, weights, input_part, out)
    else:  # GLOBAL: single unit carrying the whole softmax output
        off = -input_part.range.lo
        vals = _softmax(input_part.values[off:off + op.in_units])
    return TensorPart(out, vals.astype(np.float32, copy=False))


def run_reference(g: ModelGraph, weights: dict, x: Tensor1D) -> dict[int, np.ndarray]:
    """Single-device execution of a kernel-backed chain on full tensors.

    Returns the full output array per real node id. Only single-parent chains
    are executable; DAG models are simulation-only.
    """
    if x.units != g.nodes[g.input_id].out_units:
        raise RangeOutOfBounds(
            f"input has {x.units} units, model expects {g.nodes[g.input_id].out_units}")
    outputs: dict[int, np.ndarray] = {g.input_id: x.values}
    for nid in g.topo_order:
        node = g.nodes[nid]
        if node.is_virtual:
            continue
        ps = g.parents[nid]
        if len(ps) != 1:
            raise RangeOutOfBounds(f"{node.name}: kernel execution needs single-parent chains")
        parent_vals = outputs[ps[0]]
        part = TensorPart(UnitRange(0, node.in_units), parent_vals)
        outputs[nid] = apply_range(node, weights.get(nid), part, node.full_out).values
    return outputs


def reference_output(g: ModelGraph, weights: dict, x: Tensor1D) -> Tensor1D:
    """Final model output (the tensor delivered to the virtual output vertex)."""
    outs = run_reference(g, weights, x)
    sink = g.parents[g.output_id][0]
    return Tensor1D(outs[sink])
