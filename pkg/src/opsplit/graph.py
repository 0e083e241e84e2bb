"""Operator DAG: taxonomy, unit ranges, and input/output dependency (halo) arithmetic.

A model is a DAG of operator nodes. Local operators (element-wise, block-wise,
row-wise) decompose into independently computable unit-indexed operations along
a single partition axis; global operators consume their whole input and are
represented as a single schedulable unit whose payload is the entire tensor.
Two virtual vertices, ``input`` and ``output``, anchor the location constraints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    CycleDetected,
    DanglingEdge,
    MissingBlockParams,
    RangeOutOfBounds,
    UnitMismatch,
    UnknownOperator,
    UnreachableNode,
)

VIRTUAL_INPUT = "input"
VIRTUAL_OUTPUT = "output"


class OperatorKind(Enum):
    ELEMENT_WISE = "elementwise"
    BLOCK_WISE = "blockwise"
    ROW_WISE = "rowwise"
    GLOBAL = "global"


# Operator families with a known classification. Block-wise families need
# block parameters; matmul is row-wise unless its parameter matrix has a
# single row, which forces global (the whole input is one row's worth).
_FAMILY_KINDS = {
    "relu": OperatorKind.ELEMENT_WISE,
    "sigmoid": OperatorKind.ELEMENT_WISE,
    "silu": OperatorKind.ELEMENT_WISE,
    "add": OperatorKind.ROW_WISE,
    "matmul": OperatorKind.ROW_WISE,
    "conv": OperatorKind.BLOCK_WISE,
    "maxpool": OperatorKind.BLOCK_WISE,
    "avgpool": OperatorKind.BLOCK_WISE,
    "softmax": OperatorKind.GLOBAL,
}


@dataclass(frozen=True)
class BlockParams:
    """Receptive-field parameters of a block-wise operator."""

    kernel: int
    stride: int = 1
    padding: int = 0
    dilation: int = 1

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1 or self.padding < 0 or self.dilation < 1:
            raise MissingBlockParams(
                f"invalid block params k={self.kernel} s={self.stride} "
                f"p={self.padding} d={self.dilation}"
            )

    @property
    def span(self) -> int:
        """Input width covered by one output unit."""
        return self.dilation * (self.kernel - 1) + 1


@dataclass(frozen=True)
class UnitRange:
    """Contiguous half-open range of unit indices [lo, hi)."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo < 0 or self.hi < self.lo:
            raise RangeOutOfBounds(f"bad unit range [{self.lo}, {self.hi})")

    @property
    def width(self) -> int:
        return self.hi - self.lo

    @property
    def is_empty(self) -> bool:
        return self.lo == self.hi

    def contains(self, other: "UnitRange") -> bool:
        """Whether ``other`` is a subset of this range (empty is subset of anything)."""
        return other.is_empty or (self.lo <= other.lo and other.hi <= self.hi)

    def intersect(self, other: "UnitRange") -> "UnitRange":
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        return UnitRange(lo, hi) if lo < hi else EMPTY_RANGE

    def minus(self, other: "UnitRange") -> "UnitRange":
        """Set difference, valid only when the result stays contiguous.

        Holds whenever ``other`` is a prefix or suffix overlap of this range,
        which is the only case schedule plans produce.
        """
        if self.is_empty or other.is_empty:
            return self.normalized()
        if other.lo <= self.lo:
            lo = max(self.lo, other.hi)
            return UnitRange(lo, self.hi) if lo < self.hi else EMPTY_RANGE
        if other.hi >= self.hi:
            hi = min(self.hi, other.lo)
            return UnitRange(self.lo, hi) if self.lo < hi else EMPTY_RANGE
        raise RangeOutOfBounds(f"difference [{self.lo},{self.hi}) - [{other.lo},{other.hi}) is not contiguous")

    def normalized(self) -> "UnitRange":
        return EMPTY_RANGE if self.is_empty else self

    def __str__(self):
        return f"[{self.lo},{self.hi})"


EMPTY_RANGE = UnitRange(0, 0)


def full_range(units: int) -> UnitRange:
    return UnitRange(0, units)


@dataclass(frozen=True)
class OperatorNode:
    """One operator vertex. ``out_units`` is the number of schedulable operations."""

    id: int
    name: str
    kind: OperatorKind
    in_units: int
    out_units: int
    out_bytes_per_unit: float
    block: BlockParams | None = None
    is_virtual: bool = False

    def __post_init__(self):
        if self.out_units < 1 or self.in_units < 0:
            raise UnitMismatch(f"node {self.name}: unit counts must be positive")
        if self.kind is OperatorKind.BLOCK_WISE and self.block is None:
            raise MissingBlockParams(f"block-wise node {self.name} lacks block params")
        if self.kind is OperatorKind.GLOBAL and self.out_units != 1:
            raise UnitMismatch(f"global node {self.name} must have exactly one unit")
        if self.out_bytes_per_unit < 0:
            raise UnitMismatch(f"node {self.name}: negative byte size")

    @property
    def full_out(self) -> UnitRange:
        return UnitRange(0, self.out_units)

    @property
    def full_in(self) -> UnitRange:
        return UnitRange(0, self.in_units)


def classify_operator(op_spec: dict) -> OperatorKind:
    """Classify an operator spec into the four-kind taxonomy.

    An explicit ``kind`` wins. Otherwise the family name decides; a matmul
    whose parameter matrix has one row is global, since each output then
    depends on the entire input.
    """
    declared = op_spec.get("kind")
    if declared is not None:
        try:
            return OperatorKind(declared)
        except ValueError:
            raise UnknownOperator(f"unknown kind {declared!r}") from None
    family = str(op_spec.get("name", op_spec.get("family", ""))).lower()
    for key, kind in _FAMILY_KINDS.items():
        if family == key or family.startswith(key):
            if key == "matmul" and op_spec.get("param_rows") == 1:
                return OperatorKind.GLOBAL
            return kind
    raise UnknownOperator(f"unrecognized operator family {family!r} and no declared kind")


def required_input_range(v: OperatorNode, out: UnitRange) -> UnitRange:
    """Input units that the output range ``out`` of ``v`` depends on.

    Element-wise and row-wise operators map units one-to-one; block-wise
    operators take the union of per-output receptive fields clipped to the
    input; global operators depend on everything.
    """
    if out.lo < 0 or out.hi > v.out_units:
        raise RangeOutOfBounds(f"output range {out} outside [0,{v.out_units}) of {v.name}")
    if out.is_empty:
        return EMPTY_RANGE
    if v.kind in (OperatorKind.ELEMENT_WISE, OperatorKind.ROW_WISE):
        return out
    if v.kind is OperatorKind.GLOBAL:
        return v.full_in
    b = v.block
    lo = max(0, out.lo * b.stride - b.padding)
    hi = min(v.in_units, (out.hi - 1) * b.stride - b.padding + b.span)
    return UnitRange(lo, hi) if lo < hi else EMPTY_RANGE


def child_cover(v: OperatorNode, available_in: UnitRange) -> UnitRange:
    """Maximal contiguous output range of ``v`` computable from ``available_in``.

    Inverse of the halo: required_input_range(v, child_cover(v, r)) is always
    a subset of r, and extending the result by one unit breaks that.
    """
    avail = available_in.intersect(v.full_in)
    if avail.is_empty:
        return EMPTY_RANGE
    if v.kind in (OperatorKind.ELEMENT_WISE, OperatorKind.ROW_WISE):
        return avail.intersect(v.full_out)
    if v.kind is OperatorKind.GLOBAL:
        return UnitRange(0, 1) if avail == v.full_in else EMPTY_RANGE
    b = v.block
    # Receptive field of output j, clipped: [max(0, j*s - p), min(in, j*s - p + span)).
    # Both ends are monotone in j, so the computable set is one interval.
    if avail.lo == 0:
        j_min = 0
    else:
        j_min = -((-(avail.lo + b.padding)) // b.stride)  # ceil((lo + p) / s)
    if avail.hi == v.in_units:
        j_max = v.out_units - 1
    else:
        j_max = (avail.hi + b.padding - b.span) // b.stride
    j_min = max(j_min, 0)
    j_max = min(j_max, v.out_units - 1)
    return UnitRange(j_min, j_max + 1) if j_min <= j_max else EMPTY_RANGE


@dataclass
class ModelGraph:
    """Validated operator DAG with virtual input/output vertices attached."""

    nodes: dict[int, OperatorNode]
    edges: list[tuple[int, int]]
    raw_input_bytes: float
    input_id: int
    output_id: int
    topo_order: list[int] = field(default_factory=list)
    parents: dict[int, list[int]] = field(default_factory=dict)
    children: dict[int, list[int]] = field(default_factory=dict)

    def node(self, node_id: int) -> OperatorNode:
        return self.nodes[node_id]

    @property
    def real_ids(self) -> list[int]:
        """Non-virtual node ids in topological order."""
        return [i for i in self.topo_order if not self.nodes[i].is_virtual]

    def topo_index(self, node_id: int) -> int:
        return self._topo_pos[node_id]

    def __post_init__(self):
        self._topo_pos = {nid: i for i, nid in enumerate(self.topo_order)}


def supplied_input_range(u: OperatorNode, v: OperatorNode, produced: UnitRange) -> UnitRange:
    """Input units of ``v`` supplied by units ``produced`` of parent ``u``.

    A global parent's single unit carries its whole output tensor and thus
    supplies all of ``v``'s input at once.
    """
    if u.kind is OperatorKind.GLOBAL:
        return v.full_in if not produced.is_empty else EMPTY_RANGE
    return produced.intersect(v.full_in)


def producer_units_for(u: OperatorNode, v: OperatorNode, input_range: UnitRange) -> UnitRange:
    """Units of parent ``u`` needed to supply ``input_range`` of ``v``'s input."""
    if input_range.is_empty:
        return EMPTY_RANGE
    if u.kind is OperatorKind.GLOBAL:
        return UnitRange(0, 1)
    return input_range


def oversize_set(g: ModelGraph) -> set[int]:
    """Nodes whose total output exceeds the raw model input (strictly).

    Transfers immediately after these nodes are forbidden by the transmission
    efficiency constraint.
    """
    out = set()
    for nid, n in g.nodes.items():
        if n.is_virtual:
            continue
        if n.out_units * n.out_bytes_per_unit > g.raw_input_bytes:
            out.add(nid)
    return out


def _toposort(ids, parents, children):
    indeg = {i: len(parents[i]) for i in ids}
    ready = sorted(i for i in ids if indeg[i] == 0)
    order = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        added = []
        for c in children[nid]:
            indeg[c] -= 1
            if indeg[c] == 0:
                added.append(c)
        if added:
            ready.extend(added)
            ready.sort()
    if len(order) != len(ids):
        raise CycleDetected("model graph contains a cycle")
    return order


def build_graph(doc: dict) -> ModelGraph:
    """Build and validate a ModelGraph from a parsed model document.

    Attaches the virtual ``input``/``output`` vertices, checks acyclicity,
    reachability, unit-count consistency along every edge, and block-parameter
    presence, and caches the topological order.
    """
    raw_input_bytes = float(doc["raw_input_bytes"])
    nodes: dict[int, OperatorNode] = {}
    for nd in doc["nodes"]:
        nid = int(nd["id"])
        if nid in nodes:
            raise DanglingEdge(f"duplicate node id {nid}")
        kind = classify_operator(nd)
        block = None
        if kind is OperatorKind.BLOCK_WISE:
            braw = nd.get("block")
            if not braw or any(k not in braw for k in ("kernel", "stride", "padding", "dilation")):
                raise MissingBlockParams(f"node {nd.get('name', nid)}: block-wise without kernel/stride/padding/dilation")
            block = BlockParams(int(braw["kernel"]), int(braw["stride"]),
                                int(braw["padding"]), int(braw["dilation"]))
        nodes[nid] = OperatorNode(
            id=nid,
            name=str(nd["name"]),
            kind=kind,
            in_units=int(nd["in_units"]),
            out_units=int(nd["out_units"]),
            out_bytes_per_unit=float(nd["out_bytes_per_unit"]),
            block=block,
        )

    edges = []
    for e in doc["edges"]:
        u, v = int(e[0]), int(e[1])
        if u not in nodes or v not in nodes:
            raise DanglingEdge(f"edge ({u},{v}) references a missing node")
        if u == v:
            raise CycleDetected(f"self edge on node {u}")
        edges.append((u, v))

    parents = {i: [] for i in nodes}
    children = {i: [] for i in nodes}
    for u, v in edges:
        parents[v].append(u)
        children[u].append(v)

    # Attach virtual vertices around the sources and sinks.
    sources = [i for i in nodes if not parents[i]]
    sinks = [i for i in nodes if not children[i]]
    if not sources or not sinks:
        raise CycleDetected("model graph has no source or no sink")
    src_units = {nodes[i].in_units for i in sources}
    if len(src_units) != 1:
        raise UnitMismatch(f"source nodes disagree on input units: {sorted(src_units)}")
    sink_units = {nodes[i].out_units for i in sinks}
    if len(sink_units) != 1:
        raise UnitMismatch(f"sink nodes disagree on output units: {sorted(sink_units)}")
    in_units = src_units.pop()
    out_units = sink_units.pop()
    # Sinks that are global carry their whole tensor in one unit; the virtual
    # output then has a single unit as well.
    input_id = max(nodes) + 1
    output_id = input_id + 1
    nodes[input_id] = OperatorNode(
        id=input_id, name=VIRTUAL_INPUT, kind=OperatorKind.ELEMENT_WISE,
        in_units=in_units, out_units=in_units,
        out_bytes_per_unit=raw_input_bytes / in_units, is_virtual=True)
    nodes[output_id] = OperatorNode(
        id=output_id, name=VIRTUAL_OUTPUT, kind=OperatorKind.ELEMENT_WISE,
        in_units=out_units, out_units=out_units,
        out_bytes_per_unit=raw_input_bytes / out_units, is_virtual=True)
    parents[input_id], children[input_id] = [], []
    parents[output_id], children[output_id] = [], []
    for s in sources:
        edges.append((input_id, s))
        parents[s].append(input_id)
        children[input_id].append(s)
    for s in sinks:
        edges.append((s, output_id))
        parents[output_id].append(s)
        children[s].append(output_id)

    for u, v in edges:
        nu, nv = nodes[u], nodes[v]
        if nu.kind is not OperatorKind.GLOBAL and nu.out_units != nv.in_units:
            raise UnitMismatch(
                f"edge ({nu.name},{nv.name}): producer has {nu.out_units} units, "
                f"consumer expects {nv.in_units}")

    order = _toposort(list(nodes), parents, children)

    # Everything must sit between the virtual vertices.
    reach_fwd = {input_id}
    for nid in order:
        if nid in reach_fwd:
            reach_fwd.update(children[nid])
    reach_bwd = {output_id}
    for nid in reversed(order):
        if nid in reach_bwd:
            reach_bwd.update(parents[nid])
    stranded = set(nodes) - (reach_fwd & reach_bwd)
    if stranded:
        names = sorted(nodes[i].name for i in stranded)
        raise UnreachableNode(f"nodes not on an input-output path: {names}")

    for nid in nodes:
        children[nid].sort(key=order.index)
        parents[nid].sort(key=order.index)

    return ModelGraph(
        nodes=nodes, edges=edges, raw_input_bytes=raw_input_bytes,
        input_id=input_id, output_id=output_id, topo_order=order,
        parents=parents, children=children)


def load_model(path) -> ModelGraph:
    with open(path) as fh:
        return build_graph(json.load(fh))


def model_doc(g: ModelGraph) -> dict:
    """Serializable document for the non-virtual part of the graph."""
    nodes = []
    for nid in g.real_ids:
        n = g.nodes[nid]
        nd = {
            "id": n.id, "name": n.name, "kind": n.kind.value,
            "in_units": n.in_units, "out_units": n.out_units,
            "out_bytes_per_unit": n.out_bytes_per_unit,
        }
        if n.block is not None:
            nd["block"] = {"kernel": n.block.kernel, "stride": n.block.stride,
                           "padding": n.block.padding, "dilation": n.block.dilation}
        nodes.append(nd)
    real = set(g.real_ids)
    edges = [[u, v] for u, v in g.edges if u in real and v in real]
    return {"raw_input_bytes": g.raw_input_bytes, "nodes": nodes, "edges": edges}


def save_model(g: ModelGraph, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_doc(g), fh, indent=2, sort_keys=True)
        fh.write("\n")
