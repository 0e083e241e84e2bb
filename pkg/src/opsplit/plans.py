"""Schedule plans: per-operator unit assignments to device and server.

Every operator's units are covered by a device prefix [0, a) and a server
suffix [b, n) with b <= a; the overlap [b, a) is replicated on both sides.
Feasibility checks coverage, the location of the virtual vertices, range
orientation, and the transmission-efficiency constraint that forbids
transfers out of oversized operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ShapeMismatch
from .graph import (
    EMPTY_RANGE,
    ModelGraph,
    UnitRange,
    child_cover,
    full_range,
    oversize_set,
    producer_units_for,
    required_input_range,
    supplied_input_range,
)


def _covers_all(m: UnitRange, r: UnitRange, n: int) -> bool:
    spans = sorted((x for x in (m, r) if not x.is_empty), key=lambda x: x.lo)
    if not spans or spans[0].lo != 0:
        return False
    reach = spans[0].hi
    for x in spans[1:]:
        if x.lo > reach:
            return False
        reach = max(reach, x.hi)
    return reach >= n


@dataclass(frozen=True)
class NodeAssignment:
    m_range: UnitRange
    r_range: UnitRange


@dataclass
class SchedulePlan:
    """Unit assignment per node. Virtual vertices are pinned to the device."""

    assignments: dict[int, NodeAssignment]
    plan_id: int = 0

    def m(self, node_id: int) -> UnitRange:
        return self.assignments[node_id].m_range

    def r(self, node_id: int) -> UnitRange:
        return self.assignments[node_id].r_range


def plan_from_splits(g: ModelGraph, splits: dict[int, tuple[int, int]], plan_id: int = 0) -> SchedulePlan:
    """Build a plan from per-real-node (a, b) pairs: device [0, a), server [b, n)."""
    assignments = {}
    for nid in g.topo_order:
        node = g.nodes[nid]
        n = node.out_units
        if node.is_virtual:
            assignments[nid] = NodeAssignment(full_range(n), EMPTY_RANGE)
            continue
        if nid not in splits:
            raise ShapeMismatch(f"no split for node {node.name}")
        a, b = splits[nid]
        if not (0 <= a <= n and 0 <= b <= n):
            raise ShapeMismatch(f"split ({a},{b}) outside [0,{n}] for {node.name}")
        m = UnitRange(0, a) if a > 0 else EMPTY_RANGE
        r = UnitRange(b, n) if b < n else EMPTY_RANGE
        assignments[nid] = NodeAssignment(m, r)
    return SchedulePlan(assignments=assignments, plan_id=plan_id)


@dataclass(frozen=True)
class Violation:
    kind: str  # coverage | location | orientation | oversize
    where: str
    detail: str

    def __str__(self):
        return f"{self.kind} at {self.where}: {self.detail}"


@dataclass
class Feasibility:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def is_feasible(g: ModelGraph, plan: SchedulePlan, include_oversize: bool = True) -> Feasibility:
    """Check a plan against all scheduling constraints and list every violation.

    ``include_oversize=False`` skips the transmission-efficiency constraint;
    baseline systems that are free to transfer anywhere are evaluated that way.
    """
    if set(plan.assignments) != set(g.nodes):
        raise ShapeMismatch("plan does not cover exactly the graph's nodes")
    v = Feasibility()
    for nid in g.topo_order:
        node = g.nodes[nid]
        n = node.out_units
        m, r = plan.m(nid), plan.r(nid)
        if m.hi > n or r.hi > n:
            raise ShapeMismatch(f"ranges exceed {n} units at {node.name}")
        if not m.is_empty and m.lo != 0:
            v.violations.append(Violation("orientation", node.name, f"device range {m} is not a prefix"))
        if not r.is_empty and r.hi != n:
            v.violations.append(Violation("orientation", node.name, f"server range {r} is not a suffix"))
        if not _covers_all(m, r, n):
            v.violations.append(Violation("coverage", node.name, f"m={m} r={r} leave units uncovered"))
        if node.is_virtual:
            if m != full_range(n) or not r.is_empty:
                v.violations.append(Violation(
                    "location", node.name, "virtual vertices must sit wholly on the device"))

    if include_oversize:
        big = oversize_set(g)
        for u in sorted(big, key=g.topo_index):
            nu = g.nodes[u]
            for w in g.children[u]:
                nv = g.nodes[w]
                for label, side in (("m", plan.m), ("r", plan.r)):
                    have = supplied_input_range(nu, nv, side(u))
                    if not child_cover(nv, have).contains(side(w)):
                        v.violations.append(Violation(
                            "oversize", f"{nu.name}->{nv.name}",
                            f"{label}-side would transfer units of an oversized output"))
    return v


def transfer_needs(g: ModelGraph, plan: SchedulePlan, u: int, w: int) -> dict[str, UnitRange]:
    """Units of ``u`` that must cross the link on edge (u, w), per receiving device.

    A device needs the producer units feeding its share of ``w`` that its own
    side of ``u`` did not produce. Coverage guarantees the other side has them.
    """
    nu, nw = g.nodes[u], g.nodes[w]
    out = {}
    for dev, side in (("m", plan.m), ("r", plan.r)):
        need_in = required_input_range(nw, side(w))
        need_units = producer_units_for(nu, nw, need_in)
        out[dev] = need_units.minus(side(u))
    return out


def plan_device_only(g: ModelGraph, plan_id: int = 0) -> SchedulePlan:
    return plan_from_splits(
        g, {nid: (g.nodes[nid].out_units, g.nodes[nid].out_units) for nid in g.real_ids},
        plan_id=plan_id)


def plan_server_only(g: ModelGraph, plan_id: int = 0) -> SchedulePlan:
    return plan_from_splits(g, {nid: (0, 0) for nid in g.real_ids}, plan_id=plan_id)


def plan_layer_partition(g: ModelGraph, split_index: int, plan_id: int = 0) -> SchedulePlan:
    """Single-cut plan: the first ``split_index`` real operators (in topological
    order) run wholly on the device, the rest wholly on the server."""
    real = g.real_ids
    if not 0 <= split_index <= len(real):
        raise ShapeMismatch(f"split index {split_index} outside [0,{len(real)}]")
    splits = {}
    for pos, nid in enumerate(real):
        n = g.nodes[nid].out_units
        splits[nid] = (n, n) if pos < split_index else (0, 0)
    return plan_from_splits(g, splits, plan_id=plan_id)


def plan_splits(g: ModelGraph, plan: SchedulePlan) -> dict[int, tuple[int, int]]:
    """Inverse of plan_from_splits for the real nodes."""
    out = {}
    for nid in g.real_ids:
        n = g.nodes[nid].out_units
        m, r = plan.m(nid), plan.r(nid)
        out[nid] = (m.hi if not m.is_empty else 0, r.lo if not r.is_empty else n)
    return out


def plan_doc(g: ModelGraph, plan: SchedulePlan) -> dict:
    ranges = []
    for nid in g.real_ids:
        m, r = plan.m(nid), plan.r(nid)
        ranges.append({"node": nid, "m": [m.lo, m.hi], "r": [r.lo, r.hi]})
    return {"plan_id": plan.plan_id, "ranges": ranges}


def plan_from_doc(g: ModelGraph, doc: dict) -> SchedulePlan:
    splits = {}
    for entry in doc["ranges"]:
        nid = int(entry["node"])
        n = g.nodes[nid].out_units
        m = UnitRange(*entry["m"])
        r = UnitRange(*entry["r"])
        splits[nid] = (m.hi if not m.is_empty else 0, r.lo if not r.is_empty else n)
    return plan_from_splits(g, splits, plan_id=int(doc.get("plan_id", 0)))
