"""Discrete-event execution of a schedule plan.

Event-driven counterpart of the recurrence evaluator: per-device serial
compute streams, per-direction FIFO link queues, transfers enqueued the moment
the producing batch completes, launches firing once all needed units are
present. For every feasible plan the resulting makespan equals the evaluator's
exactly; the two implementations cross-check each other.

Also houses the client-side energy model (three power states integrated over
the timeline) and the phase breakdown used for reporting.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .errors import Deadlock, InfeasiblePlan
from .graph import ModelGraph, producer_units_for, required_input_range
from .plans import SchedulePlan, is_feasible, transfer_needs
from .profiles import DEVICE_M, DEVICE_R, LinkModel, ProfileTable, compute_time, edge_bytes, tx_time

RES_M = "M-compute"
RES_R = "R-compute"
RES_MR = "link-MR"
RES_RM = "link-RM"

_COMPUTE_RES = {DEVICE_M: RES_M, DEVICE_R: RES_R}
_LINK_RES = {DEVICE_R: RES_MR, DEVICE_M: RES_RM}  # keyed by receiving device


@dataclass(frozen=True)
class TimelineEvent:
    resource: str
    label: str
    start: float
    end: float


@dataclass
class Timeline:
    events: list[TimelineEvent] = field(default_factory=list)
    makespan: float = 0.0

    def busy(self, resource: str) -> list[tuple[float, float]]:
        return sorted((e.start, e.end) for e in self.events if e.resource == resource)


@dataclass(frozen=True)
class _Transfer:
    u: int
    w: int
    to_device: str
    sender: str
    nbytes: float
    key: tuple  # FIFO tie-break: (producer topo pos, consumer topo pos)


def simulate(g: ModelGraph, profile: ProfileTable, link: LinkModel,
             plan: SchedulePlan, check: bool = True,
             include_oversize: bool = True) -> Timeline:
    """Run the plan through the event loop and return the full timeline."""
    if check:
        verdict = is_feasible(g, plan, include_oversize=include_oversize)
        if not verdict.ok:
            raise InfeasiblePlan(verdict.violations)

    sides = {DEVICE_M: plan.m, DEVICE_R: plan.r}

    # Static structure: per-device batch order, transfers, and launch deps.
    batches = {dev: [v for v in g.topo_order if not sides[dev](v).is_empty]
               for dev in (DEVICE_M, DEVICE_R)}
    transfers: dict[tuple[int, int, str], _Transfer] = {}
    by_sender: dict[tuple[int, str], list[_Transfer]] = {}
    for u in g.topo_order:
        for w in g.children[u]:
            needs = transfer_needs(g, plan, u, w)
            for dev in (DEVICE_M, DEVICE_R):
                missing = needs[dev]
                if missing.is_empty:
                    continue
                sender = DEVICE_R if dev == DEVICE_M else DEVICE_M
                t = _Transfer(u, w, dev, sender,
                              missing.width * edge_bytes(profile, g, u, w),
                              (g.topo_index(u), g.topo_index(w)))
                transfers[(u, w, dev)] = t
                by_sender.setdefault((u, sender), []).append(t)

    deps: dict[tuple[int, str], list] = {}
    for dev in (DEVICE_M, DEVICE_R):
        for v in batches[dev]:
            node = g.nodes[v]
            x = sides[dev](v)
            need = []
            for u in g.parents[v]:
                nu = g.nodes[u]
                need_units = producer_units_for(nu, node, required_input_range(node, x))
                if need_units.is_empty:
                    continue
                if not need_units.intersect(sides[dev](u)).is_empty:
                    need.append(("batch", (u, dev)))
                if not need_units.minus(sides[dev](u)).is_empty:
                    need.append(("transfer", (u, v, dev)))
            deps[(v, dev)] = need

    # Dynamic state.
    done_batch: dict[tuple[int, str], float] = {}
    done_transfer: dict[tuple[int, int, str], float] = {}
    next_batch = {DEVICE_M: 0, DEVICE_R: 0}
    dev_busy = {DEVICE_M: False, DEVICE_R: False}
    link_busy = {DEVICE_M: False, DEVICE_R: False}
    queue: dict[str, list] = {DEVICE_M: [], DEVICE_R: []}

    timeline = Timeline()
    heap: list = []
    seq = 0

    def push(time, prio, action, payload):
        nonlocal seq
        heapq.heappush(heap, (time, prio, seq, action, payload))
        seq += 1

    def ready(v, dev):
        for kind, key in deps[(v, dev)]:
            table = done_batch if kind == "batch" else done_transfer
            if key not in table:
                return False
        return True

    def try_launch(dev, now):
        if dev_busy[dev] or next_batch[dev] >= len(batches[dev]):
            return
        v = batches[dev][next_batch[dev]]
        if not ready(v, dev):
            return
        node = g.nodes[v]
        dur = compute_time(profile, dev, node, sides[dev](v).width)
        dev_busy[dev] = True
        if dur > 0.0:
            timeline.events.append(TimelineEvent(_COMPUTE_RES[dev], node.name, now, now + dur))
        push(now + dur, 1, "batch_done", (v, dev))

    def try_link(to_dev, now):
        if link_busy[to_dev] or not queue[to_dev]:
            return
        _, t = heapq.heappop(queue[to_dev])
        link_busy[to_dev] = True
        end = now + tx_time(link, t.nbytes)
        label = f"{g.nodes[t.u].name}->{g.nodes[t.w].name}"
        timeline.events.append(TimelineEvent(_LINK_RES[to_dev], label, now, end))
        push(end, 0, "transfer_done", t)

    push(0.0, 1, "start", None)
    while heap:
        now, _prio, _seq, action, payload = heapq.heappop(heap)
        if action == "start":
            pass
        elif action == "batch_done":
            v, dev = payload
            done_batch[(v, dev)] = now
            dev_busy[dev] = False
            next_batch[dev] += 1
            for t in by_sender.get((v, dev), ()):
                heapq.heappush(queue[t.to_device], ((now,) + t.key, t))
                try_link(t.to_device, now)
        else:  # transfer_done
            t = payload
            done_transfer[(t.u, t.w, t.to_device)] = now
            link_busy[t.to_device] = False
            try_link(t.to_device, now)
        try_launch(DEVICE_M, now)
        try_launch(DEVICE_R, now)

    for dev in (DEVICE_M, DEVICE_R):
        if next_batch[dev] != len(batches[dev]):
            raise Deadlock(f"{dev}-side stream stalled before completion")

    timeline.makespan = done_batch[(g.output_id, DEVICE_M)]
    timeline.events.sort(key=lambda e: (e.start, e.resource, e.label))
    return timeline


# --- interval arithmetic over (start, end) lists ---

def _merge(intervals):
    out = []
    for s, e in sorted(intervals):
        if out and s <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], e))
        else:
            out.append((s, e))
    return out


def _total(intervals):
    return sum(e - s for s, e in intervals)


def _subtract(base, removed):
    """Portions of ``base`` not covered by ``removed`` (both merged, sorted)."""
    out = []
    ri = 0
    for s, e in base:
        cur = s
        while ri < len(removed) and removed[ri][1] <= cur:
            ri += 1
        k = ri
        while k < len(removed) and removed[k][0] < e:
            rs, re = removed[k]
            if rs > cur:
                out.append((cur, rs))
            cur = max(cur, re)
            if cur >= e:
                break
            k += 1
        if cur < e:
            out.append((cur, e))
    return out


@dataclass(frozen=True)
class EnergyModel:
    """Client power states: computing, transferring while otherwise idle, standby."""

    p_inference: float = 13.35
    p_communication: float = 4.25
    p_standby: float = 4.04

    def __post_init__(self):
        if not self.p_inference >= self.p_communication >= self.p_standby >= 0:
            raise ValueError("power states must satisfy inference >= communication >= standby >= 0")


@dataclass(frozen=True)
class PhaseBreakdown:
    m_compute: float
    r_compute: float
    transmit: float
    m_idle: float


def energy_of(t: Timeline, e: EnergyModel) -> float:
    """Client-side joules over the makespan.

    Compute power applies while the device computes; communication power while
    the link is busy and the device compute stream is idle; standby otherwise.
    """
    if not math.isfinite(t.makespan):
        return math.inf
    m_busy = _merge(t.busy(RES_M))
    link_busy = _merge(t.busy(RES_MR) + t.busy(RES_RM))
    comm_idle = _total(_subtract(link_busy, m_busy))
    m_compute = _total(m_busy)
    standby = t.makespan - m_compute - comm_idle
    return e.p_inference * m_compute + e.p_communication * comm_idle + e.p_standby * standby


def breakdown(t: Timeline) -> PhaseBreakdown:
    """Busy time per resource; transmit is the union of both link directions."""
    m_compute = _total(_merge(t.busy(RES_M)))
    r_compute = _total(_merge(t.busy(RES_R)))
    transmit = _total(_merge(t.busy(RES_MR) + t.busy(RES_RM)))
    m_idle = t.makespan - m_compute if math.isfinite(t.makespan) else math.inf
    return PhaseBreakdown(m_compute=m_compute, r_compute=r_compute,
                          transmit=transmit, m_idle=m_idle)


def export_timeline(t: Timeline, path) -> None:
    """Delimited rows (resource, label, start_s, end_s) for external plotting."""
    with open(path, "w") as fh:
        fh.write("resource,label,start_s,end_s\n")
        for e in t.events:
            fh.write(f"{e.resource},{e.label},{e.start!r},{e.end!r}\n")
