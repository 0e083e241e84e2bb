"""Makespan evaluation of a schedule plan by the dependency recurrence.

Semantics shared with the discrete-event simulator (which must agree exactly):

- one serial compute stream per device, launching each operator's batched
  range in topological order; a launch fires no earlier than all its needed
  input units are present on that device;
- a transfer for edge (u, v) toward a device is enqueued the moment the other
  device finishes its batch of u, carrying the units v's share needs that the
  receiving side did not produce itself;
- each link direction is an independent FIFO queue (full duplex); ties in
  enqueue time resolve by (producer, consumer) topological position;
- global operators implicitly barrier on the fully assembled input tensor;
- the makespan is the instant the final output is complete on the device.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InfeasiblePlan
from .graph import ModelGraph, producer_units_for, required_input_range
from .plans import SchedulePlan, is_feasible, transfer_needs
from .profiles import DEVICE_M, DEVICE_R, LinkModel, ProfileTable, compute_time, edge_bytes, tx_time


@dataclass(frozen=True)
class BatchRecord:
    node: int
    device: str
    start: float
    end: float
    units: int


@dataclass(frozen=True)
class TransferRecord:
    u: int
    v: int
    to_device: str
    nbytes: float
    start: float
    end: float


@dataclass
class MakespanReport:
    T: float
    s_m: dict[int, float | None] = field(default_factory=dict)
    s_r: dict[int, float | None] = field(default_factory=dict)
    batches: list[BatchRecord] = field(default_factory=list)
    transfers: list[TransferRecord] = field(default_factory=list)


def evaluate_makespan(g: ModelGraph, profile: ProfileTable, link: LinkModel,
                      plan: SchedulePlan, check: bool = True,
                      include_oversize: bool = True) -> MakespanReport:
    """Start times and makespan for a feasible plan under the recurrence above.

    With ``check`` the plan is validated first and InfeasiblePlan raised on any
    violation; ``include_oversize`` is forwarded to the feasibility check so
    baseline systems exempt from the transmission-efficiency constraint can be
    timed with the same machinery.
    """
    if check:
        verdict = is_feasible(g, plan, include_oversize=include_oversize)
        if not verdict.ok:
            raise InfeasiblePlan(verdict.violations)

    report = MakespanReport(T=0.0)
    sides = ((DEVICE_M, plan.m), (DEVICE_R, plan.r))
    stream = {DEVICE_M: 0.0, DEVICE_R: 0.0}
    link_clock = {DEVICE_M: 0.0, DEVICE_R: 0.0}  # keyed by receiving device
    batch_end: dict[tuple[int, str], float] = {}
    arrival: dict[tuple[int, int, str], float] = {}

    for v in g.topo_order:
        node = g.nodes[v]
        for dev, side in sides:
            x = side(v)
            starts = report.s_m if dev == DEVICE_M else report.s_r
            if x.is_empty:
                starts[v] = None
                continue
            ready = 0.0
            for u in g.parents[v]:
                nu = g.nodes[u]
                need_units = producer_units_for(nu, node, required_input_range(node, x))
                if need_units.is_empty:
                    continue
                if not need_units.intersect(side(u)).is_empty:
                    ready = max(ready, batch_end[(u, dev)])
                if not need_units.minus(side(u)).is_empty:
                    ready = max(ready, arrival[(u, v, dev)])
            start = max(stream[dev], ready)
            dur = compute_time(profile, dev, node, x.width)
            end = start + dur
            stream[dev] = end
            batch_end[(v, dev)] = end
            starts[v] = start
            if dur > 0.0:
                report.batches.append(BatchRecord(v, dev, start, end, x.width))

        # Enqueue outgoing transfers now that both batches of v are timed.
        for w in g.children[v]:
            needs = transfer_needs(g, plan, v, w)
            for dev in (DEVICE_M, DEVICE_R):
                missing = needs[dev]
                if missing.is_empty:
                    continue
                sender = DEVICE_R if dev == DEVICE_M else DEVICE_M
                nbytes = missing.width * edge_bytes(profile, g, v, w)
                enq = batch_end[(v, sender)]
                start = max(link_clock[dev], enq)
                end = start + tx_time(link, nbytes)
                link_clock[dev] = end
                arrival[(v, w, dev)] = end
                report.transfers.append(TransferRecord(v, w, dev, nbytes, start, end))

    report.T = batch_end[(g.output_id, DEVICE_M)]
    return report
