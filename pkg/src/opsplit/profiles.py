"""Computation and transmission cost models.

Per-operator costs are affine in the number of units launched (a fixed kernel
launch overhead plus a per-unit slope), one set of coefficients per device.
Links carry a fixed per-message latency plus volume over bandwidth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import UnknownNode
from .graph import ModelGraph

DEVICE_M = "m"  # mobile device
DEVICE_R = "r"  # GPU server


@dataclass(frozen=True)
class DeviceCost:
    overhead_s: float
    per_unit_s: float

    def __post_init__(self):
        if self.overhead_s < 0 or self.per_unit_s < 0:
            raise ValueError("cost coefficients must be non-negative")


@dataclass
class ProfileTable:
    """Affine per-device costs per node plus per-edge byte volumes."""

    costs: dict[int, dict[str, DeviceCost]]
    edge_bytes: dict[tuple[int, int], float]

    def cost(self, device: str, node_id: int) -> DeviceCost:
        try:
            return self.costs[node_id][device]
        except KeyError:
            raise UnknownNode(f"no {device!r} cost profiled for node {node_id}") from None


@dataclass(frozen=True)
class LinkModel:
    """Full-duplex link: per-direction FIFO, shared bandwidth figure per direction."""

    bandwidth_bps: float
    per_message_latency: float = 0.0

    def __post_init__(self):
        if self.bandwidth_bps < 0 or self.per_message_latency < 0:
            raise ValueError("link parameters must be non-negative")


def link_from_mbps(mbps: float, per_message_latency: float = 0.0) -> LinkModel:
    return LinkModel(bandwidth_bps=mbps * 1e6, per_message_latency=per_message_latency)


def compute_time(p: ProfileTable, device: str, v, count: int) -> float:
    """Batched launch cost of ``count`` units of ``v`` on ``device``.

    Zero when nothing is launched and for the virtual vertices.
    """
    if count == 0 or v.is_virtual:
        return 0.0
    if count < 0 or count > v.out_units:
        raise UnknownNode(f"count {count} outside [0,{v.out_units}] for node {v.name}")
    c = p.cost(device, v.id)
    return c.overhead_s + c.per_unit_s * count


def tx_time(link: LinkModel, nbytes: float) -> float:
    """Time to move ``nbytes`` over the link in one direction; inf when starved."""
    if nbytes < 0:
        raise ValueError("negative byte count")
    if nbytes == 0:
        return 0.0
    if link.bandwidth_bps == 0:
        return math.inf
    return link.per_message_latency + 8.0 * nbytes / link.bandwidth_bps


def edge_bytes(p: ProfileTable, g: ModelGraph, u: int, v: int) -> float:
    """Bytes per unit of u's output carried along edge (u, v).

    Profiled edges override; edges touching virtual vertices always use the
    producer node's byte size.
    """
    key = (u, v)
    if key in p.edge_bytes:
        return p.edge_bytes[key]
    return g.nodes[u].out_bytes_per_unit


@dataclass(frozen=True)
class SynthParams:
    """Knobs for synthesizing a profile: server speedup and device cost ranges."""

    speedup: float = 8.0
    per_unit_range: tuple[float, float] = (0.2e-3, 1.0e-3)
    overhead_range: tuple[float, float] = (0.3e-3, 1.0e-3)


def synth_profile(g: ModelGraph, params: SynthParams, seed: int) -> ProfileTable:
    """Deterministic synthetic profile: device costs drawn per node, server
    costs scaled down by the speedup ratio."""
    rng = np.random.default_rng(seed)
    costs = {}
    for nid in g.real_ids:
        m_unit = float(rng.uniform(*params.per_unit_range))
        m_over = float(rng.uniform(*params.overhead_range))
        costs[nid] = {
            DEVICE_M: DeviceCost(overhead_s=m_over, per_unit_s=m_unit),
            DEVICE_R: DeviceCost(overhead_s=m_over / params.speedup,
                                 per_unit_s=m_unit / params.speedup),
        }
    ebytes = {}
    real = set(g.real_ids)
    for u, v in g.edges:
        if u in real and v in real:
            ebytes[(u, v)] = g.nodes[u].out_bytes_per_unit
    return ProfileTable(costs=costs, edge_bytes=ebytes)


def profile_doc(p: ProfileTable) -> dict:
    nodes = []
    for nid in sorted(p.costs):
        c = p.costs[nid]
        nodes.append({
            "id": nid,
            "m": {"overhead_s": c[DEVICE_M].overhead_s, "per_unit_s": c[DEVICE_M].per_unit_s},
            "r": {"overhead_s": c[DEVICE_R].overhead_s, "per_unit_s": c[DEVICE_R].per_unit_s},
        })
    edges = [{"u": u, "v": v, "bytes_per_unit": b}
             for (u, v), b in sorted(p.edge_bytes.items())]
    return {"nodes": nodes, "edges": edges}


def profile_from_doc(doc: dict) -> ProfileTable:
    costs = {}
    for nd in doc["nodes"]:
        costs[int(nd["id"])] = {
            DEVICE_M: DeviceCost(float(nd["m"]["overhead_s"]), float(nd["m"]["per_unit_s"])),
            DEVICE_R: DeviceCost(float(nd["r"]["overhead_s"]), float(nd["r"]["per_unit_s"])),
        }
    ebytes = {}
    for ed in doc.get("edges", []):
        ebytes[(int(ed["u"]), int(ed["v"]))] = float(ed["bytes_per_unit"])
    return ProfileTable(costs=costs, edge_bytes=ebytes)


def save_profile(p: ProfileTable, path) -> None:
    with open(path, "w") as fh:
        json.dump(profile_doc(p), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_profile(path) -> ProfileTable:
    with open(path) as fh:
        return profile_from_doc(json.load(fh))
