"""Constrained makespan minimization over unit-split plans.

The genome assigns each real operator an integer pair (a, b) with
0 <= b <= a <= n: device prefix [0, a), server suffix [b, n). Coverage and
contiguity hold by construction; the transmission-efficiency constraint is
handled by an additive penalty. Search is classic rand/1/bin differential
evolution on the real-relaxed genome, rounded and repaired per candidate,
with one-to-one elitist replacement.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import NoFeasibleIndividual, ShapeMismatch
from .graph import ModelGraph, model_doc
from .makespan import MakespanReport, evaluate_makespan
from .plans import (
    SchedulePlan,
    is_feasible,
    plan_device_only,
    plan_from_splits,
    plan_layer_partition,
    plan_server_only,
    plan_splits,
    plan_doc,
    plan_from_doc,
)
from .profiles import LinkModel, ProfileTable, link_from_mbps, profile_doc

PENALTY_FACTOR = 10.0


@dataclass(frozen=True)
class DEConfig:
    population: int = 64
    generations: int = 300
    differential_weight: float = 0.7
    crossover_rate: float = 0.9
    seed: int = 0
    seed_with_baselines: bool = True

    def __post_init__(self):
        if self.population < 4:
            raise ShapeMismatch("differential evolution needs a population of at least 4")
        if not 0.0 < self.differential_weight <= 2.0:
            raise ShapeMismatch("differential weight must lie in (0, 2]")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ShapeMismatch("crossover rate must lie in [0, 1]")


def best_layer_partition(g: ModelGraph, profile: ProfileTable,
                         link: LinkModel) -> tuple[int, MakespanReport]:
    """Best single-cut plan: prefix on the device, suffix on the server.

    Exhausts all cuts from pure server (0) to pure device (number of real
    operators). Cut plans are a baseline system and are timed without the
    transmission-efficiency constraint.
    """
    best = None
    for split in range(len(g.real_ids) + 1):
        plan = plan_layer_partition(g, split)
        rep = evaluate_makespan(g, profile, link, plan, check=False)
        if best is None or rep.T < best[1].T:
            best = (split, rep)
    return best


def _decode(genome: np.ndarray, units: np.ndarray) -> np.ndarray:
    """Round, clip, and order-repair a real genome into (a, b) columns."""
    g = np.floor(genome + 0.5)
    g = np.clip(g, 0.0, np.repeat(units, 2).astype(float))
    a = g[0::2]
    b = g[1::2]
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    out = np.empty_like(g)
    out[0::2] = hi
    out[1::2] = lo
    return out


class _Fitness:
    """Penalized makespan of a decoded genome."""

    def __init__(self, g, profile, link, real_ids, penalty_unit):
        self.g = g
        self.profile = profile
        self.link = link
        self.real_ids = real_ids
        self.penalty_unit = penalty_unit

    def plan_of(self, decoded: np.ndarray, plan_id: int = 0) -> SchedulePlan:
        splits = {nid: (int(decoded[2 * i]), int(decoded[2 * i + 1]))
                  for i, nid in enumerate(self.real_ids)}
        return plan_from_splits(self.g, splits, plan_id=plan_id)

    def __call__(self, decoded: np.ndarray) -> tuple[float, int]:
        plan = self.plan_of(decoded)
        nviol = len(is_feasible(self.g, plan).violations)
        rep = evaluate_makespan(self.g, self.profile, self.link, plan, check=False)
        return rep.T + PENALTY_FACTOR * self.penalty_unit * nviol, nviol


def _baseline_genomes(g: ModelGraph) -> list[np.ndarray]:
    plans = [plan_device_only(g), plan_server_only(g)]
    plans += [plan_layer_partition(g, s) for s in range(len(g.real_ids) + 1)]
    genomes = []
    seen = set()
    for plan in plans:
        splits = plan_splits(g, plan)
        flat = tuple(x for nid in g.real_ids for x in splits[nid])
        if flat in seen:
            continue
        seen.add(flat)
        genomes.append(np.array(flat, dtype=float))
    return genomes


def solve_loss(g: ModelGraph, profile: ProfileTable, link: LinkModel,
               cfg: DEConfig, plan_id: int = 0) -> SchedulePlan:
    """Minimum-makespan unit-split plan for one bandwidth figure.

    Deterministic for a fixed config seed. With baseline seeding the result is
    never worse than device-only, server-only, or any single-cut plan.
    """
    real_ids = g.real_ids
    units = np.array([g.nodes[nid].out_units for nid in real_ids], dtype=float)
    dim = 2 * len(real_ids)
    t_dev = evaluate_makespan(g, profile, link, plan_device_only(g), check=False).T
    fitness = _Fitness(g, profile, link, real_ids, t_dev)

    rng = np.random.default_rng(cfg.seed)
    pop = rng.uniform(0.0, np.repeat(units, 2), size=(cfg.population, dim))
    if cfg.seed_with_baselines:
        for i, genome in enumerate(_baseline_genomes(g)[:cfg.population]):
            pop[i] = genome

    decoded = [_decode(pop[i], units) for i in range(cfg.population)]
    scored = [fitness(d) for d in decoded]
    fit = np.array([s[0] for s in scored])
    viols = np.array([s[1] for s in scored])

    f_weight = cfg.differential_weight
    for _ in range(cfg.generations):
        base = rng.integers(0, cfg.population, size=(cfg.population, 3))
        cross = rng.random((cfg.population, dim)) < cfg.crossover_rate
        forced = rng.integers(0, dim, size=cfg.population)
        for i in range(cfg.population):
            r1, r2, r3 = base[i]
            while r1 == i:
                r1 = int(rng.integers(0, cfg.population))
            while r2 == i or r2 == r1:
                r2 = int(rng.integers(0, cfg.population))
            while r3 == i or r3 == r1 or r3 == r2:
                r3 = int(rng.integers(0, cfg.population))
            mutant = pop[r1] + f_weight * (pop[r2] - pop[r3])
            mask = cross[i]
            mask[forced[i]] = True
            trial = np.where(mask, mutant, pop[i])
            d = _decode(trial, units)
            f, nv = fitness(d)
            if f <= fit[i]:
                pop[i] = trial
                decoded[i] = d
                fit[i] = f
                viols[i] = nv

    order = np.lexsort((np.arange(cfg.population), fit))
    for idx in order:
        if viols[idx] == 0:
            return fitness.plan_of(decoded[idx], plan_id=plan_id)
    raise NoFeasibleIndividual("no feasible plan found; seed the baselines")


@dataclass(frozen=True)
class BucketSpec:
    """Bandwidth bucketing for the precomputed plan table."""

    width_mbps: float = 1.0
    max_mbps: float = 200.0
    per_message_latency_s: float = 1e-3

    def __post_init__(self):
        if self.width_mbps <= 0 or self.max_mbps < self.width_mbps:
            raise ShapeMismatch("bucket width must be positive and no larger than the range")

    @property
    def count(self) -> int:
        return int(self.max_mbps // self.width_mbps) + 1

    def bucket_of(self, bandwidth_mbps: float) -> int:
        return int(min(bandwidth_mbps, self.max_mbps) // self.width_mbps)

    def midpoint_mbps(self, bucket: int) -> float:
        return (bucket + 0.5) * self.width_mbps


@dataclass
class PlanTable:
    buckets: BucketSpec
    plans: list[SchedulePlan]
    content_hash: str

    def lookup(self, bandwidth_mbps: float) -> SchedulePlan:
        return self.plans[self.buckets.bucket_of(bandwidth_mbps)]


def table_content_hash(g: ModelGraph, profile: ProfileTable,
                       buckets: BucketSpec, cfg: DEConfig) -> str:
    payload = {
        "model": model_doc(g),
        "profile": profile_doc(profile),
        "buckets": {"width_mbps": buckets.width_mbps, "max_mbps": buckets.max_mbps,
                    "latency_s": buckets.per_message_latency_s},
        "solver": {"population": cfg.population, "generations": cfg.generations,
                   "f": cfg.differential_weight, "cr": cfg.crossover_rate,
                   "seed": cfg.seed, "seed_with_baselines": cfg.seed_with_baselines},
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_plan_table(g: ModelGraph, profile: ProfileTable, buckets: BucketSpec,
                     cfg: DEConfig) -> PlanTable:
    """Solve one plan per bandwidth bucket midpoint; bucket 0 is device-only."""
    plans = [plan_device_only(g, plan_id=0)]
    for bucket in range(1, buckets.count):
        link = link_from_mbps(buckets.midpoint_mbps(bucket), buckets.per_message_latency_s)
        sub = DEConfig(population=cfg.population, generations=cfg.generations,
                       differential_weight=cfg.differential_weight,
                       crossover_rate=cfg.crossover_rate,
                       seed=cfg.seed + bucket,
                       seed_with_baselines=cfg.seed_with_baselines)
        plans.append(solve_loss(g, profile, link, sub, plan_id=bucket))
    return PlanTable(buckets=buckets, plans=plans,
                     content_hash=table_content_hash(g, profile, buckets, cfg))


def table_doc(g: ModelGraph, table: PlanTable) -> dict:
    return {
        "bucket_width_mbps": table.buckets.width_mbps,
        "max_mbps": table.buckets.max_mbps,
        "per_message_latency_s": table.buckets.per_message_latency_s,
        "content_hash": table.content_hash,
        "plans": [plan_doc(g, p) for p in table.plans],
    }


def table_from_doc(g: ModelGraph, doc: dict) -> PlanTable:
    buckets = BucketSpec(width_mbps=float(doc["bucket_width_mbps"]),
                         max_mbps=float(doc["max_mbps"]),
                         per_message_latency_s=float(doc.get("per_message_latency_s", 1e-3)))
    plans = [plan_from_doc(g, p) for p in doc["plans"]]
    if len(plans) != buckets.count:
        raise ShapeMismatch(f"plan table has {len(plans)} plans for {buckets.count} buckets")
    return PlanTable(buckets=buckets, plans=plans, content_hash=str(doc["content_hash"]))


def save_table(g: ModelGraph, table: PlanTable, path) -> None:
    with open(path, "w") as fh:
        json.dump(table_doc(g, table), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_table(g: ModelGraph, path) -> PlanTable:
    with open(path) as fh:
        return table_from_doc(g, json.load(fh))
