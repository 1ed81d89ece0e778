"""Experiment harness: build a cluster from a config, run a workload, report.

The same workload definition drives both scheduler families so allocation
times are comparable.  "centralized" is the federated scheduler pinned to a
single GM and a single LM.  Reports are deterministic: identical config and
seed produce byte-identical per-task files.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import os
from dataclasses import dataclass, field

from .config import ExperimentConfig, UserSpec
from .core import (ConstraintBitmap, ConstraintSet, Partition, ResourceVector,
                   TaskRequest, WorkerNode)
from .engine import EventLoop, Network
from .errors import ConfigurationError, SimulationError
from .fairness import QueueSet, UserQueue
from .global_master import GlobalMaster
from .local_master import LocalMaster
from .metrics import AllocationRecord, MetricsCollector, RECORD_FIELDS, summarize
from .sparrow import ProbeScheduler
from .state import ClusterView
from .worker import FifoWorker
from .workload import (assign_machine_constraints, assign_users,
                       augment_constraints, generate_synthetic, load_trace)

log = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[AllocationRecord]
    summary: dict
    counters: dict[str, int]
    audit_launches: list = field(default_factory=list)
    audit_preemptions: list = field(default_factory=list)
    unschedulable: list[str] = field(default_factory=list)
    events_dispatched: int = 0


def effective_users(config: ExperimentConfig) -> list[UserSpec]:
    """Explicit users, or one equal-share user per GM."""
    if config.users:
        return config.users
    n = config.gm_count
    return [UserSpec(user_id=f"u{i}", share=1.0 / n) for i in range(n)]


def build_workload(config: ExperimentConfig, users: list[UserSpec]) -> list[TaskRequest]:
    spec = config.workload
    if spec.kind == "trace":
        tasks = load_trace(spec.path, cpu_divisor=spec.cpu_divisor,
                           mem_divisor=spec.mem_divisor,
                           constraint_count=config.constraint_count)
        if spec.constraint_probabilities:
            tasks = augment_constraints(tasks, spec.constraint_probabilities, config.seed)
    else:
        demand = spec.demand if spec.demand is not None else ResourceVector.of(1, 256)
        tasks = generate_synthetic(
            count=spec.count, rate=spec.rate, duration=spec.duration,
            demand=demand, seed=config.seed, arrival=spec.arrival,
            constraint_probabilities=spec.constraint_probabilities or None,
        )
    if spec.load_factor != 1.0:
        tasks = [TaskRequest(
            task_id=t.task_id, job_id=t.job_id, user_id=t.user_id,
            demand=t.demand, constraints=t.constraints,
            arrival_time=t.arrival_time / spec.load_factor, duration=t.duration,
        ) for t in tasks]
    tasks = assign_users(tasks, [u.user_id for u in users])
    known = {u.user_id for u in users}
    for task in tasks:
        if task.user_id not in known:
            raise ConfigurationError(
                f"task {task.task_id} belongs to unknown user {task.user_id!r}"
            )
    return tasks


def _build_nodes(config: ExperimentConfig) -> tuple[list[str], list[WorkerNode]]:
    lm_ids = [f"lm{i:02d}" for i in range(config.lm_count)]
    nodes: list[WorkerNode] = []
    for lm_id in lm_ids:
        for k in range(config.workers_per_lm):
            nodes.append(WorkerNode(
                node_id=f"{lm_id}-n{k:04d}",
                lm_id=lm_id,
                partition_id="",  # assigned below
                capacity=config.worker_capacity,
                available=config.worker_capacity,
                machine_constraints=ConstraintSet.empty(),
            ))
    assign_machine_constraints(nodes, config.machine_profiles, config.seed)
    return lm_ids, nodes


def _admissible(task: TaskRequest, nodes: list[WorkerNode]) -> bool:
    return any(n.machine_constraints.issuperset(task.constraints)
               and n.capacity.geq(task.demand) for n in nodes)


def build_megha(config: ExperimentConfig, tasks: list[TaskRequest],
                users: list[UserSpec]):
    loop = EventLoop(event_cap=config.event_cap)
    network = Network(loop, config.delays)
    collector = MetricsCollector()
    label = "centralized" if config.scheduler == "centralized" else "megha"
    dim = config.worker_capacity.dimension

    lm_ids, nodes = _build_nodes(config)
    gm_ids = [f"gm{j:02d}" for j in range(config.gm_count)]
    lms: list[LocalMaster] = []
    for lm_id in lm_ids:
        lm = LocalMaster(lm_id, loop, network, config.costs, collector,
                         heartbeat_period=config.heartbeat_period,
                         resource_dim=dim, scheduler_label=label)
        # every LM carries one partition per GM; workers dealt round-robin
        partitions = {gm_id: Partition(
            partition_id=f"{lm_id}-p{j:02d}", lm_id=lm_id, owner_gm_id=gm_id,
            node_ids=[], bitmap=ConstraintBitmap(config.constraint_count),
        ) for j, gm_id in enumerate(gm_ids)}
        k = 0
        for node in nodes:
            if node.lm_id != lm_id:
                continue
            part = partitions[gm_ids[k % config.gm_count]]
            node.partition_id = part.partition_id
            part.append_node(node.node_id, node.machine_constraints)
            lm.add_node(node)
            k += 1
        for part in partitions.values():
            lm.add_partition(part)
        lms.append(lm)

    total = ResourceVector.of(*[q * config.lm_count * config.workers_per_lm
                                for q in config.worker_capacity])
    shares = {u.user_id: tuple(u.share * q for q in total) for u in users}

    gms: list[GlobalMaster] = []
    queue_sets: dict[str, list[UserQueue]] = {gm_id: [] for gm_id in gm_ids}
    for i, user in enumerate(users):
        gm_id = gm_ids[user.gm_index if user.gm_index is not None else i % len(gm_ids)]
        queue_sets[gm_id].append(UserQueue(
            user_id=user.user_id, share_fraction=user.share, gm_id=gm_id,
            share=shares[user.user_id],
        ))
    initial = [lm.snapshot(0.0) for lm in lms]
    for gm_id in gm_ids:
        gm = GlobalMaster(gm_id, loop, network, config.costs, collector,
                          retry_limit=config.retry_limit,
                          violation_metric=config.violation_metric)
        gm.seed(ClusterView(initial, dim), QueueSet(queue_sets[gm_id]), lms, shares)
        gms.append(gm)
    for lm in lms:
        lm.wire_gms(gms)

    gm_of_user = {}
    for gm in gms:
        for queue in gm.queues.queues:
            gm_of_user[queue.user_id] = gm
    for task in tasks:
        if not _admissible(task, nodes):
            collector.mark_unschedulable(task.task_id)
            continue
        run = collector.new_run(task)
        gm = gm_of_user[task.user_id]
        loop.schedule(task.arrival_time,
                      lambda t, r=run, g=gm: g.on_task_arrival(r, t))
    for lm in lms:
        lm.start_heartbeats()
    return loop, collector, lms, gms


def build_sparrow(config: ExperimentConfig, tasks: list[TaskRequest]):
    loop = EventLoop(event_cap=config.event_cap)
    network = Network(loop, config.delays)
    collector = MetricsCollector()
    _, nodes = _build_nodes(config)

    if config.slot_demand is None:
        slots = 1
        workers = [FifoWorker(n.node_id, n.machine_constraints, slots, loop, collector)
                   for n in nodes]
    else:
        per_dim = [cap // d if d > 0 else 0
                   for cap, d in zip(config.worker_capacity, config.slot_demand)]
        slots = min(q for q in per_dim if q > 0) if any(per_dim) else 0
        if slots < 1:
            raise ConfigurationError("slot_demand leaves workers with zero slots")
        workers = [FifoWorker(n.node_id, n.machine_constraints, slots, loop, collector)
                   for n in nodes]

    schedulers = [ProbeScheduler(f"s{i:02d}", loop, network, workers, config.costs,
                                 collector, probe_count=config.probe_count,
                                 seed=config.seed)
                  for i in range(config.sparrow_scheduler_count)]

    job_home: dict[str, ProbeScheduler] = {}
    for task in tasks:
        if not any(w.constraints.issuperset(task.constraints) for w in workers):
            collector.mark_unschedulable(task.task_id)
            continue
        if task.job_id not in job_home:
            job_home[task.job_id] = schedulers[len(job_home) % len(schedulers)]
        run = collector.new_run(task)
        scheduler = job_home[task.job_id]
        loop.schedule(task.arrival_time,
                      lambda t, r=run, s=scheduler: s.on_task_arrival(r, t))
    return loop, collector, workers, schedulers


# -- invariants --------------------------------------------------------------


def check_conservation(lm: LocalMaster) -> None:
    """capacity == available + running demands + live logical child capacities."""
    running_sum: dict[str, ResourceVector] = {}
    for rt in lm.running.values():
        prev = running_sum.get(rt.node_id)
        running_sum[rt.node_id] = rt.demand if prev is None else prev + rt.demand
    child_sum: dict[str, ResourceVector] = {}
    for node in lm.nodes.values():
        if node.is_logical:
            prev = child_sum.get(node.parent_node)
            child_sum[node.parent_node] = (node.capacity if prev is None
                                           else prev + node.capacity)
    zero = ResourceVector.zeros(lm.resource_dim)
    for node in lm.nodes.values():
        expected = node.available + running_sum.get(node.node_id, zero)
        if not node.is_logical:
            expected = expected + child_sum.get(node.node_id, zero)
        elif node.node_id in child_sum:
            raise SimulationError(f"logical node {node.node_id} has children")
        if expected.quantities != node.capacity.quantities:
            raise SimulationError(
                f"conservation violated on {node.node_id}: capacity "
                f"{node.capacity.quantities}, accounted {expected.quantities}"
            )


def check_structure(lms: list[LocalMaster], gms: list[GlobalMaster]) -> None:
    """Every LM holds one partition per GM; every GM one internal slice per LM."""
    gm_ids = {gm.gm_id for gm in gms}
    for lm in lms:
        owners = [p.owner_gm_id for p in lm.partitions.values()]
        if len(owners) != len(gm_ids) or set(owners) != gm_ids:
            raise SimulationError(f"{lm.lm_id}: partition owners {owners} != GMs")
        seen: set[str] = set()
        for part in lm.partitions.values():
            if part.bitmap.length != len(part.node_ids):
                raise SimulationError(f"{part.partition_id}: bitmap length drift")
            for node_id in part.node_ids:
                if node_id in seen:
                    raise SimulationError(f"node {node_id} in two partitions")
                seen.add(node_id)
                if lm.nodes[node_id].partition_id != part.partition_id:
                    raise SimulationError(f"node {node_id} partition field drift")
        if seen != set(lm.nodes):
            raise SimulationError(f"{lm.lm_id}: partition membership != node set")
    for gm in gms:
        if len(gm.internal) != len(lms):
            raise SimulationError(f"{gm.gm_id}: internal partition count != LM count")


class InvariantChecker:
    """Post-event hook validating conservation and partition structure."""

    def __init__(self, lms: list[LocalMaster], gms: list[GlobalMaster]) -> None:
        self.lms = lms
        self.gms = gms
        self.checks = 0

    def __call__(self, now: float) -> None:
        self.checks += 1
        for lm in self.lms:
            check_conservation(lm)
        check_structure(self.lms, self.gms)


# -- running -------------------------------------------------------------------


def run_experiment(config: ExperimentConfig, *, check_invariants: bool = False
                   ) -> ExperimentResult:
    config.validate()
    users = effective_users(config)
    tasks = build_workload(config, users)

    if config.scheduler == "sparrow":
        loop, collector, _, _ = build_sparrow(config, tasks)
    else:
        loop, collector, lms, gms = build_megha(config, tasks, users)
        if check_invariants:
            loop.post_event_hook = InvariantChecker(lms, gms)
    loop.run()

    if collector.outstanding:
        raise SimulationError(
            f"{collector.outstanding} tasks never completed"
        )
    records = sorted(collector.records, key=lambda r: (r.arrival, r.task_id))
    summary = summarize(records, collector.counters, len(collector.unschedulable))
    summary["config"] = {
        "scheduler": config.scheduler,
        "gm_count": config.gm_count,
        "lm_count": config.lm_count,
        "workers_per_lm": config.workers_per_lm,
        "workers_total": config.lm_count * config.workers_per_lm,
        "seed": config.seed,
    }
    return ExperimentResult(
        config=config, records=records, summary=summary,
        counters=dict(collector.counters),
        audit_launches=collector.audit_launches,
        audit_preemptions=collector.audit_preemptions,
        unschedulable=list(collector.unschedulable),
        events_dispatched=loop.events_dispatched,
    )


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


def write_reports(result: ExperimentResult, out_dir: str, fmt: str = "csv") -> dict[str, str]:
    """Write the per-task record file and the summary; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    if fmt == "csv":
        task_path = os.path.join(out_dir, "tasks.csv")
        with open(task_path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(RECORD_FIELDS)
            for record in result.records:
                writer.writerow([_format_cell(getattr(record, f)) for f in RECORD_FIELDS])
    elif fmt == "jsonl":
        task_path = os.path.join(out_dir, "tasks.jsonl")
        with open(task_path, "w") as handle:
            for record in result.records:
                handle.write(json.dumps(
                    {f: getattr(record, f) for f in RECORD_FIELDS}, sort_keys=True))
                handle.write("\n")
    else:
        raise ConfigurationError(f"unknown report format {fmt!r}")
    paths["tasks"] = task_path

    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w") as handle:
        json.dump(result.summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    paths["summary"] = summary_path
    return paths


SWEEP_AXES = ("workers", "gm_count", "lm_count", "load")


def sweep(config: ExperimentConfig, axis: str, values: list[float],
          *, check_invariants: bool = False) -> list[tuple[float, ExperimentResult]]:
    """Run the config once per value of one axis."""
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r} (want one of {SWEEP_AXES})")
    results = []
    for value in values:
        variant = copy.deepcopy(config)
        if axis == "workers":
            variant.workers_per_lm = int(value)
        elif axis == "gm_count":
            variant.gm_count = int(value)
        elif axis == "lm_count":
            variant.lm_count = int(value)
        else:
            variant.workload.load_factor = float(value)
        results.append((value, run_experiment(variant, check_invariants=check_invariants)))
    return results
