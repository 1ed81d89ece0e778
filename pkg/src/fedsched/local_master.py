"""Local master: authoritative owner of one cluster's workers.

Every launch, repartition, and preemption is validated against true current
state here, no matter what view the requesting GM acted on.  Failure responses
carry a full state snapshot so the requester can correct its view immediately;
success responses piggyback just the partitions that changed.  A periodic
heartbeat pushes the full state to every GM.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .core import (ConstraintSet, Partition, ResourceVector, WorkerNode,
                   constraint_superset)
from .engine import (HEARTBEAT, LAUNCH_RESPONSE, PREEMPT_RESPONSE, TASK_COMPLETION,
                     TASK_LAUNCH, TASK_PREEMPTED, ActorClock, CostModel, EventLoop,
                     Network)
from .errors import ConfigurationError
from .messages import (Heartbeat, LaunchRequest, LaunchResponse, PreemptRequest,
                       PreemptResponse, RepartitionRequest, TaskCompletion,
                       TaskPreempted, VictimStatus)
from .metrics import MetricsCollector, TaskRun
from .state import LMStateSnapshot, NodeSnapshot, PartitionSnapshot, RunningTaskInfo
from .worker import start_task

log = logging.getLogger(__name__)


@dataclass
class RunningTask:
    run: TaskRun
    node_id: str
    demand: ResourceVector
    user_id: str
    gm_id: str
    start_time: float  # when execution begins (payload delivery)
    incarnation: int


class LocalMaster:
    def __init__(
        self,
        lm_id: str,
        loop: EventLoop,
        network: Network,
        costs: CostModel,
        collector: MetricsCollector,
        *,
        heartbeat_period: float = 10.0,
        resource_dim: int = 2,
        scheduler_label: str = "megha",
    ) -> None:
        if heartbeat_period <= 0:
            raise ConfigurationError("heartbeat period must be positive")
        self.lm_id = lm_id
        self.loop = loop
        self.network = network
        self.costs = costs
        self.collector = collector
        self.heartbeat_period = heartbeat_period
        self.resource_dim = resource_dim
        self.scheduler_label = scheduler_label
        self.clock = ActorClock()
        self.nodes: dict[str, WorkerNode] = {}
        self.partitions: dict[str, Partition] = {}
        self.partition_by_owner: dict[str, Partition] = {}
        self.running: dict[str, RunningTask] = {}
        self.consumed: dict[str, ResourceVector] = {}
        self.children: dict[str, list[str]] = {}
        self.gms: list = []  # GlobalMaster handles, wired by the experiment builder
        self._logical_seq = 0

    # -- construction ------------------------------------------------------

    def add_partition(self, partition: Partition) -> None:
        self.partitions[partition.partition_id] = partition
        self.partition_by_owner[partition.owner_gm_id] = partition

    def add_node(self, node: WorkerNode) -> None:
        self.nodes[node.node_id] = node

    def wire_gms(self, gms: list) -> None:
        self.gms = list(gms)

    def start_heartbeats(self) -> None:
        if self.gms and self.collector.outstanding > 0:
            self.loop.schedule(self.heartbeat_period, self._heartbeat)

    # -- snapshots ----------------------------------------------------------

    def _running_by_node(self) -> dict[str, list[RunningTaskInfo]]:
        by_node: dict[str, list[RunningTaskInfo]] = {}
        for task_id in sorted(self.running):
            rt = self.running[task_id]
            by_node.setdefault(rt.node_id, []).append(RunningTaskInfo(
                task_id=task_id, user_id=rt.user_id, demand=rt.demand,
                launch_time=rt.start_time,
            ))
        return by_node

    def partition_snapshot(self, partition_id: str,
                           by_node: dict[str, list[RunningTaskInfo]] | None = None
                           ) -> PartitionSnapshot:
        if by_node is None:
            by_node = self._running_by_node()
        partition = self.partitions[partition_id]
        nodes = []
        for node_id in partition.node_ids:
            node = self.nodes[node_id]
            nodes.append(NodeSnapshot(
                node_id=node_id,
                available=node.available,
                is_logical=node.is_logical,
                parent_node=node.parent_node,
                running=tuple(by_node.get(node_id, ())),
            ))
        return PartitionSnapshot(
            partition_id=partition_id,
            lm_id=self.lm_id,
            owner_gm_id=partition.owner_gm_id,
            nodes=tuple(nodes),
            bits=partition.bitmap.snapshot_bits(),
            constraint_count=partition.bitmap.constraint_count,
        )

    def snapshot(self, timestamp: float) -> LMStateSnapshot:
        by_node = self._running_by_node()
        return LMStateSnapshot(
            lm_id=self.lm_id,
            timestamp=timestamp,
            partitions=tuple(self.partition_snapshot(pid, by_node)
                             for pid in sorted(self.partitions)),
            user_consumed=self._consumed_snapshot(),
        )

    def _consumed_snapshot(self) -> tuple[tuple[str, ResourceVector], ...]:
        return tuple((user, self.consumed[user]) for user in sorted(self.consumed))

    # -- heartbeat ----------------------------------------------------------

    def _heartbeat(self, now: float) -> None:
        start = self.clock.begin(now)
        cost = self.costs.lm_heartbeat_per_node * len(self.nodes)
        done = self.clock.charge(start, cost)
        snapshot = self.snapshot(done)
        for gm in self.gms:
            self.network.send(done, HEARTBEAT, self._deliver_heartbeat(gm, snapshot))
        self.collector.bump("heartbeats")
        if self.collector.outstanding > 0:
            # fixed cadence from the period, independent of processing time
            self.loop.schedule(now + self.heartbeat_period, self._heartbeat)

    @staticmethod
    def _deliver_heartbeat(gm, snapshot: LMStateSnapshot):
        message = Heartbeat(lm_id=snapshot.lm_id, snapshot=snapshot)
        return lambda t: gm.on_heartbeat(message, t)

    # -- launch -------------------------------------------------------------

    def on_launch_request(self, req: LaunchRequest, now: float) -> None:
        run = req.run
        start = self.clock.begin(now)
        run.metrics.add_framework_queuing(start - now)
        done = self.clock.charge(start, self.costs.lm_validate)
        run.metrics.add_processing(self.costs.lm_validate)

        node = self.nodes.get(req.node_id)
        owner_ok = (node is not None
                    and self.partitions[node.partition_id].owner_gm_id == req.gm_id)
        constraints_ok = (node is not None
                          and constraint_superset(node.machine_constraints, req.constraints))
        resources_ok = node is not None and node.available.geq(req.demand)
        ok = bool(owner_ok and constraints_ok and resources_ok)

        self.collector.audit_launches.append({
            "time": done, "lm_id": self.lm_id, "gm_id": req.gm_id,
            "task_id": req.task_id, "node_id": req.node_id, "kind": "launch",
            "ok": ok,
            "available_before": node.available.quantities if node else None,
            "demand": req.demand.quantities,
            "machine_constraints": node.machine_constraints.sorted_ids() if node else None,
            "task_constraints": req.constraints.sorted_ids(),
        })

        if ok:
            self._launch(run, node, req.gm_id, done)
            self._respond_launch(req.gm_id, req.task_id, "launch", node.node_id,
                                 done, ok=True, partitions=(node.partition_id,))
        else:
            self._fail(req.gm_id, req.task_id, "launch", done, run)

    def _launch(self, run: TaskRun, node: WorkerNode, gm_id: str, done: float) -> None:
        request = run.request
        node.available = node.available - request.demand
        run.incarnation += 1
        incarnation = run.incarnation
        deliver_at = self.network.send(
            done, TASK_LAUNCH,
            lambda t: self._begin_execution(request.task_id, incarnation, t),
            metrics=run.metrics,
        )
        self.running[request.task_id] = RunningTask(
            run=run, node_id=node.node_id, demand=request.demand,
            user_id=request.user_id, gm_id=gm_id,
            start_time=deliver_at, incarnation=incarnation,
        )
        self.consumed[request.user_id] = (
            self.consumed.get(request.user_id, ResourceVector.zeros(self.resource_dim))
            + request.demand
        )

    def _begin_execution(self, task_id: str, incarnation: int, now: float) -> None:
        rt = self.running.get(task_id)
        if rt is None or rt.incarnation != incarnation:
            return  # preempted before the payload landed
        self.collector.finalize(rt.run, now, scheduler=self.scheduler_label)
        start_task(self.loop, rt.run, now,
                   lambda t: self._on_task_complete(task_id, incarnation, t))

    def _respond_launch(self, gm_id: str, task_id: str, kind: str,
                        node_id: str | None, done: float, *, ok: bool,
                        partitions: tuple[str, ...]) -> None:
        gm = self._gm(gm_id)
        response = LaunchResponse(
            ok=ok, gm_id=gm_id, lm_id=self.lm_id, task_id=task_id, kind=kind,
            node_id=node_id, state_timestamp=done,
            piggyback=tuple(self.partition_snapshot(pid) for pid in partitions),
            user_consumed=self._consumed_snapshot(),
            full_state=False,
        )
        self.network.send(done, LAUNCH_RESPONSE, lambda t: gm.on_launch_response(response, t))

    def _fail(self, gm_id: str, task_id: str, kind: str, done: float, run: TaskRun) -> None:
        """Failure response: counts as a state inconsistency, carries full state."""
        self.collector.bump("inconsistency_failures")
        gm = self._gm(gm_id)
        full = self.snapshot(done)
        response = LaunchResponse(
            ok=False, gm_id=gm_id, lm_id=self.lm_id, task_id=task_id, kind=kind,
            node_id=None, state_timestamp=done,
            piggyback=full.partitions,
            user_consumed=full.user_consumed,
            full_state=True,
        )
        self.network.send(done, LAUNCH_RESPONSE,
                          lambda t: gm.on_launch_response(response, t),
                          metrics=run.metrics)

    def _gm(self, gm_id: str):
        for gm in self.gms:
            if gm.gm_id == gm_id:
                return gm
        raise ConfigurationError(f"unknown GM {gm_id!r}")

    # -- repartition ---------------------------------------------------------

    def on_repartition_request(self, req: RepartitionRequest, now: float) -> None:
        run = req.run
        start = self.clock.begin(now)
        run.metrics.add_framework_queuing(start - now)
        done = self.clock.charge(start, self.costs.lm_repartition)
        run.metrics.add_processing(self.costs.lm_repartition)

        source = self.nodes.get(req.source_node_id)
        ok = (source is not None
              and not source.is_logical  # never carve a logical node further
              and constraint_superset(source.machine_constraints, req.constraints)
              and source.available.geq(req.demand))

        self.collector.audit_launches.append({
            "time": done, "lm_id": self.lm_id, "gm_id": req.gm_id,
            "task_id": req.task_id, "node_id": req.source_node_id,
            "kind": "repartition", "ok": bool(ok),
            "available_before": source.available.quantities if source else None,
            "demand": req.demand.quantities,
            "machine_constraints": source.machine_constraints.sorted_ids() if source else None,
            "task_constraints": req.constraints.sorted_ids(),
        })

        if not ok:
            self._fail(req.gm_id, req.task_id, "repartition", done, run)
            return

        target = self.partition_by_owner.get(req.gm_id)
        if target is None:
            raise ConfigurationError(f"GM {req.gm_id!r} owns no partition on {self.lm_id}")
        self._logical_seq += 1
        logical = WorkerNode(
            node_id=f"{source.node_id}.l{self._logical_seq}",
            lm_id=self.lm_id,
            partition_id=target.partition_id,
            capacity=req.demand,
            available=req.demand,
            machine_constraints=source.machine_constraints,
            is_logical=True,
            parent_node=source.node_id,
        )
        source.available = source.available - req.demand
        self.nodes[logical.node_id] = logical
        target.append_node(logical.node_id, logical.machine_constraints)
        self.children.setdefault(source.node_id, []).append(logical.node_id)
        self.collector.bump("repartitions")
        run.metrics.repartitioned = True

        self._launch(run, logical, req.gm_id, done)
        self._respond_launch(
            req.gm_id, req.task_id, "repartition", logical.node_id, done, ok=True,
            partitions=self._affected(source.partition_id, target.partition_id),
        )

    @staticmethod
    def _affected(*partition_ids: str) -> tuple[str, ...]:
        seen: list[str] = []
        for pid in partition_ids:
            if pid not in seen:
                seen.append(pid)
        return tuple(seen)

    # -- preemption ----------------------------------------------------------

    def on_preempt_request(self, req: PreemptRequest, now: float) -> None:
        run = req.run
        start = self.clock.begin(now)
        run.metrics.add_framework_queuing(start - now)
        cost = self.costs.lm_validate + self.costs.lm_preempt_per_victim * len(req.victim_ids)
        done = self.clock.charge(start, cost)
        run.metrics.add_processing(cost)

        statuses = []
        touched: list[str] = []
        killed = 0
        for victim_id in req.victim_ids:
            rt = self.running.get(victim_id)
            # a victim must still be running on the named node; one that
            # finished, moved, or has not begun executing yet is stale
            verified = (rt is not None and rt.node_id == req.node_id
                        and rt.start_time <= start)
            statuses.append(VictimStatus(task_id=victim_id, verified=verified))
            if not verified:
                continue
            killed += 1
            del self.running[victim_id]
            touched.extend(self._release(rt, done))
            self.collector.bump("preemptions")
            rt.run.times_preempted += 1
            owner = self._gm(rt.gm_id)
            note = TaskPreempted(
                lm_id=self.lm_id, gm_id=rt.gm_id, task_id=victim_id,
                user_id=rt.user_id, demand=rt.demand, state_timestamp=done,
                piggyback=(), user_consumed=self._consumed_snapshot(), run=rt.run,
            )
            self.network.send(done, TASK_PREEMPTED,
                              lambda t, n=note, g=owner: g.on_task_preempted(n, t))

        run.metrics.preempted_caused += killed
        node = self.nodes.get(req.node_id)
        partitions = self._affected(*touched) if touched else (
            (node.partition_id,) if node else ())
        gm = self._gm(req.gm_id)
        response = PreemptResponse(
            gm_id=req.gm_id, lm_id=self.lm_id, task_id=req.task_id,
            node_id=req.node_id, statuses=tuple(statuses), state_timestamp=done,
            piggyback=tuple(self.partition_snapshot(pid) for pid in partitions),
            user_consumed=self._consumed_snapshot(),
        )
        self.network.send(done, PREEMPT_RESPONSE,
                          lambda t: gm.on_preempt_response(response, t),
                          metrics=run.metrics)

    # -- completion ----------------------------------------------------------

    def _release(self, rt: RunningTask, now: float) -> list[str]:
        """Return resources for a finished or killed task; destroys logical nodes."""
        node = self.nodes[rt.node_id]
        touched = [node.partition_id]
        if node.is_logical:
            parent = self.nodes[node.parent_node]
            parent.available = parent.available + node.capacity
            self.partitions[node.partition_id].remove_node(node.node_id)
            del self.nodes[node.node_id]
            self.children[parent.node_id].remove(node.node_id)
            touched.append(parent.partition_id)
        else:
            node.available = node.available + rt.demand
        self.consumed[rt.user_id] = self.consumed[rt.user_id] - rt.demand
        return touched

    def _on_task_complete(self, task_id: str, incarnation: int, now: float) -> None:
        rt = self.running.get(task_id)
        if rt is None or rt.incarnation != incarnation:
            return  # stale completion from a preempted incarnation
        del self.running[task_id]
        touched = self._release(rt, now)
        self.collector.note_completed()
        self.loop.note_progress()
        owner = self._gm(rt.gm_id)
        message = TaskCompletion(
            lm_id=self.lm_id, gm_id=rt.gm_id, task_id=task_id, user_id=rt.user_id,
            demand=rt.demand, state_timestamp=now,
            piggyback=tuple(self.partition_snapshot(pid) for pid in self._affected(*touched)),
            user_consumed=self._consumed_snapshot(), run=rt.run,
        )
        self.network.send(now, TASK_COMPLETION,
                          lambda t: owner.on_task_completion(message, t))
