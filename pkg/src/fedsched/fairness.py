"""Global fair scheduling: per-user FIFO queues, shares, and preemption plans.

Each user owns one FIFO queue homed at exactly one GM and a share expressed as
a fraction of total data-center resources.  A GM serves its queues round-robin.
Preemption is a last resort: it runs only after both the internal-partition
scan and repartitioning fail, and only on behalf of a user still at or under
its share.  Victim users are considered in decreasing order of how far over
their share they appear in the deciding GM's view.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core import ConstraintSet, ResourceVector
from .errors import ConfigurationError
from .metrics import TaskRun
from .state import ClusterView

VIOLATION_METRIC_CPU = "cpu"
VIOLATION_METRIC_MAX = "max"


@dataclass
class UserQueue:
    """One user's FIFO request queue, owned by a single GM."""

    user_id: str
    share_fraction: float
    gm_id: str
    share: tuple[float, ...]  # absolute units: fraction * total cluster capacity
    pending: deque[TaskRun] = field(default_factory=deque)
    consumed: ResourceVector | None = None  # authoritative at the owner GM

    def __post_init__(self) -> None:
        if not 0.0 <= self.share_fraction <= 1.0:
            raise ConfigurationError(
                f"user {self.user_id}: share fraction {self.share_fraction} outside [0, 1]"
            )
        if self.consumed is None:
            self.consumed = ResourceVector.zeros(len(self.share))


class QueueSet:
    """The queues one GM owns, served round-robin."""

    def __init__(self, queues: list[UserQueue]) -> None:
        self.queues = queues
        self.by_user = {q.user_id: q for q in queues}
        self._cursor = 0

    def enqueue(self, run: TaskRun) -> None:
        queue = self.by_user.get(run.request.user_id)
        if queue is None:
            raise ConfigurationError(f"no queue for user {run.request.user_id!r}")
        queue.pending.append(run)

    # re-insertion at the tail is how rescheduling and fairness failures retry
    reinsert = enqueue

    def next_request(self) -> TaskRun | None:
        """Pop the head of the next non-empty queue in round-robin order."""
        return self.next_eligible(None)

    def next_eligible(self, tried_version: int | None) -> TaskRun | None:
        """Like next_request, but skip heads already tried at this view version."""
        n = len(self.queues)
        for offset in range(n):
            idx = (self._cursor + offset) % n
            queue = self.queues[idx]
            if not queue.pending:
                continue
            head = queue.pending[0]
            if tried_version is not None and head.tried_version == tried_version:
                continue
            queue.pending.popleft()
            self._cursor = (idx + 1) % n
            return head
        return None

    def pending_total(self) -> int:
        return sum(len(q.pending) for q in self.queues)

    def add_consumed(self, user_id: str, demand: ResourceVector) -> None:
        queue = self.by_user[user_id]
        queue.consumed = queue.consumed + demand

    def sub_consumed(self, user_id: str, demand: ResourceVector) -> None:
        queue = self.by_user[user_id]
        queue.consumed = queue.consumed - demand


def metric_value(amounts, share: tuple[float, ...], metric: str) -> float:
    """Collapse a consumed/share comparison to one ratio.

    "cpu" compares dimension 0 only; "max" takes the worst ratio across
    dimensions.  A zero share with non-zero consumption is infinitely over.
    """
    ratios = []
    dims = range(len(share)) if metric == VIOLATION_METRIC_MAX else (0,)
    for i in dims:
        used = amounts[i]
        if share[i] <= 0.0:
            ratios.append(float("inf") if used > 0 else 0.0)
        else:
            ratios.append(used / share[i])
    return max(ratios)


def over_share(consumed: ResourceVector, share: tuple[float, ...], metric: str) -> bool:
    """Strictly over its share; consumption exactly at the share is allowed."""
    return metric_value(consumed.quantities, share, metric) > 1.0


@dataclass(frozen=True)
class PreemptPlan:
    lm_id: str
    partition_id: str
    node_id: str
    ordinal: int
    victim_user: str
    victim_ids: tuple[str, ...]
    nodes_scanned: int


@dataclass(frozen=True)
class CandidateAudit:
    user_id: str
    viewed_consumed: tuple[int, ...]
    share: tuple[float, ...]
    ratio: float
    yielded_victims: bool


@dataclass(frozen=True)
class PreemptDecisionAudit:
    time: float
    gm_id: str
    task_id: str
    requester_user: str
    requester_consumed: tuple[int, ...]
    requester_share: tuple[float, ...]
    metric: str
    candidates: tuple[CandidateAudit, ...]
    chosen_user: str | None
    victim_ids: tuple[str, ...]
    node_id: str | None
    nodes_scanned: int = 0


GUARD_FAILURE = "over_share"


def plan_preemption(
    view: ClusterView,
    run: TaskRun,
    requester_queue: UserQueue,
    shares: dict[str, tuple[float, ...]],
    own_queues: dict[str, UserQueue],
    metric: str,
    now: float,
    gm_id: str,
) -> tuple[str | None, PreemptPlan | None, PreemptDecisionAudit]:
    """Decide whether and whom to preempt for `run`.

    Returns (guard_failure, plan, audit).  guard_failure is set when the
    requesting user is already over its share, in which case the request must
    go back to the tail of its queue.  plan is None when no over-share user
    has victims that would free enough resources on a single eligible node.
    """
    request = run.request
    requester_user = request.user_id
    requester_consumed = requester_queue.consumed
    requester_share = requester_queue.share

    if over_share(requester_consumed, requester_share, metric):
        audit = PreemptDecisionAudit(
            time=now, gm_id=gm_id, task_id=request.task_id,
            requester_user=requester_user,
            requester_consumed=requester_consumed.quantities,
            requester_share=requester_share, metric=metric,
            candidates=(), chosen_user=None, victim_ids=(), node_id=None,
            nodes_scanned=0,
        )
        return GUARD_FAILURE, None, audit

    # rank other users by how far over their share the view says they are
    candidates: list[tuple[float, str, ResourceVector]] = []
    for user_id, share in shares.items():
        if user_id == requester_user:
            continue
        if user_id in own_queues:
            consumed = own_queues[user_id].consumed
        else:
            consumed = view.viewed_consumed(user_id)
        ratio = metric_value(consumed.quantities, share, metric)
        if ratio > 1.0:
            candidates.append((ratio, user_id, consumed))
    candidates.sort(key=lambda item: (-item[0], item[1]))

    audit_entries: list[CandidateAudit] = []
    plan: PreemptPlan | None = None
    scanned = 0
    for ratio, user_id, consumed in candidates:
        found = _victims_for_user(view, user_id, request.constraints, request.demand)
        scanned += found[1]
        yielded = found[0] is not None
        audit_entries.append(CandidateAudit(
            user_id=user_id, viewed_consumed=consumed.quantities,
            share=shares[user_id], ratio=ratio, yielded_victims=yielded,
        ))
        if yielded:
            lm_id, partition_id, node_id, ordinal, victim_ids = found[0]
            plan = PreemptPlan(
                lm_id=lm_id, partition_id=partition_id, node_id=node_id,
                ordinal=ordinal, victim_user=user_id, victim_ids=victim_ids,
                nodes_scanned=scanned,
            )
            break

    audit = PreemptDecisionAudit(
        time=now, gm_id=gm_id, task_id=request.task_id,
        requester_user=requester_user,
        requester_consumed=requester_consumed.quantities,
        requester_share=requester_share, metric=metric,
        candidates=tuple(audit_entries),
        chosen_user=plan.victim_user if plan else None,
        victim_ids=plan.victim_ids if plan else (),
        node_id=plan.node_id if plan else None,
        nodes_scanned=scanned,
    )
    return None, plan, audit


def _victims_for_user(
    view: ClusterView,
    victim_user: str,
    constraints: ConstraintSet,
    demand: ResourceVector,
) -> tuple[tuple[str, str, str, int, tuple[str, ...]] | None, int]:
    """Find one node where killing this user's tasks frees enough for demand.

    Victims are taken most-recently-launched first and must cover the demand
    on a single node; tasks on different nodes are never combined.  Returns
    ((lm, partition, node, ordinal, victim_ids) or None, nodes_scanned).
    """
    scanned = 0
    for key in sorted(view.partitions):
        part = view.partitions[key]
        for ordinal, running in enumerate(part.running):
            if part.logical[ordinal]:
                # killing a logical node's task returns capacity to its
                # parent, not to this node, so plan against physical nodes only
                continue
            owned = [info for info in running if info.user_id == victim_user]
            if not owned:
                continue
            scanned += 1
            if not part.node_satisfies(ordinal, constraints):
                continue
            freed = part.available[ordinal]
            owned.sort(key=lambda info: (-info.launch_time, info.task_id))
            victims: list[str] = []
            for info in owned:
                if freed.geq(demand):
                    break
                freed = freed + info.demand
                victims.append(info.task_id)
            if freed.geq(demand) and victims:
                return (part.lm_id, part.partition_id, part.node_ids[ordinal],
                        ordinal, tuple(victims)), scanned
    return None, scanned
