"""Cluster-state snapshots carried on the simulated wire, and the per-GM view.

LMs are the authority for their workers.  GMs schedule against a possibly
stale copy of that state: full snapshots arrive with periodic heartbeats and
replace an LM's slice of the view wholesale, while request responses piggyback
just the partitions they touched.  Both carry the LM-side timestamp at which
the snapshot was taken and merges never move a view backwards in time.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import ConstraintBitmap, ConstraintSet, ResourceVector, iter_ordinals


@dataclass(frozen=True)
class RunningTaskInfo:
    task_id: str
    user_id: str
    demand: ResourceVector
    launch_time: float


@dataclass(frozen=True)
class NodeSnapshot:
    node_id: str
    available: ResourceVector
    is_logical: bool
    parent_node: str | None
    running: tuple[RunningTaskInfo, ...]


@dataclass(frozen=True)
class PartitionSnapshot:
    partition_id: str
    lm_id: str
    owner_gm_id: str
    nodes: tuple[NodeSnapshot, ...]
    bits: tuple[int, ...]
    constraint_count: int

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.node_id for n in self.nodes)


@dataclass(frozen=True)
class LMStateSnapshot:
    """Full state of one LM as of `timestamp`."""

    lm_id: str
    timestamp: float
    partitions: tuple[PartitionSnapshot, ...]
    user_consumed: tuple[tuple[str, ResourceVector], ...]

    @property
    def node_count(self) -> int:
        return sum(len(p.nodes) for p in self.partitions)


class ViewPartition:
    """One partition as last reported by its LM, plus optimistic deductions.

    A GM deducts a task's demand from the viewed availability the moment it
    commits to a node, so back-to-back decisions in the same pass do not pick
    the same resources twice.  The next snapshot from the LM overwrites the
    guesswork with authority.
    """

    __slots__ = ("partition_id", "lm_id", "owner_gm_id", "node_ids", "available",
                 "running", "logical", "bitmap")

    def __init__(self, snapshot: PartitionSnapshot) -> None:
        self.partition_id = snapshot.partition_id
        self.lm_id = snapshot.lm_id
        self.owner_gm_id = snapshot.owner_gm_id
        self.refresh(snapshot)

    def refresh(self, snapshot: PartitionSnapshot) -> None:
        self.node_ids = [n.node_id for n in snapshot.nodes]
        self.available = [n.available for n in snapshot.nodes]
        self.running = [n.running for n in snapshot.nodes]
        self.logical = [n.is_logical for n in snapshot.nodes]
        self.bitmap = ConstraintBitmap(
            snapshot.constraint_count, len(snapshot.nodes), list(snapshot.bits)
        )

    def match(self, constraints: ConstraintSet, demand: ResourceVector
              ) -> tuple[int | None, int, int]:
        """First node ordinal satisfying constraints and viewed availability.

        Returns (ordinal or None, word_ops, nodes_checked).  Candidates come
        from intersecting the constraint bit vectors; they are then scanned in
        ascending ordinal order for sufficient viewed resources.
        """
        mask, word_ops = self.bitmap.candidates(constraints)
        word_ops += self.bitmap.words  # one scan pass over the candidate words
        checked = 0
        for ordinal in iter_ordinals(mask):
            checked += 1
            if self.available[ordinal].geq(demand):
                return ordinal, word_ops, checked
        return None, word_ops, checked

    def deduct(self, ordinal: int, demand: ResourceVector) -> None:
        self.available[ordinal] = self.available[ordinal] - demand

    def node_satisfies(self, ordinal: int, constraints: ConstraintSet) -> bool:
        return all(self.bitmap.satisfies(cid, ordinal) for cid in constraints)


class ClusterView:
    """A GM's eventually-consistent picture of every LM's partitions."""

    def __init__(self, snapshots: list[LMStateSnapshot], resource_dim: int) -> None:
        self.resource_dim = resource_dim
        self.partitions: dict[tuple[str, str], ViewPartition] = {}
        self.last_update_time: dict[str, float] = {}
        self.lm_user_consumed: dict[str, dict[str, ResourceVector]] = {}
        for snapshot in snapshots:
            self._replace_lm(snapshot)

    def _replace_lm(self, snapshot: LMStateSnapshot) -> None:
        for part in snapshot.partitions:
            key = (snapshot.lm_id, part.partition_id)
            existing = self.partitions.get(key)
            if existing is None:
                self.partitions[key] = ViewPartition(part)
            else:
                existing.refresh(part)
        self.lm_user_consumed[snapshot.lm_id] = dict(snapshot.user_consumed)
        self.last_update_time[snapshot.lm_id] = snapshot.timestamp

    def apply_heartbeat(self, snapshot: LMStateSnapshot) -> bool:
        """Replace an LM's slice of the view; stale snapshots are discarded."""
        if snapshot.timestamp < self.last_update_time.get(snapshot.lm_id, float("-inf")):
            return False
        self._replace_lm(snapshot)
        return True

    def merge_partitions(
        self,
        lm_id: str,
        timestamp: float,
        partitions: tuple[PartitionSnapshot, ...],
        user_consumed: tuple[tuple[str, ResourceVector], ...] | None = None,
    ) -> bool:
        """Merge a partial (piggybacked) update covering only some partitions."""
        if timestamp < self.last_update_time.get(lm_id, float("-inf")):
            return False
        for part in partitions:
            key = (lm_id, part.partition_id)
            existing = self.partitions.get(key)
            if existing is None:
                self.partitions[key] = ViewPartition(part)
            else:
                existing.refresh(part)
        if user_consumed is not None:
            self.lm_user_consumed[lm_id] = dict(user_consumed)
        self.last_update_time[lm_id] = timestamp
        return True

    def viewed_consumed(self, user_id: str) -> ResourceVector:
        """Sum of the user's consumption as last reported by each LM."""
        total = ResourceVector.zeros(self.resource_dim)
        for per_lm in self.lm_user_consumed.values():
            consumed = per_lm.get(user_id)
            if consumed is not None:
                total = total + consumed
        return total
