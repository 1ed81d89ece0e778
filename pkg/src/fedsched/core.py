"""Core value types: resource vectors, constraint sets, tasks, nodes, partitions.

Resources are exact integer quantities (whole CPU cores, memory in MB by
default).  Constraints are small integer ids; a machine satisfies a task when
its constraint set is a superset of the task's.  Partition membership is
indexed per constraint with bit vectors so a scheduler can intersect them with
bitwise AND instead of walking every node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import ConfigurationError

DEFAULT_RESOURCE_DIM = 2  # (cpu cores, memory MB)
DEFAULT_CONSTRAINT_COUNT = 21
WORD_BITS = 64


@dataclass(frozen=True)
class ResourceVector:
    """Element-wise non-negative integer resource amounts.

    Invariants:
      - at least one dimension
      - every quantity is an int >= 0 (enforced here and by arithmetic)
    """

    quantities: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.quantities:
            raise ConfigurationError("resource vector needs at least one dimension")
        for q in self.quantities:
            if not isinstance(q, int) or isinstance(q, bool) or q < 0:
                raise ConfigurationError(
                    f"resource quantities must be non-negative integers, got {q!r}"
                )

    @classmethod
    def of(cls, *quantities: int) -> "ResourceVector":
        return cls(tuple(quantities))

    @classmethod
    def zeros(cls, dimension: int = DEFAULT_RESOURCE_DIM) -> "ResourceVector":
        return cls((0,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.quantities)

    def _check_dimension(self, other: "ResourceVector") -> None:
        if len(self.quantities) != len(other.quantities):
            raise ConfigurationError(
                f"resource dimension mismatch: {len(self.quantities)} vs {len(other.quantities)}"
            )

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        self._check_dimension(other)
        return ResourceVector(tuple(a + b for a, b in zip(self.quantities, other.quantities)))

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        self._check_dimension(other)
        out = tuple(a - b for a, b in zip(self.quantities, other.quantities))
        if any(q < 0 for q in out):
            raise ValueError(f"resource underflow: {self.quantities} - {other.quantities}")
        return ResourceVector(out)

    def geq(self, other: "ResourceVector") -> bool:
        """True when every dimension of self is >= the same dimension of other."""
        self._check_dimension(other)
        return all(a >= b for a, b in zip(self.quantities, other.quantities))

    def __getitem__(self, index: int) -> int:
        return self.quantities[index]

    def __iter__(self) -> Iterator[int]:
        return iter(self.quantities)

    def is_zero(self) -> bool:
        return all(q == 0 for q in self.quantities)


def resource_geq(supply: ResourceVector, demand: ResourceVector) -> bool:
    """Per-dimension dominance check used everywhere a launch is validated."""
    return supply.geq(demand)


@dataclass(frozen=True)
class ConstraintSet:
    """An immutable set of integer constraint ids."""

    ids: frozenset[int]

    def __post_init__(self) -> None:
        for cid in self.ids:
            if not isinstance(cid, int) or isinstance(cid, bool) or cid < 0:
                raise ConfigurationError(f"constraint ids must be non-negative ints, got {cid!r}")

    @classmethod
    def of(cls, *ids: int) -> "ConstraintSet":
        return cls(frozenset(ids))

    @classmethod
    def empty(cls) -> "ConstraintSet":
        return _EMPTY_CONSTRAINTS

    def sorted_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.ids))

    def issuperset(self, other: "ConstraintSet") -> bool:
        return self.ids >= other.ids

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, cid: int) -> bool:
        return cid in self.ids

    def __iter__(self) -> Iterator[int]:
        # sorted so that iteration order never depends on set internals
        return iter(self.sorted_ids())


_EMPTY_CONSTRAINTS = ConstraintSet(frozenset())


def constraint_superset(machine: ConstraintSet, task: ConstraintSet) -> bool:
    """A machine is eligible only when it carries every constraint the task names."""
    return machine.issuperset(task)


@dataclass(frozen=True)
class TaskRequest:
    """One schedulable unit of work."""

    task_id: str
    job_id: str
    user_id: str
    demand: ResourceVector
    constraints: ConstraintSet
    arrival_time: float
    duration: float

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ConfigurationError(f"task {self.task_id}: duration must be > 0")
        if self.arrival_time < 0:
            raise ConfigurationError(f"task {self.task_id}: arrival must be >= 0")
        if self.demand.is_zero():
            raise ConfigurationError(f"task {self.task_id}: demand must be non-zero")


@dataclass
class WorkerNode:
    """A physical worker or a logical node carved out of one.

    Invariants:
      - 0 <= available <= capacity element-wise
      - is_logical implies parent_node is set and capacity equals the demand
        the node was carved for
    """

    node_id: str
    lm_id: str
    partition_id: str
    capacity: ResourceVector
    available: ResourceVector
    machine_constraints: ConstraintSet
    is_logical: bool = False
    parent_node: str | None = None

    def __post_init__(self) -> None:
        if not self.capacity.geq(self.available):
            raise ConfigurationError(f"node {self.node_id}: available exceeds capacity")
        if self.is_logical and self.parent_node is None:
            raise ConfigurationError(f"logical node {self.node_id} needs a parent node")


@dataclass
class ConstraintBitmap:
    """Per-constraint membership bit vectors for one partition.

    Vector c has bit j set iff the node at ordinal j satisfies constraint c.
    Python ints act as unbounded bitsets, so intersecting constraint vectors
    is a single AND per constraint.  `word_ops` counts are reported in units
    of 64-bit words so callers can charge simulated processing time.
    """

    constraint_count: int
    length: int = 0
    bits: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.constraint_count <= 0:
            raise ConfigurationError("constraint_count must be positive")
        if not self.bits:
            self.bits = [0] * self.constraint_count
        elif len(self.bits) != self.constraint_count:
            raise ConfigurationError("bitmap vector count must equal constraint_count")

    @classmethod
    def from_constraint_sets(
        cls, constraint_count: int, sets: Iterable[ConstraintSet]
    ) -> "ConstraintBitmap":
        bitmap = cls(constraint_count)
        for cs in sets:
            bitmap.append_node(cs)
        return bitmap

    @property
    def words(self) -> int:
        """Number of 64-bit words each vector spans."""
        return (self.length + WORD_BITS - 1) // WORD_BITS

    def _check_id(self, cid: int) -> None:
        if cid < 0 or cid >= self.constraint_count:
            raise ConfigurationError(
                f"unknown constraint id {cid} (system has {self.constraint_count})"
            )

    def append_node(self, constraints: ConstraintSet) -> int:
        """Add a node at the next ordinal; returns that ordinal."""
        ordinal = self.length
        for cid in constraints:
            self._check_id(cid)
            self.bits[cid] |= 1 << ordinal
        self.length += 1
        return ordinal

    def remove_ordinal(self, ordinal: int) -> None:
        """Drop one node position, shifting higher ordinals down by one."""
        if ordinal < 0 or ordinal >= self.length:
            raise ConfigurationError(f"ordinal {ordinal} out of range (length {self.length})")
        low_mask = (1 << ordinal) - 1
        for cid in range(self.constraint_count):
            v = self.bits[cid]
            self.bits[cid] = ((v >> (ordinal + 1)) << ordinal) | (v & low_mask)
        self.length -= 1

    def satisfies(self, cid: int, ordinal: int) -> bool:
        self._check_id(cid)
        return bool(self.bits[cid] >> ordinal & 1)

    def candidates(self, constraints: ConstraintSet) -> tuple[int, int]:
        """Intersect the constraint vectors for a task.

        Returns (candidate mask, word operation count).  With no constraints
        every node is a candidate and no AND work is charged.
        """
        mask = (1 << self.length) - 1
        word_ops = 0
        for cid in constraints:
            self._check_id(cid)
            mask &= self.bits[cid]
            word_ops += self.words
        return mask, word_ops

    def snapshot_bits(self) -> tuple[int, ...]:
        return tuple(self.bits)

    def copy(self) -> "ConstraintBitmap":
        return ConstraintBitmap(self.constraint_count, self.length, list(self.bits))


def iter_ordinals(mask: int) -> Iterator[int]:
    """Yield set bit positions of a candidate mask in ascending order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass
class Partition:
    """A logical slice of one LM's workers, owned by exactly one GM."""

    partition_id: str
    lm_id: str
    owner_gm_id: str
    node_ids: list[str] = field(default_factory=list)
    bitmap: ConstraintBitmap | None = None

    def __post_init__(self) -> None:
        if self.bitmap is None:
            self.bitmap = ConstraintBitmap(DEFAULT_CONSTRAINT_COUNT)
        if self.bitmap.length != len(self.node_ids):
            raise ConfigurationError(
                f"partition {self.partition_id}: bitmap length {self.bitmap.length} "
                f"!= node count {len(self.node_ids)}"
            )

    def append_node(self, node_id: str, constraints: ConstraintSet) -> int:
        ordinal = self.bitmap.append_node(constraints)
        self.node_ids.append(node_id)
        return ordinal

    def remove_node(self, node_id: str) -> None:
        ordinal = self.node_ids.index(node_id)
        self.bitmap.remove_ordinal(ordinal)
        del self.node_ids[ordinal]
