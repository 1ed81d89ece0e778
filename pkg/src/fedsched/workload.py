"""Workload ingestion: trace files, synthetic generation, constraint assignment.

The normalized trace format is header-bearing CSV with columns
(arrival_s, job_id, task_id, cpu, mem_mb, duration_s, constraints), where
constraints is a semicolon-joined list of integer ids (may be empty).  An
optional trailing user_id column pins tasks to users.  Raw traces record
demands at data-center scale, so loading divides cpu and mem_mb by configured
divisors (defaults 400 and 50) and clamps anything that lands at zero up to
one unit, keeping demands exact integers.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass

from .core import (DEFAULT_CONSTRAINT_COUNT, ConstraintSet, ResourceVector,
                   TaskRequest, WorkerNode)
from .errors import ConfigurationError, TraceFormatError

TRACE_COLUMNS = ("arrival_s", "job_id", "task_id", "cpu", "mem_mb", "duration_s",
                 "constraints")

DEFAULT_CPU_DIVISOR = 400
DEFAULT_MEM_DIVISOR = 50


def _scale(value: float, divisor: float) -> int:
    scaled = int(value / divisor)
    return scaled if scaled > 0 else 1


def load_trace(
    path: str,
    *,
    cpu_divisor: float = DEFAULT_CPU_DIVISOR,
    mem_divisor: float = DEFAULT_MEM_DIVISOR,
    constraint_count: int = DEFAULT_CONSTRAINT_COUNT,
) -> list[TaskRequest]:
    """Parse a normalized trace into task requests ordered by arrival."""
    if cpu_divisor <= 0 or mem_divisor <= 0:
        raise ConfigurationError("scaling divisors must be positive")
    tasks: list[TaskRequest] = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{path}: empty trace file") from None
        header = [h.strip() for h in header]
        if tuple(header[:7]) != TRACE_COLUMNS:
            raise TraceFormatError(
                f"{path}:1: expected header {','.join(TRACE_COLUMNS)}, got {','.join(header)}"
            )
        has_user = len(header) > 7 and header[7] == "user_id"
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                arrival = float(row[0])
                job_id = row[1].strip()
                task_id = row[2].strip()
                cpu = float(row[3])
                mem = float(row[4])
                duration = float(row[5])
                raw = row[6].strip()
                ids = [int(c) for c in raw.split(";") if c.strip() != ""]
                user_id = row[7].strip() if has_user and len(row) > 7 else ""
            except (ValueError, IndexError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: malformed row ({exc})") from None
            if any(cid < 0 or cid >= constraint_count for cid in ids):
                raise TraceFormatError(
                    f"{path}:{lineno}: constraint id outside [0, {constraint_count})"
                )
            if duration <= 0:
                raise TraceFormatError(f"{path}:{lineno}: duration must be > 0")
            if arrival < 0:
                raise TraceFormatError(f"{path}:{lineno}: arrival must be >= 0")
            tasks.append(TaskRequest(
                task_id=task_id, job_id=job_id, user_id=user_id,
                demand=ResourceVector.of(_scale(cpu, cpu_divisor), _scale(mem, mem_divisor)),
                constraints=ConstraintSet.of(*ids),
                arrival_time=arrival, duration=duration,
            ))
    tasks.sort(key=lambda t: (t.arrival_time, t.task_id))
    return tasks


def augment_constraints(
    tasks: list[TaskRequest],
    probabilities: dict[int, float],
    seed: int,
) -> list[TaskRequest]:
    """Independently add each constraint id to each task with its probability.

    Arrival times, durations, demands, and any constraints already present are
    preserved; the same seed always produces the same assignment.
    """
    for cid, p in probabilities.items():
        if not 0.0 <= p <= 1.0:
            raise ConfigurationError(f"constraint {cid}: probability {p} outside [0, 1]")
    rng = random.Random(f"{seed}/task-constraints")
    out: list[TaskRequest] = []
    for task in tasks:
        ids = set(task.constraints.ids)
        for cid in sorted(probabilities):
            if rng.random() < probabilities[cid]:
                ids.add(cid)
        out.append(TaskRequest(
            task_id=task.task_id, job_id=task.job_id, user_id=task.user_id,
            demand=task.demand, constraints=ConstraintSet(frozenset(ids)),
            arrival_time=task.arrival_time, duration=task.duration,
        ))
    return out


@dataclass(frozen=True)
class ClusterProfile:
    """Per-constraint probabilities applied to every machine of one cluster."""

    profile_id: str
    probabilities: dict[int, float]

    def __post_init__(self) -> None:
        for cid, p in self.probabilities.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(
                    f"profile {self.profile_id}: probability {p} for constraint {cid}"
                )


def assign_machine_constraints(
    nodes: list[WorkerNode],
    profiles: list[ClusterProfile],
    seed: int,
) -> dict[str, str]:
    """Pick a profile per cluster (LM) at random; draw each machine's constraints.

    Returns the profile chosen for each LM id.  With no profiles every machine
    keeps an empty constraint set.
    """
    chosen: dict[str, str] = {}
    if not profiles:
        return chosen
    rng = random.Random(f"{seed}/machine-constraints")
    by_lm: dict[str, list[WorkerNode]] = {}
    for node in nodes:
        by_lm.setdefault(node.lm_id, []).append(node)
    profile_by_lm: dict[str, ClusterProfile] = {}
    for lm_id in sorted(by_lm):
        profile_by_lm[lm_id] = profiles[rng.randrange(len(profiles))]
        chosen[lm_id] = profile_by_lm[lm_id].profile_id
    for lm_id in sorted(by_lm):
        profile = profile_by_lm[lm_id]
        for node in by_lm[lm_id]:
            ids = {cid for cid in sorted(profile.probabilities)
                   if rng.random() < profile.probabilities[cid]}
            node.machine_constraints = ConstraintSet(frozenset(ids))
    return chosen


def generate_synthetic(
    *,
    count: int,
    rate: float,
    duration: float | tuple,
    demand: ResourceVector | list,
    seed: int,
    arrival: str = "poisson",
    constraint_probabilities: dict[int, float] | None = None,
    user_ids: list[str] | None = None,
) -> list[TaskRequest]:
    """Generate `count` tasks at a mean arrival rate of `rate` tasks/second.

    Arrivals are either evenly spaced ("uniform") or exponential inter-arrival
    times ("poisson") rescaled so the overall span is exactly count/rate --
    the realized mean rate matches the target.  `duration` is a constant or
    ("exp", mean) or ("choice", [values], [weights]); `demand` is a constant
    vector or a [(vector, weight), ...] mixture.
    """
    if count <= 0:
        raise ConfigurationError("synthetic count must be positive")
    if rate <= 0:
        raise ConfigurationError("synthetic rate must be positive")
    rng = random.Random(f"{seed}/synthetic")

    if arrival == "uniform":
        arrivals = [(i + 1) / rate for i in range(count)]
    elif arrival == "poisson":
        gaps = [rng.expovariate(rate) for _ in range(count)]
        total = math.fsum(gaps)
        scale = (count / rate) / total
        arrivals, acc = [], 0.0
        for gap in gaps:
            acc += gap * scale
            arrivals.append(acc)
    else:
        raise ConfigurationError(f"unknown arrival process {arrival!r}")

    def draw_duration() -> float:
        if isinstance(duration, (int, float)):
            return float(duration)
        kind = duration[0]
        if kind == "exp":
            value = rng.expovariate(1.0 / duration[1])
            return max(value, 1e-6)
        if kind == "choice":
            return rng.choices(duration[1], weights=duration[2])[0]
        raise ConfigurationError(f"unknown duration spec {duration!r}")

    def draw_demand() -> ResourceVector:
        if isinstance(demand, ResourceVector):
            return demand
        vectors = [v for v, _ in demand]
        weights = [w for _, w in demand]
        return rng.choices(vectors, weights=weights)[0]

    tasks = []
    for i in range(count):
        tasks.append(TaskRequest(
            task_id=f"t{i:06d}", job_id=f"j{i // 10:05d}", user_id="",
            demand=draw_demand(), constraints=ConstraintSet.empty(),
            arrival_time=arrivals[i], duration=draw_duration(),
        ))
    if constraint_probabilities:
        tasks = augment_constraints(tasks, constraint_probabilities, seed)
    if user_ids:
        tasks = assign_users(tasks, user_ids)
    return tasks


def assign_users(tasks: list[TaskRequest], user_ids: list[str]) -> list[TaskRequest]:
    """Deal jobs to users round-robin; tasks of one job stay with one user.

    Tasks that already carry a user id keep it.
    """
    if not user_ids:
        raise ConfigurationError("assign_users needs at least one user id")
    job_user: dict[str, str] = {}
    out = []
    for task in tasks:
        if task.user_id:
            out.append(task)
            continue
        if task.job_id not in job_user:
            job_user[task.job_id] = user_ids[len(job_user) % len(user_ids)]
        out.append(TaskRequest(
            task_id=task.task_id, job_id=task.job_id, user_id=job_user[task.job_id],
            demand=task.demand, constraints=task.constraints,
            arrival_time=task.arrival_time, duration=task.duration,
        ))
    return out
