"""Experiment configuration: dataclasses, JSON loading, and validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .core import DEFAULT_CONSTRAINT_COUNT, ResourceVector
from .engine import CostModel, DelayModel
from .errors import ConfigurationError
from .workload import ClusterProfile

SCHEDULER_KINDS = ("megha", "sparrow", "centralized")


@dataclass
class UserSpec:
    user_id: str
    share: float
    gm_index: int | None = None  # explicit queue placement; default deals round-robin


@dataclass
class WorkloadSpec:
    """Either a trace file or synthetic-generation parameters."""

    kind: str = "synthetic"  # "trace" | "synthetic"
    # trace
    path: str | None = None
    cpu_divisor: float = 400
    mem_divisor: float = 50
    # synthetic
    count: int = 1000
    rate: float = 100.0
    duration: object = 5.0
    demand: object = None  # ResourceVector or [(vector, weight), ...]
    arrival: str = "poisson"
    # applied to both kinds
    constraint_probabilities: dict[int, float] = field(default_factory=dict)
    load_factor: float = 1.0  # >1 compresses arrivals (higher load)


@dataclass
class ExperimentConfig:
    scheduler: str = "megha"
    gm_count: int = 2
    lm_count: int = 2
    workers_per_lm: int = 50
    worker_capacity: ResourceVector = field(default_factory=lambda: ResourceVector.of(64, 16384))
    heartbeat_period: float = 10.0
    delays: DelayModel = field(default_factory=DelayModel)
    costs: CostModel = field(default_factory=CostModel)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    users: list[UserSpec] = field(default_factory=list)
    machine_profiles: list[ClusterProfile] = field(default_factory=list)
    seed: int = 0
    constraint_count: int = DEFAULT_CONSTRAINT_COUNT
    retry_limit: int = 5
    event_cap: int = 2_000_000
    violation_metric: str = "cpu"  # "cpu" | "max"
    # baseline-only knobs
    probe_count: int = 2
    sparrow_scheduler_count: int = 2
    slot_demand: ResourceVector | None = None

    def validate(self) -> None:
        if self.scheduler not in SCHEDULER_KINDS:
            raise ConfigurationError(f"unknown scheduler kind {self.scheduler!r}")
        if self.scheduler == "centralized" and (self.gm_count != 1 or self.lm_count != 1):
            raise ConfigurationError(
                "centralized means exactly one GM and one LM "
                f"(got gm_count={self.gm_count}, lm_count={self.lm_count})"
            )
        if self.gm_count < 1 or self.lm_count < 1 or self.workers_per_lm < 1:
            raise ConfigurationError("gm_count, lm_count, workers_per_lm must be >= 1")
        if self.heartbeat_period <= 0:
            raise ConfigurationError("heartbeat_period must be positive")
        if self.retry_limit < 1:
            raise ConfigurationError("retry_limit must be >= 1")
        if self.constraint_count < 1:
            raise ConfigurationError("constraint_count must be >= 1")
        if self.violation_metric not in ("cpu", "max"):
            raise ConfigurationError(f"unknown violation metric {self.violation_metric!r}")
        if self.workload.kind not in ("trace", "synthetic"):
            raise ConfigurationError(f"unknown workload kind {self.workload.kind!r}")
        if self.workload.kind == "trace" and not self.workload.path:
            raise ConfigurationError("trace workload needs a path")
        if self.workload.load_factor <= 0:
            raise ConfigurationError("load_factor must be positive")
        if self.scheduler == "sparrow":
            if self.probe_count < 1 or self.sparrow_scheduler_count < 1:
                raise ConfigurationError("probe_count and scheduler count must be >= 1")
        seen = set()
        total_share = 0.0
        for user in self.users:
            if user.user_id in seen:
                raise ConfigurationError(f"duplicate user {user.user_id!r}")
            seen.add(user.user_id)
            if not 0.0 <= user.share <= 1.0:
                raise ConfigurationError(
                    f"user {user.user_id}: share {user.share} outside [0, 1]"
                )
            if user.gm_index is not None and not 0 <= user.gm_index < self.gm_count:
                raise ConfigurationError(
                    f"user {user.user_id}: gm_index {user.gm_index} out of range"
                )
            total_share += user.share
        if total_share > 1.0 + 1e-9:
            raise ConfigurationError(
                f"user shares sum to {total_share}, exceeding the cluster"
            )


def _parse_demand(value):
    if value is None:
        return None
    if isinstance(value, list) and value and isinstance(value[0], list) and len(value[0]) == 2 \
            and isinstance(value[0][0], list):
        return [(ResourceVector.of(*v), w) for v, w in value]
    return ResourceVector.of(*value)


def _parse_duration(value):
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, list):
        return tuple(value[0:1] + [tuple(v) if isinstance(v, list) else v for v in value[1:]])
    raise ConfigurationError(f"bad duration spec {value!r}")


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from plain JSON data, applying defaults for absent keys."""
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be an object")
    known = {
        "scheduler", "gm_count", "lm_count", "workers_per_lm", "worker_capacity",
        "heartbeat_period", "delays", "costs", "workload", "users",
        "machine_profiles", "seed", "constraint_count", "retry_limit", "event_cap",
        "violation_metric", "probe_count", "sparrow_scheduler_count", "slot_demand",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")

    config = ExperimentConfig()
    for key in ("scheduler", "gm_count", "lm_count", "workers_per_lm",
                "heartbeat_period", "seed", "constraint_count", "retry_limit",
                "event_cap", "violation_metric", "probe_count",
                "sparrow_scheduler_count"):
        if key in data:
            setattr(config, key, data[key])
    if "worker_capacity" in data:
        config.worker_capacity = ResourceVector.of(*data["worker_capacity"])
    if "slot_demand" in data and data["slot_demand"] is not None:
        config.slot_demand = ResourceVector.of(*data["slot_demand"])
    if "delays" in data:
        config.delays = DelayModel(**data["delays"])
    if "costs" in data:
        config.costs = CostModel(**data["costs"])
    if "users" in data:
        config.users = [UserSpec(**u) for u in data["users"]]
    if "machine_profiles" in data:
        config.machine_profiles = [
            ClusterProfile(p["profile_id"],
                           {int(k): float(v) for k, v in p["probabilities"].items()})
            for p in data["machine_profiles"]
        ]
    if "workload" in data:
        w = dict(data["workload"])
        if "constraint_probabilities" in w:
            w["constraint_probabilities"] = {
                int(k): float(v) for k, v in w["constraint_probabilities"].items()
            }
        if "demand" in w:
            w["demand"] = _parse_demand(w["demand"])
        if "duration" in w:
            w["duration"] = _parse_duration(w["duration"])
        try:
            config.workload = WorkloadSpec(**w)
        except TypeError as exc:
            raise ConfigurationError(f"bad workload spec: {exc}") from None
    config.validate()
    return config


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    try:
        return config_from_dict(data)
    except TypeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
