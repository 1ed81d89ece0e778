"""Exception types shared across the package."""


class ConfigurationError(Exception):
    """Invalid configuration, workload input, or API misuse."""


class TraceFormatError(ConfigurationError):
    """A workload trace file could not be parsed."""


class SimulationError(RuntimeError):
    """Internal simulation contract violation (e.g. an event scheduled in the past)."""


class LivelockError(SimulationError):
    """The event loop exceeded its no-progress event budget."""
