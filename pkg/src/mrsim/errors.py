"""Exception hierarchy shared by the simulator, schedulers and CLI."""


class MRSimError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(MRSimError, ValueError):
    """Invalid topology, workload, scenario or scheduler parameters.

    ``field`` names the offending configuration key when one is known so the
    CLI can report a field-precise message.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class SimulationStateError(MRSimError):
    """A query referenced simulation state that does not exist."""


class EngineOrderingError(MRSimError):
    """Virtual time was observed out of order."""


class DeadlockError(MRSimError):
    """No further progress is possible while tasks remain unfinished."""

    def __init__(self, stuck: list[str]):
        self.stuck = stuck
        shown = ", ".join(stuck[:20])
        more = f" (+{len(stuck) - 20} more)" if len(stuck) > 20 else ""
        super().__init__(f"scheduler starvation; stuck tasks: {shown}{more}")


class IntegrityError(MRSimError):
    """An event log is incomplete or inconsistent."""


class NotEstimable(MRSimError):
    """A running attempt is too young or has no progress to extrapolate from."""


class ComparisonError(MRSimError):
    """Reports being compared do not share a scenario."""
