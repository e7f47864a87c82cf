from mrsim.errors import ConfigurationError
from mrsim.schedulers.base import Scheduler
from mrsim.schedulers.baseline import CapacityScheduler, FairScheduler, FifoScheduler
from mrsim.schedulers.prefetch import PrefetchScheduler

SCHEDULERS = {
    "fifo": FifoScheduler,
    "fair": FairScheduler,
    "capacity": CapacityScheduler,
    "prefetch": PrefetchScheduler,
}


def make_scheduler(name: str, params: dict | None = None) -> Scheduler:
    try:
        cls = SCHEDULERS[name]
    except KeyError:
        raise ConfigurationError(f"unknown scheduler {name!r}; valid: {', '.join(SCHEDULERS)}", "scheduler") from None
    return cls(params)


__all__ = [
    "SCHEDULERS",
    "CapacityScheduler",
    "FairScheduler",
    "FifoScheduler",
    "PrefetchScheduler",
    "Scheduler",
    "make_scheduler",
]
