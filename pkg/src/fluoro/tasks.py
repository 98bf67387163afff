from abc import ABC, abstractmethod
from concurrent.futures import ProcessPoolExecutor

from fluoro.settings import logger


class Task(ABC):
    """A picklable unit of work; ``perform_task`` must be a pure function of the event."""

    @abstractmethod
    def perform_task(self, event):
        pass

    def __call__(self, event):
        return self.perform_task(event)


def run_tasks(task, events, workers=1):
    """Map ``events`` through ``task``; results always come back in event order."""
    events = list(events)
    if workers <= 1 or len(events) <= 1:
        return [task(event) for event in events]
    logger.debug(f"Running {len(events)} {task.__class__.__name__} events on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(task, events))
