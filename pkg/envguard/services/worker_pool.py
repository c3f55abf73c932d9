# envguard/services/worker_pool.py
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, List, Optional


class WorkerPool:
    """
    Process pool for independent work items (boxes, verification leaves,
    tuning candidates). Results are always consumed in submission order, so
    the outcome does not depend on the number of workers.
    """

    def __init__(self, workers: int = 1, logger=None):
        self.workers = max(1, int(workers))
        self.logger = logger
        self._executor: Optional[ProcessPoolExecutor] = None

    def _pool(self) -> ProcessPoolExecutor:
        if self._executor is None:
            self._executor = ProcessPoolExecutor(max_workers=self.workers)
            if self.logger:
                self.logger.debug("worker pool started with %d processes", self.workers)
        return self._executor

    def map_ordered(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        items = list(items)
        if self.workers == 1 or len(items) <= 1:
            return [fn(x) for x in items]
        return list(self._pool().map(fn, items))

    def first_hit(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> Optional[Any]:
        """First non-None result in submission order; later items are cancelled."""
        items = list(items)
        if self.workers == 1:
            for x in items:
                r = fn(x)
                if r is not None:
                    return r
            return None
        futures = [self._pool().submit(fn, x) for x in items]
        try:
            for fut in futures:
                r = fut.result()
                if r is not None:
                    return r
            return None
        finally:
            for fut in futures:
                fut.cancel()

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(cancel_futures=True)
            self._executor = None

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
