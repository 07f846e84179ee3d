import threading
import weakref
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Set

import numpy as np

# Trackers currently listening, innermost last.
_ACTIVE: List["MemoryTracker"] = []
# ids of the arrays currently charged, so a buffer handed around is counted once.
_LIVE: Set[int] = set()
# Component charged for tensor allocations that do not name one.
_COMPONENT: List[str] = ["tensor"]
# Guards _LIVE. Reentrant because a finalizer can fire on a thread that already holds it.
_LIVE_LOCK = threading.RLock()


class MemoryTracker:
    """
    High-water mark of the numpy buffers owned by tensors and volumes.

    Buffers register their size when they are created inside an active
    tracker and give it back when the array is garbage collected, so the
    peak reflects what was alive at the same time, per component and in total.
    """
    def __init__(self):
        self.current = 0
        self.peak = 0
        self.current_by_component: Dict[str, int] = {}
        self.peak_by_component: Dict[str, int] = {}
        self._lock = threading.RLock()

    def allocate(self, nbytes: int, component: str) -> None:
        with self._lock:
            self.current += nbytes
            self.peak = max(self.peak, self.current)
            value = self.current_by_component.get(component, 0) + nbytes
            self.current_by_component[component] = value
            self.peak_by_component[component] = max(self.peak_by_component.get(component, 0), value)

    def release(self, nbytes: int, component: str) -> None:
        with self._lock:
            self.current -= nbytes
            self.current_by_component[component] = self.current_by_component.get(component, 0) - nbytes

    def __enter__(self) -> "MemoryTracker":
        _ACTIVE.append(self)
        return self

    def __exit__(self, extype, exvalue, traceback):
        _ACTIVE.remove(self)


def _release(key: int, trackers: List[MemoryTracker], nbytes: int, component: str) -> None:
    with _LIVE_LOCK:
        _LIVE.discard(key)
    for tracker in trackers:
        tracker.release(nbytes, component)


def track(array: Optional[np.ndarray], component: Optional[str] = None) -> Optional[np.ndarray]:
    """
    Charges an array to every active tracker until it is collected.

    :param array: buffer to account for.
    :param component: bucket name; defaults to the innermost workspace.
    :return: the same array.
    """
    if not _ACTIVE or array is None:
        return array
    with _LIVE_LOCK:
        if id(array) in _LIVE:
            return array
        _LIVE.add(id(array))
    component = component or _COMPONENT[-1]
    trackers = list(_ACTIVE)
    for tracker in trackers:
        tracker.allocate(array.nbytes, component)
    weakref.finalize(array, _release, id(array), trackers, array.nbytes, component)
    return array


@contextmanager
def workspace(component: str) -> Iterator[None]:
    """
    Charges the tensor allocations made inside the block to `component`.
    """
    _COMPONENT.append(component)
    try:
        yield
    finally:
        _COMPONENT.pop()
