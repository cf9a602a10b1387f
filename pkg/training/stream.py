"""
Per-step sample production: shuffled epochs, augmentation and target building.

Samples are prepared either inline or on one producer thread feeding a bounded
queue. Only the producer draws from the stream's generator, so both modes yield
the same sequence for a given seed.
"""

import queue
import threading
from typing import Callable, Generic, Iterator, List, Optional, Sequence, TypeVar
import numpy as np

from shared.types import FaceSample
from shared.exceptions import InvalidStateError, ValidationException
from shared.log import get_logger

logger = get_logger("STREAM")

T = TypeVar("T")
PrepareFn = Callable[[FaceSample, np.random.Generator], T]

_DONE = object()


class SampleStream(Generic[T]):
    """
    Yields exactly `count` prepared items, cycling over reshuffled epochs of `data`.
    """

    def __init__(self, data: Sequence[FaceSample], prepare: PrepareFn, rng: np.random.Generator,
                 count: int, threaded: bool = False, queue_size: int = 8):
        if not data:
            raise ValidationException("Cannot stream an empty dataset")
        self._data = data
        self._prepare = prepare
        self._rng = rng
        self._count = count
        self._threaded = threaded
        self._delivered = 0
        self._queue: Optional[queue.Queue] = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._inline: Optional[Iterator[T]] = None
        if threaded:
            self._queue = queue.Queue(maxsize=queue_size)
            self._thread = threading.Thread(target=self._produce, name="sample-producer", daemon=True)
            self._thread.start()
        else:
            self._inline = self._generate()

    def _order(self) -> Iterator[int]:
        while True:
            for index in self._rng.permutation(len(self._data)):
                yield int(index)

    def _generate(self) -> Iterator[T]:
        order = self._order()
        for _ in range(self._count):
            if self._stop.is_set():
                return
            yield self._prepare(self._data[next(order)], self._rng)

    def _put(self, item) -> bool:
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self) -> None:
        try:
            for item in self._generate():
                if not self._put(item):
                    return
        except Exception as e:
            self._put(e)
            return
        self._put(_DONE)

    def next(self) -> T:
        """
        Raises:
            InvalidStateError: If the stream is exhausted or closed
        """
        if self._delivered >= self._count or self._stop.is_set():
            raise InvalidStateError("Sample stream exhausted")
        if self._threaded:
            item = self._queue.get()
            if isinstance(item, Exception):
                raise item
            if item is _DONE:
                raise InvalidStateError("Sample producer finished early")
        else:
            item = next(self._inline)
        self._delivered += 1
        return item

    def take(self, n: int) -> List[T]:
        return [self.next() for _ in range(n)]

    def close(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            if self._thread.is_alive():
                logger.warning("Sample producer did not stop within 5s")

    def __enter__(self) -> 'SampleStream[T]':
        return self

    def __exit__(self, *exc) -> None:
        self.close()
