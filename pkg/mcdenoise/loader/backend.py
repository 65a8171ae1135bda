#
# Copyright (c) 2020, NVIDIA CORPORATION.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
import queue
import threading

from ..utils import seeded_rng


def _num_steps(num_samples, step_size):
    return (num_samples - 1) // step_size + 1


class BatchQueue:
    """Bounded buffer between a background batch producer and the training loop.

    Parameters
    -----------
    qsize: int
        Max number of batches to hold in the buffer at once
    put_wait: float
        amount of timeout to wait for a full queue to open up
        before checking for a stop request and trying again
    """

    _DONE = object()

    def __init__(self, qsize, put_wait=1e-3):
        self.put_wait = put_wait
        self.q_out = queue.Queue(qsize)
        self._stop_event = threading.Event()

    @property
    def stopped(self):
        return self._stop_event.is_set()

    def get(self):
        return self.q_out.get()

    def put(self, packet):
        while True:
            if self.stopped:
                return True

            try:
                self.q_out.put(packet, timeout=self.put_wait)
                return False
            except queue.Full:
                continue

    def load_batches(self, loader, order):
        try:
            for indices in loader._batch_indices(order):
                # put returns True if the buffer was stopped before the
                # batch could be queued
                if self.put(loader.patches.batch(indices)):
                    return
            self.put(self._DONE)
        except Exception as e:
            self.put(e)

    def stop(self):
        self._stop_event.set()
        self.q_out.queue.clear()

    def start(self):
        self._stop_event.clear()


class PatchLoader:
    """
    Iterates a :class:`~mcdenoise.loader.patches.PatchSet` in mini-batches of
    ``(stacks, noisy_center, clean_center)``.

    Each pass over the loader is one epoch. With ``shuffle`` every epoch draws
    a fresh permutation from a PCG64 generator seeded once at construction,
    so the sequence of epochs is reproducible. The last batch of an epoch may
    be short.

    With ``prefetch > 0`` batches are gathered by a background thread up to
    ``prefetch`` ahead of the consumer; batch order is the same as without it.
    """

    def __init__(self, patches, batch_size, shuffle=True, seed=0, prefetch=0):
        if len(patches) == 0:
            raise ValueError("cannot load batches from an empty patch set")
        if batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {batch_size}")
        self.patches = patches
        self.batch_size = int(batch_size)
        self.shuffle = shuffle
        self.prefetch = int(prefetch)
        self._rng = seeded_rng(seed)
        self._buff = BatchQueue(max(self.prefetch, 1))
        self._worker = None

    def __len__(self):
        return _num_steps(len(self.patches), self.batch_size)

    def epoch_order(self):
        """Sample order of the next epoch. Advances the generator when shuffling."""
        if self.shuffle:
            return self._rng.permutation(len(self.patches))
        return list(range(len(self.patches)))

    def _batch_indices(self, order):
        for start in range(0, len(order), self.batch_size):
            yield order[start : start + self.batch_size]

    @property
    def _working(self):
        return self._worker is not None and self._worker.is_alive()

    def stop(self):
        if self._working:
            if not self._buff.stopped:
                self._buff.stop()
            self._worker.join()
            self._buff.q_out.queue.clear()
        self._worker = None

    def __iter__(self):
        self.stop()
        order = self.epoch_order()
        if self.prefetch <= 0:
            return (self.patches.batch(indices) for indices in self._batch_indices(order))
        return self._prefetched(order)

    def _prefetched(self, order):
        self._buff.start()
        self._worker = threading.Thread(target=self._buff.load_batches, args=(self, order))
        self._worker.daemon = True
        self._worker.start()
        try:
            while True:
                packet = self._buff.get()
                if packet is BatchQueue._DONE:
                    break
                if isinstance(packet, Exception):
                    raise packet
                yield packet
        finally:
            self.stop()
