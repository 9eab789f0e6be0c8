'''
Capacity-bounded replay memory. When full, an insert first evicts one
random item of the most represented class.
'''

import bisect
import struct
import numpy as np
from typing import Dict, List, Optional
from .errors import BufferCapacityError, FormatError


MAGIC = b'RBUF'
VERSION = 1
HEADER = struct.Struct('<4sIIIII')

VECTOR_PAYLOAD = 0
CODE_PAYLOAD = 1


class ReplayBuffer:
    '''
    Stores ``(payload, label)`` items in slots. ``payload`` is either a
    float32 vector or an unsigned integer PQ code, all of one shape.
    Per-class slot lists are kept sorted, so the state is fully
    determined by the slot contents.
    '''
    def __init__(self, capacity: int):
        '''
        Parameters
        ----------
        capacity:
            maximum number of stored items
        '''
        if capacity < 0:
            raise ValueError('capacity must be non-negative')
        self.capacity = int(capacity)
        self._payloads = []
        self._labels = []
        self._class_slots: Dict[int, List[int]] = {}

    def __len__(self):
        return len(self._labels)

    @property
    def class_counts(self) -> Dict[int, int]:
        return {cls: len(slots) for cls, slots in self._class_slots.items()
                if len(slots)}

    @property
    def labels(self) -> np.ndarray:
        return np.array(self._labels, dtype=np.int64)

    def _most_represented(self) -> List[int]:
        counts = self.class_counts
        top = max(counts.values())
        return sorted(cls for cls, cnt in counts.items() if cnt == top)

    def insert(self, payload, label: int,
               rng: np.random.Generator) -> Optional[int]:
        '''
        Add one item, evicting first if the buffer is full

        Parameters
        ----------
        payload:
            vector or code to store
        label:
            class id of the item
        rng:
            random generator of the owning learner

        Returns
        -------
        label of the evicted item or ``None``
        '''
        if self.capacity == 0:
            raise BufferCapacityError('insert into zero-capacity buffer')
        label = int(label)
        payload = np.array(payload)
        evicted = None
        if len(self) >= self.capacity:
            candidates = self._most_represented()
            evicted = candidates[rng.integers(len(candidates))]
            slots = self._class_slots[evicted]
            slot = slots.pop(int(rng.integers(len(slots))))
            self._payloads[slot] = payload
            self._labels[slot] = label
        else:
            slot = len(self._labels)
            self._payloads.append(payload)
            self._labels.append(label)
        bisect.insort(self._class_slots.setdefault(label, []), slot)
        assert len(self) <= self.capacity

        return evicted

    def sample(self, count: int, rng: np.random.Generator):
        '''
        ``min(count, len(self))`` items drawn uniformly without replacement

        Returns
        -------
        ``(payloads, labels)`` stacked arrays
        '''
        count = min(count, len(self))
        slots = rng.choice(len(self), size=count, replace=False) \
                if count else np.zeros(0, dtype=np.int64)
        payloads = np.stack([self._payloads[s] for s in slots]) if count \
                   else np.zeros((0,), dtype=np.float32)
        labels = np.array([self._labels[s] for s in slots], dtype=np.int64)

        return payloads, labels

    def payload_array(self) -> np.ndarray:
        return np.stack(self._payloads)

    def to_bytes(self) -> bytes:
        '''
        Binary blob: 24-byte header then ``[u32 label][payload]`` per slot
        '''
        if not len(self):
            return HEADER.pack(MAGIC, VERSION, self.capacity, 0,
                               VECTOR_PAYLOAD, 0)

        payloads = self.payload_array()
        if np.issubdtype(payloads.dtype, np.floating):
            kind = VECTOR_PAYLOAD
            payloads = payloads.astype('<f4')
        else:
            kind = CODE_PAYLOAD
            payloads = payloads.astype(payloads.dtype.newbyteorder('<'))
        payloads = np.ascontiguousarray(payloads.reshape(len(self), -1))
        width = payloads[0].nbytes

        header = HEADER.pack(MAGIC, VERSION, self.capacity, len(self),
                             kind, width)
        records = np.empty(len(self), dtype=[
                    ('label', '<u4'),
                    ('payload', 'u1', (width,))])
        records['label'] = self._labels
        records['payload'] = payloads.view('u1').reshape(len(self), width)

        return header + records.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, payload_dtype=None,
                   payload_shape=None) -> 'ReplayBuffer':
        '''
        Inverse of :meth:`to_bytes`

        Parameters
        ----------
        data:
            serialized buffer
        payload_dtype:
            dtype of code payloads (default ``uint8``);
            vector payloads are always float32
        payload_shape:
            shape of one payload (default: flat)
        '''
        if len(data) < HEADER.size:
            raise FormatError('truncated header', len(data))
        magic, version, capacity, count, kind, width = \
            HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise FormatError('bad magic {!r}'.format(magic), 0)
        if version != VERSION:
            raise FormatError('version mismatch: {}'.format(version), 4)
        record = np.dtype([('label', '<u4'), ('payload', 'u1', (width,))])
        expected = HEADER.size + count * record.itemsize
        if len(data) != expected:
            raise FormatError('size mismatch', min(len(data), expected))

        buf = cls(capacity)
        if count == 0:
            return buf

        records = np.frombuffer(data, dtype=record, count=count,
                                offset=HEADER.size)
        if kind == VECTOR_PAYLOAD:
            dtype = np.dtype('<f4')
        else:
            dtype = np.dtype(payload_dtype or np.uint8).newbyteorder('<')
        payloads = np.ascontiguousarray(records['payload']) \
                     .view(dtype).reshape(count, -1)
        if payload_shape is not None:
            payloads = payloads.reshape((count,) + tuple(payload_shape))

        for slot in range(count):
            label = int(records['label'][slot])
            buf._payloads.append(payloads[slot].astype(dtype.newbyteorder('=')))
            buf._labels.append(label)
            buf._class_slots.setdefault(label, []).append(slot)

        return buf
