'''
Versioned little-endian container for learner state, used to hand a
learner from the init phase over to the streaming phase.

Layout
    | magic ``b'OCLS'``, u32 version
    | u32 length + kind name (utf-8)
    | u32 length + metadata JSON (utf-8, sorted keys)
    | u32 array count, then per array
    | ├── u32 length + name
    | ├── u32 length + dtype string (``'<f8'``, ``'|u1'``, ...)
    | ├── u32 ndim, ndim × u32 shape
    | └── raw bytes
'''

import json
import struct
import numpy as np
from typing import Dict, Tuple
from .errors import FormatError
from .utils import check_create_folder


MAGIC = b'OCLS'
VERSION = 1
_U32 = struct.Struct('<I')


def _pack_str(text: str) -> bytes:
    raw = text.encode('utf-8')
    return _U32.pack(len(raw)) + raw


def _little_endian(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == '>' or \
            (arr.dtype.byteorder == '=' and not np.little_endian):
        arr = arr.astype(arr.dtype.newbyteorder('<'))
    return arr


def snapshot_to_bytes(kind: str, meta: Dict,
                      arrays: Dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, _U32.pack(VERSION), _pack_str(kind),
             _pack_str(json.dumps(meta, sort_keys=True)),
             _U32.pack(len(arrays))]
    for name in sorted(arrays):
        arr = _little_endian(np.asarray(arrays[name]))
        parts.append(_pack_str(name))
        parts.append(_pack_str(arr.dtype.newbyteorder('<').str))
        parts.append(_U32.pack(arr.ndim))
        parts.append(struct.pack('<{}I'.format(arr.ndim), *arr.shape))
        parts.append(arr.tobytes())

    return b''.join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise FormatError('truncated snapshot', self.pos)
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode('utf-8')


def snapshot_from_bytes(data: bytes) -> Tuple[str, Dict, Dict]:
    reader = _Reader(data)
    if reader.take(4) != MAGIC:
        raise FormatError('bad magic', 0)
    version = reader.u32()
    if version != VERSION:
        raise FormatError('version mismatch: {}'.format(version), 4)
    kind = reader.text()
    meta = json.loads(reader.text())
    arrays = {}
    for _ in range(reader.u32()):
        name = reader.text()
        dtype = np.dtype(reader.text())
        ndim = reader.u32()
        shape = struct.unpack('<{}I'.format(ndim), reader.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        raw = reader.take(count * dtype.itemsize)
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape) \
                         .astype(dtype.newbyteorder('='))
    if reader.pos != len(data):
        raise FormatError('trailing bytes', reader.pos)

    return kind, meta, arrays


def save_snapshot(path: str, kind: str, meta: Dict,
                  arrays: Dict[str, np.ndarray]):
    '''
    Write a snapshot file

    Parameters
    ----------
    path:
        destination file
    kind:
        name of the stored object type, checked on load
    meta:
        JSON-serializable scalars and lists
    arrays:
        named numpy arrays
    '''
    check_create_folder(path)
    with open(path, 'wb') as f:
        f.write(snapshot_to_bytes(kind, meta, arrays))


def load_snapshot(path: str) -> Tuple[str, Dict, Dict]:
    with open(path, 'rb') as f:
        return snapshot_from_bytes(f.read())
