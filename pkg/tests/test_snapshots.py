import pytest
import numpy as np
from ml_continual.errors import FormatError
from ml_continual.snapshots import snapshot_to_bytes, snapshot_from_bytes, \
                                   save_snapshot, load_snapshot, MAGIC


def _arrays():
    rng = np.random.default_rng(0)
    return {'weights': rng.normal(size=(3, 4)),
            'codes': rng.integers(0, 256, (5, 2)).astype(np.uint8),
            'counts': np.arange(4, dtype=np.int64),
            'empty': np.zeros((0, 7), dtype=np.float32),
            'scalar': np.array(2.5)}


class TestSnapshots:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / 'sub' / 'state.snap')
        meta = {'dim': 4, 'rate': 0.1, 'name': 'x', 'nested': {'a': [1, 2]}}
        save_snapshot(path, 'slda', meta, _arrays())
        kind, loaded_meta, arrays = load_snapshot(path)
        assert kind == 'slda'
        assert loaded_meta == meta
        for name, arr in _arrays().items():
            assert arrays[name].dtype == arr.dtype
            np.testing.assert_array_equal(arrays[name], arr)

    def test_stable_bytes(self):
        first = snapshot_to_bytes('k', {'b': 1, 'a': 2}, _arrays())
        second = snapshot_to_bytes('k', {'a': 2, 'b': 1}, _arrays())
        assert first == second
        assert first[:4] == MAGIC

    def test_big_endian_input(self):
        arr = np.arange(6, dtype='>f8').reshape(2, 3)
        data = snapshot_to_bytes('k', {}, {'arr': arr})
        assert data == snapshot_to_bytes('k', {}, {'arr': arr.astype('<f8')})
        _, _, arrays = snapshot_from_bytes(data)
        np.testing.assert_array_equal(arrays['arr'], arr)

    @pytest.mark.parametrize(
        ["mutate", "offset"],
        [(lambda d: b'XXXX' + d[4:], 0),
         (lambda d: d[:4] + b'\x02\x00\x00\x00' + d[8:], 4),
         (lambda d: d + b'\x00', None),
         (lambda d: d[:-3], None)]
    )
    def test_corrupt(self, mutate, offset):
        data = snapshot_to_bytes('kind', {'a': 1}, _arrays())
        with pytest.raises(FormatError) as exc:
            snapshot_from_bytes(mutate(data))
        if offset is not None:
            assert exc.value.offset == offset
