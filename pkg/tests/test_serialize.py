import numpy as np
import pytest

from asympatch.serialize import (MAGIC, CheckpointError, load_arrays,
                                 pack_arrays, save_arrays, unpack_arrays)


def sample_arrays():
    rng = np.random.default_rng(0)
    return {
        "a.weight": rng.normal(size=(3, 4)),
        "b.bias": rng.normal(size=7),
        "c.count": np.arange(5, dtype=np.int64),
    }


class TestRoundTrip:
    def test_bit_exact(self):
        arrays = sample_arrays()
        out, meta = unpack_arrays(pack_arrays(arrays, {"note": "x"}))
        assert meta == {"note": "x"}
        assert set(out) == set(arrays)
        for k in arrays:
            assert out[k].dtype == arrays[k].dtype
            assert np.array_equal(out[k], arrays[k])

    def test_save_load_save_identical_bytes(self, tmp_path):
        arrays = sample_arrays()
        p1 = tmp_path / "one.bin"
        p2 = tmp_path / "two.bin"
        save_arrays(p1, arrays, {"v": 1})
        loaded, meta = load_arrays(p1)
        save_arrays(p2, loaded, meta)
        assert p1.read_bytes() == p2.read_bytes()

    def test_insertion_order_irrelevant(self):
        arrays = sample_arrays()
        reordered = dict(reversed(list(arrays.items())))
        assert pack_arrays(arrays) == pack_arrays(reordered)


class TestCorruption:
    def test_bad_magic(self):
        with pytest.raises(CheckpointError, match="magic"):
            unpack_arrays(b"NOTHING HERE AT ALL")

    def test_unsupported_version(self):
        blob = bytearray(pack_arrays(sample_arrays()))
        blob[len(MAGIC)] = 99
        with pytest.raises(CheckpointError, match="version"):
            unpack_arrays(bytes(blob))

    def test_truncated_payload(self):
        blob = pack_arrays(sample_arrays())
        with pytest.raises(CheckpointError, match="truncated"):
            unpack_arrays(blob[:-10])

    def test_truncated_header(self):
        blob = pack_arrays(sample_arrays())
        with pytest.raises(CheckpointError):
            unpack_arrays(blob[:len(MAGIC) + 6])
