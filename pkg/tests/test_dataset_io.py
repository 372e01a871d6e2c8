"""Binary dataset files and their sidecars."""

import json
import struct

import numpy as np
import pytest

import config as cfg
from datagen import TrajectoryDataset
from dataset_io import decode_dataset, encode_dataset, read_dataset, sidecar_path, write_dataset
from errors import DatasetFormatError, MissingArtifact


@pytest.fixture
def toy(rng):
    return TrajectoryDataset(X=rng.normal(size=(2, 6, 3)), dB=rng.normal(size=(2, 5, 2)),
                             delta=0.04, dt=0.002, gap=20, system_name="lorenz-3d", seed=77)


class TestRoundTrip:
    def test_file_roundtrip(self, toy, tmp_path):
        path = write_dataset(toy, tmp_path / "data" / "toy.isalt")
        back = read_dataset(path)
        np.testing.assert_array_equal(back.X, toy.X)
        np.testing.assert_array_equal(back.dB, toy.dB)
        assert (back.dt, back.gap, back.seed, back.system_name) == (0.002, 20, 77, "lorenz-3d")
        assert back.delta == pytest.approx(0.04)

    def test_no_increments(self, rng):
        ds = TrajectoryDataset(X=rng.normal(size=(1, 10, 1)), dB=np.zeros((1, 9, 0)), delta=1e-3,
                               dt=1e-3, gap=1, system_name="double-well-1d", seed=1)
        back = decode_dataset(encode_dataset(ds))
        assert back.m == 0
        np.testing.assert_array_equal(back.X, ds.X)

    def test_sidecar(self, toy, tmp_path):
        path = write_dataset(toy, tmp_path / "toy.isalt")
        meta = json.loads(sidecar_path(path).read_text())
        assert meta["system"] == "lorenz-3d"
        assert (meta["M"], meta["N"], meta["d"], meta["m"]) == (2, 5, 3, 2)
        assert meta["gap"] == 20

    def test_bytes_are_deterministic(self, toy):
        assert encode_dataset(toy) == encode_dataset(toy)


class TestCorruption:
    def test_bad_magic(self, toy):
        raw = b"NOTIT" + encode_dataset(toy)[5:]
        with pytest.raises(DatasetFormatError, match="magic"):
            decode_dataset(raw)

    def test_truncated_payload(self, toy):
        with pytest.raises(DatasetFormatError, match="truncated"):
            decode_dataset(encode_dataset(toy)[:-8])

    def test_truncated_header(self):
        with pytest.raises(DatasetFormatError, match="header"):
            decode_dataset(cfg.DATASET_MAGIC + b"\x01\x00")

    def test_trailing_bytes(self, toy):
        with pytest.raises(DatasetFormatError, match="trailing"):
            decode_dataset(encode_dataset(toy) + b"\x00")

    def test_unknown_version(self, toy):
        raw = bytearray(encode_dataset(toy))
        struct.pack_into("<I", raw, len(cfg.DATASET_MAGIC), 99)
        with pytest.raises(DatasetFormatError, match="version"):
            decode_dataset(bytes(raw))

    def test_name_not_utf8(self, toy):
        raw = bytearray(encode_dataset(toy))
        raw[len(cfg.DATASET_MAGIC) + struct.calcsize("<IIIQQdQQI")] = 0xFF
        with pytest.raises(DatasetFormatError, match="UTF-8"):
            decode_dataset(bytes(raw))

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifact):
            read_dataset(tmp_path / "nope.isalt")
