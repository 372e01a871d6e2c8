"""
ISALT – Dataset Files
Little-endian binary trajectory files with a JSON sidecar:
magic, header (version, d, m, M, N, dt, gap, seed, name), X payload, dB payload.
"""

import struct
from pathlib import Path

import numpy as np

import config as cfg
from artifacts import atomic_write_bytes, write_json
from datagen import TrajectoryDataset
from errors import DatasetFormatError, MissingArtifact

_HEADER = struct.Struct("<IIIQQdQQI")


def encode_dataset(ds: TrajectoryDataset) -> bytes:
    name = ds.system_name.encode("utf-8")
    header = _HEADER.pack(cfg.DATASET_VERSION, ds.d, ds.m, ds.M, ds.N, ds.dt, ds.gap, ds.seed, len(name))
    return b"".join([
        cfg.DATASET_MAGIC, header, name,
        np.ascontiguousarray(ds.X, dtype="<f8").tobytes(),
        np.ascontiguousarray(ds.dB, dtype="<f8").tobytes(),
    ])


def decode_dataset(raw: bytes, source: str = "<bytes>") -> TrajectoryDataset:
    magic = cfg.DATASET_MAGIC
    if raw[:len(magic)] != magic:
        raise DatasetFormatError(f"{source}: not an ISALT dataset (bad magic)")
    pos = len(magic)
    if len(raw) < pos + _HEADER.size:
        raise DatasetFormatError(f"{source}: truncated header")
    version, d, m, M, N, dt, gap, seed, name_len = _HEADER.unpack_from(raw, pos)
    if version != cfg.DATASET_VERSION:
        raise DatasetFormatError(f"{source}: unsupported format version {version}")
    pos += _HEADER.size
    name = raw[pos:pos + name_len]
    if len(name) != name_len:
        raise DatasetFormatError(f"{source}: truncated system name")
    pos += name_len
    try:
        system_name = name.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DatasetFormatError(f"{source}: system name is not valid UTF-8") from exc

    nx = M * (N + 1) * d
    nb = M * N * m
    expected = pos + 8 * (nx + nb)
    if len(raw) != expected:
        kind = "truncated" if len(raw) < expected else "has trailing bytes"
        raise DatasetFormatError(f"{source}: payload {kind} ({len(raw)} bytes, header implies {expected})")
    X = np.frombuffer(raw, dtype="<f8", count=nx, offset=pos).reshape(M, N + 1, d)
    dB = np.frombuffer(raw, dtype="<f8", count=nb, offset=pos + 8 * nx).reshape(M, N, m)
    return TrajectoryDataset(
        X=X.astype(float), dB=dB.astype(float), delta=gap * dt, dt=dt, gap=gap,
        system_name=system_name, seed=seed,
    )


def sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(cfg.SIDECAR_SUFFIX)


def write_dataset(ds: TrajectoryDataset, path) -> Path:
    """Write the binary file and its sidecar; returns the binary path."""
    path = Path(path)
    atomic_write_bytes(path, encode_dataset(ds))
    write_json(sidecar_path(path), {
        "format": cfg.DATASET_MAGIC.rstrip(b"\0").decode(),
        "version": cfg.DATASET_VERSION,
        "system": ds.system_name,
        "d": ds.d, "m": ds.m, "M": ds.M, "N": ds.N,
        "dt": ds.dt, "gap": ds.gap, "delta": ds.delta, "seed": ds.seed,
    })
    return path


def read_dataset(path) -> TrajectoryDataset:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"dataset {path} not found")
    return decode_dataset(path.read_bytes(), str(path))
