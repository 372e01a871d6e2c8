"""
ISALT – Random Streams
Counter-based (Philox) generators keyed by (seed, purpose, index...).
Every trajectory owns its streams, so results never depend on how work is
split across threads.
"""

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

import config as cfg

T = TypeVar("T")

# Purposes (first element of every spawn key)
LONG = 0
INITIALS = 1
DATA = 2
SIM = 3
DERIVE = 4

XI = 0
ETA = 1


def stream(seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed: int, *key: int) -> int:
    """A new 64-bit seed, e.g. one independent seed per gap."""
    seq = np.random.SeedSequence(int(seed), spawn_key=(DERIVE,) + tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def label_key(label: str) -> int:
    """Stable integer for a text label (used in spawn keys)."""
    return zlib.crc32(label.encode("utf-8"))


class NormalStream:
    """Chunked standard-normal draws from one stream, in step order."""

    def __init__(self, gen: np.random.Generator, width: int, chunk: int):
        self.gen = gen
        self.width = width
        self.chunk = max(1, chunk)
        self._buf = np.empty((0, width))
        self._pos = 0

    def take(self, count: int) -> np.ndarray:
        out = np.empty((count, self.width))
        filled = 0
        while filled < count:
            if self._pos >= len(self._buf):
                self._buf = self.gen.standard_normal((self.chunk, self.width))
                self._pos = 0
            n = min(count - filled, len(self._buf) - self._pos)
            out[filled:filled + n] = self._buf[self._pos:self._pos + n]
            self._pos += n
            filled += n
        return out


# ── work splitting ──────────────────────────────────────

def split_blocks(count: int, parts: int) -> list[range]:
    """Contiguous index blocks covering range(count), at most `parts` of them."""
    parts = max(1, min(parts, count))
    if count <= 0:
        return []
    size, extra = divmod(count, parts)
    blocks, start = [], 0
    for i in range(parts):
        stop = start + size + (1 if i < extra else 0)
        blocks.append(range(start, stop))
        start = stop
    return blocks


def map_blocks(fn: Callable[[range], T], count: int, workers: int | None = None) -> list[T]:
    """Run fn over contiguous blocks on a thread pool; results in block order."""
    workers = workers or cfg.worker_count()
    blocks = split_blocks(count, workers)
    if len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
        return list(pool.map(fn, blocks))
