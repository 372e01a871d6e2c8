"""
ISALT – Artifacts
JSON/CSV persistence, atomic file output and the run manifest with SHA-256
checksums.
"""

import csv
import hashlib
import io
import json
import logging
import os
import tempfile
import threading
from pathlib import Path

import config as cfg
from errors import MissingArtifact

log = logging.getLogger(__name__)


# ── atomic writes ───────────────────────────────────────

def atomic_write_bytes(path, data: bytes):
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"{path} not found")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(path, header: list[str], rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"{path} not found")
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ── manifest ────────────────────────────────────────────

class Manifest:
    """Checksums of every artifact a run has produced, keyed by relative path."""

    def __init__(self, root):
        self.root = Path(root)
        self.file_path = self.root / cfg.MANIFEST_FILE
        self._lock = threading.Lock()
        self.entries: dict[str, dict] = self._load()

    def record(self, path, kind: str) -> str:
        path = Path(path)
        rel = path.relative_to(self.root).as_posix()
        digest = sha256_file(path)
        with self._lock:
            self.entries[rel] = {"sha256": digest, "kind": kind}
            self._save()
        log.debug("manifest: %s %s", rel, digest[:12])
        return rel

    def require(self, rel: str) -> Path:
        """Path of a listed artifact whose bytes still match its checksum."""
        entry = self.entries.get(rel)
        path = self.root / rel
        if entry is None:
            raise MissingArtifact(f"{rel} is not listed in {self.file_path}")
        if not path.exists():
            raise MissingArtifact(f"{rel} is listed but missing on disk")
        if sha256_file(path) != entry["sha256"]:
            raise MissingArtifact(f"{rel} does not match its recorded checksum")
        return path

    def listed(self, kind: str | None = None) -> list[str]:
        return sorted(k for k, v in self.entries.items() if kind is None or v["kind"] == kind)

    def _load(self) -> dict:
        if not self.file_path.exists():
            return {}
        data = read_json(self.file_path)
        return dict(data.get("artifacts", {}))

    def _save(self):
        write_json(self.file_path, {"version": cfg.VERSION, "artifacts": self.entries})
