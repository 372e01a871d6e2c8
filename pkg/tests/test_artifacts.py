"""Atomic output, JSON/CSV helpers and the checksum manifest."""

import pytest

from artifacts import Manifest, atomic_write_text, read_csv, read_json, sha256_file, write_csv, write_json
from errors import MissingArtifact


class TestFiles:
    def test_atomic_write_creates_parents(self, tmp_path):
        target = tmp_path / "a" / "b" / "note.txt"
        atomic_write_text(target, "hello")
        assert target.read_text() == "hello"
        assert [p.name for p in target.parent.iterdir()] == ["note.txt"]

    def test_json_roundtrip(self, tmp_path):
        write_json(tmp_path / "x.json", {"b": [1, 2], "a": 0.5})
        assert read_json(tmp_path / "x.json") == {"a": 0.5, "b": [1, 2]}

    def test_csv_keeps_full_precision(self, tmp_path):
        write_csv(tmp_path / "t.csv", ["name", "value"], [["x", 0.1 + 0.2], ["y", 3]])
        rows = read_csv(tmp_path / "t.csv")
        assert float(rows[0]["value"]) == 0.1 + 0.2
        assert rows[1] == {"name": "y", "value": "3"}

    def test_missing_reads(self, tmp_path):
        with pytest.raises(MissingArtifact):
            read_json(tmp_path / "none.json")
        with pytest.raises(MissingArtifact):
            read_csv(tmp_path / "none.csv")


class TestManifest:
    def test_record_and_require(self, tmp_path):
        atomic_write_text(tmp_path / "data" / "a.txt", "payload")
        manifest = Manifest(tmp_path)
        rel = manifest.record(tmp_path / "data" / "a.txt", "dataset")
        assert rel == "data/a.txt"
        assert manifest.require(rel) == tmp_path / "data" / "a.txt"
        assert manifest.entries[rel]["sha256"] == sha256_file(tmp_path / "data" / "a.txt")

    def test_persists_across_instances(self, tmp_path):
        atomic_write_text(tmp_path / "s.json", "{}")
        Manifest(tmp_path).record(tmp_path / "s.json", "scheme")
        assert Manifest(tmp_path).listed("scheme") == ["s.json"]
        assert Manifest(tmp_path).listed("dataset") == []

    def test_unlisted(self, tmp_path):
        with pytest.raises(MissingArtifact, match="not listed"):
            Manifest(tmp_path).require("data/ghost.isalt")

    def test_deleted_file(self, tmp_path):
        atomic_write_text(tmp_path / "a.txt", "x")
        manifest = Manifest(tmp_path)
        manifest.record(tmp_path / "a.txt", "dataset")
        (tmp_path / "a.txt").unlink()
        with pytest.raises(MissingArtifact, match="missing on disk"):
            manifest.require("a.txt")

    def test_tampered_file(self, tmp_path):
        atomic_write_text(tmp_path / "a.txt", "x")
        manifest = Manifest(tmp_path)
        manifest.record(tmp_path / "a.txt", "dataset")
        atomic_write_text(tmp_path / "a.txt", "y")
        with pytest.raises(MissingArtifact, match="checksum"):
            manifest.require("a.txt")
