"""On-disk snapshot store: one file per key plus an append-only fetch manifest."""

from __future__ import annotations

import json
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional
from urllib.parse import quote, unquote

MANIFEST = "manifest.jsonl"


def encode_key(key: str) -> str:
    return quote(str(key), safe="")


def decode_key(name: str) -> str:
    return unquote(name)


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class ManifestEntry:
    key: str
    status: str  # "ok" or "not_found"
    fetched_at: str


class SnapshotStore:
    """Files named ``<percent-encoded key><suffix>`` under ``directory``.

    The manifest records when each key was fetched and whether the remote
    had it; a "not_found" entry is a negative-cache tombstone.
    """

    def __init__(self, directory: str | os.PathLike, suffix: str):
        self.directory = Path(directory)
        self.suffix = suffix
        self._lock = threading.Lock()
        self._manifest: Optional[dict[str, ManifestEntry]] = None

    def path_for(self, key: str) -> Path:
        return self.directory / f"{encode_key(key)}{self.suffix}"

    def read(self, key: str) -> Optional[bytes]:
        path = self.path_for(key)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            return None

    def write(self, key: str, body: bytes, fetched_at: str, status: str = "ok") -> None:
        if status == "ok":
            atomic_write(self.path_for(key), body)
        self._append_manifest(ManifestEntry(str(key), status, fetched_at))

    def entry(self, key: str) -> Optional[ManifestEntry]:
        return self.manifest().get(str(key))

    def manifest(self) -> dict[str, ManifestEntry]:
        with self._lock:
            if self._manifest is None:
                self._manifest = self._load_manifest()
            return self._manifest

    def keys(self) -> Iterator[str]:
        if not self.directory.is_dir():
            return iter(())
        names = sorted(p.name for p in self.directory.iterdir() if p.name.endswith(self.suffix))
        return (decode_key(n[: -len(self.suffix)]) for n in names if not n.startswith(".tmp-"))

    def _load_manifest(self) -> dict[str, ManifestEntry]:
        entries: dict[str, ManifestEntry] = {}
        path = self.directory / MANIFEST
        if path.exists():
            for line in path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                entries[rec["key"]] = ManifestEntry(rec["key"], rec["status"], rec["fetched_at"])
        return entries

    def _append_manifest(self, entry: ManifestEntry) -> None:
        line = json.dumps({"key": entry.key, "status": entry.status, "fetched_at": entry.fetched_at}, sort_keys=True)
        with self._lock:
            self.directory.mkdir(parents=True, exist_ok=True)
            with open(self.directory / MANIFEST, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            if self._manifest is not None:
                self._manifest[entry.key] = entry
