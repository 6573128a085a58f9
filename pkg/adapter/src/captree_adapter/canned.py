"""Canned response store: request hash -> response JSON on disk."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def request_key(kind: str, payload: dict) -> str:
    canonical = json.dumps({"kind": kind, "payload": payload}, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class CannedStore:
    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, kind: str, payload: dict) -> dict | None:
        path = self._path(request_key(kind, payload))
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)["response"]

    def put(self, kind: str, payload: dict, response: dict) -> None:
        key = request_key(kind, payload)
        tmp = self._path(key).with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(
                {"kind": kind, "payload": payload, "response": response},
                fh,
                sort_keys=True,
                ensure_ascii=False,
            )
        tmp.replace(self._path(key))

    def __len__(self) -> int:
        return sum(1 for _ in self.directory.glob("*.json"))
