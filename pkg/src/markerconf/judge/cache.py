"""Content-addressed, append-only store of raw judge replies.

Layout: ``<root>/<first two hex digits of key>.jsonl``; each line is
``{"key", "kind", "template_id", "judge_model", "raw"}``. The first write for a
key wins and later writes of the same key are ignored, so replies sampled at
temperature > 0 stay pinned.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Any


def cache_key(
    kind: str,
    template_id: str,
    rendered_prompt: str,
    decode: dict[str, Any],
    judge_model: str,
) -> str:
    payload = {
        "kind": kind,
        "template_id": template_id,
        "rendered_prompt": rendered_prompt,
        "decode": decode,
        "judge_model": judge_model,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class JudgeCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._shards: dict[str, dict[str, str]] = {}

    def _shard_path(self, prefix: str) -> Path:
        return self.root / f"{prefix}.jsonl"

    def _shard(self, prefix: str) -> dict[str, str]:
        shard = self._shards.get(prefix)
        if shard is None:
            shard = {}
            path = self._shard_path(prefix)
            if path.exists():
                with path.open("r", encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if not line:
                            continue
                        try:
                            entry = json.loads(line)
                        except json.JSONDecodeError:
                            continue  # torn write from an interrupted run
                        shard.setdefault(entry["key"], entry["raw"])
            self._shards[prefix] = shard
        return shard

    def get(self, key: str) -> str | None:
        with self._lock:
            return self._shard(key[:2]).get(key)

    def put(self, key: str, raw: str, **meta: str) -> bool:
        """Store ``raw`` under ``key``; returns False if the key already existed."""
        with self._lock:
            shard = self._shard(key[:2])
            if key in shard:
                return False
            shard[key] = raw
            line = json.dumps({"key": key, **meta, "raw": raw}, ensure_ascii=False, sort_keys=True)
            with self._shard_path(key[:2]).open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            return True

    def __len__(self) -> int:
        with self._lock:
            for path in self.root.glob("*.jsonl"):
                self._shard(path.stem)
            return sum(len(s) for s in self._shards.values())
