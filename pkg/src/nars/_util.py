"""Shared helpers: canonical JSON, stable hashing, seed derivation."""
from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> str:
    """Deterministic JSON text (sorted keys, no whitespace)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def short_id(text: str) -> str:
    """12-hex content id used for artifact names."""
    return sha256_hex(text)[:12]


def unit_hash(text: str) -> float:
    """Map a string to a double in [0, 1); platform-independent."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


def derive_seed(base: int, *tags: object) -> int:
    """Derive an independent 63-bit seed from a base seed and tags."""
    text = f"{base}|" + "|".join(str(t) for t in tags)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
