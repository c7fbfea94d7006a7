"""Checkpoint envelope shared by policy networks and bandit agents.

A checkpoint is a single JSON document tagged by ``kind`` (``policy`` or an
agent kind).  Floats round-trip exactly: Python serializes float64 with
shortest-repr, which JSON parsing inverts bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .bandits import AGENT_KINDS, agent_from_checkpoint_dict
from .policy import PolicyNetwork


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def checkpoint_id(payload: dict) -> str:
    """Short content hash identifying a checkpoint in report metadata."""
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:12]


def save_checkpoint(path: str | Path, payload: dict) -> None:
    Path(path).write_text(canonical_json(payload))


def load_checkpoint(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def load_router(path: str | Path):
    """Load either router kind from disk, dispatching on the envelope tag."""
    payload = load_checkpoint(path)
    kind = payload.get("kind")
    if kind == "policy":
        return PolicyNetwork.from_checkpoint_dict(payload)
    if kind in AGENT_KINDS:
        return agent_from_checkpoint_dict(payload)
    raise ValueError(f"unknown checkpoint kind {kind!r}")
