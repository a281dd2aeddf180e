"""
Stable fingerprints for plans and artifacts
"""

import hashlib
import json
from typing import Any


def canonical_json(payload: Any) -> str:
    """Serialize with sorted keys and fixed float repr so hashes are stable"""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def fingerprint(payload: Any, length: int = 16) -> str:
    """Short SHA-256 hex digest of a JSON-serializable payload"""
    digest = hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
    return digest[:length]
