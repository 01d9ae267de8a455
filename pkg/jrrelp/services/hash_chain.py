"""Content hashes and hash chains for artifact integrity."""

import hashlib
import json
from typing import Any, Iterable, Optional


def canonical_json(obj: Any) -> str:
    """Serialize deterministically: sorted keys, compact separators, UTF-8 safe."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def compute_sha256(data: bytes) -> str:
    """Compute SHA-256 hash of data."""
    return hashlib.sha256(data).hexdigest()


def compute_content_hash(obj: Any) -> str:
    """Hash of the canonical JSON form of ``obj``."""
    return compute_sha256(canonical_json(obj).encode("utf-8"))


def compute_record_hash(record: dict, previous_hash: Optional[str] = None) -> str:
    """
    Hash a record chained with the previous hash.

    Args:
        record: Record as dictionary
        previous_hash: Previous hash in chain (or None for first record)

    Returns:
        Hex-encoded SHA-256 hash
    """
    record_json = canonical_json(record)
    if previous_hash:
        message = f"{previous_hash}:{record_json}"
    else:
        message = record_json
    return compute_sha256(message.encode("utf-8"))


def compute_chain_hash(records: Iterable[dict]) -> Optional[str]:
    """
    Compute the hash chain for an ordered sequence of records.

    Returns:
        Final hash in chain, or None if there are no records
    """
    current_hash = None
    for record in records:
        current_hash = compute_record_hash(record, current_hash)
    return current_hash
