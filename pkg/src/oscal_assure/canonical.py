"""Canonical JSON encoding, timestamp formatting, and name-based uuids.

Canonical form: UTF-8, LF line endings, 2-space indentation, keys in the
order the document builders insert them, floats in shortest-repr form,
trailing newline. Two serializations of the same document are byte-equal.
"""

from __future__ import annotations

import hashlib
import json
import uuid as uuid_module
from datetime import datetime, timezone
from typing import Callable

Clock = Callable[[], datetime]

#: Fixed instant used by deterministic serialization when no clock is injected.
DETERMINISTIC_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def canonical_json_bytes(payload: dict | list) -> bytes:
    """Encode a document payload in canonical form."""
    text = json.dumps(payload, indent=2, ensure_ascii=False, allow_nan=False)
    return (text + "\n").encode("utf-8")


def format_timestamp(moment: datetime) -> str:
    """ISO 8601 with millisecond precision and a literal Z suffix."""
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    moment = moment.astimezone(timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%S.") + f"{moment.microsecond // 1000:03d}Z"


def parse_timestamp(text: str) -> datetime:
    """Parse ISO 8601, tolerating a Z suffix on Python 3.10."""
    normalized = text.strip()
    if normalized.endswith(("Z", "z")):
        normalized = normalized[:-1] + "+00:00"
    moment = datetime.fromisoformat(normalized)
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc)


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def namespace_uuid(seed_namespace: str | None) -> uuid_module.UUID:
    """Derive a uuid namespace from a caller seed via SHA-256."""
    digest = hashlib.sha256((seed_namespace or "oscal-assure").encode("utf-8")).digest()
    return uuid_module.UUID(bytes=digest[:16])


def name_uuid(seed_namespace: str | None, content_path: str) -> str:
    """Name-based uuid for one content path under a seed namespace."""
    return str(uuid_module.uuid5(namespace_uuid(seed_namespace), content_path))


def random_uuid() -> str:
    return str(uuid_module.uuid4())


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
