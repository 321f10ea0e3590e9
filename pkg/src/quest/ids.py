"""Opaque identifiers used across the platform."""

from __future__ import annotations

import re
import secrets

UID_PATTERN = re.compile(r"^[0-9a-f]{16}$")


def new_uid() -> str:
    """Return a fresh 16-hex-char identifier from a cryptographic source."""
    return secrets.token_hex(8)


def is_uid(value: object) -> bool:
    return isinstance(value, str) and bool(UID_PATTERN.match(value))
