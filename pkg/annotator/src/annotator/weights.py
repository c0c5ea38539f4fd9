"""Model weight verification.

Inference must never start on an unverified weight file: a silent weight
swap would change every emitted annotation. Callers verify the digest
before constructing any backend.
"""

from __future__ import annotations

import hashlib
import re
from pathlib import Path

from .errors import WeightHashError

_HEX_RE = re.compile(r"^[0-9a-f]{64}$")
_CHUNK = 1 << 20


def sha256_file(path: Path) -> str:
    """Hex SHA-256 of a file, streamed in 1 MiB chunks."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        while chunk := fh.read(_CHUNK):
            digest.update(chunk)
    return digest.hexdigest()


def verify_weights(path: Path, expected_sha256: str) -> str:
    """Check a weight file against its pinned digest; return the digest.

    The expected value is case-insensitive 64-char hex. A mismatch raises
    WeightHashError carrying both digests; a malformed expectation raises
    ValueError before any file access.
    """
    expected = expected_sha256.strip().lower()
    if not _HEX_RE.match(expected):
        raise ValueError(
            f"expected digest must be 64 hex chars, got {expected_sha256!r}"
        )
    actual = sha256_file(Path(path))
    if actual != expected:
        raise WeightHashError(
            f"weight file {path} digest {actual} does not match pinned {expected}"
        )
    return actual
