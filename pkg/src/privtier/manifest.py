"""Per-file SHA-256 manifests for dataset trees: build, serialize, verify."""

from __future__ import annotations

import hashlib
import json
import os
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .validation import ValidationError

_CHUNK = 1 << 20


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while chunk := fh.read(_CHUNK):
            h.update(chunk)
    return h.hexdigest()


def _relative_key(root: Path, path: Path) -> str:
    # Forward slashes and NFC names keep digests comparable across platforms.
    rel = path.relative_to(root).as_posix()
    return unicodedata.normalize("NFC", rel)


def _walk_files(root: Path) -> Iterable[Path]:
    for dirpath, dirnames, filenames in os.walk(root, followlinks=False):
        dirnames.sort()
        for name in sorted(filenames):
            path = Path(dirpath) / name
            if path.is_symlink():
                raise ValidationError(f"refusing symlink in managed tree: {path}")
            yield path


@dataclass(frozen=True)
class Manifest:
    """Map of relative file path to 64-hex-char SHA-256 digest."""

    entries: dict[str, str]

    def to_json(self) -> bytes:
        return (json.dumps(dict(sorted(self.entries.items())), indent=2) + "\n").encode("utf-8")

    @classmethod
    def from_json(cls, document: bytes) -> "Manifest":
        data = json.loads(document.decode("utf-8"))
        if not isinstance(data, dict):
            raise ValidationError("manifest must be a JSON object")
        for path, digest in data.items():
            if not (isinstance(digest, str) and len(digest) == 64):
                raise ValidationError(f"manifest entry {path!r}: bad digest {digest!r}")
        return cls(entries=data)


def build_manifest(root: str | Path, exclude: Iterable[str] = ()) -> Manifest:
    """Hash every regular file under root (paths relative, forward slashes).

    ``exclude`` names relative paths to skip, e.g. the manifest file itself.
    """
    root = Path(root)
    if not root.is_dir():
        raise ValidationError(f"manifest root is not a directory: {root}")
    exclude = set(exclude)
    entries = {}
    for path in _walk_files(root):
        key = _relative_key(root, path)
        if key in exclude:
            continue
        try:
            entries[key] = sha256_file(path)
        except OSError as exc:
            raise ValidationError(f"unreadable file {path}: {exc}") from exc
    return Manifest(entries=entries)


@dataclass
class VerificationReport:
    matched: list[str] = field(default_factory=list)
    mismatched: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)
    extra: list[str] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.mismatched or self.missing or self.errors)

    def summary(self) -> str:
        return (
            f"{len(self.matched)} matched, {len(self.mismatched)} mismatched, "
            f"{len(self.missing)} missing, {len(self.extra)} extra, {len(self.errors)} errors"
        )


def verify_manifest(root: str | Path, manifest: Manifest, exclude: Iterable[str] = ()) -> VerificationReport:
    """Compare a directory tree against a manifest without aborting on I/O errors."""
    root = Path(root)
    report = VerificationReport()
    exclude = set(exclude)
    present: set[str] = set()
    for path in _walk_files(root):
        key = _relative_key(root, path)
        if key in exclude:
            continue
        present.add(key)
        expected = manifest.entries.get(key)
        if expected is None:
            report.extra.append(key)
            continue
        try:
            actual = sha256_file(path)
        except OSError as exc:
            report.errors.append((key, str(exc)))
            continue
        (report.matched if actual == expected else report.mismatched).append(key)
    report.missing.extend(sorted(set(manifest.entries) - present))
    for bucket in (report.matched, report.mismatched, report.extra):
        bucket.sort()
    return report
