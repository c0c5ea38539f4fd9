"""Session fixtures; shared builders live in corpusfix.py."""

from __future__ import annotations

import pytest

from privtier import ClipRecord, KeyMaterial

from corpusfix import FIXTURE_CLIPS, KEY_HEX, fixture_record


@pytest.fixture(scope="session")
def fixture_records() -> list[ClipRecord]:
    return [fixture_record(spec) for spec in FIXTURE_CLIPS]


@pytest.fixture(scope="session")
def fixture_key() -> KeyMaterial:
    return KeyMaterial.from_hex(KEY_HEX)
