"""Session fixtures: a small three-clip corpus and a dummy weight file.

Helper builders live in framefix.py; test modules import that name
directly so nothing here needs importing by name.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import pytest

from framefix import build_corpus


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory) -> Path:
    return build_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def weights_file(tmp_path_factory) -> tuple[Path, str]:
    path = tmp_path_factory.mktemp("weights") / "pose_weights.bin"
    payload = b"deterministic stand-in weight payload\n"
    path.write_bytes(payload)
    return path, hashlib.sha256(payload).hexdigest()
