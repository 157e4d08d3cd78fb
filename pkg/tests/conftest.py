from __future__ import annotations

import sys
from pathlib import Path

import pytest

HERE = Path(__file__).resolve().parent
FIXTURES = HERE / "fixtures"
CORPUS = FIXTURES / "corpus"
DETECTORS = FIXTURES / "detectors"
TRANSCRIPTS = FIXTURES / "transcripts"
GOLDEN = FIXTURES / "golden"

sys.path.insert(0, str(HERE))


@pytest.fixture(scope="session")
def kb():
    from libscan.kb import load_kb

    return load_kb()


@pytest.fixture(scope="session")
def analyzer(kb):
    from libscan.rules import StaticAnalyzer

    return StaticAnalyzer(kb)


def read(path: Path) -> str:
    return path.read_text("utf-8")
