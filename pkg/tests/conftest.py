"""Shared fixtures"""

from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    """Directory of the golden test tables"""
    return DATA_DIR
