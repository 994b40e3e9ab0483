import logging
import os
import sys

import pytest

# Repository root on sys.path so `core` and `cli` import without installing
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


@pytest.fixture(autouse=True)
def isolate_cwd(tmp_path, monkeypatch):
    """Run each test in an isolated temporary cwd so output files don't leak."""
    monkeypatch.chdir(tmp_path)
    yield


@pytest.fixture(autouse=True)
def reset_logging():
    """Drop handlers bound to a captured stream once the test is over."""
    yield
    root = logging.getLogger("statbench")
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
