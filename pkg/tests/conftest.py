import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eodf.corpus import make_corpus  # noqa: E402


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """60 full-geometry street frames with labels; shared across tests."""
    root = tmp_path_factory.mktemp("corpus")
    make_corpus(root, frames=60)
    return root


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    """A handful of smaller frames for fast protocol/CLI tests."""
    root = tmp_path_factory.mktemp("small_corpus")
    make_corpus(root, frames=6, width=640, height=320)
    return root
