import os
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from autodiff.rng import Rng  # noqa: E402
from autodiff.tensor import default_dtype  # noqa: E402


@pytest.fixture
def rng():
    return Rng(1234).generator('tests')


@pytest.fixture
def corpus_file(tmp_path):
    """Byte corpus large enough for the smoke preset"""
    generator = Rng(7).generator('corpus')
    words = [b'the', b'rotary', b'complex', b'tied', b'head', b'query', b'key', b'value']
    text = b' '.join(words[i] for i in generator.integers(0, len(words), size=4000))
    path = tmp_path / 'corpus.txt'
    path.write_bytes(text)
    return str(path)


@pytest.fixture
def float64():
    with default_dtype(np.float64):
        yield
