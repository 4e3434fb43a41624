import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles module

from covrepair.datagen import face_dataset, face_schema
from covrepair.patterns import InvertedIndex


@pytest.fixture(scope="session")
def faces():
    """The demographic face-catalog fixture (756 tuples, 2 attributes)."""
    return face_dataset(seed=7)


@pytest.fixture(scope="session")
def faces_index(faces):
    return InvertedIndex.from_dataset(faces)


@pytest.fixture(scope="session")
def faces_schema():
    return face_schema()
