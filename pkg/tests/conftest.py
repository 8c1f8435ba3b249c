from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from treetalk.dataset import Bin, CategorySpec, default_category_spec


@pytest.fixture(scope="session")
def chd_spec() -> CategorySpec:
    return default_category_spec()


@pytest.fixture()
def toy_spec() -> CategorySpec:
    """One binned, one categorical, one numeric feature."""
    return CategorySpec(
        features=("Score", "Color", "Age"),
        binned={
            "Score": (
                Bin("Low", 0.0, 5.0),
                Bin("Mid", 5.0, 8.0),
                Bin("High", 8.0, 10.0),
            )
        },
        categorical={"Color": ("Blue", "Red")},
        numeric={"Age": (0.0, 100.0)},
    )


@pytest.fixture()
def xy_spec() -> CategorySpec:
    """Three binary categorical features (X, Y, Z) for hand-built trees."""
    return CategorySpec(
        features=("X", "Y", "Z"),
        binned={},
        categorical={"X": ("x0", "x1"), "Y": ("y0", "y1"), "Z": ("z0", "z1")},
        numeric={},
    )
