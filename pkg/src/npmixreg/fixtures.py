"""Real-data fixtures: schemas and loaders.

The data files are not bundled. :func:`fixture_path` looks in the directory
named by ``NPMIXREG_DATA_DIR`` and then in the package ``data`` directory;
``data/README.md`` documents provenance and the expected columns.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .io import DataError, load_dataset
from .model import Dataset, Design

ENV_VAR = "NPMIXREG_DATA_DIR"
PACKAGE_DATA = Path(__file__).resolve().parent / "data"


class FixtureMissing(DataError):
    pass


@dataclass(frozen=True)
class Fixture:
    name: str
    filename: str
    x_col: str
    y_col: str
    n: int
    description: str


FIXTURES = {
    "tonedata": Fixture(
        "tonedata", "tonedata.csv", "stretchratio", "tuned", 150,
        "music tone perception: overtone stretching ratio vs tuned ratio",
    ),
    "co2gdp": Fixture(
        "co2gdp", "co2_gdp.csv", "gdp", "co2", 159,
        "per-capita GDP (10,000 USD) vs per-capita CO2 emissions (10 tons)",
    ),
}


def fixture_path(name: str) -> Path:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}")
    fname = FIXTURES[name].filename
    dirs = [Path(os.environ[ENV_VAR])] if os.environ.get(ENV_VAR) else []
    dirs.append(PACKAGE_DATA)
    for d in dirs:
        if (d / fname).is_file():
            return d / fname
    raise FixtureMissing(
        f"fixture file {fname!r} not found in {[str(d) for d in dirs]}; "
        f"see {PACKAGE_DATA / 'README.md'} for its source and schema"
    )


def load_fixture(name: str) -> Dataset:
    """Load a fixture with an intercept column; checks the row count."""
    path = fixture_path(name)
    fx = FIXTURES[name]
    data = load_dataset(str(path), [fx.x_col], fx.y_col, intercept=True, design=Design.FIXED)
    if data.n != fx.n:
        raise DataError(f"{path}: expected {fx.n} rows for {name}, found {data.n}")
    return data
