import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lucid.data_pipeline import CATEGORICAL, NUMERIC, FeatureSchema, FeatureSpec  # noqa: E402
from lucid.nn_core import MlpModel, init_model  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"


@pytest.fixture(scope="session")
def tiny_schema():
    return FeatureSchema(
        (
            FeatureSpec("age", NUMERIC, min=0.0, max=100.0),
            FeatureSpec("color", CATEGORICAL, categories=("a", "b", "c"), protected=True),
            FeatureSpec("hours", NUMERIC, min=10.0, max=50.0),
            FeatureSpec("sex", CATEGORICAL, categories=("F", "M"), protected=True),
        ),
        target="y",
        positive_label="1",
    )


def random_model(rng, dims, scale=1.0) -> MlpModel:
    ws = tuple(rng.normal(scale=scale, size=(o, i)) for i, o in zip(dims[:-1], dims[1:]))
    bs = tuple(rng.normal(scale=scale, size=o) for o in dims[1:])
    return MlpModel(tuple(dims), ws, bs)


def zero_model(dims) -> MlpModel:
    return MlpModel(tuple(dims), tuple(np.zeros((o, i)) for i, o in zip(dims[:-1], dims[1:])),
                    tuple(np.zeros(o) for o in dims[1:]))


@pytest.fixture
def small_model(tiny_schema):
    return init_model((tiny_schema.encoded_dim, 8, 4, 2), seed=3)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
