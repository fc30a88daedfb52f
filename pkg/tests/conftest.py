from pathlib import Path
from typing import Dict

import numpy as np
import pytest

from fairness_ssat.distribution import DatasetSchema, discretize, load_csv
from fairness_ssat.encoders import load_model_spec, model_thresholds
from fairness_ssat.synthetic import write_bundle


def pytest_addoption(parser):
    parser.addoption(
        "--oracle-cases",
        action="store",
        type=int,
        default=500,
        help="Random instances per brute-force oracle suite",
    )
    parser.addoption(
        "--property-seed",
        action="store",
        type=int,
        default=20231017,
        help="Seed for randomized property suites",
    )


@pytest.fixture
def oracle_cases(request) -> int:
    return request.config.getoption("--oracle-cases")


@pytest.fixture
def rng(request) -> np.random.Generator:
    return np.random.default_rng(request.config.getoption("--property-seed"))


@pytest.fixture(scope="session")
def health_bundle(tmp_path_factory) -> Dict[str, Path]:
    """The 10,000-row synthetic health-insurance bundle, written once per session."""
    return write_bundle(tmp_path_factory.mktemp("health"), rows=10_000, seed=0)


@pytest.fixture(scope="session")
def health_data(health_bundle):
    schema = DatasetSchema.load(health_bundle["schema"])
    spec = load_model_spec(health_bundle["model"])
    frame = load_csv(health_bundle["data"], schema)
    data, fmap = discretize(frame, schema, model_thresholds(spec), 4)
    return schema, spec, frame, data, fmap
