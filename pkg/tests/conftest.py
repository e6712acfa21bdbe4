from __future__ import annotations

import pytest

from memgate.bench.generate import GeneratorConfig, generate_artifacts, load_dataset


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    return generate_artifacts(GeneratorConfig(), tmp_path_factory.mktemp("data"))


@pytest.fixture(scope="session")
def dataset(data_dir):
    return load_dataset(data_dir)


@pytest.fixture(scope="session")
def bank(dataset):
    return dataset.bank
