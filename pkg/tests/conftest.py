from pathlib import Path

import pytest

from ivpolytope import Dims, enumerate_full, filter_nonredundant, load_csv, load_json

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def minneapolis():
    return load_csv(FIXTURES / "minneapolis.csv")


@pytest.fixture(scope="session")
def violating_two_arm():
    return load_json(FIXTURES / "violating_two_arm.json")


@pytest.fixture(scope="session")
def compatible_two_arm():
    return load_json(FIXTURES / "compatible_two_arm.json")


@pytest.fixture(scope="session")
def system_cache():
    cache = {}

    def get(dims: Dims, full: bool = False):
        key = (dims, full)
        if key not in cache:
            sys_full = enumerate_full(dims)
            cache[(dims, True)] = sys_full
            cache[(dims, False)] = filter_nonredundant(sys_full)
        return cache[key]

    return get
