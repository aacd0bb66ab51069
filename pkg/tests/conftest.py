import pytest

from bihamkit import catalog


@pytest.fixture(scope="session")
def kdv_entry():
    return catalog.get_entry("kdv")


@pytest.fixture(scope="session")
def ch_entry():
    return catalog.get_entry("ch")
