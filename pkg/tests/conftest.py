import pytest

from instances import hospital_params, hospitals


@pytest.fixture
def hospital_owners():
    return hospitals()


@pytest.fixture(scope="session")
def hosp_params():
    return hospital_params()
