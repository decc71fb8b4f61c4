import pytest

from faasbench.config import default_settings


@pytest.fixture(scope="session")
def settings():
    return default_settings()
