import pytest

from projeq import build_levi_civita_family
from projeq.charts import sample_points


@pytest.fixture(scope="session")
def family3():
    return build_levi_civita_family(3)


@pytest.fixture(scope="session")
def family3_points(family3):
    return sample_points(family3.chart, 100, seed=0)
