import math

import pytest
from hypothesis import HealthCheck, settings

from transeg.fixtures import rnnt_single_label, strict_two_label

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def nl(p):
    """Score of probability ``p``."""
    return -math.log(p) if p > 0 else math.inf


@pytest.fixture
def m0():
    return rnnt_single_label()


@pytest.fixture
def m1():
    return strict_two_label()
