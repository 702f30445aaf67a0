import random

import pytest

from tracer_token.crypto import SubnetworkSalt


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def covid():
    return SubnetworkSalt("COVID-19", b"")


@pytest.fixture
def flu():
    return SubnetworkSalt.for_label("influenza")
