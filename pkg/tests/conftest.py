import functools
import random

import pytest
from hypothesis import HealthCheck, settings, strategies as st

from digitflux.corpus import load_transducer, random_transducer

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def fixture(name):
    return load_transducer(name)


@pytest.fixture
def paperfolding():
    return fixture("paperfolding")


@st.composite
def transducers(draw, d=1, max_states=4, q_values=(2, 3, 4), rational=True):
    """Random complete transducers built from a drawn seed."""
    seed = draw(st.integers(0, 2**32 - 1))
    q = draw(st.sampled_from(q_values))
    states = draw(st.integers(1, max_states))
    return random_transducer(random.Random(seed), q=q, d=d, states=states, rational=rational)
