import math
import random

import pytest
from hypothesis import given, strategies as st

from skymesh.model import Position, ProtocolConfig, euclidean_distance

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
positions = st.builds(Position, finite, finite, finite)


def norm_oracle(a, b):
    # Independent of math.dist on purpose.
    return ((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2) ** 0.5


def test_distance_identity():
    assert euclidean_distance(Position(0, 0, 0), Position(0, 0, 0)) == 0.0


def test_distance_3_4_5():
    assert euclidean_distance(Position(0, 0, 0), Position(3, 4, 0)) == 5.0


def test_distance_matches_norm_oracle():
    rng = random.Random(20260809)
    for _ in range(100):
        a = Position(*(rng.uniform(-1e4, 1e4) for _ in range(3)))
        b = Position(*(rng.uniform(-1e4, 1e4) for _ in range(3)))
        assert euclidean_distance(a, b) == pytest.approx(norm_oracle(a, b), rel=1e-12)


@given(positions, positions)
def test_distance_symmetry(a, b):
    assert euclidean_distance(a, b) == euclidean_distance(b, a)


@given(positions, positions, positions)
def test_triangle_inequality(a, b, c):
    assert euclidean_distance(a, c) <= (
        euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-9
    )


def test_config_defaults_are_valid():
    config = ProtocolConfig()
    assert config.hello_interval_ms == 500
    assert config.link_hold_ms == 1500


@pytest.mark.parametrize(
    "kwargs,field",
    [
        ({"alpha": -0.1}, "alpha"),
        ({"alpha": 1.5}, "alpha"),
        ({"gamma": 2.0}, "gamma"),
        ({"beta": -0.2}, "beta"),
        ({"hello_interval": 0.0}, "hello_interval"),
        ({"tc_interval": -1.0}, "tc_interval"),
        ({"link_hold_time": 0.1}, "link_hold_time"),
        ({"metric_kind": "hop_count"}, "metric_kind"),
    ],
)
def test_config_rejects_bad_values(kwargs, field):
    with pytest.raises(ValueError, match=field):
        ProtocolConfig(**kwargs)


def test_position_is_finite():
    assert Position(1.0, 2.0, 3.0).is_finite()
    assert not Position(math.nan, 0.0, 0.0).is_finite()
    assert not Position(0.0, math.inf, 0.0).is_finite()
