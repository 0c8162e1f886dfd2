import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbnn.core import (
    Box,
    FixedCoeff,
    FreeField,
    InvalidArgumentError,
    LearnedRcnn,
    PressureRelease,
    Rayleigh,
    RcnnWeights,
    Waveguide,
    absorption_loss,
    angles_from_direction,
    direction_from_angles,
    environment_from_dict,
    reflection_from_dict,
    to_db,
)

finite = st.floats(-10.0, 10.0, allow_nan=False)


@pytest.mark.parametrize(
    "theta, psi, expected",
    [(0.0, math.pi / 2, (1, 0, 0)), (math.pi / 2, math.pi / 2, (0, 1, 0)), (1.234, 0.0, (0, 0, 1))],
)
def test_direction_axis_cases(theta, psi, expected):
    np.testing.assert_allclose(direction_from_angles(theta, psi), expected, atol=1e-15)


@given(finite, finite)
def test_direction_is_unit(theta, psi):
    assert abs(np.linalg.norm(direction_from_angles(theta, psi)) - 1.0) < 1e-12


def test_direction_rejects_non_finite():
    with pytest.raises(InvalidArgumentError):
        direction_from_angles(np.nan, 0.0)


@pytest.mark.parametrize(
    "u, expected",
    [((0, 0, 1), (0.0, 0.0)), ((1, 0, 0), (0.0, math.pi / 2)), ((0, -1, 0), (3 * math.pi / 2, math.pi / 2))],
)
def test_angles_examples(u, expected):
    assert angles_from_direction(u) == pytest.approx(expected, abs=1e-15)


def test_angles_rejects_non_unit():
    with pytest.raises(InvalidArgumentError):
        angles_from_direction((1.0, 1.0, 0.0))


@given(st.floats(0.0, 2 * math.pi - 1e-6), st.floats(1e-3, math.pi - 1e-3))
def test_angle_round_trip(theta, psi):
    u = direction_from_angles(theta, psi)
    np.testing.assert_allclose(direction_from_angles(*angles_from_direction(u)), u, atol=1e-9)


@pytest.mark.parametrize("a, db", [(1.0, 0.0), (10.0, 20.0), (0.5, -6.0206)])
def test_to_db_examples(a, db):
    assert to_db(a) == pytest.approx(db, abs=1e-4)


@pytest.mark.parametrize("a", [0.0, -1.0])
def test_to_db_domain(a):
    with pytest.raises(InvalidArgumentError):
        to_db(a)


@given(st.floats(1e-100, 1e100), st.floats(1e-100, 1e100))
def test_to_db_product_rule(a, b):
    assert to_db(a * b) == pytest.approx(to_db(a) + to_db(b), abs=1e-9)


def test_absorption_examples():
    assert absorption_loss(123.0, 0.0) == 1.0
    assert absorption_loss(0.0, 5.0) == 1.0
    assert absorption_loss(1000.0, 0.001) == pytest.approx(10 ** -0.05, rel=1e-12)
    with pytest.raises(InvalidArgumentError):
        absorption_loss(-1.0, 0.1)


@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0, 1.0), st.floats(0, 1.0))
def test_absorption_monotone(d1, d2, a1, a2):
    lo_d, hi_d = sorted((d1, d2))
    lo_a, hi_a = sorted((a1, a2))
    assert absorption_loss(hi_d, lo_a) <= absorption_loss(lo_d, lo_a)
    assert absorption_loss(lo_d, hi_a) <= absorption_loss(lo_d, lo_a)


@pytest.mark.parametrize(
    "factory",
    [
        lambda: Rayleigh(0.0, 1.0),
        lambda: Rayleigh(1.0, -1.0),
        lambda: Rayleigh(1.0, 1.0, -0.1),
        lambda: FixedCoeff(complex(np.inf, 0)),
        lambda: Waveguide(0.0),
        lambda: Waveguide(10.0, absorption=-1.0),
        lambda: Box((1.0, 0.0, 1.0)),
        lambda: Box((1.0, 1.0, 1.0), walls=(PressureRelease(),) * 5),
        lambda: FreeField(0.0),
        lambda: RcnnWeights(np.zeros(0), np.zeros(0), np.zeros((2, 0)), np.zeros(2)),
        lambda: RcnnWeights(np.zeros(3), np.zeros(3), np.zeros((2, 4)), np.zeros(2)),
    ],
)
def test_invalid_values_rejected(factory):
    with pytest.raises(InvalidArgumentError):
        factory()


@pytest.mark.parametrize(
    "model",
    [PressureRelease(), FixedCoeff(0.3 - 0.2j), Rayleigh(1.5, 0.9, 0.001), LearnedRcnn(RcnnWeights.random(4, 0))],
)
def test_reflection_dict_round_trip(model):
    back = reflection_from_dict(model.to_dict())
    gamma = np.linspace(0, math.pi / 2, 7)
    np.testing.assert_array_equal(back.coefficient(gamma), model.coefficient(gamma))


@pytest.mark.parametrize(
    "env",
    [
        FreeField(1480.0, 0.01),
        Waveguide(30.0, 1541.0, PressureRelease(), Rayleigh(1.5, 0.9, 0.001), 0.002),
        Box.tank((2.5, 1.2, 0.8), 1505.0, Rayleigh(1.5, 0.9)),
    ],
)
def test_environment_dict_round_trip(env):
    assert environment_from_dict(env.to_dict()).to_dict() == env.to_dict()


def test_unknown_types_rejected():
    with pytest.raises(InvalidArgumentError):
        reflection_from_dict({"type": "mirror"})
    with pytest.raises(InvalidArgumentError):
        environment_from_dict({"type": "lake"})


def test_rcnn_random_is_seeded():
    a, b = RcnnWeights.random(16, 3), RcnnWeights.random(16, 3)
    np.testing.assert_array_equal(a.w2, b.w2)
    assert np.all(np.abs(a.w1) <= 0.5)
    assert np.all(np.abs(a.w2) <= 0.5 / 4)
