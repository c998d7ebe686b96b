import math
from fractions import Fraction

import numpy as np
import pytest

from rpecal import linalg2 as la
from rpecal.gates import (
    GateParams,
    choose_q_t,
    composite_axis_angle,
    composite_u,
    gate_power,
    signed_rotation_angle,
    wrap_angle,
    x_gate,
    z_gate,
)


def same_channel(u, v, tol):
    """Unitaries induce the same channel iff |tr(u^dag v)| = 2."""
    return abs(abs(np.trace(la.dagger(u) @ v)) - 2) <= tol


def decompose(u):
    """Rotation angle in [0, pi] and unit axis of a 2x2 unitary, up to global phase."""
    v = u / np.sqrt(np.linalg.det(u))
    c = 0.5 * np.trace(v).real
    s = np.array([(0.5j * np.trace(v @ p)).real for p in (la.PAULI_X, la.PAULI_Y, la.PAULI_Z)])
    if c < 0:
        c, s = -c, -s
    angle = 2 * math.atan2(np.linalg.norm(s), c)
    return angle, s / max(np.linalg.norm(s), 1e-300)


def test_perfect_z_gate():
    expected = np.diag([1 - 1j, 1 + 1j]) / math.sqrt(2)
    assert np.allclose(z_gate(0.0), expected, atol=1e-15)


def test_full_over_rotation_z_gate():
    assert np.allclose(z_gate(1.0), -1j * la.PAULI_Z, atol=1e-15)


def test_z_gate_plus_return_probability():
    u = z_gate(0.02)
    amp = la.ket("+").conj() @ u @ la.ket("+")
    assert abs(amp) ** 2 == pytest.approx((1 + math.cos(math.pi / 2 * 1.02)) / 2, abs=1e-14)


def test_eight_perfect_x_gates_are_minus_identity():
    assert np.allclose(gate_power(x_gate(math.pi / 4, 0, 0), 8), -la.IDENTITY, atol=1e-14)


@pytest.mark.parametrize("theta,expected", [(0.0, 0.0), (math.pi / 6, 0.25)])
def test_four_x_gates_return_probability(theta, expected):
    u4 = gate_power(x_gate(math.pi / 4, 0.0, theta), 4)
    p = abs(la.ket("0").conj() @ u4 @ la.ket("0")) ** 2
    # pi rotation about cos(t) X + sin(t) Z: <0|.|0> amplitude is -i sin(t)
    assert p == pytest.approx(expected, abs=1e-14)
    assert p == pytest.approx(math.sin(theta) ** 2, abs=1e-14)


def test_composite_is_trivial_without_errors():
    assert same_channel(composite_u(0, 0, 0, 4), la.IDENTITY, 1e-12)
    res = composite_axis_angle(0.0, 0.0)
    assert res.n_x == pytest.approx(-1.0)
    assert res.n_z == 0.0
    assert res.big_phi == 0.0


def test_composite_angle_without_over_rotation():
    res = composite_axis_angle(0.0, 0.05)
    # sin(Phi/2) = sin(2 theta) when epsilon vanishes
    assert math.sin(res.big_phi / 2) == pytest.approx(math.sin(0.1), abs=1e-12)
    assert res.big_phi == pytest.approx(0.2, abs=1e-12)
    assert res.n_z == pytest.approx(0.0, abs=1e-15)
    angle, _ = decompose(composite_u(0.0, 0.05))
    assert angle == pytest.approx(0.2, abs=1e-12)


def test_composite_axis_with_over_rotation():
    eps, th = 0.1, 0.05
    res = composite_axis_angle(eps, th)
    nz = math.sin(math.pi * eps / 2) / math.sqrt(1 - math.sin(th) ** 2 * math.cos(math.pi * eps / 2) ** 2)
    assert abs(res.n_z) == pytest.approx(nz, abs=1e-12)
    assert res.tilt == pytest.approx(math.asin(nz), abs=1e-12)
    angle, axis = decompose(composite_u(eps, th))
    assert angle == pytest.approx(res.big_phi, abs=1e-10)
    assert abs(axis[2]) == pytest.approx(nz, abs=1e-10)
    assert axis[1] == pytest.approx(0.0, abs=1e-12)


def test_composite_matches_closed_form_on_grid():
    for eps in np.linspace(-0.3, 0.3, 20):
        for th in np.linspace(-0.5, 0.5, 20):
            res = composite_axis_angle(eps, th)
            assert res.n_x**2 + res.n_z**2 == pytest.approx(1.0, abs=1e-10)
            v = x_gate(res.big_phi, 0.0, res.big_theta)
            assert same_channel(composite_u(eps, th, 0, 4), v, 1e-9), (eps, th)


def test_composite_tilt_bounds():
    for eps in np.linspace(-0.1, 0.1, 21):
        for th in np.linspace(-0.3, 0.3, 13):
            res = composite_axis_angle(eps, th)
            bound = math.asin(min(1, abs(math.sin(math.pi * eps / 2)) / math.sqrt(1 - math.sin(th) ** 2)))
            assert res.tilt <= bound + 1e-12
            if eps != 0:
                assert abs(res.n_z) / abs(eps) <= math.pi / 2 * 1.1


def test_signed_angle_follows_theta_sign():
    for th in (0.05, -0.05, 0.3, -0.3):
        phi = signed_rotation_angle(composite_u(0.02, th))
        assert math.copysign(1, phi) == math.copysign(1, th)
        assert abs(phi) == pytest.approx(composite_axis_angle(0.02, th).big_phi, abs=1e-10)


@pytest.mark.parametrize("phi,expected", [
    (Fraction(1, 4), (4, 1, 0)),
    (Fraction(3, 5), (5, 3, 0)),
    (Fraction(2, 3), (3, 1, 1)),
    ("2/3", (3, 1, 1)),
])
def test_choose_q_t_examples(phi, expected):
    q, t, s, target = choose_q_t(phi)
    assert (q, t, s) == expected
    assert target * 2**s == Fraction(phi)


def test_choose_q_t_properties():
    for b in range(1, 40):
        for a in range(1, 2 * b):
            q, t, s, target = choose_q_t(Fraction(a, b))
            assert t % 2 == 1
            assert q * target == t


def test_choose_q_t_rejects_float():
    with pytest.raises(TypeError):
        choose_q_t(0.25)


def test_theta_is_wrapped():
    assert GateParams(theta=2 * math.pi + 0.1).theta == pytest.approx(0.1)
    assert GateParams(theta=-math.pi).theta == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)


def test_params_reject_non_finite():
    with pytest.raises(ValueError):
        GateParams(alpha=float("nan"))


def test_composite_with_general_q_t():
    # phi = 3 pi / 5 gives q = 5, t = 3
    q, t, _, target = choose_q_t(Fraction(3, 5))
    phi = float(target) * math.pi
    for eps, th in ((0.01, 0.04), (-0.02, -0.1)):
        res = composite_axis_angle(eps, th, t)
        angle, _ = decompose(composite_u(eps, th, 0, q, phi))
        assert angle == pytest.approx(res.big_phi, abs=1e-10)
