import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import constants

from ionwva import theory
from ionwva.errors import ConfigurationError, ContractError, InvalidStateError
from ionwva.hilbert import (
    JointState,
    MotionalState,
    SpinState,
    TrapUnits,
    apply_displacement,
    coherent_state,
    displacement_operator,
    expect_p,
    expect_p2,
    expect_z,
    expect_z2,
    ground_state,
    momentum_operator,
    position_distribution,
    position_operator,
)
from ionwva.measurement import postselected_pointer

N = 64
amp = st.floats(-1.0, 1.0)


def ca40_units():
    return TrapUnits(2 * math.pi * 1.41e6, 39.9626 * constants.atomic_mass)


def test_length_unit_matches_direct_formula():
    m = 39.9626 * constants.atomic_mass
    omega = 2 * math.pi * 1.41e6
    units = ca40_units()
    assert units.delta_z == pytest.approx(math.sqrt(constants.hbar / (2 * m * omega)), rel=1e-14)
    assert units.delta_z * 1e9 == pytest.approx(9.4705, abs=5e-4)
    assert units.delta_z * units.delta_p == pytest.approx(constants.hbar / 2, rel=1e-12)


def test_trap_units_reject_nonpositive():
    with pytest.raises(ConfigurationError):
        TrapUnits(0.0, 1e-25)


def test_vacuum_moments():
    vac = ground_state(N)
    assert expect_z(vac) == 0.0
    assert expect_p(vac) == 0.0
    assert expect_z2(vac) == pytest.approx(1.0, abs=1e-12)
    assert expect_p2(vac) == pytest.approx(1.0, abs=1e-12)


def test_coherent_state_means():
    assert expect_z(coherent_state(1.0, N)) == pytest.approx(2.0, abs=1e-12)
    psi = coherent_state(0.5j, N)
    assert expect_p(psi) == pytest.approx(1.0, abs=1e-12)
    assert expect_p2(psi) == pytest.approx(2.0, abs=1e-12)


def test_coherent_state_too_large_for_truncation():
    with pytest.raises(InvalidStateError):
        coherent_state(3.0, 16)


def test_truncation_guard_rejects_top_level_population():
    amps = np.zeros(N + 1, dtype=complex)
    amps[0], amps[-1] = 1.0, 1e-3
    with pytest.raises(InvalidStateError):
        MotionalState(amps)


def test_nmax_below_minimum():
    with pytest.raises(ConfigurationError):
        ground_state(4)


def test_motional_state_is_read_only():
    vac = ground_state(N)
    with pytest.raises(ValueError):
        vac.amplitudes[0] = 0.5


def test_expectations_require_normalization():
    amps = np.zeros(N + 1, dtype=complex)
    amps[0] = 2.0
    with pytest.raises(ContractError):
        expect_z(MotionalState(amps))


def test_spin_state_normalization():
    with pytest.raises(ContractError):
        SpinState(1.0, 1.0)


def test_joint_state_vector_layout():
    joint = JointState.product(SpinState.up(), ground_state(N))
    assert joint.vector[0] == 1.0
    assert JointState.from_vector(joint.vector).blocks.shape == (2, N + 1)
    assert joint.spin_populations() == pytest.approx((1.0, 0.0))


def test_vacuum_distribution_is_unit_gaussian():
    z = np.linspace(-6, 6, 241)
    rho = position_distribution(ground_state(N), z)
    np.testing.assert_allclose(rho, np.exp(-z**2 / 2) / np.sqrt(2 * np.pi), atol=1e-12)


def test_coherent_distribution_centered_at_two():
    z = np.linspace(-4, 8, 241)
    rho = position_distribution(coherent_state(1.0, N), z)
    np.testing.assert_allclose(rho, np.exp(-(z - 2) ** 2 / 2) / np.sqrt(2 * np.pi), atol=1e-12)


def test_postselected_density_matches_closed_form():
    z = np.linspace(-7, 7, 281)
    _, pointer = postselected_pointer(1.0, math.pi / 4, N)
    np.testing.assert_allclose(position_distribution(pointer, z), theory.postselected_density(1.0, math.pi / 4)(z), atol=1e-6)


@given(amp, amp)
def test_displacement_preserves_norm(re, im):
    alpha = complex(re, im) * math.sqrt(N) / 4 / math.sqrt(2)
    out = apply_displacement(ground_state(N), alpha)
    assert abs(out.norm - 1.0) < 1e-10


@given(amp, amp, amp, amp)
def test_displacement_composition_up_to_phase(ar, ai, br, bi):
    a, b = complex(ar, ai), complex(br, bi)
    start = coherent_state(0.3 - 0.2j, N)
    lhs = apply_displacement(apply_displacement(start, b), a).amplitudes
    rhs = displacement_operator(a + b, N) @ start.amplitudes * np.exp(1j * (a * b.conjugate()).imag)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


@given(amp, amp)
def test_coherent_mean_convention(re, im):
    psi = coherent_state(complex(re, im), N)
    assert expect_z(psi) == pytest.approx(2 * re, abs=1e-10)
    assert expect_p(psi) == pytest.approx(2 * im, abs=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_expectations_have_no_imaginary_residue(seed):
    rng = np.random.default_rng(seed)
    v = np.zeros(N + 1, dtype=complex)
    v[:20] = rng.normal(size=20) + 1j * rng.normal(size=20)
    v /= np.linalg.norm(v)
    for op in (position_operator(N), momentum_operator(N)):
        assert abs(np.vdot(v, op @ v).imag) < 1e-12
    psi = MotionalState(v)
    for f in (expect_z, expect_p, expect_p2):
        assert isinstance(f(psi), float)
