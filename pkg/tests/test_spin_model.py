import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinmem import quantum as qm
from spinmem.analytics import pulse_fidelity
from spinmem.spin_model import (
    GAMMA_C13,
    OMEGA_RF1,
    OMEGA_RF2,
    TWO_PI,
    DriveParams,
    InconsistentInputs,
    SpinSystemParams,
    hamiltonian_full,
    hamiltonian_reduced,
    hyperfine_from_frequencies,
    manifold_spectrum,
    reference_system,
)

A_ZX = TWO_PI * 602.81e3
A_ZZ = TWO_PI * 2862.34e3
B = 97.159e-3


def test_validation():
    with pytest.raises(ValueError):
        SpinSystemParams(A_ZX, A_ZZ, -1.0)
    with pytest.raises(ValueError):
        SpinSystemParams(-A_ZX, A_ZZ, B)
    with pytest.raises(ValueError):
        DriveParams(-1.0)
    with pytest.raises(ValueError):
        hamiltonian_reduced(0.0, 1.0, eps=1.0)


def test_diagonal_without_azx():
    h = hamiltonian_full(SpinSystemParams(0.0, A_ZZ, B))
    np.testing.assert_allclose(h, np.diag(np.diag(h)), atol=0)


def test_block_eigenvalues_match_spectrum():
    p = SpinSystemParams(A_ZX, A_ZZ, B)
    spec = manifold_spectrum(p)
    w = np.linalg.eigvalsh(hamiltonian_full(p))
    # up block has +-w2/2, down block +-w1/2
    assert sorted(np.abs(w)) == pytest.approx(sorted([spec.omega_rf2 / 2] * 2 + [spec.omega_rf1 / 2] * 2),
                                              rel=1e-10)


def test_reference_frequencies():
    spec = manifold_spectrum(SpinSystemParams(A_ZX, A_ZZ, B))
    assert spec.omega_rf1 / TWO_PI == pytest.approx(2489.7e3, rel=2e-4)
    assert spec.omega_rf2 / TWO_PI == pytest.approx(493.6e3, rel=2e-3)


def test_axis_angle():
    assert np.degrees(manifold_spectrum(SpinSystemParams(A_ZX, A_ZZ, B)).axis_angle) == pytest.approx(30, abs=1.5)
    assert manifold_spectrum(SpinSystemParams(0.0, A_ZZ, B)).axis_angle == pytest.approx(0, abs=1e-12)


def test_inversion_reference_values():
    a_zz, a_zx = hyperfine_from_frequencies(OMEGA_RF1, OMEGA_RF2, B)
    assert a_zz / TWO_PI == pytest.approx(2862.3e3, rel=1e-3)
    assert a_zx / TWO_PI == pytest.approx(602.8e3, rel=2e-3)


def test_inversion_boundary_and_errors():
    gnb = GAMMA_C13 * B
    w2 = abs(gnb - A_ZZ / 2)
    w1 = abs(gnb + A_ZZ / 2)
    a_zz, a_zx = hyperfine_from_frequencies(w1, w2, B)
    assert a_zz == pytest.approx(A_ZZ, rel=1e-12)
    assert a_zx == pytest.approx(0.0, abs=1e-6 * A_ZZ)
    with pytest.raises(InconsistentInputs):
        hyperfine_from_frequencies(OMEGA_RF2, OMEGA_RF1, B)
    with pytest.raises(InconsistentInputs):
        hyperfine_from_frequencies(OMEGA_RF1, OMEGA_RF2 * 10, B)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 2e6), st.floats(1e5, 5e6), st.floats(0.01, 1.0))
def test_round_trip(azx_hz, azz_hz, b):
    p = SpinSystemParams(TWO_PI * azx_hz, TWO_PI * azz_hz, b)
    spec = manifold_spectrum(p)
    if spec.omega_rf1 <= spec.omega_rf2 * (1 + 1e-9):
        return
    a_zz, a_zx = hyperfine_from_frequencies(spec.omega_rf1, spec.omega_rf2, b)
    back = manifold_spectrum(SpinSystemParams(a_zx, a_zz, b))
    assert back.omega_rf1 == pytest.approx(spec.omega_rf1, rel=1e-9)
    assert back.omega_rf2 == pytest.approx(spec.omega_rf2, rel=1e-9)


def test_eigenvectors_orthonormal():
    spec = manifold_spectrum(reference_system())
    v = np.stack([spec.vector(i) for i in range(1, 5)], axis=1)
    np.testing.assert_allclose(v.conj().T @ v, np.eye(4), atol=1e-12)
    for i in range(1, 5):
        h = hamiltonian_full(reference_system())
        hv = h @ spec.vector(i)
        e = np.vdot(spec.vector(i), hv)
        np.testing.assert_allclose(hv, e * spec.vector(i), atol=1e-6 * np.abs(h).max())


def test_reduced_axis_convention():
    rabi = TWO_PI * 10e3
    h = hamiltonian_reduced(0.0, rabi, phase=np.pi / 2)
    np.testing.assert_allclose(h, rabi * qm.spin_operators(2)["Sy"])
    rho = qm.propagate(qm.pure(qm.DOWN), h, np.pi / 2 / rabi)
    # rotation about +y takes |down> (Bloch -z) to -x
    assert 2 * np.real(rho[0, 1]) == pytest.approx(-1.0, abs=1e-12)


def test_reduced_pi_pulse_fidelity():
    rabi = TWO_PI * 11.73e3
    t = np.pi / rabi
    u = qm.propagator(hamiltonian_reduced(TWO_PI * 112.5, rabi), t)
    u0 = qm.propagator(hamiltonian_reduced(0.0, rabi), t)
    assert pulse_fidelity(u, u0) >= 0.9993


def test_mw2_pumping_target_is_v2():
    spec = manifold_spectrum(reference_system())
    off = spec.transition_offsets()
    assert off["MW1"] == pytest.approx(-off["MW2"])
    assert abs(off["MW2"]) == pytest.approx((spec.omega_rf1 + spec.omega_rf2) / 2, rel=1e-12)
