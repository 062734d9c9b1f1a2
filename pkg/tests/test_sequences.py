import numpy as np
import pytest

from spinmem import quantum as qm
from spinmem.analytics import decay_rate_exact
from spinmem.noise import NO_NOISE, OUParams
from spinmem.sequences import (
    Kind,
    OdmrSettings,
    PulseSequence,
    build_sequence,
    laser_reset,
    mw_pulse,
    pi_train,
    rf_pulse,
    simulate_odmr,
    simulate_sequence,
    simulate_spin_pumping,
    tree_sum,
    wait,
)
from spinmem.spin_model import SpinSystemParams, TWO_PI, reference_system

RABI = TWO_PI * 11.73e3
SIGMA = TWO_PI * 112.5


def test_hahn_is_cpmg_one():
    a = build_sequence("hahn", rabi=RABI, tau=0.01)
    b = build_sequence("cpmg", n=1, rabi=RABI, tau=0.01)
    assert a.elements == b.elements


def test_xy8_phases():
    train = pi_train("xy8", 8, 0.01, RABI)
    phases = [el.drive.phase for el in train if el.kind is Kind.RF_PULSE]
    x, y = 0.0, np.pi / 2
    assert phases == [x, y, x, y, y, x, y, x]


def test_invalid_counts():
    with pytest.raises(ValueError):
        pi_train("xy8", 4, 0.01, RABI)
    with pytest.raises(ValueError):
        build_sequence("cpmg", n=0, rabi=RABI, tau=0.01)
    with pytest.raises(ValueError):
        build_sequence("cpmg", n=2, rabi=RABI, tau=1e-6)


def test_cpmg_timing():
    seq = build_sequence("cpmg", n=4, rabi=RABI, tau=0.005)
    # pulse centers sit on the 2*tau grid; the closing pi/2 belongs to the readout
    assert seq.duration == pytest.approx(4 * 0.01, rel=1e-12)


def test_spin_pumping_sequence():
    seq = build_sequence("spin_pumping", system=reference_system(), n=15)
    mw = [el for el in seq.elements if el.kind is Kind.MW_PULSE]
    assert len(mw) == 15 and mw[0].duration == pytest.approx(1.4e-6)


def test_model_mismatch():
    with pytest.raises(ValueError):
        PulseSequence((mw_pulse(1e-6, 1e6, 0.0),), model="reduced")
    with pytest.raises(ValueError):
        PulseSequence((rf_pulse(np.pi, 0, RABI),), model="full")
    with pytest.raises(ValueError):
        PulseSequence((laser_reset(),), model="reduced")


def test_noiseless_ramsey_constant():
    seqs = [build_sequence("ramsey", rabi=RABI, tau=t) for t in (1e-4, 1e-3, 1e-2)]
    r = simulate_sequence(seqs, n_traj=4, seed=0)
    np.testing.assert_allclose(r.mean, 1.0, atol=1e-12)


def test_noiseless_cpmg_perfect():
    for n in (1, 2, 5):
        seqs = [build_sequence("cpmg", n=n, rabi=RABI, tau=t) for t in (1e-3, 7e-3)]
        r = simulate_sequence(seqs, n_traj=3, seed=0)
        np.testing.assert_allclose(r.mean, 1.0, atol=1e-12)


def test_quasistatic_hahn_refocuses():
    seqs = [build_sequence("hahn", rabi=RABI, tau=t, instantaneous=True) for t in (0.01, 0.1, 1.0)]
    r = simulate_sequence(seqs, noise_delta=OUParams(SIGMA), n_traj=256, seed=1)
    np.testing.assert_allclose(r.mean, 1.0, atol=1e-10)


def test_ramsey_fringe_frequency():
    det = TWO_PI * 500.0
    taus = np.arange(64) * 1e-4
    seqs = [build_sequence("ramsey", rabi=RABI, tau=t, instantaneous=True, detuning=det) for t in taus]
    r = simulate_sequence(seqs, n_traj=1, seed=0, sweep=taus)
    spec = np.abs(np.fft.rfft(r.coherence - r.coherence.mean(), 4096))
    f = np.fft.rfftfreq(4096, 1e-4)[np.argmax(spec)]
    assert f == pytest.approx(500.0, abs=1e4 / 4096)


def test_hahn_matches_exact_decay():
    taus = np.array([0.1, 0.2, 0.3])
    seqs = [build_sequence("hahn", rabi=RABI, tau=t / 2, instantaneous=True) for t in taus]
    r = simulate_sequence(seqs, noise_delta=OUParams(SIGMA, 829.0), n_traj=2000, seed=4, sweep=taus)
    expected = np.exp(-decay_rate_exact(1, taus, SIGMA, 829.0))
    assert np.all(np.abs(r.coherence - expected) <= 3 * 2 * r.stderr)


def test_thread_count_does_not_change_results(monkeypatch):
    seqs = [build_sequence("cpmg", n=2, rabi=RABI, tau=t) for t in (0.01, 0.05)]
    kw = dict(noise_delta=OUParams(SIGMA, 829.0), noise_eps=OUParams(0.005, 5e-4), n_traj=300, seed=7)
    a = simulate_sequence(seqs, threads=1, **kw)
    b = simulate_sequence(seqs, threads=4, **kw)
    monkeypatch.setenv("SPINMEM_THREADS", "3")
    c = simulate_sequence(seqs, **kw)
    assert a.mean.tobytes() == b.mean.tobytes() == c.mean.tobytes()
    assert a.stderr.tobytes() == b.stderr.tobytes()


def test_tree_sum_order_fixed():
    v = np.random.default_rng(0).normal(size=(13, 3))
    np.testing.assert_allclose(tree_sum(v), v.sum(axis=0), rtol=1e-13)


def test_spin_pumping_zero_repetitions():
    r = simulate_spin_pumping(0, reference_system(), n_traj=8, seed=0)
    assert r.polarization[0] == pytest.approx(0.5)


def test_spin_pumping_builds_polarization():
    r = simulate_spin_pumping(15, reference_system(), n_traj=256, seed=0)
    assert np.all(np.diff(r.polarization) > -0.01)
    assert r.polarization[15] > 0.9


def test_full_model_simulate_sequence_matches_pumping():
    system = reference_system()
    seq = build_sequence("spin_pumping", system=system, n=5)
    a = simulate_sequence(seq, system, OUParams(TWO_PI * 146e3), n_traj=200, seed=3)
    assert 0.6 < a.mean[0] <= 1.0


def test_odmr_decoupled_is_direction_independent():
    system = SpinSystemParams(0.0, TWO_PI * 2862.34e3, 97.159e-3)
    c = system.gamma_e_eff * system.b_z
    w = c + TWO_PI * np.linspace(-3e6, 3e6, 121)
    up = simulate_odmr(w, system, 0.3, OdmrSettings(), None)
    down = simulate_odmr(w[::-1], system, 0.3, OdmrSettings(), None)
    np.testing.assert_allclose(up.signal, down.signal[::-1], atol=1e-12)
    # two static dips, nuclear population untouched
    np.testing.assert_allclose(up.polarization, 0.3, atol=1e-12)


def test_odmr_builds_polarization():
    system = reference_system()
    c = system.gamma_e_eff * system.b_z
    w = c + TWO_PI * np.linspace(3e6, -3e6, 300)
    r = simulate_odmr(w, system, 0.5, OdmrSettings(reset="down"), None)
    assert abs(r.polarization[-1] - 0.5) > 0.05


def test_odmr_monte_carlo_converges_to_average():
    system = reference_system()
    c = system.gamma_e_eff * system.b_z
    w = c + TWO_PI * np.linspace(-3e6, 3e6, 150)
    exact = simulate_odmr(w, system, 0.5, OdmrSettings(reset="up"), None)
    mc = simulate_odmr(w, system, 0.5, OdmrSettings(reset="up"), 400, seed=2)
    assert np.sqrt(np.mean((mc.signal - exact.signal) ** 2)) < 0.01


def test_odmr_requires_monotone_sweep():
    w = TWO_PI * np.array([1.0, 3.0, 2.0]) * 1e9
    with pytest.raises(ValueError):
        simulate_odmr(w, reference_system())
