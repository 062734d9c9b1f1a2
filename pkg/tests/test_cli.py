import json
import subprocess
import sys

import numpy as np
import pytest

from spinmem.cli import resolve, run, ConfigError, SYSTEM


def _run(tmp_path, *argv):
    return run([*argv, "--out", str(tmp_path)])


def test_spectrum(tmp_path, capsys):
    assert _run(tmp_path, "spectrum", "--wrf1-khz", "2489.73", "--wrf2-khz", "493.62", "--b-mt", "97.159") == 0
    res = json.loads((tmp_path / "spectrum.json").read_text())["result"]
    assert res["a_zz_hz"] == pytest.approx(2862.3e3, rel=1e-3)
    assert res["a_zx_hz"] == pytest.approx(602.8e3, rel=2e-3)
    assert res["axis_angle_deg"] == pytest.approx(30, abs=1.5)
    assert "A_zz" in capsys.readouterr().out


def test_decay_memory(tmp_path, capsys):
    assert _run(tmp_path, "decay", "memory", "--tau-ms", "24", "--t2h-ms", "271", "--t1e-s", "20.7") == 0
    value = float(capsys.readouterr().out.split("=")[1].split("s")[0])
    assert value == pytest.approx(18.1, rel=0.15)


def test_decay_exact_list(tmp_path):
    assert _run(tmp_path, "decay", "exact", "--tau-ms", "[100, 200]", "--n", "2") == 0
    data = np.genfromtxt(tmp_path / "decay_exact.csv", delimiter=",", names=True)
    assert len(data) == 2


def test_missing_unit_is_rejected(tmp_path):
    assert _run(tmp_path, "decay", "memory", "--tau", "24") == 2


def test_unknown_key_is_rejected(tmp_path):
    assert _run(tmp_path, "decay", "memory", "--tau-ms", "24", "--bogus-ms", "1") == 2


def test_simulate_requires_seed(tmp_path):
    assert _run(tmp_path, "simulate", "hahn", "--tau-ms", "100", "--n-traj", "8") == 2


def test_resolve_units():
    cfg = resolve({"wrf1-khz": 1.0, "b-mt": 97.0}, SYSTEM)
    assert cfg["wrf1"] == pytest.approx(2 * np.pi * 1e3)
    assert cfg["b"] == pytest.approx(0.097)
    with pytest.raises(ConfigError):
        resolve({"b-khz": 1.0}, SYSTEM)


def test_simulate_reproducible_and_thread_independent(tmp_path):
    args = ["simulate", "cpmg", "--tau-ms", "[20, 60]", "--n", "2", "--n-traj", "300", "--seed", "11"]
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run([*args, "--out", str(a)]) == 0
    assert run([*args, "--out", str(b)]) == 0
    assert run([*args, "--threads", "3", "--out", str(c)]) == 0
    ref = (a / "simulate_cpmg.csv").read_bytes()
    assert ref == (b / "simulate_cpmg.csv").read_bytes() == (c / "simulate_cpmg.csv").read_bytes()
    side = json.loads((a / "simulate_cpmg.csv.json").read_text()) if (a / "simulate_cpmg.csv.json").exists() \
        else json.loads(next(a.glob("*.json")).read_text())
    assert side["seed"] == 11


def test_config_round_trip(tmp_path):
    a = tmp_path / "a"
    assert run(["simulate", "hahn", "--tau-ms", "[50]", "--n-traj", "16", "--seed", "2", "--out", str(a)]) == 0
    sidecar = next(a.glob("*.json"))
    b = tmp_path / "b"
    assert run(["simulate", "hahn", "--config", str(sidecar), "--out", str(b)]) == 0
    assert (a / "simulate_hahn.csv").read_bytes() == (b / "simulate_hahn.csv").read_bytes()


def test_fit_tau_c(tmp_path):
    from spinmem.analytics import decay_rate_exact

    sigma = 2 * np.pi * 112.5
    rows = ["n,tau_tilde_s,signal"]
    for n in (1, 2):
        for t in np.linspace(0.05, 0.4, 8):
            rows.append(f"{n},{float(t)!r},{float(np.exp(-decay_rate_exact(n, t, sigma, 829.0)))!r}")
    (tmp_path / "d.csv").write_text("\n".join(rows) + "\n")
    assert _run(tmp_path, "fit-tau-c", "--data", str(tmp_path / "d.csv")) == 0
    res = json.loads((tmp_path / "fit_tau_c.json").read_text())["result"]
    assert res["tau_c_s"] == pytest.approx(829.0, rel=1e-4)


def test_fidelity_map(tmp_path):
    assert _run(tmp_path, "fidelity-map", "--kind", "pi", "--delta-hz", "[0, 337.5]", "--eps", "[0, 0.015]") == 0
    assert (tmp_path / "fidelity_pi.csv").exists()


def test_duty_cycle(capsys, tmp_path):
    assert _run(tmp_path, "duty-cycle", "--kind", "xy8", "--tau-ms", "24") == 0
    assert "%" in capsys.readouterr().out


def test_fit_odmr_bad_path(tmp_path):
    assert _run(tmp_path, "fit-odmr", "--spectra", str(tmp_path / "none.csv:up"), "--seed", "0") == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "spinmem", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
