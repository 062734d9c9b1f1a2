"""Simulate four ODMR spectra with known fields and recover them with the global fit."""
import numpy as np

from spinmem.fitting import GAMMA_E_EFF, OdmrData, OdmrFixed, fit_odmr
from spinmem.sequences import simulate_odmr
from spinmem.spin_model import TWO_PI

fixed = OdmrFixed()
truth = [(97.159e-3, "up", 1, 0.345), (97.149e-3, "up", -1, 0.6),
         (97.165e-3, "down", 1, 0.606), (97.140e-3, "down", -1, 0.5)]
spectra = []
for k, (b, reset, direction, p) in enumerate(truth):
    w = GAMMA_E_EFF * b + TWO_PI * np.linspace(-3e6, 3e6, 400)[::direction]
    sim = simulate_odmr(w, fixed.system(b, GAMMA_E_EFF), p, fixed.settings(reset), 200, seed=10 + k)
    spectra.append(OdmrData(w, sim.signal, reset))

res = fit_odmr(spectra, fixed, seed=1)
for (b, reset, _, p), bf, pf, r2 in zip(truth, res.b, res.p, res.r2):
    print(f"{reset:>4} reset: B {1e3 * b:.3f} -> {1e3 * bf:.3f} mT, p_up {p:.3f} -> {pf:.3f}, R2 {r2:.4f}")
print(f"A_zz = 2pi*{res.a_zz_mean / TWO_PI / 1e3:.1f} kHz, A_zx = 2pi*{res.a_zx_mean / TWO_PI / 1e3:.1f} kHz")
