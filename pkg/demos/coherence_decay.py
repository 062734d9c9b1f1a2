"""Monte Carlo CPMG decay against the closed form, and the memory-time estimate."""
import numpy as np

from spinmem.analytics import decay_rate_exact, fit_decay_time, hahn_t2, memory_time, t2_exact
from spinmem.noise import OUParams
from spinmem.sequences import build_sequence, simulate_sequence
from spinmem.spin_model import TWO_PI

SIGMA, TAU_C, RABI = TWO_PI * 112.5, 829.0, TWO_PI * 11.73e3
noise = OUParams(SIGMA, TAU_C)

for n in (1, 2, 4, 8):
    taus = t2_exact(n, SIGMA, TAU_C) * np.linspace(0.25, 1.6, 8) / n
    seqs = [build_sequence("cpmg", n=n, rabi=RABI, tau=t / 2, instantaneous=True) for t in taus]
    r = simulate_sequence(seqs, noise_delta=noise, n_traj=2000, seed=n, sweep=taus)
    exact = np.exp(-decay_rate_exact(n, taus, SIGMA, TAU_C))
    z = np.abs(r.coherence - exact) / (2 * r.stderr)
    t2 = fit_decay_time(n * taus, r.coherence, fit_offset=False).t2
    print(f"N={n}: fitted T2 = {1e3 * t2:6.1f} ms, exact root {1e3 * t2_exact(n, SIGMA, TAU_C):6.1f} ms, "
          f"max deviation {z.max():.2f} SE")

t2h = hahn_t2(SIGMA, TAU_C)
for tau in (10e-3, 24e-3):
    print(f"memory time at {1e3 * tau:.0f} ms spacing with T1e = 20.7 s: {memory_time(tau, t2h, 20.7):.1f} s")
