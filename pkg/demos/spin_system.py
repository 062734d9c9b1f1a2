"""Hyperfine parameters, manifold spectrum and pulse fidelities for the reference system."""
import numpy as np

from spinmem.analytics import fidelity_map
from spinmem.spin_model import OMEGA_RF1, OMEGA_RF2, TWO_PI, hyperfine_from_frequencies, manifold_spectrum, \
    reference_system

B = 97.159e-3
a_zz, a_zx = hyperfine_from_frequencies(OMEGA_RF1, OMEGA_RF2, B)
print(f"A_zz = 2pi*{a_zz / TWO_PI / 1e3:.1f} kHz, A_zx = 2pi*{a_zx / TWO_PI / 1e3:.1f} kHz")

spec = manifold_spectrum(reference_system())
print(f"quantization-axis angle between manifolds: {np.degrees(spec.axis_angle):.2f} deg")
for name, off in spec.transition_offsets().items():
    print(f"  {name}: {off / TWO_PI / 1e3:+9.1f} kHz")

sigma, eps, rabi = TWO_PI * 112.5, 0.005, TWO_PI * 11.73e3
for kind in ("pi/2", "pi", "xy8", "cpmg"):
    f = fidelity_map(kind, [3 * sigma], [3 * eps], rabi)[0, 0]
    print(f"fidelity {kind:>4} at (3 sigma_delta, 3 sigma_eps): {f:.5f}")
