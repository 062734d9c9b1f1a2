"""Short dCRAB run for a single-pulse nuclear polarization (reduced budget for a quick look)."""
from spinmem.control import DcrabSettings, dcrab_optimize, write_pulse_csv
from spinmem.noise import OUParams
from spinmem.spin_model import reference_system

settings = DcrabSettings(super_iterations=4, evaluations=300, seed=0)
res = dcrab_optimize(reference_system(), 2950e-9, settings, OUParams(0.0), log=print)
print(f"infidelity {res.fom_eval:.2e} (zero pulse {res.fom_zero:.2f}) in {res.runtime:.0f} s")
write_pulse_csv("dcrab_pulse.csv", res.pulse)
