"""Simulation, fitting and analysis of a hyperfine-coupled electron-nuclear spin memory."""
from .analytics import (
    FitFailure,
    decay_rate_approx,
    decay_rate_exact,
    duty_cycle,
    fidelity_map,
    fit_correlation_time,
    fit_decay_time,
    hahn_t2,
    memory_time,
    pulse_fidelity,
    t1_limit,
    t2_exact,
    t2_for_order,
)
from .noise import OUParams, make_rng, ou_step, ou_step_integral, ou_trajectory
from .spin_model import (
    InconsistentInputs,
    SpinSystemParams,
    hamiltonian_full,
    hamiltonian_reduced,
    hyperfine_from_frequencies,
    manifold_spectrum,
    reference_system,
)

__version__ = "0.1.0"
