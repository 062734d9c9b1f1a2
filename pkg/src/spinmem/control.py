"""dCRAB optimization of shaped MW pulses that polarize the nucleus in one shot.

The pulse is a truncated Fourier series in amplitude and phase, multiplied
by a flat-top envelope with Gaussian edges and clamped to a peak Rabi
frequency. Each super-iteration draws fresh random basis frequencies,
optimizes their coefficients by Nelder-Mead on a frozen noise pool, and
adds the result to the incumbent pulse.

The drive is applied in the frame rotating with the drive frequency,
which is set on the electron-nuclear flip-flop transition ``v1 -> v4``
linking ``v1`` to the upper manifold. Pumping through it leaves the
nucleus in ``n_up`` of the lower manifold, i.e. in ``v2`` or ``v2'``.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from . import quantum as qm
from .noise import NO_NOISE, OUParams, make_rng, ou_step, sample_quasistatic
from .spin_model import TWO_PI, DriveParams, SpinSystemParams, hamiltonian_full, manifold_spectrum

#: default peak Rabi frequency (rad/s)
DEFAULT_CLAMP = TWO_PI * 2e6
SEGMENT = 5e-9
_OPS = qm.spin_operators(4)


@dataclass(frozen=True)
class ShapedPulse:
    """Fourier-parameterized MW pulse.

    ``amp_terms`` and ``phase_terms`` hold ``(frequency_hz, sin_coeff, cos_coeff)``.
    Amplitude coefficients are in rad/s, phase coefficients in rad.
    """

    duration: float
    amp_terms: tuple = ()
    phase_terms: tuple = ()
    clamp: float = DEFAULT_CLAMP
    rise: float = 100e-9

    def __post_init__(self):
        if not self.duration > 2 * self.rise:
            raise ValueError("duration must exceed twice the rise time")
        if not self.clamp > 0 or not self.rise > 0:
            raise ValueError("clamp and rise time must be positive")

    def envelope(self, t):
        """Flat top with Gaussian edges; 0 at both ends, exactly 1 between the edges."""
        t = np.asarray(t, dtype=float)
        s = self.rise / 3
        floor = np.exp(-4.5)
        edge = np.minimum(t, self.duration - t)
        g = (np.exp(-0.5 * ((edge - self.rise) / s) ** 2) - floor) / (1 - floor)
        return np.where(edge >= self.rise, 1.0, np.clip(g, 0.0, 1.0))

    @staticmethod
    def _series(terms, t):
        out = np.zeros_like(t)
        for f, a, b in terms:
            arg = TWO_PI * f * t
            out = out + a * np.sin(arg) + b * np.cos(arg)
        return out

    def __call__(self, t):
        """Rabi frequency (rad/s, non-negative) and phase (rad) at ``t``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-15) or np.any(t > self.duration + 1e-15):
            raise ValueError("t outside the pulse")
        amp = np.clip(self._series(self.amp_terms, t), -self.clamp, self.clamp) * self.envelope(t)
        phase = self._series(self.phase_terms, t) + np.where(amp < 0, np.pi, 0.0)
        return np.abs(amp), phase

    def segments(self, dt: float = SEGMENT):
        """Piecewise-constant representation sampled at segment midpoints."""
        n = max(1, int(round(self.duration / dt)))
        step = self.duration / n
        rabi, phase = self((np.arange(n) + 0.5) * step)
        return np.full(n, step), rabi, phase

    def add(self, amp_terms, phase_terms) -> "ShapedPulse":
        return replace(self, amp_terms=self.amp_terms + tuple(amp_terms),
                       phase_terms=self.phase_terms + tuple(phase_terms))


def shaped_pulse_eval(pulse: ShapedPulse, t):
    return pulse(t)


@dataclass(frozen=True)
class DcrabSettings:
    super_iterations: int = 10
    evaluations: int = 1000
    basis_size: int = 2
    harmonics: float = 10.0
    pool_size: int = 100
    eval_pool_size: int = 5000
    clamp: float = DEFAULT_CLAMP
    rise: float = 100e-9
    segment: float = SEGMENT
    seed: int = 0

    def __post_init__(self):
        for name in ("super_iterations", "evaluations", "basis_size", "pool_size", "eval_pool_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class FoMRecord:
    value: float
    evaluation: int
    super_iteration: int


@dataclass
class DcrabResult:
    pulse: ShapedPulse
    history: list
    fom_pool: float
    fom_eval: float
    fom_zero: float
    non_improving: list = field(default_factory=list)
    runtime: float = 0.0


def polarization_fom(rho, spectrum) -> float | np.ndarray:
    """``1 - <v2|rho|v2> - <v2'|rho|v2'>``: nuclear infidelity irrespective of the electron."""
    return 1 - qm.overlap(rho, spectrum.vector(2)) - qm.overlap(rho, spectrum.vector(2, flipped=True))


def drive_detuning(system: SpinSystemParams) -> float:
    """Rotating-frame detuning placing the drive on the flip-flop transition."""
    return manifold_spectrum(system).resonant_detuning("F1")


class PoolPropagator:
    """Propagates ``|down_e> (x) basis`` under a shaped pulse for a pool of noise paths.

    States are stored as a ``(4, 2 * pool)`` array so the common Hamiltonian
    acts with one matrix product; the per-path electron detuning enters
    through the diagonal ``S_z``. Each segment uses a Taylor series of the
    exponential truncated at machine precision.
    """

    def __init__(self, system: SpinSystemParams, noise: OUParams, pool: int, seed: int, n_seg: int,
                 dt: float, key: int = 0):
        self.system = system
        self.dt = dt
        self.spec = manifold_spectrum(system)
        self.h0 = hamiltonian_full(system, DriveParams(0.0, drive_detuning(system)))
        rng = make_rng(seed, key)
        x = np.asarray(sample_quasistatic(noise, rng, pool), dtype=float)
        path = np.empty((n_seg, pool))
        for k in range(n_seg):
            path[k] = x
            x = ou_step(x, dt, noise, rng)
        self.delta = np.repeat(path, 2, axis=1)                 # (n_seg, 2 pool)
        self.sz = np.diag(_OPS["Sz"]).real[:, None]
        self.sx, self.sy = _OPS["Sx"], _OPS["Sy"]
        dn = qm.DOWN
        basis = np.eye(2)
        psi0 = np.stack([np.kron(dn, basis[:, 0]), np.kron(dn, basis[:, 1])], axis=1)
        self.psi0 = np.tile(psi0, (1, pool)).astype(complex)
        self.targets = np.stack([self.spec.vector(2), self.spec.vector(2, flipped=True)])
        self.order = None

    def _order(self, clamp: float) -> int:
        norm = np.linalg.norm(self.h0, 2) + clamp / 2 + np.max(np.abs(self.delta), initial=0.0) / 2
        return _taylor_order(norm * self.dt)

    def final_states(self, pulse: ShapedPulse) -> np.ndarray:
        _, rabi, phase = pulse.segments(self.dt)
        if len(rabi) != self.delta.shape[0]:
            raise ValueError("pulse segmentation does not match the pool")
        psi = self.psi0.copy()
        c = -1j * self.dt
        order = self._order(pulse.clamp)
        for k in range(len(rabi)):
            h = self.h0 + rabi[k] * (np.cos(phase[k]) * self.sx + np.sin(phase[k]) * self.sy)
            d = self.sz * self.delta[k]
            term = psi
            for j in range(1, order + 1):
                term = (c / j) * (h @ term + d * term)
                psi = psi + term
        return psi

    def fom(self, pulse: ShapedPulse) -> float:
        psi = self.final_states(pulse)
        pop = np.abs(self.targets.conj() @ psi) ** 2            # (2, 2 pool)
        # rho0 = |down><down| (x) 1/2: average over the two basis states
        return float(1 - pop.sum() / psi.shape[1])


def _taylor_order(norm_dt: float, tol: float = 1e-15) -> int:
    order, term = 1, norm_dt
    while term > tol and order < 30:
        order += 1
        term *= norm_dt / order
    return order


def dcrab_optimize(system: SpinSystemParams, duration: float, settings: DcrabSettings = DcrabSettings(),
                   noise: OUParams = NO_NOISE, initial: ShapedPulse | None = None, log=None) -> DcrabResult:
    """Optimize a single polarizing pulse of the given ``duration``.

    The objective is the pool-averaged :func:`polarization_fom`. Returns the
    best pulse, the history of incumbent FoM values and the FoM of the
    final pulse on an independent evaluation pool.
    """
    t_start = time.perf_counter()
    n_seg = max(1, int(round(duration / settings.segment)))
    dt = duration / n_seg
    pool_n = 1 if noise.sigma == 0 else settings.pool_size
    pool = PoolPropagator(system, noise, pool_n, settings.seed, n_seg, dt, key=0)
    rng = make_rng(settings.seed, 1)
    pulse = initial if initial is not None else ShapedPulse(duration, clamp=settings.clamp, rise=settings.rise)
    best = pool.fom(pulse)
    fom_zero = best if initial is None else pool.fom(ShapedPulse(duration, clamp=settings.clamp, rise=settings.rise))
    history = [FoMRecord(best, 0, 0)]
    n_eval = 1
    non_improving = []
    nb = settings.basis_size
    for si in range(settings.super_iterations):
        f_amp = rng.uniform(0, settings.harmonics / duration, nb)
        f_ph = rng.uniform(0, settings.harmonics / duration, nb)
        if si == 0 and initial is None:
            f_amp[0] = 0.0                                     # constant amplitude term

        def build(x, f_amp=f_amp, f_ph=f_ph):
            a = x[: 2 * nb].reshape(nb, 2) * settings.clamp
            b = x[2 * nb:].reshape(nb, 2)
            return pulse.add([(f, s, c) for f, (s, c) in zip(f_amp, a)],
                             [(f, s, c) for f, (s, c) in zip(f_ph, b)])

        def objective(x):
            nonlocal n_eval, best
            val = pool.fom(build(x))
            n_eval += 1
            if val < best:
                best = val
                history.append(FoMRecord(val, n_eval, si + 1))
            return val

        budget = settings.evaluations
        x_best, f_best = np.zeros(4 * nb), np.inf
        step = 0.5
        while budget > 4 * nb + 1:
            x0 = x_best if np.isfinite(f_best) else np.zeros(4 * nb)
            simplex = np.vstack([x0, x0 + step * np.eye(4 * nb)])
            res = optimize.minimize(objective, x0, method="Nelder-Mead",
                                    options={"maxfev": budget, "initial_simplex": simplex,
                                             "xatol": 1e-6, "fatol": 1e-9})
            budget -= res.nfev
            if res.fun < f_best:
                x_best, f_best = res.x, res.fun
            step *= 0.5                                        # restart after simplex collapse
        if f_best < pool.fom(pulse):
            pulse = build(x_best)
        else:
            non_improving.append(si + 1)
        if log is not None:
            log(f"super-iteration {si + 1}: FoM {best:.3e}")
    fom_pool = pool.fom(pulse)
    if noise.sigma == 0:
        fom_eval = fom_pool
    else:
        ev = PoolPropagator(system, noise, settings.eval_pool_size, settings.seed, n_seg, dt, key=2)
        fom_eval = ev.fom(pulse)
    return DcrabResult(pulse, history, fom_pool, fom_eval, fom_zero, non_improving,
                       time.perf_counter() - t_start)


def write_pulse_csv(path, pulse: ShapedPulse, dt: float = 1e-9) -> None:
    n = int(round(pulse.duration / dt))
    t = np.linspace(0, pulse.duration, n + 1)
    rabi, phase = pulse(t)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ns", "rabi_hz", "phase_rad"])
        for row in zip(t * 1e9, rabi / TWO_PI, phase):
            w.writerow([repr(float(v)) for v in row])


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["evaluation", "super_iteration", "infidelity"])
        for r in history:
            w.writerow([r.evaluation, r.super_iteration, repr(float(r.value))])
