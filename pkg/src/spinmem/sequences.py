"""Pulse-sequence representation, canonical builders and the Monte Carlo engine.

Two models are supported:

``reduced``
    The nucleus alone (one manifold), driven by RF pulses, with OU
    detuning noise ``delta(t)`` and relative amplitude noise ``eps(t)``.
    Trajectories are propagated as state vectors.
``full``
    The 4-level electron-nuclear pair in the electron rotating frame, with
    MW pulses, shaped MW pulses and optical resets. Propagated as density
    matrices.

Trajectories run in fixed-size blocks. Each block owns a random stream
derived from ``(seed, block index)`` and block sums are reduced in index
order, so results never depend on the number of worker threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from . import quantum as qm
from .noise import NO_NOISE, OUParams, make_rng, ou_step, ou_step_integral, sample_quasistatic
from .spin_model import (
    DriveParams,
    SpinSystemParams,
    hamiltonian_full,
    manifold_spectrum,
)

BLOCK_SIZE = 128
#: noise held constant over segments shorter than tau_c / SUBDIVISION
SUBDIVISION = 100

XY8_PHASES = (0.0, np.pi / 2, 0.0, np.pi / 2, np.pi / 2, 0.0, np.pi / 2, 0.0)


class Kind(Enum):
    MW_PULSE = "mw"
    RF_PULSE = "rf"
    SHAPED = "shaped"
    WAIT = "wait"
    LASER = "laser"


@dataclass(frozen=True)
class SequenceElement:
    kind: Kind
    duration: float
    drive: DriveParams | None = None
    angle: float | None = None
    target: str | None = None
    dephase: bool = False
    shape: object = None

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("element duration must be non-negative")


def rf_pulse(angle: float, phase: float, rabi: float, instantaneous: bool = False,
             detuning: float = 0.0) -> SequenceElement:
    """Square RF rotation by ``angle`` about the axis at ``phase`` in the xy plane."""
    duration = 0.0 if instantaneous else abs(angle) / rabi
    return SequenceElement(Kind.RF_PULSE, duration, DriveParams(rabi, detuning, phase, "RF"), angle=angle)


def mw_pulse(duration: float, rabi: float, detuning: float, phase: float = 0.0) -> SequenceElement:
    return SequenceElement(Kind.MW_PULSE, duration, DriveParams(rabi, detuning, phase, "MW"))


def wait(duration: float) -> SequenceElement:
    return SequenceElement(Kind.WAIT, duration)


def laser_reset(target: str = "down", dephase: bool = True, duration: float = 5.5e-3) -> SequenceElement:
    return SequenceElement(Kind.LASER, duration, target=target, dephase=dephase)


def shaped_pulse(shape, detuning: float = 0.0) -> SequenceElement:
    """Element wrapping an object with ``duration`` and ``segments(dt)`` (see ``control``)."""
    return SequenceElement(Kind.SHAPED, shape.duration, DriveParams(0.0, detuning), shape=shape)


@dataclass(frozen=True)
class Readout:
    """``differential``: final pi/2 at ``phase`` and ``phase + pi``, normalized difference.

    ``population``: population of ``state`` (reduced or full model).
    """

    kind: str = "differential"
    phase: float = 0.0
    rabi: float | None = None
    state: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class PulseSequence:
    elements: tuple
    model: str = "reduced"
    readout: Readout = Readout()
    instantaneous: bool = False
    detuning: float = 0.0
    initial: np.ndarray | None = field(default=None, repr=False)
    name: str = ""

    def __post_init__(self):
        if self.model not in ("reduced", "full"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.model == "reduced":
            bad = [e.kind for e in self.elements if e.kind in (Kind.MW_PULSE, Kind.LASER, Kind.SHAPED)]
            if bad:
                raise ValueError(f"reduced model cannot contain {bad[0].value} elements")
        else:
            if any(e.kind is Kind.RF_PULSE for e in self.elements):
                raise ValueError("RF pulses are only simulated in the reduced model")

    @property
    def duration(self) -> float:
        return float(sum(e.duration for e in self.elements))


@dataclass(frozen=True)
class SimulationResult:
    sweep: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_traj: int
    seed: int

    @property
    def coherence(self) -> np.ndarray:
        """Differential signal mapped back to [-1, 1]."""
        return 2 * self.mean - 1


# --------------------------------------------------------------------------
# builders


def _merge_waits(elements):
    out = []
    for el in elements:
        if el.kind is Kind.WAIT and out and out[-1].kind is Kind.WAIT:
            out[-1] = wait(out[-1].duration + el.duration)
        elif el.kind is Kind.WAIT and el.duration == 0:
            continue
        else:
            out.append(el)
    return out


def _check_wait(d: float) -> float:
    if d < -1e-15:
        raise ValueError("pulse spacing shorter than the pulses themselves")
    return max(d, 0.0)


def pi_train(kind: str, n: int, spacing: float, rabi: float, instantaneous: bool = False,
             edges: bool = True) -> list:
    """``n`` pi pulses with ``spacing`` between centers.

    With ``edges`` a free period of ``spacing/2`` (minus half a pulse)
    precedes the first and follows the last pulse, so the train spans
    ``n * spacing``.
    """
    if n < 1:
        raise ValueError("need at least one pi pulse")
    if kind == "cpmg":
        phases = [np.pi / 2] * n
    elif kind == "xy8":
        if n % 8:
            raise ValueError("XY8 pulse count must be a multiple of 8")
        phases = [XY8_PHASES[k % 8] for k in range(n)]
    else:
        raise ValueError(f"unknown train {kind!r}")
    t_pi = 0.0 if instantaneous else np.pi / rabi
    els = []
    if edges:
        els.append(wait(_check_wait(spacing / 2 - t_pi / 2)))
    for k, ph in enumerate(phases):
        els.append(rf_pulse(np.pi, ph, rabi, instantaneous))
        if k < n - 1:
            els.append(wait(_check_wait(spacing - t_pi)))
    if edges:
        els.append(wait(_check_wait(spacing / 2 - t_pi / 2)))
    return _merge_waits(els)


def build_sequence(kind: str, **p) -> PulseSequence:
    """Canonical sequences.

    Reduced model (RF on the nucleus; ``rabi`` rad/s, times in s):

    - ``rabi``: one pulse of ``duration``; readout = population of |down>.
    - ``ramsey``: pi/2_x, ``tau`` free evolution, final pi/2_{+-x}.
    - ``hahn``: CPMG with ``n=1``.
    - ``cpmg``: pi/2_x - [tau - pi_y - tau] x n - pi/2_{+-x}; ``tau`` is half
      the pi-pulse separation.
    - ``xy8``: as CPMG with pi-pulse phases x,y,x,y,y,x,y,x.

    Full model (needs ``system``):

    - ``spin_pumping``: [MW pi at ``transition`` - laser reset] x n.
    - ``projection_swap``: CnNOTe (MW pi) - CeNOTn (RF pi) - CnNOTe; the
      RF step acts on the nucleus and is represented as an ideal rotation
      in the reset manifold (returns a description, see
      :func:`projection_swap_elements`).
    - ``odmr_step``: MW pi at ``detuning`` followed by a laser reset.
    """
    kind = kind.lower().replace("-", "_")
    inst = bool(p.get("instantaneous", False))
    if kind == "rabi":
        rabi, dur = p["rabi"], p["duration"]
        el = SequenceElement(Kind.RF_PULSE, dur, DriveParams(rabi, 0.0, p.get("phase", 0.0), "RF"),
                             angle=rabi * dur)
        return PulseSequence((el,), readout=Readout("population", state=qm.DOWN), name="rabi",
                             detuning=p.get("detuning", 0.0))
    if kind == "ramsey":
        rabi, tau = p["rabi"], p["tau"]
        t2 = 0.0 if inst else np.pi / 2 / rabi
        els = [rf_pulse(np.pi / 2, 0.0, rabi, inst), wait(_check_wait(tau - t2))]
        return PulseSequence(tuple(_merge_waits(els)), readout=Readout("differential", 0.0, rabi),
                             instantaneous=inst, detuning=p.get("detuning", 0.0), name="ramsey")
    if kind in ("hahn", "cpmg", "xy8"):
        n = 1 if kind == "hahn" else int(p["n"])
        rabi, tau = p["rabi"], p["tau"]
        if n < 1:
            raise ValueError("CPMG order must be >= 1")
        t_half = 0.0 if inst else np.pi / 2 / rabi
        train = pi_train("xy8" if kind == "xy8" else "cpmg", n, 2 * tau, rabi, inst, edges=False)
        t_pi = 0.0 if inst else np.pi / rabi
        edge = wait(_check_wait(tau - t_half / 2 - t_pi / 2))
        els = [rf_pulse(np.pi / 2, 0.0, rabi, inst), edge, *train, edge]
        return PulseSequence(tuple(_merge_waits(els)), readout=Readout("differential", 0.0, rabi),
                             instantaneous=inst, detuning=p.get("detuning", 0.0),
                             name=f"{kind}{n if kind != 'hahn' else ''}")
    if kind == "spin_pumping":
        system: SpinSystemParams = p["system"]
        spec = manifold_spectrum(system)
        t_pi = p.get("mw_pi_duration", 1.4e-6)
        transition = p.get("transition", "MW2")
        det = spec.resonant_detuning(transition)
        one = [mw_pulse(t_pi, np.pi / t_pi, det), laser_reset("down", True, p.get("laser_duration", 5.5e-3))]
        target = 2 if transition == "MW2" else 1
        init = np.kron(qm.pure(qm.DOWN), qm.maximally_mixed(2))
        return PulseSequence(tuple(one * int(p["n"])), model="full",
                             readout=Readout("population", state=spec.vector(target)),
                             initial=init, name="spin_pumping")
    if kind == "odmr_step":
        t_pi = p["pi_duration"]
        els = (mw_pulse(t_pi, p.get("rabi", np.pi / t_pi), p["detuning"]),
               laser_reset(p.get("target", "down"), True, p.get("laser_duration", 5.5e-3)))
        return PulseSequence(els, model="full", readout=Readout("population", state=p.get("state")),
                             name="odmr_step")
    if kind == "projection_swap":
        return projection_swap_elements(**p)
    raise ValueError(f"unknown sequence kind {kind!r}")


@dataclass(frozen=True)
class ProjectionSwap:
    """CnNOTe - CeNOTn - CnNOTe built from two narrowband MW pi pulses and one RF pi pulse."""

    cnot_e: SequenceElement
    cnot_n: SequenceElement
    manifold: str

    @property
    def elements(self) -> tuple:
        return (self.cnot_e, self.cnot_n, self.cnot_e)


def projection_swap_elements(system: SpinSystemParams, mw_rabi: float, rf_rabi: float,
                             transition: str = "MW2", **_) -> ProjectionSwap:
    spec = manifold_spectrum(system)
    t_mw = np.pi / mw_rabi
    mw = mw_pulse(t_mw, mw_rabi, spec.resonant_detuning(transition))
    rf = rf_pulse(np.pi, 0.0, rf_rabi)
    manifold = "up" if transition in ("MW2", "F2") else "down"
    return ProjectionSwap(mw, rf, manifold)


# --------------------------------------------------------------------------
# reduced model


def sequence_propagator(elements: Sequence[SequenceElement], delta, eps) -> np.ndarray:
    """Propagator of a reduced-model element list with frozen errors.

    ``delta`` (rad/s) and ``eps`` broadcast; the result has their shape
    plus ``(2, 2)``.
    """
    delta, eps = np.broadcast_arrays(np.asarray(delta, float), np.asarray(eps, float))
    u = np.broadcast_to(np.eye(2, dtype=complex), delta.shape + (2, 2)).copy()
    for el in elements:
        u = _element_unitary(el, delta, eps) @ u
    return u


def _element_unitary(el: SequenceElement, delta, eps, dt=None):
    dt = el.duration if dt is None else dt
    if el.kind is Kind.WAIT:
        return qm.su2_propagator(delta, 0.0, 0.0, dt)
    if el.kind is Kind.RF_PULSE:
        d = el.drive
        if el.duration == 0:
            # ideal instantaneous rotation, immune to noise
            return qm.su2_propagator(0.0 * delta, np.cos(d.phase), np.sin(d.phase), el.angle)
        w = d.rabi * (1 + eps)
        return qm.su2_propagator(delta + d.detuning, w * np.cos(d.phase), w * np.sin(d.phase), dt)
    raise ValueError(f"{el.kind.value} element not allowed in the reduced model")


@dataclass
class _ReducedState:
    psi: np.ndarray
    delta: np.ndarray
    eps: np.ndarray
    rng: np.random.Generator


def _reduced_init(n: int, noise_d: OUParams, noise_e: OUParams, rng, psi0=None) -> _ReducedState:
    psi = np.zeros((n, 2), dtype=complex)
    if psi0 is None:
        psi[:, 0] = 1.0
    else:
        psi[:] = psi0
    delta = np.asarray(sample_quasistatic(noise_d, rng, n), dtype=float)
    eps = np.asarray(sample_quasistatic(noise_e, rng, n), dtype=float)
    return _ReducedState(psi, delta, eps, rng)


def _apply(u, psi):
    return np.einsum("nij,nj->ni", u, psi)


def _reduced_run(st: _ReducedState, elements, noise_d: OUParams, noise_e: OUParams, det0: float):
    max_p = min(noise_d.tau_c, noise_e.tau_c) / SUBDIVISION
    for el in elements:
        if el.duration == 0:
            if el.kind is Kind.RF_PULSE:
                st.psi = _apply(_element_unitary(el, st.delta, st.eps), st.psi)
            continue
        if el.kind is Kind.WAIT:
            # free precession depends only on the integrated detuning
            st.delta, phase = ou_step_integral(st.delta, el.duration, noise_d, st.rng)
            st.psi = _apply(qm.su2_propagator(phase + det0 * el.duration, 0.0, 0.0, 1.0), st.psi)
            st.eps = ou_step(st.eps, el.duration, noise_e, st.rng)
        elif el.kind is Kind.RF_PULSE:
            k = max(1, int(np.ceil(el.duration / max_p))) if np.isfinite(max_p) else 1
            dt = el.duration / k
            d = el.drive
            for _ in range(k):
                w = d.rabi * (1 + st.eps)
                u = qm.su2_propagator(st.delta + det0 + d.detuning, w * np.cos(d.phase), w * np.sin(d.phase), dt)
                st.psi = _apply(u, st.psi)
                st.delta = ou_step(st.delta, dt, noise_d, st.rng)
                st.eps = ou_step(st.eps, dt, noise_e, st.rng)
        else:
            raise ValueError(f"{el.kind.value} element not allowed in the reduced model")
    return st


def _reduced_readout(st: _ReducedState, seq: PulseSequence, det0: float) -> np.ndarray:
    ro = seq.readout
    if ro.kind == "population":
        state = qm.DOWN if ro.state is None else np.asarray(ro.state, complex)
        return np.abs(st.psi @ state.conj()) ** 2
    if ro.kind == "differential":
        rabi = ro.rabi
        out = []
        for ph in (ro.phase, ro.phase + np.pi):
            el = rf_pulse(np.pi / 2, ph, rabi, seq.instantaneous)
            if el.duration:
                w = rabi * (1 + st.eps)
                u = qm.su2_propagator(st.delta + det0, w * np.cos(ph), w * np.sin(ph), el.duration)
            else:
                u = _element_unitary(el, st.delta, st.eps)
            out.append(np.abs(_apply(u, st.psi)[:, 0]) ** 2)
        return np.clip(0.5 * (1 + out[1] - out[0]), 0.0, 1.0)
    raise ValueError(f"unknown readout {ro.kind!r}")


# --------------------------------------------------------------------------
# full model


def _full_hamiltonians(system: SpinSystemParams, drive: DriveParams, delta_e):
    h0 = hamiltonian_full(system, drive)
    sz = qm.spin_operators(4)["Sz"]
    return h0[None] + np.asarray(delta_e)[:, None, None] * sz[None]


@dataclass
class _FullState:
    rho: np.ndarray
    rng: np.random.Generator


def _full_run(st: _FullState, elements, system: SpinSystemParams, noise_e: OUParams,
              spec=None, shaped_dt: float = 5e-9):
    spec = manifold_spectrum(system) if spec is None else spec
    n = st.rho.shape[0]
    for el in elements:
        if el.kind is Kind.MW_PULSE:
            delta_e = np.asarray(sample_quasistatic(noise_e, st.rng, n), dtype=float)
            u = qm.propagator(_full_hamiltonians(system, el.drive, delta_e), el.duration, check=False)
            st.rho = qm.evolve(st.rho, u)
        elif el.kind is Kind.WAIT:
            u = qm.propagator(hamiltonian_full(system), el.duration, check=False)
            st.rho = qm.evolve(st.rho, u[None])
        elif el.kind is Kind.LASER:
            st.rho = qm.apply_laser_reset(st.rho, el.target, el.dephase, spec.basis(el.target))
        elif el.kind is Kind.SHAPED:
            delta_e = np.asarray(sample_quasistatic(noise_e, st.rng, n), dtype=float)
            durs, rabi, phase = el.shape.segments(shaped_dt)
            for dt, w, ph in zip(durs, rabi, phase):
                drive = DriveParams(abs(w), el.drive.detuning, ph + (np.pi if w < 0 else 0.0))
                u = qm.propagator(_full_hamiltonians(system, drive, delta_e), dt, check=False)
                st.rho = qm.evolve(st.rho, u)
        else:
            raise ValueError(f"{el.kind.value} element not allowed in the full model")
    return st


def _full_readout(st: _FullState, seq: PulseSequence) -> np.ndarray:
    ro = seq.readout
    if ro.kind != "population" or ro.state is None:
        raise ValueError("full model needs a population readout with a state vector")
    return qm.overlap(st.rho, np.asarray(ro.state, complex))


# --------------------------------------------------------------------------
# driver


def _threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("SPINMEM_THREADS", "1") or 1)
    return max(1, int(threads))


def _blocks(n_traj: int, block: int = BLOCK_SIZE):
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    starts = range(0, n_traj, block)
    return [(i, min(block, n_traj - s)) for i, s in enumerate(starts)]


def tree_sum(values: np.ndarray) -> np.ndarray:
    """Pairwise sum along axis 0 in a fixed order."""
    values = np.asarray(values, dtype=float)
    while values.shape[0] > 1:
        if values.shape[0] % 2:
            values = np.concatenate([values, np.zeros((1,) + values.shape[1:])])
        values = values[0::2] + values[1::2]
    return values[0]


def run_blocks(fn, n_traj: int, seed: int, threads: int | None = None):
    """Evaluate ``fn(rng, n, block_index)`` over fixed blocks; results in block order."""
    blocks = _blocks(n_traj)
    jobs = [(make_rng(seed, i), n, i) for i, n in blocks]
    nthreads = _threads(threads)
    if nthreads == 1 or len(jobs) == 1:
        return [fn(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=nthreads) as pool:
        return list(pool.map(lambda j: fn(*j), jobs))


def _aggregate(per_block: list, n_traj: int):
    sums = tree_sum(np.stack([b[0] for b in per_block]))
    sqs = tree_sum(np.stack([b[1] for b in per_block]))
    mean = sums / n_traj
    if n_traj > 1:
        var = np.maximum(sqs - n_traj * mean ** 2, 0.0) / (n_traj - 1)
        se = np.sqrt(var / n_traj)
    else:
        se = np.zeros_like(mean)
    return mean, se


def simulate_sequence(seq: PulseSequence | Sequence[PulseSequence], system: SpinSystemParams | None = None,
                      noise_delta: OUParams = NO_NOISE, noise_eps: OUParams = NO_NOISE,
                      n_traj: int = 1000, seed: int = 0, sweep=None, threads: int | None = None
                      ) -> SimulationResult:
    """Average the readout of one sequence (or a sweep of them) over noise trajectories.

    For the reduced model ``noise_delta`` is the nuclear detuning channel
    and ``noise_eps`` the relative RF amplitude channel. For the full model
    ``noise_delta`` is the electron detuning, drawn independently for each
    MW pulse and frozen during it. Every sweep point reuses the same
    random streams (common random numbers).
    """
    seqs = [seq] if isinstance(seq, PulseSequence) else list(seq)
    if not seqs:
        raise ValueError("empty sequence list")
    sweep = np.arange(len(seqs), dtype=float) if sweep is None else np.asarray(sweep, dtype=float)
    if len(sweep) != len(seqs):
        raise ValueError("sweep and sequence list differ in length")
    models = {s.model for s in seqs}
    if len(models) != 1:
        raise ValueError("all sequences of a sweep must share one model")
    model = models.pop()
    if model == "full" and system is None:
        raise ValueError("the full model needs system parameters")
    spec = manifold_spectrum(system) if model == "full" else None

    def block(rng, n, _i):
        vals = np.empty((len(seqs), n))
        state0 = rng.bit_generator.state
        for k, s in enumerate(seqs):
            rng.bit_generator.state = state0
            if model == "reduced":
                st = _reduced_init(n, noise_delta, noise_eps, rng)
                _reduced_run(st, s.elements, noise_delta, noise_eps, s.detuning)
                vals[k] = _reduced_readout(st, s, s.detuning)
            else:
                rho0 = s.initial if s.initial is not None else np.kron(qm.pure(qm.DOWN), qm.maximally_mixed(2))
                st = _FullState(np.broadcast_to(rho0, (n, 4, 4)).copy(), rng)
                _full_run(st, s.elements, system, noise_delta, spec)
                vals[k] = _full_readout(st, s)
        return vals.sum(axis=1), (vals ** 2).sum(axis=1)

    mean, se = _aggregate(run_blocks(block, n_traj, seed, threads), n_traj)
    return SimulationResult(sweep, mean, se, n_traj, seed)


def simulate_sweep(kind: str, values, param: str, noise_delta: OUParams = NO_NOISE,
                   noise_eps: OUParams = NO_NOISE, n_traj: int = 1000, seed: int = 0,
                   threads: int | None = None, **fixed) -> SimulationResult:
    """Build ``kind`` for each value of ``param`` and simulate the sweep."""
    values = np.asarray(values, dtype=float)
    seqs = [build_sequence(kind, **{**fixed, param: v}) for v in values]
    return simulate_sequence(seqs, fixed.get("system"), noise_delta, noise_eps, n_traj, seed, values, threads)


# --------------------------------------------------------------------------
# memory decay with long XY8 / CPMG trains


def simulate_memory_decay(tau_tilde: float, times, rabi: float, noise_delta: OUParams,
                          noise_eps: OUParams = NO_NOISE, kind: str = "xy8", n_traj: int = 500,
                          seed: int = 0, instantaneous: bool = False, threads: int | None = None
                          ) -> SimulationResult:
    """Coherence of a fixed-spacing decoupling train read out at several total times.

    ``times`` are rounded to whole XY8 cycles (or whole pulses for CPMG).
    Returns the normalized differential signal at each checkpoint.
    """
    unit = 8 if kind == "xy8" else 1
    counts = np.unique(np.maximum(unit, np.round(np.asarray(times) / (tau_tilde * unit)).astype(int) * unit))
    period = pi_train(kind, unit, tau_tilde, rabi, instantaneous, edges=True)
    start = [rf_pulse(np.pi / 2, 0.0, rabi, instantaneous)]
    t_half = 0.0 if instantaneous else np.pi / 2 / rabi
    # absorb the pi/2 duration into the first free period
    first = list(period)
    if first[0].kind is Kind.WAIT:
        first[0] = wait(_check_wait(first[0].duration - t_half / 2))
    seq_shell = PulseSequence((), readout=Readout("differential", 0.0, rabi), instantaneous=instantaneous)

    def block(rng, n, _i):
        st = _reduced_init(n, noise_delta, noise_eps, rng)
        _reduced_run(st, start, noise_delta, noise_eps, 0.0)
        vals = np.empty((len(counts), n))
        done = 0
        for j, c in enumerate(counts):
            while done < c:
                _reduced_run(st, first if done == 0 else period, noise_delta, noise_eps, 0.0)
                done += unit
            vals[j] = _reduced_readout(st, seq_shell, 0.0)
        return vals.sum(axis=1), (vals ** 2).sum(axis=1)

    mean, se = _aggregate(run_blocks(block, n_traj, seed, threads), n_traj)
    return SimulationResult(counts * tau_tilde, mean, se, n_traj, seed)


# --------------------------------------------------------------------------
# spin pumping


@dataclass(frozen=True)
class PumpingResult:
    repetitions: np.ndarray
    polarization: np.ndarray
    stderr: np.ndarray
    n_traj: int
    seed: int


def simulate_spin_pumping(n: int, system: SpinSystemParams, mw_pi_duration: float = 1.4e-6,
                          target_transition: str = "MW2", noise: OUParams = OUParams(2 * np.pi * 146e3),
                          n_traj: int = 1000, seed: int = 0, initial: np.ndarray | None = None,
                          threads: int | None = None) -> PumpingResult:
    """Polarization after each of ``n`` [MW pi - laser reset] repetitions.

    The MW pi pulse (Rabi ``pi / mw_pi_duration``) is resonant with
    ``target_transition``; every pulse sees a fresh quasi-static electron
    detuning. Polarization is the population of ``v2`` when pumping on MW2
    (``v1`` for MW1), starting from ``|down_e> (x) 1/2``.
    """
    if n < 0:
        raise ValueError("repetition count must be non-negative")
    spec = manifold_spectrum(system)
    det = spec.resonant_detuning(target_transition)
    rep = [mw_pulse(mw_pi_duration, np.pi / mw_pi_duration, det), laser_reset("down", True)]
    vec = spec.vector(2 if target_transition == "MW2" else 1)
    rho0 = np.kron(qm.pure(qm.DOWN), qm.maximally_mixed(2)) if initial is None else initial

    def block(rng, m, _i):
        st = _FullState(np.broadcast_to(rho0, (m, 4, 4)).copy(), rng)
        vals = np.empty((n + 1, m))
        vals[0] = qm.overlap(st.rho, vec)
        for k in range(n):
            _full_run(st, rep, system, noise, spec)
            vals[k + 1] = qm.overlap(st.rho, vec)
        return vals.sum(axis=1), (vals ** 2).sum(axis=1)

    mean, se = _aggregate(run_blocks(block, n_traj, seed, threads), n_traj)
    return PumpingResult(np.arange(n + 1), mean, se, n_traj, seed)


# --------------------------------------------------------------------------
# ODMR
#
# After a laser reset with nuclear dephasing the nucleus is diagonal in the
# reset-manifold eigenbasis, so the state between sweep points is a single
# number q (population of n_up). One sweep point maps q linearly:
#   flip probability  P = q f_up + (1 - q) f_dn
#   next population   q' = q g_up + (1 - q) g_dn
# with four transfer functions of the MW detuning.


@dataclass(frozen=True)
class OdmrSettings:
    """Fixed ODMR inputs: MW Rabi frequency, pi duration, electron noise, reset manifold."""

    rabi: float = 2 * np.pi * 349e3
    pi_duration: float | None = None
    sigma_e: float = 2 * np.pi * 146e3
    reset: str = "down"

    @property
    def duration(self) -> float:
        return np.pi / self.rabi if self.pi_duration is None else self.pi_duration


@dataclass(frozen=True)
class OdmrSpectrum:
    """``signal = 1 - P_flip`` per sweep point and the n_up population before each point."""

    omega_mw: np.ndarray
    signal: np.ndarray
    stderr: np.ndarray
    polarization: np.ndarray
    n_avg: int | None
    seed: int | None


def odmr_transfer(system: SpinSystemParams, detuning, settings: OdmrSettings) -> np.ndarray:
    """Transfer functions ``(f_up, f_dn, g_up, g_dn)`` at the given total detunings.

    ``detuning`` (rad/s) includes any electron noise; output shape is
    ``(4,) + detuning.shape``.
    """
    detuning = np.asarray(detuning, dtype=float)
    flat = detuning.ravel()
    spec = manifold_spectrum(system)
    h0 = hamiltonian_full(system, DriveParams(settings.rabi))
    sz = qm.spin_operators(4)["Sz"]
    u = qm.propagator(h0[None] + flat[:, None, None] * sz[None], settings.duration, check=False)
    e = qm.UP if settings.reset == "up" else qm.DOWN
    basis = spec.basis(settings.reset)
    psi0 = np.stack([np.kron(e, basis[:, 0]), np.kron(e, basis[:, 1])], axis=1)
    psi = (u @ psi0).reshape(-1, 2, 2, 2)          # (n, e, n_nuc, initial)
    e_idx = 0 if settings.reset == "up" else 1
    stay = np.sum(np.abs(psi[:, e_idx]) ** 2, axis=1)
    flip = 1 - stay
    amp = np.einsum("xenk,n->xek", psi, basis[:, 0].conj())
    g = np.sum(np.abs(amp) ** 2, axis=1)
    out = np.stack([flip[:, 0], flip[:, 1], g[:, 0], g[:, 1]])
    return np.clip(out, 0.0, 1.0).reshape((4,) + detuning.shape)


def _quadrature(n: int = 24):
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / np.sqrt(2 * np.pi)


def odmr_transfer_mean(system: SpinSystemParams, detuning, settings: OdmrSettings,
                       nodes: int = 24) -> np.ndarray:
    """Transfer functions averaged over the Gaussian electron detuning."""
    detuning = np.asarray(detuning, dtype=float)
    x, w = _quadrature(nodes)
    t = odmr_transfer(system, detuning[..., None] + settings.sigma_e * x, settings)
    return t @ w


def odmr_recurrence(transfer: np.ndarray, p_init) -> tuple[np.ndarray, np.ndarray]:
    """Run the sweep recurrence; ``p_init`` may be an array (leading batch axes).

    Returns ``(signal, q)``, both with shape ``batch + (n_points,)``.
    """
    f_up, f_dn, g_up, g_dn = transfer
    q = np.asarray(p_init, dtype=float)
    q = np.broadcast_to(q, np.broadcast_shapes(q.shape, f_up.shape[:-1])).copy()
    n = f_up.shape[-1]
    qs = np.empty(q.shape + (n,))
    sig = np.empty_like(qs)
    for j in range(n):
        qs[..., j] = q
        sig[..., j] = 1 - (q * f_up[..., j] + (1 - q) * f_dn[..., j])
        q = q * g_up[..., j] + (1 - q) * g_dn[..., j]
    return sig, qs


def _check_monotone(omega_mw: np.ndarray):
    d = np.diff(omega_mw)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("ODMR sweep must be strictly monotone")


def simulate_odmr(omega_mw, system: SpinSystemParams, p_init: float = 0.5,
                  settings: OdmrSettings = OdmrSettings(), n_avg: int | None = 200,
                  seed: int = 0, threads: int | None = None) -> OdmrSpectrum:
    """Swept-frequency ODMR with nuclear memory between sweep points.

    ``omega_mw`` is the MW angular frequency in sweep order (ascending or
    descending). The electron detuning is ``gamma_e_eff * b_z - omega_mw``
    plus a fresh quasi-static noise draw for every pulse. ``n_avg`` passes
    are averaged; ``n_avg=None`` returns the infinite-average limit.
    """
    omega_mw = np.asarray(omega_mw, dtype=float)
    if omega_mw.ndim != 1 or omega_mw.size < 2:
        raise ValueError("need a 1-D sweep with at least two points")
    _check_monotone(omega_mw)
    if not 0 <= p_init <= 1:
        raise ValueError("p_init must lie in [0, 1]")
    delta = system.gamma_e_eff * system.b_z - omega_mw
    if n_avg is None:
        sig, q = odmr_recurrence(odmr_transfer_mean(system, delta, settings), p_init)
        return OdmrSpectrum(omega_mw, sig, np.zeros_like(sig), q, None, None)

    def block(rng, m, _i):
        noise = settings.sigma_e * rng.standard_normal((m, delta.size))
        t = odmr_transfer(system, delta[None, :] + noise, settings)
        sig, q = odmr_recurrence(t, np.full(m, float(p_init)))
        return np.concatenate([sig.sum(0), q.sum(0)]), np.concatenate([(sig ** 2).sum(0), (q ** 2).sum(0)])

    mean, se = _aggregate(run_blocks(block, n_avg, seed, threads), n_avg)
    n = delta.size
    return OdmrSpectrum(omega_mw, mean[:n], se[:n], mean[n:], n_avg, seed)
