"""Hamiltonians of the electron / 13C pair and their nuclear-manifold structure.

All frequencies are angular (rad/s). Use :func:`hz` to convert from cycles/s.
The pair Hamiltonian in the electron rotating frame is::

    H = D Sz + W (cos(p) Sx + sin(p) Sy) - gn B Iz + Azx Sz Ix + Azz Sz Iz

For a fixed electron state (Sz = +-1/2) the nucleus sees the field
``(+-Azx/2, +-Azz/2 - gn B)`` in the (x, z) plane. Its magnitude is the
nuclear transition frequency of that manifold: ``omega_rf2`` for the up
manifold and ``omega_rf1`` for the down manifold.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quantum import DOWN, UP, spin_operators

TWO_PI = 2 * np.pi

#: 13C gyromagnetic ratio, rad/s/T.
GAMMA_C13 = TWO_PI * 10.7084e6

_OPS4 = spin_operators(4)
_OPS2 = spin_operators(2)


def hz(value):
    """Cycles/s to rad/s."""
    return TWO_PI * np.asarray(value, dtype=float) if np.ndim(value) else TWO_PI * float(value)


class InconsistentInputs(ValueError):
    """Transition frequencies and field admit no real hyperfine coupling."""


@dataclass(frozen=True)
class SpinSystemParams:
    """Secular hyperfine pair. ``a_zx, a_zz`` rad/s, ``b_z`` T, ratios rad/s/T."""

    a_zx: float
    a_zz: float
    b_z: float
    gamma_n: float = GAMMA_C13
    gamma_e_eff: float = TWO_PI * 31.6148e9

    def __post_init__(self):
        if not self.b_z > 0:
            raise ValueError("b_z must be positive")
        if not self.gamma_n > 0:
            raise ValueError("gamma_n must be positive")
        if self.a_zx < 0:
            raise ValueError("a_zx must be non-negative (sign convention)")

    @property
    def larmor_n(self) -> float:
        """Bare nuclear Larmor frequency gamma_n * B."""
        return self.gamma_n * self.b_z

    @classmethod
    def from_frequencies(cls, omega_rf1: float, omega_rf2: float, b_z: float,
                         gamma_n: float = GAMMA_C13, **kw) -> "SpinSystemParams":
        a_zz, a_zx = hyperfine_from_frequencies(omega_rf1, omega_rf2, b_z, gamma_n)
        return cls(a_zx=a_zx, a_zz=a_zz, b_z=b_z, gamma_n=gamma_n, **kw)


#: Nuclear transition frequencies measured by nuclear Ramsey fringes.
OMEGA_RF1 = hz(2489.73e3)
OMEGA_RF2 = hz(493.62e3)
B_FIT = 97.159e-3


def reference_system() -> SpinSystemParams:
    """GeV / 13C pair with the fitted couplings at B = 97.159 mT."""
    return SpinSystemParams(a_zx=hz(602.81e3), a_zz=hz(2862.34e3), b_z=B_FIT)


@dataclass(frozen=True)
class DriveParams:
    """Rotating-frame drive: Rabi frequency, detuning and phase (rad/s, rad/s, rad)."""

    rabi: float
    detuning: float = 0.0
    phase: float = 0.0
    channel: str = "MW"

    def __post_init__(self):
        if self.rabi < 0:
            raise ValueError("Rabi frequency must be non-negative")
        if self.channel not in ("MW", "RF"):
            raise ValueError(f"unknown channel {self.channel!r}")


def hamiltonian_full(params: SpinSystemParams, drive: DriveParams | None = None,
                     delta_extra: float = 0.0) -> np.ndarray:
    """4x4 pair Hamiltonian in the electron rotating frame."""
    o = _OPS4
    h = (-params.larmor_n * o["Iz"]
         + params.a_zx * o["Sz"] @ o["Ix"]
         + params.a_zz * o["Sz"] @ o["Iz"])
    detuning = delta_extra
    if drive is not None:
        detuning += drive.detuning
        h = h + drive.rabi * (np.cos(drive.phase) * o["Sx"] + np.sin(drive.phase) * o["Sy"])
    return h + detuning * o["Sz"]


def hamiltonian_reduced(delta: float, rabi: float, eps: float = 0.0,
                        phase: float = 0.0) -> np.ndarray:
    """Two-level nuclear Hamiltonian after the RWA, with detuning and amplitude errors."""
    if abs(eps) >= 1:
        raise ValueError("relative amplitude error must satisfy |eps| < 1")
    o = _OPS2
    w = rabi * (1 + eps)
    return delta * o["Sz"] + w * (np.cos(phase) * o["Sx"] + np.sin(phase) * o["Sy"])


def nuclear_block(params: SpinSystemParams, electron: str) -> np.ndarray:
    """2x2 nuclear Hamiltonian for a fixed electron state (drive and detuning off)."""
    m = _electron_sign(electron) * 0.5
    o = _OPS2
    return (m * params.a_zz - params.larmor_n) * o["Sz"] + m * params.a_zx * o["Sx"]


def _electron_sign(electron: str) -> int:
    if electron in ("up", "↑e"):
        return 1
    if electron in ("down", "↓e"):
        return -1
    raise ValueError(f"unknown electron state {electron!r}")


@dataclass(frozen=True)
class ManifoldSpectrum:
    """Nuclear structure of both electron manifolds.

    ``basis_up`` / ``basis_down`` hold the nuclear eigenvectors as columns,
    ordered ``[n_up, n_down]`` where ``n_up`` is the eigenvector closest to
    the bare |up_n>. ``energies_*`` are the matching eigenvalues.

    Pair eigenvectors: ``v1 = |dn_e> n_down``, ``v2 = |dn_e> n_up`` (down
    manifold), ``v3 = |up_e> n_down``, ``v4 = |up_e> n_up`` (up manifold).
    """

    omega_rf1: float
    omega_rf2: float
    theta_up: float
    theta_down: float
    basis_up: np.ndarray = field(repr=False)
    basis_down: np.ndarray = field(repr=False)
    energies_up: np.ndarray = field(repr=False)
    energies_down: np.ndarray = field(repr=False)

    @property
    def axis_angle(self) -> float:
        """Angle between the two nuclear quantization axes (as undirected lines)."""
        a = abs(self.theta_up - self.theta_down) % np.pi
        return min(a, np.pi - a)

    def basis(self, electron: str) -> np.ndarray:
        return self.basis_up if _electron_sign(electron) > 0 else self.basis_down

    def vector(self, i: int, flipped: bool = False) -> np.ndarray:
        """Pair eigenvector ``v_i`` (1..4); ``flipped`` gives ``(sigma_x (x) 1) v_i``."""
        table = {
            1: (DOWN, self.basis_down[:, 1]),
            2: (DOWN, self.basis_down[:, 0]),
            3: (UP, self.basis_up[:, 1]),
            4: (UP, self.basis_up[:, 0]),
        }
        if i not in table:
            raise ValueError("eigenvector index must be 1..4")
        e, n = table[i]
        if flipped:
            e = UP if e is DOWN else DOWN
        return np.kron(e, n)

    def transition_offsets(self) -> dict[str, float]:
        """MW transition frequencies relative to the bare electron frequency (rad/s).

        ``MW1`` (v2 -> v4) and ``MW2`` (v1 -> v3) conserve the nuclear
        projection; ``F1`` (v1 -> v4) and ``F2`` (v2 -> v3) are the
        electron-nuclear flip transitions made partially allowed by A_zx.
        """
        eu_up, eu_dn = self.energies_up
        ed_up, ed_dn = self.energies_down
        return {
            "MW1": eu_up - ed_up,
            "MW2": eu_dn - ed_dn,
            "F1": eu_up - ed_dn,
            "F2": eu_dn - ed_up,
        }

    def resonant_detuning(self, transition: str) -> float:
        """Rotating-frame detuning D that puts the drive on ``transition``."""
        return -self.transition_offsets()[transition]


def _nuclear_eigen(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(h)
    # order [n_up, n_down] by overlap with the bare |up_n>
    if abs(v[0, 1]) > abs(v[0, 0]):
        w, v = w[::-1], v[:, ::-1]
    # fix the gauge: real, non-negative leading component of each column
    for k in range(2):
        j = 0 if k == 0 else 1
        ph = v[j, k] / abs(v[j, k])
        v[:, k] = v[:, k] / ph
    return w.real.copy(), v.copy()


def manifold_spectrum(params: SpinSystemParams) -> ManifoldSpectrum:
    gnb = params.larmor_n
    hx, hz_ = params.a_zx / 2, params.a_zz / 2
    w_rf2 = float(np.hypot(hz_ - gnb, hx))
    w_rf1 = float(np.hypot(hz_ + gnb, hx))
    theta_up = float(np.arctan2(hx, hz_ - gnb))
    theta_down = float(np.arctan2(-hx, -hz_ - gnb))
    e_up, b_up = _nuclear_eigen(nuclear_block(params, "up"))
    e_dn, b_dn = _nuclear_eigen(nuclear_block(params, "down"))
    return ManifoldSpectrum(w_rf1, w_rf2, theta_up, theta_down, b_up, b_dn, e_up, e_dn)


def hyperfine_from_frequencies(omega_rf1: float, omega_rf2: float, b_z: float,
                               gamma_n: float = GAMMA_C13) -> tuple[float, float]:
    """Invert the manifold splittings to ``(A_zz, A_zx)``.

    Raises :class:`InconsistentInputs` if the field cannot produce the two
    splittings with a real ``A_zx``.
    """
    if not (omega_rf1 > omega_rf2 > 0):
        raise InconsistentInputs("require omega_rf1 > omega_rf2 > 0")
    if not b_z > 0:
        raise InconsistentInputs("b_z must be positive")
    gnb = gamma_n * b_z
    a_zz = (omega_rf1 ** 2 - omega_rf2 ** 2) / (2 * gnb)
    disc = 4 * omega_rf2 ** 2 - (a_zz - 2 * gnb) ** 2
    if disc < 0:
        # roundoff at the A_zx = 0 boundary
        if disc > -1e-12 * 4 * omega_rf2 ** 2:
            disc = 0.0
        else:
            raise InconsistentInputs(
                f"negative discriminant {disc:.3e}: no real A_zx for these inputs")
    return float(a_zz), float(np.sqrt(disc))
