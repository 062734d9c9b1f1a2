"""Dense linear algebra for one spin-1/2 (dim 2) and an electron-nuclear pair (dim 4).

Basis conventions
-----------------
Single spin: index 0 = |up> (Sz = +1/2), index 1 = |down>.
Pair: kron(electron, nucleus), i.e. |e n> with index 2*e + n.

Density matrices and operators are plain ``numpy`` arrays. Most functions
accept stacks of matrices (leading batch axes) so that Monte Carlo
ensembles can be propagated in one call.
"""
from __future__ import annotations

import numpy as np

TRACE_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
UNITARY_TOL = 1e-10
NORM_TOL = 1e-9

_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
_SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
_ID2 = np.eye(2, dtype=complex)

UP = np.array([1, 0], dtype=complex)
DOWN = np.array([0, 1], dtype=complex)


def spin_operators(dim: int) -> dict[str, np.ndarray]:
    """Spin-1/2 operators (Pauli / 2).

    For ``dim=2`` returns ``Sx, Sy, Sz``. For ``dim=4`` the electron
    operators are embedded as ``S (x) 1`` and the nuclear ones as
    ``1 (x) I``; keys ``Sx, Sy, Sz, Ix, Iy, Iz``.
    """
    if dim == 2:
        return {"Sx": _SX.copy(), "Sy": _SY.copy(), "Sz": _SZ.copy()}
    if dim == 4:
        ops = {}
        for name, s in (("x", _SX), ("y", _SY), ("z", _SZ)):
            ops["S" + name] = np.kron(s, _ID2)
            ops["I" + name] = np.kron(_ID2, s)
        return ops
    raise ValueError(f"unsupported dimension {dim}; expected 2 or 4")


def dagger(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2).conj()


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= tol * scale)


def check_density_matrix(rho: np.ndarray, tol: float = TRACE_TOL) -> None:
    """Raise ``ValueError`` unless ``rho`` (or every matrix in a stack) is a state."""
    rho = np.asarray(rho)
    if rho.shape[-1] not in (2, 4) or rho.shape[-1] != rho.shape[-2]:
        raise ValueError(f"density matrix must be 2x2 or 4x4, got {rho.shape}")
    tr = np.trace(rho, axis1=-2, axis2=-1)
    if np.max(np.abs(tr - 1)) > tol:
        raise ValueError("density matrix trace deviates from 1")
    if not is_hermitian(rho, HERMITIAN_TOL):
        raise ValueError("density matrix is not Hermitian")
    if np.min(np.linalg.eigvalsh(rho)) < -PSD_TOL:
        raise ValueError("density matrix has negative eigenvalues")


def pure(psi: np.ndarray) -> np.ndarray:
    """Projector onto a state vector (normalized on the way)."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex) / dim


def _su2(h: np.ndarray, dt) -> np.ndarray:
    # Closed form for exp(-i h dt), h = a0*1 + a.sigma/2 Hermitian 2x2.
    a0 = 0.5 * (h[..., 0, 0] + h[..., 1, 1]).real
    az = (h[..., 0, 0] - h[..., 1, 1]).real
    ax = 2 * h[..., 1, 0].real
    ay = 2 * h[..., 1, 0].imag
    return su2_propagator(az, ax, ay, dt) * np.exp(-1j * a0 * dt)[..., None, None]


def su2_propagator(wz, wx, wy, dt) -> np.ndarray:
    """``exp(-i dt (wz Sz + wx Sx + wy Sy))`` for broadcastable arrays of rates."""
    wz, wx, wy, dt = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (wz, wx, wy, dt)))
    norm = np.sqrt(wz * wz + wx * wx + wy * wy)
    half = 0.5 * norm * dt
    c = np.cos(half)
    # sin(half)/norm, with the norm -> 0 limit dt/2
    s = np.where(norm > 0, np.sin(half) / np.where(norm > 0, norm, 1.0), 0.5 * dt)
    u = np.empty(wz.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * s * wz
    u[..., 1, 1] = c + 1j * s * wz
    u[..., 0, 1] = -1j * s * (wx - 1j * wy)
    u[..., 1, 0] = -1j * s * (wx + 1j * wy)
    return u


def propagator(h: np.ndarray, dt, check: bool = True) -> np.ndarray:
    """Unitary ``exp(-i h dt)`` of a Hermitian generator (or stack of them).

    2x2 generators use the closed-form Pauli decomposition; larger ones a
    Hermitian eigendecomposition.
    """
    h = np.asarray(h, dtype=complex)
    if check and not is_hermitian(h):
        raise ValueError("Hamiltonian is not Hermitian")
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ValueError("time step must be non-negative")
    if h.shape[-1] == 2:
        return _su2(h, dt)
    w, v = np.linalg.eigh(h)
    phases = np.exp(-1j * w * dt[..., None])
    return (v * phases[..., None, :]) @ dagger(v)


def evolve(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``u rho u^dagger``."""
    return u @ rho @ dagger(u)


def propagate(rho: np.ndarray, h: np.ndarray, dt) -> np.ndarray:
    """Evolve ``rho`` for time ``dt`` under the time-independent Hamiltonian ``h``."""
    return evolve(rho, propagator(h, dt))


def trace_electron(rho: np.ndarray) -> np.ndarray:
    """Nuclear reduced state Tr_e(rho) of a 4x4 (stack)."""
    r = np.asarray(rho).reshape(rho.shape[:-2] + (2, 2, 2, 2))
    return np.einsum("...aiaj->...ij", r)


def trace_nucleus(rho: np.ndarray) -> np.ndarray:
    """Electron reduced state Tr_n(rho) of a 4x4 (stack)."""
    r = np.asarray(rho).reshape(rho.shape[:-2] + (2, 2, 2, 2))
    return np.einsum("...iaja->...ij", r)


def dephase(rho: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Zero the coherences of ``rho`` in the orthonormal ``basis`` (columns)."""
    r = dagger(basis) @ rho @ basis
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return (basis * d[..., None, :]) @ dagger(basis)


def apply_laser_reset(
    rho: np.ndarray,
    target: str,
    dephase_nuclear: bool = False,
    nuclear_basis: np.ndarray | None = None,
) -> np.ndarray:
    """Optical re-initialization of the electron.

    The electron is replaced by ``|target><target|`` while the nuclear
    marginal is kept. With ``dephase_nuclear`` the nuclear coherences are
    removed in ``nuclear_basis`` (columns; defaults to the bare z basis),
    which is the uniform-random-phase average of free precession in the
    target manifold.
    """
    rho = np.asarray(rho)
    if rho.shape[-1] != 4:
        raise ValueError("laser reset acts on the 4-level electron-nuclear state")
    if target in ("up", "↑e", "up_e"):
        e = UP
    elif target in ("down", "↓e", "down_e"):
        e = DOWN
    else:
        raise ValueError(f"unknown reset target {target!r}")
    rho_n = trace_electron(rho)
    if dephase_nuclear:
        basis = _ID2 if nuclear_basis is None else np.asarray(nuclear_basis, dtype=complex)
        rho_n = dephase(rho_n, basis)
    proj_e = np.outer(e, e.conj())
    return np.einsum("ab,...ij->...aibj", proj_e, rho_n).reshape(rho.shape)


def overlap(rho: np.ndarray, psi: np.ndarray) -> np.ndarray | float:
    """Population ``<psi|rho|psi>`` of a normalized state."""
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > NORM_TOL:
        raise ValueError(f"state vector is not normalized (|psi| = {norm})")
    if psi.shape[-1] != np.shape(rho)[-1]:
        raise ValueError("dimension mismatch between state and density matrix")
    val = np.einsum("i,...ij,j->...", psi.conj(), rho, psi).real
    val = np.clip(val, 0.0, 1.0)
    return float(val) if np.ndim(val) == 0 else val


def purity(rho: np.ndarray) -> np.ndarray | float:
    val = np.einsum("...ij,...ji->...", rho, rho).real
    return float(val) if np.ndim(val) == 0 else val
