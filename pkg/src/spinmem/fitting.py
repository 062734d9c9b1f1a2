"""Global and local fitting of the swept ODMR model to a set of spectra.

Each spectrum is described by the electron frequency ``c_i = gamma_e_eff * B_i``
(which places the lines) and by the field ``B_i`` itself, which enters
through the hyperfine parameters inverted from the fixed nuclear
frequencies and sets the mixing of the nuclear eigenbases. The global
search runs over ``(gamma_e_eff, c_1..c_n)`` with ``B_i = c_i / gamma_e_eff``.
The spectra are linear in the initial nuclear population ``p_i``, so
``p_i`` is solved in closed form for every candidate.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.interpolate import RegularGridInterpolator

from .analytics import FitFailure
from .sequences import OdmrSettings, odmr_recurrence, odmr_transfer_mean
from .spin_model import (
    GAMMA_C13,
    OMEGA_RF1,
    OMEGA_RF2,
    TWO_PI,
    SpinSystemParams,
    hyperfine_from_frequencies,
)

#: default effective electron gyromagnetic ratio (rad/s/T)
GAMMA_E_EFF = TWO_PI * 31.6148e9


def r_squared(data, model) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    data = np.asarray(data, dtype=float)
    model = np.asarray(model, dtype=float)
    ss_tot = np.sum((data - data.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("data has zero variance")
    return float(1 - np.sum((data - model) ** 2) / ss_tot)


# --------------------------------------------------------------------------
# generic optimizers


@dataclass(frozen=True)
class DEResult:
    x: np.ndarray
    fun: float
    n_eval: int
    initial_best: float


def differential_evolution(objective: Callable, bounds, population: int = 64, generations: int = 150,
                           mutation: float = 0.7, crossover: float = 0.9, seed: int = 0,
                           vectorized: bool = False) -> DEResult:
    """DE/rand/1/bin with an explicit population size.

    ``objective`` takes one vector, or with ``vectorized`` an array of shape
    ``(dim, n)`` and returns ``n`` values. Deterministic given ``seed``.
    """
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or not np.all(np.isfinite(bounds)):
        raise ValueError("bounds must be a finite (dim, 2) array")
    if np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError("each upper bound must exceed its lower bound")
    if population < 4:
        raise ValueError("population must be at least 4")
    if not 0.5 <= mutation <= 1.0:
        raise ValueError("mutation factor must lie in [0.5, 1]")
    if not 0.7 <= crossover <= 0.95:
        raise ValueError("crossover rate must lie in [0.7, 0.95]")
    rng = np.random.default_rng(seed)
    lo, hi = bounds[:, 0], bounds[:, 1]
    init = lo + rng.random((population, len(lo))) * (hi - lo)
    first = objective(init.T) if vectorized else np.array([objective(x) for x in init])
    res = optimize.differential_evolution(
        objective, bounds, strategy="rand1bin", maxiter=generations, init=init,
        mutation=mutation, recombination=crossover, rng=rng, polish=False, tol=0.0,
        updating="deferred" if vectorized else "immediate", vectorized=vectorized,
    )
    return DEResult(np.asarray(res.x), float(res.fun), int(res.nfev), float(np.min(first)))


@dataclass(frozen=True)
class LocalFit:
    x: np.ndarray
    stderr: np.ndarray
    cost: float
    n_eval: int


def refine_least_squares(residuals: Callable, start, bounds=None, x_scale=None) -> LocalFit:
    """Local least-squares refinement; raises :class:`FitFailure` if it does not converge."""
    start = np.asarray(start, dtype=float)
    if not np.all(np.isfinite(residuals(start))):
        raise FitFailure("residuals are not finite at the starting point", float("nan"))
    b = (-np.inf, np.inf) if bounds is None else (np.asarray(bounds)[:, 0], np.asarray(bounds)[:, 1])
    res = optimize.least_squares(residuals, start, bounds=b, x_scale="jac" if x_scale is None else x_scale,
                                 method="trf", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=400)
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitFailure(f"local refinement did not converge: {res.message}", float(np.sum(res.fun ** 2)))
    dof = max(1, res.fun.size - res.x.size)
    s2 = np.sum(res.fun ** 2) / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        se = np.full(res.x.size, np.nan)
    return LocalFit(res.x, se, float(np.sum(res.fun ** 2)), int(res.nfev))


# --------------------------------------------------------------------------
# ODMR


@dataclass(frozen=True)
class OdmrData:
    """One measured spectrum: MW angular frequency in sweep order and normalized signal."""

    omega_mw: np.ndarray
    signal: np.ndarray
    reset: str = "down"

    def __post_init__(self):
        w = np.asarray(self.omega_mw, float)
        if w.shape != np.shape(self.signal) or w.ndim != 1 or w.size < 4:
            raise ValueError("frequency and signal must be 1-D arrays of equal length (>= 4)")
        d = np.diff(w)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sweep must be strictly monotone")
        if self.reset not in ("up", "down"):
            raise ValueError("reset must be 'up' or 'down'")

    @property
    def direction(self) -> str:
        return "ascending" if self.omega_mw[1] > self.omega_mw[0] else "descending"


@dataclass(frozen=True)
class OdmrFixed:
    """Inputs held fixed during the fit."""

    omega_rf1: float = OMEGA_RF1
    omega_rf2: float = OMEGA_RF2
    rabi: float = TWO_PI * 349e3
    sigma_e: float = TWO_PI * 146e3
    gamma_n: float = GAMMA_C13

    def settings(self, reset: str) -> OdmrSettings:
        return OdmrSettings(rabi=self.rabi, sigma_e=self.sigma_e, reset=reset)

    def system(self, b_z: float, gamma_e_eff: float = GAMMA_E_EFF) -> SpinSystemParams:
        return SpinSystemParams.from_frequencies(self.omega_rf1, self.omega_rf2, b_z, self.gamma_n,
                                                 gamma_e_eff=gamma_e_eff)


@dataclass(frozen=True)
class OdmrBudget:
    population: int = 64
    generations: int = 150
    gamma_range: tuple = (GAMMA_E_EFF * (1 - 2e-3), GAMMA_E_EFF * (1 + 2e-3))
    center_window: float = TWO_PI * 100e3
    b_guess: tuple = (96.9e-3, 97.4e-3)
    b_points: int = 33
    detuning_step: float = TWO_PI * 2e3
    quadrature: int = 16
    r2_threshold: float = 0.97


@dataclass
class OdmrFitResult:
    gamma_e_eff: float
    b: np.ndarray
    p: np.ndarray
    gamma_refined: np.ndarray
    r2: np.ndarray
    stderr: dict
    a_zz: np.ndarray
    a_zx: np.ndarray
    n_eval: int
    warning: bool
    model: list = field(default_factory=list, repr=False)

    @property
    def a_zz_mean(self) -> float:
        return float(np.mean(self.a_zz))

    @property
    def a_zx_mean(self) -> float:
        return float(np.mean(self.a_zx))

    def to_dict(self) -> dict:
        rows = []
        for i in range(len(self.b)):
            rows.append({
                "spectrum": i,
                "b_t": float(self.b[i]),
                "b_stderr_t": float(self.stderr["b"][i]),
                "p_up": float(self.p[i]),
                "p_stderr": float(self.stderr["p"][i]),
                "gamma_e_eff_hz_per_t": float(self.gamma_refined[i] / TWO_PI),
                "a_zz_hz": float(self.a_zz[i] / TWO_PI),
                "a_zx_hz": float(self.a_zx[i] / TWO_PI),
                "r2": float(self.r2[i]),
            })
        return {
            "gamma_e_eff_hz_per_t": self.gamma_e_eff / TWO_PI,
            "a_zz_mean_hz": self.a_zz_mean / TWO_PI,
            "a_zx_mean_hz": self.a_zx_mean / TWO_PI,
            "evaluations": self.n_eval,
            "warning": bool(self.warning),
            "spectra": rows,
        }


class OdmrSurrogate:
    """Noise-averaged transfer functions tabulated on a (B, detuning) grid.

    The electron noise is integrated by Gauss-Hermite quadrature, which is
    the infinite-average limit of the Monte Carlo spectra. Values between
    grid nodes are interpolated linearly.
    """

    def __init__(self, fixed: OdmrFixed, reset: str, b_range, detuning_range, b_points: int = 33,
                 detuning_step: float = TWO_PI * 2e3, quadrature: int = 16):
        self.b_grid = np.linspace(b_range[0], b_range[1], b_points)
        n_d = int(np.ceil((detuning_range[1] - detuning_range[0]) / detuning_step)) + 1
        self.d_grid = np.linspace(detuning_range[0], detuning_range[1], n_d)
        settings = fixed.settings(reset)
        table = np.stack([odmr_transfer_mean(fixed.system(b), self.d_grid, settings, quadrature)
                          for b in self.b_grid])                   # (nB, 4, nD)
        self._interp = RegularGridInterpolator((self.b_grid, self.d_grid), np.moveaxis(table, 1, -1),
                                               bounds_error=False, fill_value=None)

    def __call__(self, b, detuning) -> np.ndarray:
        b, detuning = np.broadcast_arrays(np.asarray(b, float), np.asarray(detuning, float))
        pts = np.stack([b, detuning], axis=-1)
        return np.moveaxis(self._interp(pts), -1, 0)


def _basis_spectra(transfer):
    """Spectra for p = 1 and p = 0; the spectrum is linear in p."""
    sig, _ = odmr_recurrence(transfer[:, None], np.array([1.0, 0.0]).reshape((2,) + (1,) * (transfer.ndim - 2)))
    return sig[0], sig[1]


def _best_p(data, s_up, s_dn):
    d = s_up - s_dn
    den = np.sum(d * d, axis=-1)
    p = np.where(den > 0, np.sum((data - s_dn) * d, axis=-1) / np.where(den > 0, den, 1), 0.5)
    return np.clip(p, 0.0, 1.0)


def model_spectrum(data: OdmrData, fixed: OdmrFixed, gamma_e_eff: float, b: float, p: float,
                   quadrature: int = 16) -> np.ndarray:
    """Noise-averaged model signal evaluated exactly at the measured sweep points."""
    transfer = odmr_transfer_mean(fixed.system(b, gamma_e_eff), gamma_e_eff * b - np.asarray(data.omega_mw),
                                  fixed.settings(data.reset), quadrature)
    sig, _ = odmr_recurrence(transfer, p)
    return sig


def scan_center(data: OdmrData, fixed: OdmrFixed, b_z: float, step: float = TWO_PI * 5e3,
                quadrature: int = 16) -> float:
    """Electron frequency that best places the model lines over the sweep.

    Coarse template scan at fixed ``b_z`` with the initial population
    solved in closed form; used to seed the global search.
    """
    w = np.asarray(data.omega_mw, float)
    span = w.max() - w.min()
    grid = np.arange(-span, span + step, step)
    tr = odmr_transfer_mean(fixed.system(b_z), grid, fixed.settings(data.reset), quadrature)
    centers = np.arange(w.min(), w.max() + step, step)
    det = centers[:, None] - w[None, :]
    table = np.stack([np.interp(det, grid, t) for t in tr])
    s_up, s_dn = _basis_spectra(table)
    p = _best_p(data.signal, s_up, s_dn)
    model = p[:, None] * s_up + (1 - p[:, None]) * s_dn
    return float(centers[np.argmin(np.sum((model - data.signal) ** 2, axis=-1))])


def fit_odmr(spectra: Sequence[OdmrData], fixed: OdmrFixed = OdmrFixed(), budget: OdmrBudget = OdmrBudget(),
             seed: int = 0, centers=None) -> OdmrFitResult:
    """Fit shared ``gamma_e_eff`` and per-spectrum ``(B_i, p_i)``.

    Global stage: DE over ``(gamma_e_eff, c_i)`` on the summed squared
    residuals of all spectra. Local stage: per spectrum, ``c_i`` is held
    fixed and ``(B_i, p_i)`` are refined against the exact noise-averaged
    model, so ``gamma_i = c_i / B_i``. Hyperfine parameters follow from
    each fitted ``B_i``. ``warning`` is set if any R^2 is below
    ``budget.r2_threshold``.
    """
    spectra = list(spectra)
    if not spectra:
        raise ValueError("need at least one spectrum")
    n = len(spectra)
    if centers is None:
        b_mid = np.mean(budget.b_guess)
        centers = [scan_center(s, fixed, b_mid, quadrature=budget.quadrature) for s in spectra]
    c_bounds = [(c - budget.center_window, c + budget.center_window) for c in centers]
    g_lo, g_hi = budget.gamma_range
    b_lo = min(cb[0] for cb in c_bounds) / g_hi
    b_hi = max(cb[1] for cb in c_bounds) / g_lo
    surrogates = {}
    for reset in sorted({s.reset for s in spectra}):
        sel = [i for i, s in enumerate(spectra) if s.reset == reset]
        d_lo = min(c_bounds[i][0] - np.max(spectra[i].omega_mw) for i in sel)
        d_hi = max(c_bounds[i][1] - np.min(spectra[i].omega_mw) for i in sel)
        surrogates[reset] = OdmrSurrogate(fixed, reset, (b_lo, b_hi), (d_lo, d_hi), budget.b_points,
                                          budget.detuning_step, budget.quadrature)

    def objective(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]                                        # (dim, m)
        gamma = x[0]
        total = np.zeros(x.shape[1])
        for i, s in enumerate(spectra):
            c = x[1 + i]
            b = c / gamma
            det = c[:, None] - np.asarray(s.omega_mw)[None, :]
            tr = surrogates[s.reset](b[:, None], det)            # (4, m, n_pts)
            s_up, s_dn = _basis_spectra(tr)
            p = _best_p(s.signal, s_up, s_dn)
            model = p[:, None] * s_up + (1 - p[:, None]) * s_dn
            total += np.sum((model - s.signal) ** 2, axis=-1)
        return total

    bounds = [(g_lo, g_hi)] + c_bounds
    de = differential_evolution(objective, bounds, budget.population, budget.generations, seed=seed,
                                vectorized=True)
    gamma = float(de.x[0])
    n_eval = de.n_eval * budget.population

    b_fit, p_fit, b_se, p_se, r2, models = [], [], [], [], [], []
    for i, s in enumerate(spectra):
        c = float(de.x[1 + i])
        b0 = c / gamma
        tr = surrogates[s.reset](b0, c - np.asarray(s.omega_mw))
        s_up, s_dn = _basis_spectra(tr[:, None])
        p0 = float(_best_p(s.signal, s_up, s_dn)[0])

        def resid(v, s=s, c=c):
            return model_spectrum(s, fixed, c / v[0], v[0], v[1], budget.quadrature) - s.signal

        scale = np.array([b0 * 1e-4, 0.05])
        loc = refine_least_squares(resid, [b0, min(max(p0, 1e-6), 1 - 1e-6)],
                                   bounds=[(b_lo, b_hi), (0.0, 1.0)], x_scale=scale)
        n_eval += loc.n_eval
        b_fit.append(loc.x[0])
        p_fit.append(loc.x[1])
        b_se.append(loc.stderr[0])
        p_se.append(loc.stderr[1])
        m = resid(loc.x) + s.signal
        models.append(m)
        r2.append(r_squared(s.signal, m))

    b_fit = np.array(b_fit)
    c_fit = de.x[1:]
    hf = [hyperfine_from_frequencies(fixed.omega_rf1, fixed.omega_rf2, b, fixed.gamma_n) for b in b_fit]
    r2 = np.array(r2)
    warn = bool(np.any(r2 < budget.r2_threshold))
    if warn:
        warnings.warn("ODMR fit below the R^2 threshold; returning best parameters", RuntimeWarning)
    return OdmrFitResult(
        gamma_e_eff=gamma, b=b_fit, p=np.array(p_fit), gamma_refined=c_fit / b_fit, r2=r2,
        stderr={"b": np.array(b_se), "p": np.array(p_se)},
        a_zz=np.array([h[0] for h in hf]), a_zx=np.array([h[1] for h in hf]),
        n_eval=n_eval, warning=warn, model=models,
    )


# --------------------------------------------------------------------------
# I/O


def read_spectrum_csv(path, reset: str = "down") -> OdmrData:
    """Read ``frequency_hz, normalized_signal`` rows (header optional)."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                continue                 # header
    if not rows:
        raise ValueError(f"no numeric rows in {path}")
    arr = np.array(rows)
    return OdmrData(TWO_PI * arr[:, 0], arr[:, 1], reset)


def write_spectrum_csv(path, omega_mw, signal) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frequency_hz", "normalized_signal"])
        for f, s in zip(np.asarray(omega_mw) / TWO_PI, signal):
            w.writerow([repr(float(f)), repr(float(s))])


def write_fit_json(path, result: OdmrFitResult) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), indent=2))
