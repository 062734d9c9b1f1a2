"""Closed-form coherence decay under OU detuning noise and related estimators.

Coherence after ``N`` ideal instantaneous pi pulses separated by ``tau_tilde``
(total time ``t = N * tau_tilde``) decays as ``exp(-gamma)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .quantum import dagger


class FitFailure(RuntimeError):
    """Least-squares fit did not produce a usable estimate."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message if residual is None else f"{message} (residual norm {residual:.3g})")
        self.residual = residual


@dataclass(frozen=True)
class DecaySpec:
    n: int
    tau_tilde: float
    sigma: float
    tau_c: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("pulse count must be >= 1")
        if not self.tau_tilde > 0:
            raise ValueError("pulse separation must be positive")

    @property
    def t(self) -> float:
        return self.n * self.tau_tilde

    def exact(self, t: float | None = None) -> float:
        return decay_rate_exact(self.n, self.tau_tilde, self.sigma, self.tau_c, t)

    def approx(self, t: float | None = None) -> float:
        return decay_rate_approx(self.n, self.tau_tilde, self.sigma, self.tau_c)


@dataclass(frozen=True)
class DecayEstimate:
    t2: float
    uncertainty: float
    model: str
    amplitude: float = 1.0
    offset: float = 0.0
    exponent: float = 3.0


def _one_minus_tanhc(x):
    # 1 - tanh(x)/x without cancellation for small x
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    xs = np.where(small, x, 0.0)
    x2 = xs * xs
    series = x2 / 3 - 2 * x2 ** 2 / 15 + 17 * x2 ** 3 / 315 - 62 * x2 ** 4 / 2835
    xl = np.where(small, 1.0, x)
    direct = 1 - np.tanh(xl) / xl
    return np.where(small, series, direct)


def decay_rate_exact(n, tau_tilde, sigma, tau_c, t=None):
    """Decay exponent for N ideal pi pulses under OU noise (std ``sigma``, correlation ``tau_c``).

    ``t`` defaults to ``n * tau_tilde``. Vectorized over all arguments.
    """
    n = np.asarray(n)
    tau_tilde = np.asarray(tau_tilde, dtype=float)
    if t is None:
        t = n * tau_tilde
    t = np.asarray(t, dtype=float)
    x = tau_tilde / (2 * tau_c)
    # 1 - sech(x) = 2 sinh^2(x/2) / cosh(x)
    one_minus_sech = 2 * np.sinh(x / 2) ** 2 / np.cosh(x)
    sign = np.where(np.asarray(n) % 2 == 1, 1.0, -1.0)  # (-1)**(N+1)
    boundary = -(sign * np.exp(-t / tau_c) + 1) * one_minus_sech ** 2
    bulk = (t / tau_c) * _one_minus_tanhc(x)
    g = sigma ** 2 * tau_c ** 2 * (boundary + bulk)
    return float(g) if np.ndim(g) == 0 else g


def decay_rate_approx(n, tau_tilde, sigma, tau_c):
    """Long-correlation limit ``sigma^2 N tau_tilde^3 / (12 tau_c)``."""
    g = sigma ** 2 * np.asarray(n) * np.asarray(tau_tilde, dtype=float) ** 3 / (12 * tau_c)
    return float(g) if np.ndim(g) == 0 else g


def hahn_t2(sigma: float, tau_c: float) -> float:
    """Hahn-echo time ``(12 tau_c / sigma^2)^(1/3)`` in the long-correlation limit."""
    return float((12 * tau_c / sigma ** 2) ** (1 / 3))


def t2_for_order(n, t2h):
    """Coherence time at fixed order ``N``: ``T2H * N^(2/3)``."""
    return t2h * np.asarray(n, dtype=float) ** (2 / 3) if np.ndim(n) else t2h * float(n) ** (2 / 3)


def t2_exact(n: int, sigma: float, tau_c: float) -> float:
    """Total time where ``decay_rate_exact`` reaches 1 at fixed order ``n``."""
    def f(t):
        return decay_rate_exact(n, t / n, sigma, tau_c, t) - 1.0

    guess = hahn_t2(sigma, tau_c) * n ** (2 / 3)
    lo, hi = guess / 4, guess * 4
    while f(hi) < 0:
        hi *= 4
    while f(lo) > 0:
        lo /= 4
    return float(optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-13))


def memory_time(tau_tilde: float, t2h: float, t1e: float | None = None) -> float:
    """Memory time at fixed pulse separation, optionally limited by electron T1.

    ``T_mem = (T2H / tau_tilde)^2 T2H``; with ``t1e`` the rates add as
    ``1/T = 1/(2 T1e) + 1/T_mem``.
    """
    if not tau_tilde > 0:
        raise ValueError("pulse separation must be positive")
    if np.isinf(tau_tilde):
        return 0.0
    tmem = (t2h / tau_tilde) ** 2 * t2h
    if t1e is None:
        return float(tmem)
    return float(1.0 / (1.0 / (2 * t1e) + 1.0 / tmem))


def t1_limit(t1e: float) -> float:
    """Memory limit from electron relaxation alone."""
    return 2.0 * t1e


def fit_decay_time(t, y, exponent: float = 3.0, free_exponent: bool = False,
                   fit_offset: bool = True) -> DecayEstimate:
    """Fit ``y = a exp(-(t/T2)^p) + c`` and return T2 (the 1/e time of the envelope).

    The default cubic exponent is the OU prediction for fixed-order sweeps.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 3 + free_exponent + fit_offset:
        raise FitFailure("too few points for decay fit")
    if np.ptp(y) <= 1e-9 * max(1.0, float(np.max(np.abs(y)))):
        raise FitFailure("signal shows no decay; T2 unbounded")

    a0 = float(y[np.argmin(t)] - (y.min() if fit_offset else 0.0)) or 1.0
    # initial T2: first crossing of the 1/e level
    level = (y.min() if fit_offset else 0.0) + a0 / np.e
    below = np.nonzero(y <= level)[0]
    t20 = float(t[below[0]]) if below.size else float(t.max()) * 2
    scale = t20

    def model(tt, *q):
        a, t2 = q[0], q[1] * scale
        p = q[2] if free_exponent else exponent
        c = q[-1] if fit_offset else 0.0
        return a * np.exp(-(np.abs(tt) / t2) ** p) + c

    p0 = [a0, 1.0] + ([exponent] if free_exponent else []) + ([float(y.min())] if fit_offset else [])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", optimize.OptimizeWarning)
            q, cov = optimize.curve_fit(model, t, y, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise FitFailure(f"decay fit did not converge: {exc}") from exc
    resid = float(np.linalg.norm(model(t, *q) - y))
    t2 = abs(q[1]) * scale
    if not np.isfinite(t2) or t2 > 1e3 * t.max():
        raise FitFailure("fitted T2 is unbounded", resid)
    err = float(np.sqrt(cov[1, 1]) * scale) if np.all(np.isfinite(cov)) else np.inf
    return DecayEstimate(
        t2=float(t2), uncertainty=err, model="fit", amplitude=float(q[0]),
        offset=float(q[-1]) if fit_offset else 0.0,
        exponent=float(q[2]) if free_exponent else exponent,
    )


@dataclass(frozen=True)
class CorrelationTimeEstimate:
    tau_c: float
    stderr: float
    ci_low: float
    ci_high: float
    dof: int

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def fit_correlation_time(datasets, sigma: float, tau_c0: float = 1000.0,
                         free_amplitude: bool = False, level: float = 0.95) -> CorrelationTimeEstimate:
    """Fit ``tau_c`` so that ``exp(-decay_rate_exact)`` matches coherence data.

    ``datasets`` is an iterable of ``(N, tau_tilde_array, coherence_array)``
    or ``(N, tau_tilde_array, coherence_array, stderr_array)``. With standard
    errors the fit is weighted; they are floored at 1% of their maximum so
    near-noiseless points cannot dominate. All points are fitted jointly; the
    confidence interval comes from the linearized parameter covariance with a
    Student-t quantile.
    """
    ns, taus, ys, ses = [], [], [], []
    for item in datasets:
        n, tau, y = item[:3]
        tau = np.asarray(tau, dtype=float)
        ns.append(np.full(tau.shape, int(n)))
        taus.append(tau)
        ys.append(np.asarray(y, dtype=float))
        ses.append(np.asarray(item[3], dtype=float) if len(item) > 3 else np.full(tau.shape, np.nan))
    n_all, tau_all, y_all, se_all = (np.concatenate(v) for v in (ns, taus, ys, ses))
    weights = None
    if np.any(np.isfinite(se_all)):
        if not np.all(np.isfinite(se_all)) or np.any(se_all < 0):
            raise ValueError("standard errors must be given for every point and be non-negative")
        if se_all.max() > 0:
            weights = np.maximum(se_all, 0.01 * se_all.max())
    k = 1 + free_amplitude
    if y_all.size < 4:
        raise FitFailure("need at least 4 points to fit the correlation time")

    def model(_, *q):
        tc = q[0] * tau_c0
        amp = q[1] if free_amplitude else 1.0
        return amp * np.exp(-decay_rate_exact(n_all, tau_all, sigma, tc))

    p0 = [1.0] + ([1.0] if free_amplitude else [])
    bounds = ([1e-9] + ([0.0] if free_amplitude else []), [np.inf] * k)
    try:
        q, cov = optimize.curve_fit(model, tau_all, y_all, p0=p0, sigma=weights, bounds=bounds, maxfev=20000)
    except RuntimeError as exc:
        raise FitFailure(f"correlation-time fit did not converge: {exc}") from exc
    dof = y_all.size - k
    tc = q[0] * tau_c0
    se = float(np.sqrt(cov[0, 0]) * tau_c0)
    if not np.isfinite(se):
        raise FitFailure("singular covariance in correlation-time fit",
                         float(np.linalg.norm(model(None, *q) - y_all)))
    half = stats.t.ppf(0.5 + level / 2, dof) * se
    return CorrelationTimeEstimate(float(tc), se, float(tc - half), float(tc + half), dof)


def pulse_fidelity(u_actual: np.ndarray, u_ideal: np.ndarray) -> float:
    """Phase-insensitive gate overlap ``|Tr(U_ideal^dag U_actual)| / d``."""
    d = u_ideal.shape[-1]
    val = np.abs(np.trace(dagger(u_ideal) @ u_actual, axis1=-2, axis2=-1)) / d
    val = np.minimum(val, 1.0)
    return float(val) if np.ndim(val) == 0 else val


def fidelity_map(kind: str, deltas, epsilons, rabi: float, spacing: float = 10e-3,
                 n_pulses: int = 8) -> np.ndarray:
    """Gate fidelity over a grid of frozen detuning / amplitude errors.

    ``kind`` is one of ``"pi/2"``, ``"pi"``, ``"cpmg"``, ``"xy8"``; pulse
    trains hold ``n_pulses`` pi pulses with ``spacing`` between centers.
    Returns an array of shape ``(len(deltas), len(epsilons))``.
    """
    from .sequences import pi_train, rf_pulse, sequence_propagator

    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    epsilons = np.atleast_1d(np.asarray(epsilons, dtype=float))
    key = kind.lower()
    if key in ("pi/2", "pi2", "pi_half"):
        elements = [rf_pulse(np.pi / 2, 0.0, rabi)]
    elif key == "pi":
        elements = [rf_pulse(np.pi, 0.0, rabi)]
    elif key in ("cpmg", "cpmg8"):
        elements = pi_train("cpmg", n_pulses, spacing, rabi)
    elif key == "xy8":
        elements = pi_train("xy8", n_pulses, spacing, rabi)
    else:
        raise ValueError(f"unknown sequence kind {kind!r}")
    dd, ee = np.meshgrid(deltas, epsilons, indexing="ij")
    u_ideal = sequence_propagator(elements, 0.0, 0.0)
    u = sequence_propagator(elements, dd, ee)
    return pulse_fidelity(u, u_ideal)


def duty_cycle(seq) -> float:
    """Fraction of the sequence duration with RF power on."""
    from .sequences import Kind

    total = sum(el.duration for el in seq.elements)
    if total <= 0:
        return 0.0
    rf = sum(el.duration for el in seq.elements if el.kind is Kind.RF_PULSE)
    return float(rf / total)
