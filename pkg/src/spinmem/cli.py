"""Command-line interface.

Parameters come from an optional JSON config and from ``--name-unit value``
flags, which override the file. Every dimensional key carries its unit as a
suffix (``rabi_khz``, ``tau_ms``, ``b_mt``); frequencies given in Hz are
converted to angular frequency. Comma-separated values define sweeps.

The effective electron gyromagnetic ratio is given per tesla, e.g.
``--gamma-e-eff-ghz 31.6148``.

Exit codes: 0 success, 2 validation error, 3 fit non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    FitFailure,
    decay_rate_approx,
    decay_rate_exact,
    duty_cycle,
    fidelity_map,
    fit_correlation_time,
    hahn_t2,
    memory_time,
    t2_exact,
    t2_for_order,
)
from .noise import NO_NOISE, OUParams
from .spin_model import (
    TWO_PI,
    InconsistentInputs,
    SpinSystemParams,
    manifold_spectrum,
)

EXIT_OK, EXIT_INVALID, EXIT_FIT = 0, 2, 3
COMMIT = "UNKNOWN"

UNITS = {
    "hz": ("freq", TWO_PI), "khz": ("freq", TWO_PI * 1e3), "mhz": ("freq", TWO_PI * 1e6),
    "ghz": ("freq", TWO_PI * 1e9),
    "s": ("time", 1.0), "ms": ("time", 1e-3), "us": ("time", 1e-6), "ns": ("time", 1e-9),
    "t": ("field", 1.0), "mt": ("field", 1e-3),
    "rad": ("angle", 1.0), "deg": ("angle", np.pi / 180),
}


class ConfigError(ValueError):
    pass


# parameter tables: base name -> (kind, default in SI or None)
COMMON = {"seed": ("int", None), "threads": ("int", None)}
SYSTEM = {"wrf1": ("freq", TWO_PI * 2489.73e3), "wrf2": ("freq", TWO_PI * 493.62e3),
          "b": ("field", 97.159e-3)}
NUCLEAR_NOISE = {"sigma": ("freq", TWO_PI * 112.5), "tau_c": ("time", 829.0),
                 "sigma_eps": ("num", 0.0), "tau_eps": ("time", 500e-6)}

SIM_PARAMS = {
    "rabi": {"rabi": ("freq", TWO_PI * 11.73e3), "duration": ("time", None), **NUCLEAR_NOISE,
             "n_traj": ("int", 1000)},
    "ramsey": {"rabi": ("freq", TWO_PI * 11.73e3), "tau": ("time", None), "detuning": ("freq", 0.0),
               **NUCLEAR_NOISE, "n_traj": ("int", 1000), "instantaneous": ("bool", False)},
    "hahn": {"rabi": ("freq", TWO_PI * 11.73e3), "tau": ("time", None), **NUCLEAR_NOISE,
             "n_traj": ("int", 1000), "instantaneous": ("bool", False)},
    "cpmg": {"rabi": ("freq", TWO_PI * 11.73e3), "tau": ("time", None), "n": ("int", 1), **NUCLEAR_NOISE,
             "n_traj": ("int", 1000), "instantaneous": ("bool", False)},
    "xy8": {"rabi": ("freq", TWO_PI * 11.73e3), "tau": ("time", None), "n": ("int", 8), **NUCLEAR_NOISE,
            "n_traj": ("int", 1000), "instantaneous": ("bool", False)},
    "spin-pump": {**SYSTEM, "n": ("int", 15), "mw_pi": ("time", 1.4e-6), "sigma_e": ("freq", TWO_PI * 146e3),
                  "transition": ("str", "MW2"), "n_traj": ("int", 1000)},
    "odmr": {**SYSTEM, "gamma_e_eff": ("freq", TWO_PI * 31.6148e9), "f_start": ("freq", None),
             "f_stop": ("freq", None), "points": ("int", 400), "p_init": ("num", 0.5),
             "reset": ("str", "down"), "rabi_mw": ("freq", TWO_PI * 349e3), "sigma_e": ("freq", TWO_PI * 146e3),
             "n_avg": ("int", 200)},
}


def _parse_value(kind, raw):
    if isinstance(raw, list):
        return [_parse_value(kind, r) for r in raw]
    if isinstance(raw, str) and kind != "str" and ("," in raw or raw.strip().startswith("[")):
        return [_parse_value(kind, r) for r in raw.strip().strip("[]").split(",") if r.strip()]
    try:
        if kind == "int":
            v = float(raw)
            if v != int(v):
                raise ConfigError(f"expected an integer, got {raw!r}")
            return int(v)
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            if str(raw).lower() in ("1", "true", "yes", "on"):
                return True
            if str(raw).lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"expected a boolean, got {raw!r}")
        if kind == "str":
            return str(raw)
        return float(raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse {raw!r}") from None


def split_key(key: str):
    """``'tau_c_ms' -> ('tau_c', 'ms')``; unsuffixed keys return ``(key, None)``."""
    key = key.replace("-", "_").lower()
    if "_" in key:
        base, suffix = key.rsplit("_", 1)
        if suffix in UNITS:
            return base, suffix
    return key, None


def resolve(raw: dict, table: dict) -> dict:
    """Convert a unit-suffixed mapping to SI values; fill defaults; reject unknowns."""
    table = {**COMMON, **table}
    out = {}
    for key, value in raw.items():
        base, unit = split_key(key)
        if base not in table:
            raise ConfigError(f"unknown parameter {key!r}")
        kind, _ = table[base]
        if kind in ("freq", "time", "field", "angle"):
            if unit is None:
                raise ConfigError(f"parameter {key!r} needs a unit suffix")
            ukind, scale = UNITS[unit]
            if ukind != kind:
                raise ConfigError(f"unit {unit!r} is not a {kind} unit (parameter {key!r})")
            v = _parse_value("num", value)
            out[base] = [x * scale for x in v] if isinstance(v, list) else v * scale
        else:
            if unit is not None:
                raise ConfigError(f"parameter {base!r} is dimensionless")
            out[base] = _parse_value(kind, value)
    for base, (kind, default) in table.items():
        if base not in out:
            if default is None and base not in COMMON:
                raise ConfigError(f"missing required parameter {base!r}")
            out[base] = default
    return out


def _overrides(extra: list[str]) -> dict:
    out = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        name = tok[2:]
        if "=" in name:
            name, value = name.split("=", 1)
        else:
            try:
                value = next(it)
            except StopIteration:
                raise ConfigError(f"flag {tok} needs a value") from None
        out[name.replace("-", "_")] = value
    return out


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    # a sidecar can be fed back as a config
    return dict(data.get("config", data))


# --------------------------------------------------------------------------
# output helpers


def _sidecar(path: Path, command: str, raw: dict, seed):
    meta = {"command": command, "seed": seed, "commit": COMMIT, "version": __version__, "config": raw}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _write_sweep(path: Path, header: str, x, mean, stderr):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([header, "mean", "stderr"])
        for row in zip(x, mean, stderr):
            w.writerow([repr(float(v)) for v in row])


def _write_matrix(path: Path, row_label: str, rows, cols, mat):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([row_label] + [repr(float(c)) for c in cols])
        for r, line in zip(rows, mat):
            w.writerow([repr(float(r))] + [repr(float(v)) for v in line])


def _require_seed(cfg):
    if cfg.get("seed") is None:
        raise ConfigError("stochastic commands require --seed")
    return int(cfg["seed"])


def _as_list(v):
    return list(v) if isinstance(v, list) else [v]


# --------------------------------------------------------------------------
# commands


def cmd_spectrum(cfg, raw, out, args):
    params = SpinSystemParams.from_frequencies(cfg["wrf1"], cfg["wrf2"], cfg["b"])
    spec = manifold_spectrum(params)
    res = {
        "a_zz_hz": params.a_zz / TWO_PI, "a_zx_hz": params.a_zx / TWO_PI,
        "wrf1_hz": spec.omega_rf1 / TWO_PI, "wrf2_hz": spec.omega_rf2 / TWO_PI,
        "axis_angle_deg": float(np.degrees(spec.axis_angle)),
        "transitions_hz": {k: v / TWO_PI for k, v in spec.transition_offsets().items()},
    }
    (out / "spectrum.json").write_text(json.dumps({"result": res, "config": raw}, indent=2, sort_keys=True) + "\n")
    print(f"A_zz = 2pi*{res['a_zz_hz'] / 1e3:.1f} kHz, A_zx = 2pi*{res['a_zx_hz'] / 1e3:.1f} kHz, "
          f"axis angle = {res['axis_angle_deg']:.2f} deg")


DECAY_PARAMS = {
    "exact": {"n": ("int", 1), "tau": ("time", None), "sigma": ("freq", TWO_PI * 112.5), "tau_c": ("time", 829.0),
              "t": ("time", 0.0)},
    "approx": {"n": ("int", 1), "tau": ("time", None), "sigma": ("freq", TWO_PI * 112.5),
               "tau_c": ("time", 829.0)},
    "t2": {"n": ("int", 1), "t2h": ("time", 0.0), "sigma": ("freq", TWO_PI * 112.5), "tau_c": ("time", 829.0)},
    "memory": {"tau": ("time", None), "t2h": ("time", 0.0), "t1e": ("time", 0.0),
               "sigma": ("freq", TWO_PI * 112.5), "tau_c": ("time", 829.0)},
}


def cmd_decay(cfg, raw, out, args):
    kind = args.kind
    if kind in ("exact", "approx"):
        taus = np.array(_as_list(cfg["tau"]), float)
        if kind == "exact":
            t = None if not cfg["t"] else cfg["t"]
            g = decay_rate_exact(cfg["n"], taus, cfg["sigma"], cfg["tau_c"], t)
        else:
            g = decay_rate_approx(cfg["n"], taus, cfg["sigma"], cfg["tau_c"])
        g = np.atleast_1d(g)
        _write_sweep(out / f"decay_{kind}.csv", "tau_tilde_s", taus, np.exp(-g), np.zeros_like(g))
        print("gamma = " + ", ".join(f"{v:.6g}" for v in g))
    elif kind == "t2":
        t2h = cfg["t2h"] or hahn_t2(cfg["sigma"], cfg["tau_c"])
        ns = _as_list(cfg["n"])
        vals = [t2_for_order(n, t2h) for n in ns]
        exact = [t2_exact(n, cfg["sigma"], cfg["tau_c"]) for n in ns]
        _write_sweep(out / "t2.csv", "n", ns, vals, np.zeros(len(ns)))
        print("T2 = " + ", ".join(f"{v:.6g} s" for v in vals) + " (exact: " +
              ", ".join(f"{v:.6g} s" for v in exact) + ")")
    else:
        t2h = cfg["t2h"] or hahn_t2(cfg["sigma"], cfg["tau_c"])
        t1e = cfg["t1e"] or None
        vals = [memory_time(tt, t2h, t1e) for tt in _as_list(cfg["tau"])]
        _write_sweep(out / "memory.csv", "tau_tilde_s", _as_list(cfg["tau"]), vals, np.zeros(len(vals)))
        print("T_mem = " + ", ".join(f"{v:.4g} s" for v in vals))


def cmd_simulate(cfg, raw, out, args):
    from .sequences import build_sequence, simulate_odmr, OdmrSettings, simulate_sequence, simulate_spin_pumping

    seed = _require_seed(cfg)
    kind = args.kind
    path = out / f"simulate_{kind}.csv"
    if kind == "spin-pump":
        system = SpinSystemParams.from_frequencies(cfg["wrf1"], cfg["wrf2"], cfg["b"])
        r = simulate_spin_pumping(cfg["n"], system, cfg["mw_pi"], cfg["transition"], OUParams(cfg["sigma_e"]),
                                  cfg["n_traj"], seed)
        _write_sweep(path, "repetition", r.repetitions, r.polarization, r.stderr)
        print(f"polarization after {cfg['n']} repetitions: {r.polarization[-1]:.4f}")
    elif kind == "odmr":
        system = SpinSystemParams.from_frequencies(cfg["wrf1"], cfg["wrf2"], cfg["b"],
                                                   gamma_e_eff=cfg["gamma_e_eff"])
        w = np.linspace(cfg["f_start"], cfg["f_stop"], cfg["points"])
        settings = OdmrSettings(rabi=cfg["rabi_mw"], sigma_e=cfg["sigma_e"], reset=cfg["reset"])
        r = simulate_odmr(w, system, cfg["p_init"], settings, cfg["n_avg"], seed)
        _write_sweep(path, "frequency_hz", w / TWO_PI, r.signal, r.stderr)
        print(f"ODMR spectrum, {len(w)} points, min signal {r.signal.min():.4f}")
    else:
        nd = OUParams(cfg["sigma"], cfg["tau_c"])
        ne = OUParams(cfg["sigma_eps"], cfg["tau_eps"]) if cfg["sigma_eps"] else NO_NOISE
        seq_kind = {"rabi": "rabi"}.get(kind, kind)
        sweep_key = "duration" if kind == "rabi" else "tau"
        values = _as_list(cfg[sweep_key])
        fixed = {k: cfg[k] for k in ("rabi", "n", "instantaneous", "detuning") if k in cfg}
        # tau on the command line is the pulse separation; the builders take half of it
        half = 0.5 if kind in ("hahn", "cpmg", "xy8") else 1.0
        seqs = [build_sequence(seq_kind, **{**fixed, sweep_key: half * v}) for v in values]
        r = simulate_sequence(seqs, None, nd, ne, cfg["n_traj"], seed, values)
        label = {"rabi": "duration_s", "ramsey": "tau_s"}.get(kind, "tau_tilde_s")
        _write_sweep(path, label, values, r.mean, r.stderr)
        print(f"{kind}: {len(values)} points, mean signal {np.mean(r.mean):.4f}")
    _sidecar(path, f"simulate {kind}", raw, seed)


FIT_ODMR_PARAMS = {**SYSTEM, "spectra": ("str", None), "rabi_mw": ("freq", TWO_PI * 349e3),
                   "sigma_e": ("freq", TWO_PI * 146e3), "population": ("int", 64), "generations": ("int", 150)}


def cmd_fit_odmr(cfg, raw, out, args):
    from .fitting import OdmrBudget, OdmrFixed, fit_odmr, read_spectrum_csv, write_fit_json

    seed = _require_seed(cfg)
    spectra = []
    for item in cfg["spectra"].split(";"):
        path, _, reset = item.partition(":")
        spectra.append(read_spectrum_csv(path.strip(), reset.strip() or "down"))
    fixed = OdmrFixed(cfg["wrf1"], cfg["wrf2"], cfg["rabi_mw"], cfg["sigma_e"])
    budget = OdmrBudget(population=cfg["population"], generations=cfg["generations"])
    res = fit_odmr(spectra, fixed, budget, seed)
    write_fit_json(out / "fit_odmr.json", res)
    _sidecar(out / "fit_odmr_run.csv", "fit-odmr", raw, seed)
    print(f"A_zz = 2pi*{res.a_zz_mean / TWO_PI / 1e3:.2f} kHz, A_zx = 2pi*{res.a_zx_mean / TWO_PI / 1e3:.2f} kHz, "
          f"R2 = {', '.join(f'{v:.4f}' for v in res.r2)}")
    if res.warning:
        raise FitFailure("R^2 threshold not reached")


FIT_TAU_PARAMS = {"data": ("str", None), "sigma": ("freq", TWO_PI * 112.5), "tau_c0": ("time", 1000.0)}


def cmd_fit_tau_c(cfg, raw, out, args):
    rows = np.genfromtxt(cfg["data"], delimiter=",", names=True)
    names = rows.dtype.names
    if names is None or len(names) < 3:
        raise ConfigError("data CSV needs columns n, tau_tilde_s, signal[, stderr]")
    if any(np.any(~np.isfinite(rows[k])) for k in names[:4]):
        raise ConfigError("data CSV contains non-numeric entries")
    datasets = []
    for n in np.unique(rows[names[0]]):
        sel = rows[names[0]] == n
        item = (int(n), rows[names[1]][sel], rows[names[2]][sel])
        datasets.append(item + (rows[names[3]][sel],) if len(names) > 3 else item)
    est = fit_correlation_time(datasets, cfg["sigma"], cfg["tau_c0"])
    res = {"tau_c_s": est.tau_c, "ci_low_s": est.ci_low, "ci_high_s": est.ci_high, "stderr_s": est.stderr}
    (out / "fit_tau_c.json").write_text(json.dumps({"result": res, "config": raw}, indent=2, sort_keys=True) + "\n")
    print(f"tau_c = {est.tau_c:.4g} s, 95% CI [{est.ci_low:.4g}, {est.ci_high:.4g}] s")


FIDMAP_PARAMS = {"kind": ("str", "pi"), "delta": ("freq", None), "eps": ("num", None),
                 "rabi": ("freq", TWO_PI * 11.73e3), "spacing": ("time", 10e-3), "n": ("int", 8)}


def cmd_fidelity_map(cfg, raw, out, args):
    deltas = np.array(_as_list(cfg["delta"]), float)
    eps = np.array(_as_list(cfg["eps"]), float)
    fmap = fidelity_map(cfg["kind"], deltas, eps, cfg["rabi"], cfg["spacing"], cfg["n"])
    name = cfg["kind"].replace("/", "_")
    _write_matrix(out / f"fidelity_{name}.csv", "delta_hz\\eps", deltas / TWO_PI, eps, fmap)
    print(f"{cfg['kind']}: min fidelity {fmap.min():.6f}, max {fmap.max():.6f}")


DUTY_PARAMS = {"kind": ("str", "xy8"), "rabi": ("freq", TWO_PI * 11.73e3), "tau": ("time", None),
               "n": ("int", 8)}


def cmd_duty_cycle(cfg, raw, out, args):
    from .sequences import build_sequence

    vals = []
    for tau in _as_list(cfg["tau"]):
        seq = build_sequence(cfg["kind"], rabi=cfg["rabi"], tau=tau / 2, n=cfg["n"])
        vals.append(duty_cycle(seq))
    print("duty cycle = " + ", ".join(f"{100 * v:.4g} %" for v in vals))


OPT_PARAMS = {**SYSTEM, "duration": ("time", 2950e-9), "sigma_e": ("freq", 0.0), "tau_c_e": ("time", np.inf),
              "clamp": ("freq", TWO_PI * 2e6), "rise": ("time", 100e-9), "super_iterations": ("int", 10),
              "evaluations": ("int", 1000), "basis_size": ("int", 2), "pool": ("int", 100),
              "eval_pool": ("int", 5000)}


def cmd_optimize_pulse(cfg, raw, out, args):
    from .control import DcrabSettings, dcrab_optimize, write_history_csv, write_pulse_csv

    seed = _require_seed(cfg)
    system = SpinSystemParams.from_frequencies(cfg["wrf1"], cfg["wrf2"], cfg["b"])
    settings = DcrabSettings(cfg["super_iterations"], cfg["evaluations"], cfg["basis_size"],
                             pool_size=cfg["pool"], eval_pool_size=cfg["eval_pool"],
                             clamp=cfg["clamp"], rise=cfg["rise"], seed=seed)
    noise = OUParams(cfg["sigma_e"], cfg["tau_c_e"]) if cfg["sigma_e"] else NO_NOISE
    res = dcrab_optimize(system, cfg["duration"], settings, noise)
    write_pulse_csv(out / "pulse.csv", res.pulse)
    write_history_csv(out / "fom_history.csv", res.history)
    _sidecar(out / "pulse.csv", "optimize-pulse", raw, seed)
    print(f"infidelity: pool {res.fom_pool:.3e}, evaluation {res.fom_eval:.3e}")


COMMANDS = {
    "spectrum": (SYSTEM, cmd_spectrum),
    "decay": (None, cmd_decay),
    "simulate": (None, cmd_simulate),
    "fit-odmr": (FIT_ODMR_PARAMS, cmd_fit_odmr),
    "fit-tau-c": (FIT_TAU_PARAMS, cmd_fit_tau_c),
    "fidelity-map": (FIDMAP_PARAMS, cmd_fidelity_map),
    "duty-cycle": (DUTY_PARAMS, cmd_duty_cycle),
    "optimize-pulse": (OPT_PARAMS, cmd_optimize_pulse),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinmem", description=__doc__.split("\n")[0],
                                epilog="Parameters: --name-unit value, e.g. --rabi-khz 11.73 --tau-ms 24.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name == "decay":
            sp.add_argument("kind", choices=list(DECAY_PARAMS))
        if name == "simulate":
            sp.add_argument("kind", choices=list(SIM_PARAMS))
        sp.add_argument("--config", help="JSON config with unit-suffixed keys")
        sp.add_argument("--out", default="spinmem_out", help="output directory")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        table, fn = COMMANDS[args.command]
        if args.command == "decay":
            table = DECAY_PARAMS[args.kind]
        elif args.command == "simulate":
            table = SIM_PARAMS[args.kind]
        raw = {**_load_config(args.config), **_overrides(extra)}
        cfg = resolve(raw, table)
        if cfg.get("threads") is not None:
            os.environ["SPINMEM_THREADS"] = str(cfg["threads"])
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        fn(cfg, raw, out, args)
    except FitFailure as exc:
        print(f"error: fit did not converge: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (ConfigError, InconsistentInputs, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main() -> None:
    sys.exit(run())
