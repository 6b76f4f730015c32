"""Configuration ingestion, pipeline orchestration and result export.

The pipeline runs crystal -> modes (cooling) -> raman -> spinspin ->
experiment; ``--stage`` stops after the named stage.  Every run writes
a reproducibility manifest and a machine-readable ``report.json``
aggregating the self-checks of the stages that ran.  Configs are
sectioned key-value text files (see the bundled ``data/table2.cfg``);
parsing is strict, so unknown sections or keys are errors.  Rates and
frequencies in configs are plain numbers in Hz and are multiplied by
2 pi internally; exported fields carry a ``_rad_s`` or ``_hz`` suffix
(``_hz`` meaning the angular value divided by 2 pi).  The repump sweep
is given either in units of N_sigma Gamma_c (``w_units = n_gamma_c``,
the default) or in Hz (``w_units = hz``).

Exit codes: 0 success, 2 configuration error, 3 stage failure,
4 trajectory divergence.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import sys
from dataclasses import dataclass, replace
from importlib import metadata, resources
from pathlib import Path

import numpy as np
import scipy
from scipy.constants import hbar

from .cooling import DopplerParams, cooling_rates
from .crystal import calibrate_trap, generate_crystal, solve_normal_modes
from .exact import DENSE_MAX_SPINS, MinimalModel
from .langevin import DivergenceError, prepare
from .raman import (RamanConfig, check_red_sideband, effective_params,
                    params_to_json, spin_phonon_couplings)
from .ramsey import (fit_decay, ramsey_dense, ramsey_langevin,
                     ramsey_minimal, summary_to_json)
from .spinspin import build_model, model_to_json, validity_check

TWO_PI = 2.0 * math.pi

STAGES = ("crystal", "modes", "raman", "spinspin", "experiment")

# section -> key -> (kind, default).  Defaults reproduce the reference
# parameter set shipped as data/table2.cfg.
SCHEMA = {
    "crystal": {
        "n_total": ("pos_int", "217"),
        "n_coolant": ("pos_int", "93"),
        "spacing_um": ("pos_float", "10.0"),
        "f_com_hz": ("pos_float", "2.0e6"),
    },
    "cooling": {
        "gamma_tau_hz": ("rate", "41.4e6"),
        "detuning_tau_hz": ("float_or_auto", "auto"),
        "rabi_tau_hz": ("rate", "10.0e6"),
        "wavelength_nm": ("pos_float", "280.3"),
    },
    "raman": {
        "g1_hz": ("rate", "44.7e6"),
        "g2_hz": ("rate", "44.7e6"),
        "delta_hz": ("nonzero_float", "230.0e9"),
        "delta_r_hz": ("float_or_auto", "auto"),
        "eta_com": ("pos_float", "0.2254"),
        "gamma_1_hz": ("rate", "27.27e6"),
        "gamma_2_hz": ("rate", "13.63e6"),
    },
    "experiment": {
        "w_sweep": ("sweep", "0.5"),
        "w_units": ("choice:n_gamma_c,hz", "n_gamma_c"),
        "chi": ("unit_interval", "0.5"),
        "engine": ("choice:langevin,minimal,dense", "langevin"),
        "n_traj": ("pos_int", "2000"),
        "n_workers": ("pos_int_or_auto", "auto"),
        "dt": ("pos_float_or_auto", "auto"),
        "t_obs": ("pos_float_or_auto", "auto"),
        "n_samples": ("pos_int", "200"),
        "seed": ("seed", "12345"),
    },
    "output": {
        "directory": ("str", "run"),
        "format": ("choice:csv,json", "csv"),
    },
}


class ConfigError(ValueError):
    """Invalid configuration file, key or value."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, original: BaseException):
        super().__init__(f"stage '{stage}' failed: {original}")
        self.stage = stage
        self.original = original


@dataclass(frozen=True)
class CrystalBlock:
    n_total: int
    n_coolant: int
    spacing: float
    omega_com: float


@dataclass(frozen=True)
class CoolingBlock:
    gamma: float
    detuning: float | None
    rabi: float
    wavelength: float


@dataclass(frozen=True)
class RamanBlock:
    g1: float
    g2: float
    delta: float
    delta_r: float | None
    eta_com: float
    gamma_1: float
    gamma_2: float


@dataclass(frozen=True)
class ExperimentBlock:
    w_values: tuple
    w_units: str
    chi: float
    engine: str
    n_traj: int
    n_workers: int | None
    dt: float | None
    t_obs: float | None
    n_samples: int
    seed: int


@dataclass(frozen=True)
class OutputBlock:
    directory: str
    format: str


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with units already converted to SI/rad."""

    crystal: CrystalBlock
    cooling: CoolingBlock
    raman: RamanBlock
    experiment: ExperimentBlock
    output: OutputBlock
    text: str
    sha256: str


def _parse_sweep(raw: str):
    if ":" in raw:
        parts = raw.split(":")
        if len(parts) != 3:
            raise ValueError("sweep ranges look like a:b:n")
        a, b = float(parts[0]), float(parts[1])
        n = int(parts[2])
        if n < 1:
            raise ValueError("sweep point count must be >= 1")
        values = np.linspace(a, b, n)
    else:
        items = raw.replace(",", " ").split()
        if not items:
            raise ValueError("sweep list must not be empty")
        values = np.array([float(v) for v in items])
    if np.any(values < 0):
        raise ValueError("sweep values must be >= 0")
    return tuple(float(v) for v in values)


def _parse_value(section: str, key: str, kind: str, raw: str):
    where = f"{section}.{key}"
    try:
        if kind == "str":
            return raw
        if kind == "sweep":
            return _parse_sweep(raw)
        if kind.startswith("choice:"):
            choices = kind.split(":", 1)[1].split(",")
            if raw not in choices:
                raise ValueError(f"must be one of {', '.join(choices)}")
            return raw
        if kind.endswith("_or_auto") and raw == "auto":
            return None
        if kind in ("pos_int", "pos_int_or_auto", "seed"):
            value = int(raw)
            if kind == "seed":
                if not 0 <= value < 2**64:
                    raise ValueError("must fit an unsigned 64-bit integer")
            elif value <= 0:
                raise ValueError("must be > 0")
            return value
        value = float(raw)
        if kind == "rate" and value < 0:
            raise ValueError("must be >= 0")
        if kind in ("pos_float", "pos_float_or_auto") and value <= 0:
            raise ValueError("must be > 0")
        if kind == "nonzero_float" and value == 0:
            raise ValueError("must be nonzero")
        if kind == "unit_interval" and not 0.0 <= value <= 1.0:
            raise ValueError("must lie in [0, 1]")
        return value
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc} (got {raw!r})") from None


def _read_raw(path) -> dict:
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    raw = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section '{section}'")
        for key, value in parser[section].items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{section}.{key}'")
            raw.setdefault(section, {})[key] = value.strip()
    return raw


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read, override, validate and unit-convert a configuration.

    ``overrides`` maps "section.key" to raw strings (the CLI flags).
    With no path every default applies; the resolved text is echoed into
    the returned config for the reproducibility manifest.
    """
    raw = {s: {k: d for k, (_, d) in keys.items()}
           for s, keys in SCHEMA.items()}
    if path is not None:
        for section, items in _read_raw(path).items():
            raw[section].update(items)
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        raw[section][key] = value
    values = {s: {k: _parse_value(s, k, SCHEMA[s][k][0], r)
                  for k, r in keys.items()}
              for s, keys in raw.items()}
    c, k, r, e, o = (values["crystal"], values["cooling"], values["raman"],
                     values["experiment"], values["output"])
    if c["n_coolant"] >= c["n_total"]:
        raise ConfigError("crystal.n_coolant: must leave at least one "
                          "spin ion (n_coolant < n_total)")
    lines = []
    for section, keys in raw.items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {keys[key]}" for key in SCHEMA[section])
        lines.append("")
    text = "\n".join(lines)
    return RunConfig(
        crystal=CrystalBlock(
            n_total=c["n_total"], n_coolant=c["n_coolant"],
            spacing=c["spacing_um"] * 1e-6,
            omega_com=TWO_PI * c["f_com_hz"]),
        cooling=CoolingBlock(
            gamma=TWO_PI * k["gamma_tau_hz"],
            detuning=None if k["detuning_tau_hz"] is None
            else TWO_PI * k["detuning_tau_hz"],
            rabi=TWO_PI * k["rabi_tau_hz"],
            wavelength=k["wavelength_nm"] * 1e-9),
        raman=RamanBlock(
            g1=TWO_PI * r["g1_hz"], g2=TWO_PI * r["g2_hz"],
            delta=TWO_PI * r["delta_hz"],
            delta_r=None if r["delta_r_hz"] is None
            else TWO_PI * r["delta_r_hz"],
            eta_com=r["eta_com"],
            gamma_1=TWO_PI * r["gamma_1_hz"],
            gamma_2=TWO_PI * r["gamma_2_hz"]),
        experiment=ExperimentBlock(
            w_values=e["w_sweep"], w_units=e["w_units"], chi=e["chi"],
            engine=e["engine"], n_traj=e["n_traj"],
            n_workers=e["n_workers"], dt=e["dt"], t_obs=e["t_obs"],
            n_samples=e["n_samples"], seed=e["seed"]),
        output=OutputBlock(directory=o["directory"], format=o["format"]),
        text=text,
        sha256=hashlib.sha256(text.encode()).hexdigest())


def bundled_config(name: str = "table2.cfg") -> Path:
    """Path of a configuration file shipped with the package."""
    return Path(resources.files("ionsync").joinpath("data", name))


# ---------------------------------------------------------------------------
# output helpers


def _write_table(out: Path, name: str, columns: list, fmt: str) -> Path:
    """Write named columns as CSV or as a JSON dict of lists."""
    if fmt == "json":
        path = out / f"{name}.json"
        doc = {key: [None if isinstance(v, float) and math.isnan(v) else v
                     for v in np.asarray(col).tolist()]
               for key, col in columns}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        return path
    path = out / f"{name}.csv"
    arrays = [np.asarray(col) for _, col in columns]
    formats = ["%d" if a.dtype.kind in "iub" else "%.17g" for a in arrays]
    with open(path, "w") as fh:
        fh.write(",".join(key for key, _ in columns) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(f % v for f, v in zip(formats, row)) + "\n")
    return path


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _package_version() -> str:
    try:
        return metadata.version("ionsync")
    except metadata.PackageNotFoundError:
        return "unknown"


def _write_manifest(cfg: RunConfig, stage: str, out: Path) -> None:
    (out / "resolved.cfg").write_text(cfg.text)
    _write_json(out / "manifest.json", {
        "config_sha256": cfg.sha256,
        "resolved_config": "resolved.cfg",
        "stage": stage,
        "engine": cfg.experiment.engine,
        "seed": cfg.experiment.seed,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "ionsync": _package_version(),
        },
    })


# ---------------------------------------------------------------------------
# pipeline


def _auto_t_obs(n_sigma: int, gamma_c: float, w_pump: float) -> float:
    t0 = 0.0
    if gamma_c > 0:
        t0 = max(t0, 5.0 / (n_sigma * gamma_c))
    if w_pump > 0:
        t0 = max(t0, 3.0 / w_pump)
    if t0 == 0.0:
        raise ValueError("cannot choose an interrogation time automatically "
                         "when both the collective rate and the pump vanish; "
                         "set experiment.t_obs explicitly")
    return 4.0 * t0


def run_pipeline(cfg: RunConfig, stage: str = "experiment") -> Path:
    """Execute the pipeline up to ``stage``; returns the artifact dir."""
    if stage not in STAGES:
        raise ConfigError(f"unknown stage '{stage}'; pick one of "
                          f"{', '.join(STAGES)}")
    last = STAGES.index(stage)
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    fmt = cfg.output.format
    _write_manifest(cfg, stage, out)
    checks = {}

    def finish() -> Path:
        # boolean entries gate the verdict, numeric entries inform
        hard = [v for v in checks.values() if isinstance(v, bool)]
        _write_json(out / "report.json", {
            "stage": stage, "checks": checks, "ok": all(hard)})
        return out

    def run(name, fn):
        try:
            return fn()
        except DivergenceError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

    # -- crystal: lattice generation and trap calibration
    def stage_crystal():
        blk = cfg.crystal
        crystal = generate_crystal(n_sigma=blk.n_total - blk.n_coolant,
                                   n_tau=blk.n_coolant, spacing=blk.spacing)
        crystal = crystal.with_k_z(calibrate_trap(crystal, blk.omega_com))
        coolant = np.zeros(blk.n_total, dtype=int)
        coolant[:blk.n_coolant] = 1
        _write_table(out, "positions", [
            ("ion", np.arange(blk.n_total)),
            ("x_m", crystal.positions[:, 0]),
            ("y_m", crystal.positions[:, 1]),
            ("is_coolant", coolant)], fmt)
        _write_json(out / "trap.json", {
            "k_z_n_per_m": crystal.k_z,
            "target_com_rad_s": blk.omega_com,
            "n_total": blk.n_total,
            "n_coolant": blk.n_coolant,
            "n_sigma": blk.n_total - blk.n_coolant,
            "spacing_m": blk.spacing,
        })
        return crystal

    crystal = run("crystal", stage_crystal)
    if last < STAGES.index("modes"):
        return finish()

    # -- modes: normal modes plus Doppler damping of each of them
    def stage_modes():
        blk = cfg.cooling
        modes = solve_normal_modes(crystal)
        detuning = blk.detuning if blk.detuning is not None else -blk.gamma / 2
        doppler = DopplerParams(gamma=blk.gamma, detuning=detuning,
                                rabi=blk.rabi, wavelength=blk.wavelength)
        rates = cooling_rates(modes, doppler)
        _write_table(out, "modes", [
            ("mode", np.arange(len(modes.omega))),
            ("omega_rad_s", modes.omega),
            ("omega_hz", modes.omega / TWO_PI)], fmt)
        _write_table(out, "cooling", [
            ("mode", np.arange(len(rates.omega))),
            ("omega_rad_s", rates.omega),
            ("omega_shifted_rad_s", rates.omega_shifted),
            ("kappa_rad_s", rates.kappa),
            ("nbar", rates.nbar),
            ("heating", rates.heating.astype(int))], fmt)
        _write_json(out / "cooling.json", {
            "omega_com_rad_s": float(modes.omega[0]),
            "omega_com_hz": float(modes.omega[0]) / TWO_PI,
            "kappa_com_rad_s": float(rates.kappa[0]),
            "kappa_com_hz": float(rates.kappa[0]) / TWO_PI,
            "nbar_com": float(rates.nbar[0]),
            "omega_com_shifted_rad_s": float(rates.omega_shifted[0]),
            "detuning_rad_s": detuning,
            "n_heating_modes": int(rates.heating.sum()),
        })
        checks["com_mode_cooled"] = bool(rates.kappa[0] > 0)
        checks["n_heating_modes"] = int(rates.heating.sum())
        return modes, rates

    modes, rates = run("modes", stage_modes)
    if last < STAGES.index("raman"):
        return finish()

    # -- raman
    def stage_raman():
        blk = cfg.raman
        omega_com = float(modes.omega[0])
        k_sigma = blk.eta_com / math.sqrt(
            hbar / (2.0 * modes.mass_sigma * omega_com))
        rcfg = RamanConfig(g1=blk.g1, g2=blk.g2, delta1=blk.delta,
                           delta2=blk.delta, gamma1=blk.gamma_1,
                           gamma2=blk.gamma_2, k_sigma=k_sigma)
        params = effective_params(rcfg)
        delta_r = (blk.delta_r if blk.delta_r is not None
                   else -float(rates.omega_shifted[0]))
        sideband_ok = check_red_sideband(params, delta_r)
        coupling = spin_phonon_couplings(rcfg, modes, params)
        params_to_json(params, out / "raman_params.json")
        _write_json(out / "raman_setup.json", {
            "k_sigma_per_m": k_sigma,
            "eta_com": blk.eta_com,
            "delta_r_rad_s": delta_r,
            "delta_r_hz": delta_r / TWO_PI,
            "sideband_ok": bool(sideband_ok),
        })
        checks["sideband_ok"] = bool(sideband_ok)
        return params, coupling, delta_r

    params, coupling, delta_r = run("raman", stage_raman)
    if last < STAGES.index("spinspin"):
        return finish()

    # -- spinspin
    def stage_spinspin():
        model0 = build_model(coupling, rates, params,
                             w=0.0, chi=cfg.experiment.chi, delta_r=delta_r)
        validity = validity_check(model0)
        model_to_json(model0, out / "spinspin.json")
        n_sigma = model0.n_sigma
        _write_json(out / "derived.json", {
            "units_note": "fields ending _hz are angular rates divided "
                          "by 2 pi; _rad_s are angular rates",
            "n_sigma": n_sigma,
            "kappa_com_rad_s": float(rates.kappa[0]),
            "kappa_com_hz": float(rates.kappa[0]) / TWO_PI,
            "nbar_com": float(rates.nbar[0]),
            "gamma_c_rad_s": model0.gamma_c,
            "gamma_c_hz": model0.gamma_c / TWO_PI,
            "n_sigma_gamma_c_rad_s": n_sigma * model0.gamma_c,
            "gamma_31_hz": params.gamma_31 / TWO_PI,
            "gamma_13_hz": params.gamma_13 / TWO_PI,
            "gamma_d_hz": params.gamma_d / TWO_PI,
            "omega_r_hz": abs(params.omega_r) / TWO_PI,
            "delta_r_hz": delta_r / TWO_PI,
            "validity_ratio": validity.ratio,
            "validity_ok": bool(validity.ok),
        })
        checks["validity_ok"] = bool(validity.ok)
        checks["validity_ratio"] = validity.ratio
        return model0

    model0 = run("spinspin", stage_spinspin)
    if last < STAGES.index("experiment"):
        return finish()

    # -- experiment
    def stage_experiment():
        exp = cfg.experiment
        n_sigma = model0.n_sigma
        gamma_c = model0.gamma_c
        if exp.engine == "dense" and n_sigma > DENSE_MAX_SPINS:
            raise ValueError(f"dense engine supports at most "
                             f"{DENSE_MAX_SPINS} spins, got {n_sigma}")
        rows = []
        n_fit_errors = 0
        abort_fractions = []
        for i, value in enumerate(exp.w_values):
            if exp.w_units == "n_gamma_c":
                w_abs = value * n_sigma * gamma_c
            else:
                w_abs = TWO_PI * value
            model_w = build_model(coupling, rates, params, w=w_abs,
                                  chi=exp.chi, delta_r=delta_r)
            w_pump = w_abs + params.gamma_13
            t_obs = exp.t_obs or _auto_t_obs(n_sigma, gamma_c, w_pump)
            seed = exp.seed + i
            if exp.engine == "langevin":
                dt = exp.dt or 0.05 / prepare(model_w).max_rate
                res = ramsey_langevin(
                    model_w, n_traj=exp.n_traj, seed=seed, dt=dt,
                    t_obs=t_obs, n_samples=exp.n_samples,
                    n_workers=exp.n_workers, fit=False)
            elif exp.engine == "minimal":
                minimal = MinimalModel(
                    n=n_sigma, gamma_c=gamma_c,
                    nbar=float(rates.nbar[0]), w=w_pump,
                    gamma_sp=params.gamma_31, gamma_deph=model_w.gamma_d)
                res = ramsey_minimal(minimal, t_obs=t_obs,
                                     n_samples=exp.n_samples, dt=exp.dt,
                                     fit=False)
            else:
                res = ramsey_dense(model_w, t_obs=t_obs,
                                   n_samples=exp.n_samples, dt=exp.dt,
                                   fit=False)
            # an empty fit window (short runs, fast unsynchronized
            # decay) is an analysis outcome, not a pipeline failure
            extra = {
                "w_rad_s": w_abs,
                "w_hz": w_abs / TWO_PI,
                "w_over_n_gamma_c": (w_abs / (n_sigma * gamma_c)
                                     if gamma_c > 0 else None),
                "t_obs": t_obs,
                "seed": seed,
            }
            try:
                res = replace(res, fit=fit_decay(
                    res.times, res.envelope, res.envelope_se,
                    n_spins=n_sigma, gamma_c=gamma_c, w=w_pump))
            except ValueError as exc:
                extra["fit_error"] = str(exc)
                n_fit_errors += 1
            if "n_aborted" in res.extras:
                abort_fractions.append(res.extras["n_aborted"] / exp.n_traj)
            _write_table(out, f"ramsey_w{i:02d}", [
                ("t", res.times),
                ("envelope", res.envelope),
                ("stderr", res.envelope_se)], fmt)
            summary_to_json(res, out / f"summary_w{i:02d}.json", extra=extra)
            rows.append((w_abs,
                         res.fit.rate if res.fit else math.nan,
                         res.fit.r_squared if res.fit else math.nan,
                         res.variance_ratio, res.steady["sz"]))
        sweep = np.array(rows)
        _write_table(out, "sweep", [
            ("w_rad_s", sweep[:, 0]),
            ("w_hz", sweep[:, 0] / TWO_PI),
            ("w_over_n_gamma_c", sweep[:, 0] / (n_sigma * gamma_c)
             if gamma_c > 0 else np.full(len(rows), np.nan)),
            ("decay_rate_rad_s", sweep[:, 1]),
            ("r_squared", sweep[:, 2]),
            ("variance_ratio", sweep[:, 3]),
            ("sz", sweep[:, 4])], fmt)
        checks["n_fit_errors"] = n_fit_errors
        if abort_fractions:
            checks["max_abort_fraction"] = max(abort_fractions)

    run("experiment", stage_experiment)
    return finish()


# ---------------------------------------------------------------------------
# command line


def _sweep_flag(text: str) -> str:
    if not text.startswith("w="):
        raise argparse.ArgumentTypeError("sweep flags look like w=a:b:n")
    rest = text[2:]
    try:
        _parse_sweep(rest)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return rest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ionsync",
        description="Run the trapped-ion spin-synchronization pipeline.",
        epilog="exit codes: 0 success, 2 config error, 3 stage failure, "
               "4 trajectory divergence")
    parser.add_argument("--config", metavar="PATH",
                        help="sectioned key-value config file "
                             "(defaults apply when omitted)")
    parser.add_argument("--stage", choices=STAGES, default="experiment",
                        help="run the pipeline up to this stage "
                             "(default: experiment)")
    parser.add_argument("--engine", choices=("langevin", "minimal", "dense"),
                        help="override experiment.engine")
    parser.add_argument("--sweep", type=_sweep_flag, metavar="w=a:b:n",
                        help="override experiment.w_sweep "
                             "(interpreted in the configured w_units)")
    parser.add_argument("--seed", type=int, metavar="U64",
                        help="override experiment.seed")
    parser.add_argument("--out", metavar="DIR",
                        help="override output.directory")
    parser.add_argument("--format", choices=("csv", "json"),
                        help="override output.format for tables")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.engine:
        overrides["experiment.engine"] = args.engine
    if args.sweep:
        overrides["experiment.w_sweep"] = args.sweep
    if args.seed is not None:
        overrides["experiment.seed"] = str(args.seed)
    if args.out:
        overrides["output.directory"] = args.out
    if args.format:
        overrides["output.format"] = args.format
    try:
        cfg = load_config(args.config, overrides)
        out = run_pipeline(cfg, stage=args.stage)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 3
    print(out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
