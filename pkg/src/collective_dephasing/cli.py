"""Command-line front end: ``collective-dephasing <subcommand>``.

Subcommands
-----------
evolve    j_x(t) (and optionally one density-matrix element) from a JSON config
dd        j_x(t) under a pulse sequence, plus timing and kernel sidecars
kernels   C, Phi(t), B(t), D(t) on the config's time grid
validate  oracle and quadrature validation suite; exit status 1 on failure
preset    fig1 | fig2 | fig3 data sets

Every CSV is written with 17 significant digits and '\\n' line endings, and is
accompanied by ``<name>.meta.json`` echoing the parameters that produced it.
The default output directory is ``$COLLECTIVE_DEPHASING_OUT`` or the current
directory.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bath import OhmicBath, QuadratureBath, TabulatedSpectralDensity
from .dd import bang_bang_interval, dd_kernels, jx_dd_series, sequence_from_spec, udd
from .dynamics import (
    CORRELATION_MODES,
    JxEvaluator,
    correlation_factor_largeN,
    rho_element_correlated,
    rho_element_factorized,
)
from .errors import AccuracyError, DegenerateStateError, DomainError
from .spin import ProjectiveState, UnitaryPreparation, check_index
from .validation import ValidationOptions, run_validation, summary_lines

OUTPUT_ENV = "COLLECTIVE_DEPHASING_OUT"

FIG1 = {"N": 2000, "omega0": 0.1, "G": 0.001, "beta": 1000.0, "omega_c": 10.0,
        "t_max": 0.5, "n_points": 2000}
FIG2 = {**FIG1, "N": 20000}
FIG3 = {**FIG2, "t_max": 0.1}


class ConfigError(DomainError):
    """A run configuration field is missing or invalid."""


@dataclass
class RunConfig:
    bath: dict
    system: dict
    evolution: dict
    correlation_mode: str = "exact"
    element: tuple | None = None
    dd: dict | None = None
    output: str | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
        known = {"bath", "system", "evolution", "correlation_mode", "element", "dd", "output"}
        for key in raw:
            if key not in known:
                raise ConfigError(f"config field '{key}': unknown field (expected one of {sorted(known)})")
        for key in ("bath", "system", "evolution"):
            if not isinstance(raw.get(key), dict):
                raise ConfigError(f"config field '{key}': required object is missing")
        cfg = cls(dict(raw["bath"]), dict(raw["system"]), dict(raw["evolution"]),
                  raw.get("correlation_mode", "exact"), raw.get("element"), raw.get("dd"),
                  raw.get("output"), base_dir or Path.cwd())
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw, path.parent)

    def _resolve(self, name: str, value) -> Path:
        p = Path(value)
        if not p.is_absolute():
            p = self.base_dir / p
        if not p.exists():
            raise ConfigError(f"config field '{name}': file {p} does not exist")
        return p

    def validate(self) -> None:
        b = self.bath
        _number(b, "bath", "beta", positive=True, allow_inf=True)
        if "spectrum_file" in b:
            self._resolve("bath.spectrum_file", b["spectrum_file"])
            _number(b, "bath", "tail_scale", positive=True)
        else:
            _number(b, "bath", "G", nonnegative=True)
            _number(b, "bath", "omega_c", positive=True)
        s = self.system
        if not isinstance(s.get("N"), int) or isinstance(s.get("N"), bool) or s["N"] < 1:
            raise ConfigError("config field 'system.N': must be a positive integer")
        _number(s, "system", "omega0")
        if s.get("preparation", "projective") not in ("projective", "unitary"):
            raise ConfigError("config field 'system.preparation': must be 'projective' or 'unitary'")
        if "amplitude_file" in s:
            self._resolve("system.amplitude_file", s["amplitude_file"])
        e = self.evolution
        _number(e, "evolution", "t_max", positive=True)
        n = e.get("n_points")
        if not isinstance(n, int) or isinstance(n, bool) or n < 2:
            raise ConfigError("config field 'evolution.n_points': must be an integer >= 2")
        if e.get("grid", "linear") not in ("linear", "log"):
            raise ConfigError("config field 'evolution.grid': must be 'linear' or 'log'")
        if self.correlation_mode not in CORRELATION_MODES:
            raise ConfigError(f"config field 'correlation_mode': must be one of {list(CORRELATION_MODES)}")
        if self.element is not None:
            if not (isinstance(self.element, list) and len(self.element) == 2
                    and all(isinstance(x, int) for x in self.element)):
                raise ConfigError("config field 'element': must be [twice_m, twice_n]")
            try:
                for x in self.element:
                    check_index(s["N"], x)
            except DomainError as exc:
                raise ConfigError(f"config field 'element': {exc}") from None
        if self.dd is not None:
            if not isinstance(self.dd, dict):
                raise ConfigError("config field 'dd': must be an object")
            try:
                sequence_from_spec(self.dd, float(e["t_max"]))
            except DomainError as exc:
                raise ConfigError(f"config field 'dd': {exc}") from None

    def times(self) -> np.ndarray:
        e = self.evolution
        t_max, n = float(e["t_max"]), int(e["n_points"])
        if e.get("grid", "linear") == "log":
            t_min = float(e.get("t_min", t_max * 1e-4))
            return np.geomspace(t_min, t_max, n)
        return np.linspace(0.0, t_max, n)

    def build_bath(self, tolerance: float = 1e-10):
        b = self.bath
        beta = _as_float(b["beta"])
        if "spectrum_file" in b:
            spectrum = TabulatedSpectralDensity.from_file(self._resolve("bath.spectrum_file", b["spectrum_file"]),
                                                          float(b["tail_scale"]))
            return QuadratureBath(spectrum, beta, tolerance)
        return OhmicBath(float(b["G"]), float(b["omega_c"]), beta)

    def build_state(self):
        s = self.system
        N = s["N"]
        if s.get("preparation", "projective") == "unitary":
            return UnitaryPreparation.rotation_y_half_pi(N)
        if "amplitude_file" in s:
            return ProjectiveState.from_file(self._resolve("system.amplitude_file", s["amplitude_file"]), N)
        return ProjectiveState.coherent_x(N)

    def echo(self) -> dict:
        return {"bath": self.bath, "system": self.system, "evolution": self.evolution,
                "correlation_mode": self.correlation_mode, "element": self.element, "dd": self.dd}


def _as_float(value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(value)


def _number(section: dict, name: str, key: str, positive=False, nonnegative=False, allow_inf=False):
    label = f"config field '{name}.{key}'"
    if key not in section:
        raise ConfigError(f"{label}: required number is missing")
    raw = section[key]
    if isinstance(raw, bool):
        raise ConfigError(f"{label}: must be a number, got {raw!r}")
    try:
        value = _as_float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{label}: must be a number, got {raw!r}") from None
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        raise ConfigError(f"{label}: must be finite, got {raw!r}")
    if positive and not value > 0.0:
        raise ConfigError(f"{label}: must be > 0, got {raw!r}")
    if nonnegative and not value >= 0.0:
        raise ConfigError(f"{label}: must be >= 0, got {raw!r}")
    return value


def write_columns(path: Path, columns: dict) -> None:
    """CSV with one header row; floats as %.17g, '\\n' line endings."""
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float) for k in names]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*data):
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def write_metadata(csv_path: Path, meta: dict) -> None:
    meta = {"package_version": __version__, **meta}
    text = json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n"
    csv_path.with_suffix(".meta.json").write_text(text, encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {obj!r}")


def _finite(x: float):
    return x if math.isfinite(x) else "inf"


def _output_path(args, cfg: RunConfig | None, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.output:
        p = Path(cfg.output)
        return p if p.is_absolute() else cfg.base_dir / p
    return Path(os.environ.get(OUTPUT_ENV, ".")) / default_name


def _element_series(cfg: RunConfig, bath, state, times) -> np.ndarray:
    tm, tn = cfg.element
    omega0 = float(cfg.system["omega0"])
    out = np.empty(times.size, dtype=complex)
    for i, t in enumerate(times):
        if cfg.correlation_mode == "none":
            rho0 = state.rho0_element(tm, tn) if state.kind == "projective" else \
                rho_element_correlated(0.0, tm, tn, bath, state, omega0).value
            out[i] = rho_element_factorized(t, tm, tn, bath, rho0, omega0).value
        elif cfg.correlation_mode == "exact":
            out[i] = rho_element_correlated(t, tm, tn, bath, state, omega0).value
        else:
            rho0 = state.rho0_element(tm, tn) if state.kind == "projective" else \
                rho_element_correlated(0.0, tm, tn, bath, state, omega0).value
            factor = correlation_factor_largeN(t, tm, tn, state.N, bath).value
            out[i] = rho_element_factorized(t, tm, tn, bath, rho0, omega0).value * factor
    return out


def run_evolve(cfg: RunConfig, out: Path, tolerance: float = 1e-10, threads: int = 1) -> Path:
    bath = cfg.build_bath(tolerance)
    state = cfg.build_state()
    times = cfg.times()
    omega0 = float(cfg.system["omega0"])
    columns = {"t": times,
               "jx": JxEvaluator(state, bath, omega0, cfg.correlation_mode).series(times, threads)}
    if cfg.element is not None:
        values = _element_series(cfg, bath, state, times)
        columns["re"] = values.real
        columns["im"] = values.imag
    write_columns(out, columns)
    write_metadata(out, {"command": "evolve", "config": cfg.echo()})
    return out


def _sequence_sidecars(out: Path, label: str, seq, bath, omega0: float) -> None:
    write_columns(out.with_name(f"{out.stem}{label}.timings.csv"),
                  {"index": np.arange(1, seq.n_pulses + 1), "t": np.array(seq.timings)})
    k = dd_kernels(seq, bath, omega0)
    write_columns(out.with_name(f"{out.stem}{label}.kernels.csv"),
                  {"t": [k.t], "omega0_tilde": [k.omega0_tilde], "B_tilde": [k.B_tilde],
                   "D_tilde": [k.D_tilde], "S": [k.S]})


def run_dd(cfg: RunConfig, out: Path, tolerance: float = 1e-10, threads: int = 1) -> Path:
    if cfg.dd is None:
        raise ConfigError("config field 'dd': required for the dd subcommand")
    bath = cfg.build_bath(tolerance)
    state = cfg.build_state()
    times = cfg.times()
    omega0 = float(cfg.system["omega0"])
    seq = sequence_from_spec(cfg.dd, float(cfg.evolution["t_max"]))
    series = jx_dd_series(times, seq, state.N, bath, state, cfg.correlation_mode, omega0, threads)
    write_columns(out, {"t": times, "jx_dd": series.values})
    _sequence_sidecars(out, "", seq, bath, omega0)
    write_metadata(out, {"command": "dd", "config": cfg.echo(), "timings": list(seq.timings)})
    return out


def run_kernels(cfg: RunConfig, out: Path, tolerance: float = 1e-10) -> Path:
    bath = cfg.build_bath(tolerance)
    times = cfg.times()
    write_columns(out, {"t": times, "phi": bath.phi(times), "B": bath.B(times), "D": bath.D(times)})
    write_metadata(out, {"command": "kernels", "config": cfg.echo(), "C": bath.C})
    return out


def _preset_meta(name: str, params: dict, extra: dict) -> dict:
    return {"command": "preset", "preset": name,
            "parameters": {k: _finite(v) if isinstance(v, float) else v for k, v in params.items()},
            **extra}


def _run_jx_preset(name: str, params: dict, out_dir: Path, threads: int) -> list[Path]:
    times = np.linspace(0.0, params["t_max"], params["n_points"])
    bath = OhmicBath(params["G"], params["omega_c"], params["beta"])
    free = OhmicBath(0.0, params["omega_c"], params["beta"])
    paths = []
    for label, N in (("", params["N"]), ("_inset_N1", 1)):
        if label and name != "fig1":
            continue
        state = ProjectiveState.coherent_x(N)
        columns = {
            "t": times,
            "jx_no_bath": JxEvaluator(state, free, params["omega0"], "none").series(times, threads),
            "jx_factorized": JxEvaluator(state, bath, params["omega0"], "none").series(times, threads),
            "jx_correlated": JxEvaluator(state, bath, params["omega0"], "exact").series(times, threads),
        }
        path = out_dir / f"{name}{label}.csv"
        write_columns(path, columns)
        write_metadata(path, _preset_meta(name, {**params, "N": N},
                                          {"grid": "linear", "series": list(columns)[1:],
                                           "correlated_mode": "exact"}))
        paths.append(path)
    return paths


def _run_fig3(params: dict, out_dir: Path, threads: int) -> list[Path]:
    times = np.linspace(0.0, params["t_max"], params["n_points"])
    bath = OhmicBath(params["G"], params["omega_c"], params["beta"])
    t = params["t_max"]
    N, omega0 = params["N"], params["omega0"]
    sequences = {
        "jx_no_pulses": sequence_from_spec({"type": "explicit", "timings": []}, t),
        "jx_bang_bang_tau_0.02": bang_bang_interval(t, 0.02),
        "jx_bang_bang_tau_0.002": bang_bang_interval(t, 0.002),
        "jx_udd_4": udd(t, 4),
    }
    path = out_dir / "fig3.csv"
    columns = {"t": times}
    for label, seq in sequences.items():
        columns[label] = jx_dd_series(times, seq, N, bath, None, "exact", omega0, threads).values
        _sequence_sidecars(path, "_" + label.removeprefix("jx_"), seq, bath, omega0)
    write_columns(path, columns)
    write_metadata(path, _preset_meta("fig3", params, {
        "grid": "linear", "series": list(columns)[1:], "correlated_mode": "exact",
        "sequences": {k: {"kind": s.kind, "n_pulses": s.n_pulses} for k, s in sequences.items()}}))
    return [path]


def run_preset(name: str, out_dir: Path, threads: int = 1) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    if name == "fig1":
        return _run_jx_preset("fig1", FIG1, out_dir, threads)
    if name == "fig2":
        return _run_jx_preset("fig2", FIG2, out_dir, threads)
    if name == "fig3":
        return _run_fig3(FIG3, out_dir, threads)
    raise ConfigError(f"unknown preset {name!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output CSV path (directory for preset)")
    common.add_argument("--tolerance", type=float, default=None,
                        help="quadrature tolerance (validate: oracle tolerance)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for time sweeps")

    parser = argparse.ArgumentParser(prog="collective-dephasing",
                                     description="Collective dephasing of N two-level atoms in a common bath.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("evolve", "j_x(t) from a run config"),
                       ("dd", "j_x(t) under a pulse sequence"),
                       ("kernels", "bath kernels on the config time grid")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--config", required=True, help="JSON run configuration")
    p = sub.add_parser("validate", parents=[common], help="run the validation suite")
    p.add_argument("--n-max", type=int, default=40, help="Fock cutoff per mode for the oracle")
    p.add_argument("--inject-phi-sign-error", action="store_true",
                   help="flip the sign of Phi in the closed form (mutation check)")
    p.add_argument("--report-dir", help="write per-run oracle CSV reports here")
    p = sub.add_parser("preset", parents=[common], help="reference data sets")
    p.add_argument("name", choices=("fig1", "fig2", "fig3"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    tol = args.tolerance
    try:
        if args.command in ("evolve", "dd", "kernels"):
            cfg = RunConfig.load(args.config)
            out = _output_path(args, cfg, f"{args.command}.csv")
            runner = {"evolve": run_evolve, "dd": run_dd}.get(args.command)
            if runner:
                runner(cfg, out, tol or 1e-10, args.threads)
            else:
                run_kernels(cfg, out, tol or 1e-10)
            print(out)
        elif args.command == "preset":
            out_dir = Path(args.out) if args.out else Path(os.environ.get(OUTPUT_ENV, "."))
            for path in run_preset(args.name, out_dir, args.threads):
                print(path)
        else:
            opts = ValidationOptions(tolerance=tol or 1e-7, n_max=args.n_max,
                                     phi_sign=-1.0 if args.inject_phi_sign_error else 1.0,
                                     report_dir=Path(args.report_dir) if args.report_dir else None)
            results = run_validation(opts)
            for line in summary_lines(results):
                print(line)
            return 0 if all(r.passed for r in results) else 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AccuracyError as exc:
        print(f"error: {exc} (estimate {exc.estimate})", file=sys.stderr)
        return 3
    except (DomainError, DegenerateStateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0
