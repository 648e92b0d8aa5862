"""
Experiment specs, presets and tabular output.

A spec is a flat TOML document.  ``preset`` picks the experiment; every other
key overrides one of that preset's documented defaults.  Unknown keys and keys
the preset does not use are errors.

    preset = "destruction"
    gains = [1, 2, 4, 8.5]
    gamma_a = 0.6
"""

from __future__ import annotations

import csv
import difflib
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from phasecomb import __version__
from phasecomb.comb import ThresholdError
from phasecomb.curve import FringeCurve
from phasecomb.loop import (
    AtomicPhaseProbe,
    Insertion,
    LoopConfig,
    NonConvergenceError,
    RamanDrive,
    atomic_phase,
    fringe_scan,
)
from phasecomb.sensitivity import (
    SensitivityReport,
    destruction_sweep,
    sensitivity,
    sql_benchmark_curve,
)

OUTPUT_DIR_ENV = "PHASECOMB_OUTPUT_DIR"
FORMATS = ("csv", "json-lines")
EXIT_OK, EXIT_SPEC, EXIT_NONCONVERGENCE = 0, 2, 3
MAX_LISTED_PHASES = 12


class SpecError(ValueError):
    """Invalid experiment spec; carries the offending key and line when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.key = key
        self.line = line


# --- key schema -------------------------------------------------------------

@dataclass(frozen=True)
class Key:
    kind: str  # float | int | str | complex | float-list
    doc: str
    check: Callable[[Any], bool] = lambda v: True
    rule: str = ""


def _finite(v) -> bool:
    return math.isfinite(v)


KEYS: dict[str, Key] = {
    # grid
    "grid_start": Key("float", "first phase of the grid, rad", _finite),
    "grid_stop": Key("float", "end of the grid (excluded), rad", _finite),
    "grid_points": Key("int", "number of grid phases", lambda v: v >= 2, ">= 2"),
    # loop
    "r_f": Key("float", "forward Raman squeeze r = eta t", lambda v: v >= 0, ">= 0"),
    "r_b": Key("float", "backward Raman squeeze", lambda v: v >= 0, ">= 0"),
    "stark_phase": Key("float", "ac-Stark phase per loop on the atomic arm, rad", _finite),
    "T_s": Key("float", "optical power transmissivity per round trip", lambda v: 0 < v <= 1, "in (0, 1]"),
    "gamma_a": Key("float", "atomic decay fraction per loop", lambda v: 0 <= v <= 1, "in [0, 1]"),
    "theta_A": Key("float", "injected atomic phase per loop, rad", _finite),
    "seed": Key("complex", "coherent amplitude fed into the optical input each loop (number or [re, im])"),
    "insertion_gain": Key("float", "power gain G_AM^2 of an intensity-preserving amplifier+attenuator", lambda v: v >= 1, ">= 1"),
    "J_max": Key("int", "round-trip cap", lambda v: v >= 1, ">= 1"),
    "steady_tol": Key("float", "relative change that counts as steady", lambda v: v > 0, "> 0"),
    # experiment specific
    "loops": Key("int", "fixed round-trip count for a transient fringe (0 = steady state)", lambda v: v >= 0, ">= 0"),
    "N_flux": Key("float", "phase-sensing particles per second", lambda v: 0 < v < math.inf, "> 0"),
    "gains": Key("float-list", "amplifier power gains G_AM^2", lambda v: len(v) > 0 and min(v) >= 1, "non-empty, all >= 1"),
    "phi": Key("float", "evaluation phase, rad (default: steepest point of the fringe)", _finite),
    "probe_powers": Key("float-list", "probe powers I_p", lambda v: len(v) > 0 and min(v) >= 0, "non-empty, all >= 0"),
    "probe_detuning": Key("float", "probe detuning Delta'", lambda v: v != 0 and _finite(v), "non-zero"),
    "probe_tau": Key("float", "probe delay time tau", lambda v: v > 0, "> 0"),
    "probe_coupling": Key("float", "probe coupling constant", _finite),
    "sweep_key": Key("str", "loop key to sweep"),
    "sweep_values": Key("float-list", "values of the swept key", lambda v: len(v) > 0, "non-empty"),
}
TOP_LEVEL = ("preset", "output", "format")
SWEEPABLE = ("r_f", "r_b", "stark_phase", "T_s", "gamma_a", "theta_A", "insertion_gain")

_GRID = {"grid_start": 0.0, "grid_stop": 2 * math.pi, "grid_points": 1024}
_LOOP_BASE = {
    "T_s": 1.0,
    "theta_A": 0.0,
    "seed": complex(1e5),
    "J_max": 10_000,
    "steady_tol": 1e-10,
}
# illustrative high-gain regime that lands beyond the SQL; not a fit to any measured apparatus
HIGH_GAIN = {
    **_LOOP_BASE,
    "r_f": 2.0,
    "r_b": 2.5,
    "stark_phase": 0.3,
    "T_s": 0.99,
    "gamma_a": 0.9996,
    "seed": complex(1e4),
}
_SAWTOOTH = {**_LOOP_BASE, "r_f": 0.3, "r_b": 0.3, "stark_phase": 0.3, "gamma_a": 0.5}


@dataclass(frozen=True)
class Preset:
    name: str
    summary: str
    defaults: Mapping[str, Any]
    columns: tuple[str, ...]


PRESETS: dict[str, Preset] = {
    p.name: p
    for p in [
        Preset(
            "fringe",
            "output photon mean and variance across phi (sawtooth fringe)",
            {**_GRID, **_SAWTOOTH, "insertion_gain": 1.0, "loops": 0},
            ("phi", "signal", "noise", "source"),
        ),
        Preset(
            "cosine-benchmark",
            "coherent Mach-Zehnder fringe with the same particle number",
            {**_GRID, "N_flux": 4e13},
            ("phi", "signal", "noise", "source"),
        ),
        Preset(
            "atomic-phase",
            "fringes under probe-induced atomic phases theta_A = c I_p tau / Delta'",
            {
                **_GRID,
                **_SAWTOOTH,
                "grid_points": 256,
                "probe_powers": [0.0, 0.5, 1.0, 2.0],
                "probe_detuning": 4.0,
                "probe_tau": 1.0,
                "probe_coupling": 1.0,
            },
            ("probe_power", "theta_A", "phi", "signal", "noise", "source"),
        ),
        Preset(
            "sensitivity",
            "best phase sensitivity against the SQL (high-gain, slow-decay loop)",
            {**_GRID, **HIGH_GAIN, "insertion_gain": 1.0, "N_flux": 4e13},
            ("phi_opt", "slope", "noise_std", "delta_phi", "sql", "db_beyond_sql"),
        ),
        Preset(
            "destruction",
            "signal and noise with an intensity-preserving amplifier+attenuator",
            {
                **_LOOP_BASE,
                "r_f": 0.5,
                "r_b": 0.5,
                "stark_phase": 0.3,
                "gamma_a": 0.6,
                "gains": [1.0, 2.0, 4.0, 8.5],
                "phi": None,
            },
            ("power_gain", "loss", "signal_db", "noise_db"),
        ),
        Preset(
            "sweep",
            "sensitivity against the SQL while one loop key varies",
            {
                **_GRID,
                **HIGH_GAIN,
                "insertion_gain": 1.0,
                "N_flux": 4e13,
                "sweep_key": "gamma_a",
                "sweep_values": [0.9996, 0.9997, 0.9999, 1.0],
            },
            ("value", "phi_opt", "slope", "noise_std", "delta_phi", "sql", "db_beyond_sql"),
        ),
    ]
}


# --- spec -------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    """A preset plus explicit overrides; ``resolved()`` fills in the defaults."""

    preset: str
    overrides: Mapping[str, Any] = field(default_factory=dict)
    output: str | None = None
    format: str = "csv"

    def resolved(self) -> dict[str, Any]:
        return {**PRESETS[self.preset].defaults, **self.overrides}

    def grid(self) -> np.ndarray:
        v = self.resolved()
        return np.linspace(v["grid_start"], v["grid_stop"], v["grid_points"], endpoint=False)

    def loop_config(self, **changes) -> LoopConfig:
        v = {**self.resolved(), **changes}
        gain = v.get("insertion_gain", 1.0)
        return LoopConfig(
            RamanDrive.from_squeeze(v["r_f"], v["stark_phase"]),
            RamanDrive.from_squeeze(v["r_b"]),
            phi=0.0,
            T_s=v["T_s"],
            gamma_a=v["gamma_a"],
            theta_A=v["theta_A"],
            insertion=None if gain == 1.0 else Insertion.intensity_preserving(gain),
            seed=v["seed"],
            J_max=v["J_max"],
            steady_tol=v["steady_tol"],
        )


def _line_of(text: str, key: str) -> int | None:
    pattern = re.compile(rf"^\s*(\"{re.escape(key)}\"|'{re.escape(key)}'|{re.escape(key)})\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return i
    return None


def _coerce(key: str, value: Any, line: int | None) -> Any:
    spec = KEYS[key]

    def bad(expected: str):
        return SpecError(f"{key} must be {expected}, got {value!r}", key, line)

    def number(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise bad("a number")
        return float(v)

    if spec.kind == "float":
        value = number(value)
        if math.isnan(value):
            raise bad("a number")
    elif spec.kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("an integer")
    elif spec.kind == "str":
        if not isinstance(value, str):
            raise bad("a string")
    elif spec.kind == "float-list":
        if not isinstance(value, list):
            raise bad("a list of numbers")
        value = [number(v) for v in value]
        if not all(math.isfinite(v) for v in value):
            raise bad("a list of finite numbers")
    elif spec.kind == "complex":
        if isinstance(value, list) and len(value) == 2:
            value = complex(number(value[0]), number(value[1]))
        else:
            value = complex(number(value))
        if not (math.isfinite(value.real) and math.isfinite(value.imag)):
            raise bad("finite")
    if not spec.check(value):
        raise SpecError(f"{key} = {value!r} is out of range ({spec.rule})", key, line)
    return value


def parse_spec(text: str, extra: Mapping[str, Any] | None = None) -> ExperimentSpec:
    """Validate a TOML spec; ``extra`` holds overrides applied on top (same rules)."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        m = re.search(r"line (\d+)", str(err))
        raise SpecError(f"malformed spec: {err}", line=int(m.group(1)) if m else None) from None
    doc = {**doc, **(extra or {})}

    def line(key):
        return _line_of(text, key)

    preset = doc.pop("preset", None)
    if preset is None:
        raise SpecError("missing required key 'preset'", "preset")
    if preset not in PRESETS:
        near = difflib.get_close_matches(str(preset), PRESETS, n=1)
        hint = f"; did you mean '{near[0]}'?" if near else ""
        raise SpecError(
            f"unknown preset {preset!r}{hint} (choose from {', '.join(PRESETS)})", "preset", line("preset")
        )
    output = doc.pop("output", None)
    if output is not None and not isinstance(output, str):
        raise SpecError("output must be a path string", "output", line("output"))
    fmt = doc.pop("format", "csv")
    if fmt not in FORMATS:
        raise SpecError(f"format must be one of {FORMATS}, got {fmt!r}", "format", line("format"))

    allowed = PRESETS[preset].defaults
    overrides = {}
    for key, value in doc.items():
        if key not in KEYS:
            near = difflib.get_close_matches(key, list(KEYS) + list(TOP_LEVEL), n=1, cutoff=0.6)
            hint = f"; did you mean '{near[0]}'?" if near else ""
            raise SpecError(f"unknown key '{key}'{hint}", key, line(key))
        if key not in allowed:
            raise SpecError(f"key '{key}' is not used by preset '{preset}'", key, line(key))
        overrides[key] = _coerce(key, value, line(key))

    spec = ExperimentSpec(preset, overrides, output, fmt)
    v = spec.resolved()
    if "grid_stop" in v and not v["grid_stop"] > v["grid_start"]:
        raise SpecError("grid_stop must exceed grid_start", "grid_stop", line("grid_stop"))
    if preset == "sweep" and v["sweep_key"] not in SWEEPABLE:
        raise SpecError(
            f"sweep_key must be one of {', '.join(SWEEPABLE)}, got {v['sweep_key']!r}",
            "sweep_key",
            line("sweep_key"),
        )
    return spec


def _toml_string(text: str) -> str:
    # TOML basic strings forbid raw control characters and DEL
    out = []
    for ch in text:
        if ch in '"\\':
            out.append("\\" + ch)
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, complex):
        return f"[{_toml_value(value.real)}, {_toml_value(value.imag)}]"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return _toml_string(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot render {value!r}")


def render_spec(spec: ExperimentSpec) -> str:
    """TOML text that parses back to ``spec``."""
    lines = [f"preset = {_toml_value(spec.preset)}"]
    if spec.output is not None:
        lines.append(f"output = {_toml_value(spec.output)}")
    lines.append(f"format = {_toml_value(spec.format)}")
    lines += [f"{k} = {_toml_value(v)}" for k, v in sorted(spec.overrides.items())]
    return "\n".join(lines) + "\n"


# --- running ----------------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    status: int
    data_path: Path | None = None
    manifest_path: Path | None = None
    message: str = ""


def _fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _report_row(report: SensitivityReport) -> list[float]:
    return [report.phi_opt, report.slope, report.noise_std, report.delta_phi, report.sql, report.db_beyond_sql]


def _curve_rows(curve: FringeCurve, prefix: tuple = ()) -> list[list]:
    return [[*prefix, p, s, n, curve.source] for p, s, n in zip(curve.phi, curve.signal, curve.noise)]


def _rows(spec: ExperimentSpec) -> tuple[list[list], dict[str, Any]]:
    """Data rows for the preset named in the spec file, plus notes for the manifest."""
    v = spec.resolved()
    name = spec.preset
    if name == "fringe":
        curve = fringe_scan(spec.loop_config(), spec.grid(), loops=v["loops"] or None)
        return _curve_rows(curve), {"signal": "photon mean of S_f", "noise": "photon-number variance of S_f"}
    if name == "cosine-benchmark":
        return _curve_rows(sql_benchmark_curve(v["N_flux"], spec.grid())), {"N_flux": v["N_flux"]}
    if name == "atomic-phase":
        rows = []
        for power in v["probe_powers"]:
            theta = atomic_phase(
                AtomicPhaseProbe(power, v["probe_detuning"], v["probe_tau"], v["probe_coupling"])
            )
            curve = fringe_scan(spec.loop_config(theta_A=theta), spec.grid())
            rows += _curve_rows(curve, (power, theta))
        return rows, {"theta_A": "c_probe * I_p * tau / Delta'"}
    if name == "sensitivity":
        report = sensitivity(fringe_scan(spec.loop_config(), spec.grid()), v["N_flux"])
        return [_report_row(report)], {"db_beyond_sql": "20 log10(sql / delta_phi)"}
    if name == "destruction":
        sweep = destruction_sweep(spec.loop_config(), v["gains"], v["phi"])
        rows = [[r.power_gain, r.loss, r.signal_db, r.noise_db] for r in sweep.rows]
        return rows, {"phi": sweep.phi, "signal_db": "10 log10 power ratio", "noise_db": "10 log10 variance ratio"}
    if name == "sweep":
        rows = []
        for value in v["sweep_values"]:
            cfg = spec.loop_config(**{v["sweep_key"]: value})
            rows.append([value, *_report_row(sensitivity(fringe_scan(cfg, spec.grid()), v["N_flux"]))])
        return rows, {"value": v["sweep_key"], "db_beyond_sql": "20 log10(sql / delta_phi)"}
    raise SpecError(f"unknown preset {name!r}", "preset")


def _serialize(columns: tuple[str, ...], rows: list[list], fmt: str) -> str:
    buf = io.StringIO()
    if fmt == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows([[_fmt(x) for x in row] for row in rows])
    else:
        for row in rows:
            record = {
                c: (float(_fmt(x)) if isinstance(x, (float, np.floating)) else x) for c, x in zip(columns, row)
            }
            buf.write(json.dumps(record) + "\n")
    return buf.getvalue()


def output_path(spec: ExperimentSpec) -> Path:
    if spec.output is not None:
        return Path(spec.output)
    suffix = ".csv" if spec.format == "csv" else ".jsonl"
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / f"{spec.preset}{suffix}"


def _manifest(spec: ExperimentSpec, notes: dict[str, Any]) -> dict[str, Any]:
    resolved = {
        k: ([v.real, v.imag] if isinstance(v, complex) else v) for k, v in sorted(spec.resolved().items())
    }
    return {
        "artifact": "phasecomb",
        "version": __version__,
        "preset": spec.preset,
        "columns": list(PRESETS[spec.preset].columns),
        "format": spec.format,
        "spec": render_spec(spec),
        "resolved": resolved,
        "notes": notes,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def run_experiment(spec: ExperimentSpec) -> RunResult:
    """Run an experiment spec and write the data file plus a ``.manifest.json`` beside it."""
    try:
        rows, notes = _rows(spec)
    except NonConvergenceError as err:
        shown = ", ".join(f"{p:.6g}" for p in err.phis[:MAX_LISTED_PHASES])
        more = len(err.phis) - MAX_LISTED_PHASES
        phis = shown + (f", ... ({more} more)" if more > 0 else "")
        return RunResult(
            EXIT_NONCONVERGENCE, message=f"{err} (last residual {err.residual:.3e}); phi = [{phis}]"
        )
    except ThresholdError as err:
        return RunResult(EXIT_NONCONVERGENCE, message=str(err))

    path = output_path(spec)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_serialize(PRESETS[spec.preset].columns, rows, spec.format))
    manifest = path.with_name(path.name + ".manifest.json")
    manifest.write_text(json.dumps(_manifest(spec, notes), indent=2, sort_keys=True) + "\n")
    return RunResult(EXIT_OK, path, manifest, f"wrote {len(rows)} rows to {path}")
