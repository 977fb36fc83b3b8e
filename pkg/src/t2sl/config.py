"""Scenario config files (TOML) to validated run configurations.

A config names a preset and optionally overrides any part of it::

    scenario = "squeezing_linear"
    n_traj = 200
    master_seed = 7

    [detection]
    theta = [0.0, 0.7853981633974483]

    [[optical]]          # merged field-by-field into optical mode 0
    kappa = 1.0

Unknown keys are errors, reported with the line they appear on.
``scenario`` may also be the path of another config file, which is loaded
first and then overridden.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

try:
    import tomllib  # type: ignore[import-not-found]
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import scenarios as sc
from .detection import DetectionConfig, FilterSpec
from .model import Coupling, MechanicalMode, Modulation, OpticalMode, SystemSpec, validate_spec
from .propagator import TimeGrid


class ConfigError(ValueError):
    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class Flags:
    qlt_compare: bool = False
    components: bool = False
    mechanical_spectrum: bool = False
    deterministic_reduce: bool = True
    one_sided: bool = False
    plots: bool = False


@dataclass(frozen=True)
class RunConfig:
    preset: sc.ScenarioPreset
    n_traj: int
    master_seed: int = 1
    workers: Optional[int] = None
    output_dir: str = "t2sl-out"
    flags: Flags = Flags()
    batch_size: int = 100
    output_constant: Optional[Any] = None
    source: str = ""

    @property
    def scenario(self) -> str:
        return self.preset.name

    @property
    def thetas(self) -> Tuple[float, ...]:
        return self.preset.thetas

    @property
    def omega_het(self) -> float:
        return self.preset.omega_het

    @property
    def filter(self) -> FilterSpec:
        return self.preset.filter


_TOP = {"scenario", "n_traj", "master_seed", "workers", "output_dir", "batch_size", "output_constant",
        "detection", "filter", "flags", "grid", "optical", "mechanical", "couplings", "modulation"}
_SECTIONS = {
    "detection": {"theta", "omega_het"},
    "filter": {f.name for f in fields(FilterSpec)},
    "flags": {f.name for f in fields(Flags)},
    "grid": {"total_span", "coarse_step", "fine_step", "transient"},
    "optical": {f.name for f in fields(OpticalMode)},
    "mechanical": {f.name for f in fields(MechanicalMode)},
    "couplings": {f.name for f in fields(Coupling)},
    "modulation": {f.name for f in fields(Modulation)},
}
_ARRAYS = {"optical", "mechanical", "couplings"}


def _key_lines(text: str) -> Dict[Tuple[str, str], int]:
    """Map (section, key) to the first line defining it; top-level section is ''."""
    out: Dict[Tuple[str, str], int] = {}
    section = ""
    header = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.\-]+)\s*\]\]?")
    assign = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")
    for n, line in enumerate(text.splitlines(), 1):
        m = header.match(line)
        if m:
            section = m.group(1)
            out.setdefault(("", section), n)
            continue
        m = assign.match(line)
        if m:
            out.setdefault((section, m.group(1)), n)
    return out


def _where(lines, section, key) -> str:
    n = lines.get((section, key))
    return f"line {n}: " if n else ""


def _merge_dataclass(obj, values: dict, label: str, errors: List[str], lines, section) -> Any:
    kw = {}
    for k, v in values.items():
        cur = getattr(obj, k)
        if isinstance(cur, bool) or isinstance(v, bool):
            if not isinstance(v, bool):
                errors.append(f"{_where(lines, section, k)}{label}.{k}: expected true/false")
                continue
        elif isinstance(cur, int) and not isinstance(v, int):
            errors.append(f"{_where(lines, section, k)}{label}.{k}: expected an integer")
            continue
        elif isinstance(cur, float) and not isinstance(v, (int, float)):
            errors.append(f"{_where(lines, section, k)}{label}.{k}: expected a number")
            continue
        kw[k] = float(v) if isinstance(cur, float) else v
    return replace(obj, **kw)


_DEFAULT_MODE = {"optical": OpticalMode(1.0), "mechanical": MechanicalMode(0.1, 1.0), "couplings": Coupling()}


def parse_config(text: str, base_dir: Optional[str] = None, _depth: int = 0) -> RunConfig:
    """Parse config text into a validated :class:`RunConfig` or raise :class:`ConfigError`."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax error: {exc}"]) from None
    lines = _key_lines(text)
    errors: List[str] = []

    for k in data:
        if k not in _TOP:
            errors.append(f"{_where(lines, '', k)}unknown key {k!r}")
    for sec, allowed in _SECTIONS.items():
        if sec not in data:
            continue
        tables = data[sec] if sec in _ARRAYS else [data[sec]]
        if sec in _ARRAYS and not isinstance(data[sec], list):
            errors.append(f"{_where(lines, '', sec)}{sec} must be an array of tables ([[{sec}]])")
            continue
        if not all(isinstance(t, dict) for t in tables):
            errors.append(f"{_where(lines, '', sec)}{sec} must be a table")
            continue
        for t in tables:
            for k in t:
                if k not in allowed:
                    errors.append(f"{_where(lines, sec, k)}unknown key {sec}.{k!r}")
    if errors:
        raise ConfigError(errors)

    # base preset
    name = data.get("scenario")
    if not isinstance(name, str):
        raise ConfigError([f"{_where(lines, '', 'scenario')}scenario: required preset name or config path"])
    parent: Optional[RunConfig] = None
    if name in sc.PRESET_NAMES:
        p = sc.preset(name)
    else:
        path = Path(base_dir or ".") / name
        if not path.is_file() or _depth > 4:
            raise ConfigError([f"{_where(lines, '', 'scenario')}scenario: unknown preset or missing file {name!r}; "
                               f"presets are {', '.join(sc.PRESET_NAMES)}"])
        parent = parse_config(path.read_text(), str(path.parent), _depth + 1)
        p = parent.preset

    # system overrides
    spec = p.spec
    lists = {"optical": list(spec.optical), "mechanical": list(spec.mechanical), "couplings": list(spec.couplings)}
    for sec in _ARRAYS:
        for i, t in enumerate(data.get(sec, [])):
            cur = lists[sec][i] if i < len(lists[sec]) else _DEFAULT_MODE[sec]
            merged = _merge_dataclass(cur, t, f"{sec}[{i}]", errors, lines, sec)
            if i < len(lists[sec]):
                lists[sec][i] = merged
            else:
                lists[sec].append(merged)
    mod = spec.modulation
    if "modulation" in data:
        base_mod = mod or Modulation(0.0, 1.0, enabled=False)
        mod = _merge_dataclass(base_mod, data["modulation"], "modulation", errors, lines, "modulation")
    spec = SystemSpec(lists["optical"], lists["mechanical"], lists["couplings"], mod)
    for v in validate_spec(spec):
        sec = v.field.split("[")[0].split(".")[0]
        key = v.field.rsplit(".", 1)[-1]
        errors.append(f"{_where(lines, sec, key)}{v}")

    # grid
    g = p.grid
    if "grid" in data:
        gd = {"total_span": g.total_span, "coarse_step": g.coarse_step, "fine_step": g.fine_step,
              "transient": g.transient}
        for k, v in data["grid"].items():
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                errors.append(f"{_where(lines, 'grid', k)}grid.{k}: expected a number")
            else:
                gd[k] = float(v)
        if "coarse_step" in data["grid"] and "fine_step" not in data["grid"]:
            gd["fine_step"] = gd["coarse_step"] / g.substeps
        try:
            g = TimeGrid(**gd)
        except ValueError as exc:
            errors.append(f"{_where(lines, '', 'grid')}grid: {exc}")

    # detection
    thetas, omega_het = p.thetas, p.omega_het
    if "detection" in data:
        d = data["detection"]
        if "theta" in d:
            th = d["theta"] if isinstance(d["theta"], list) else [d["theta"]]
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in th):
                errors.append(f"{_where(lines, 'detection', 'theta')}detection.theta: expected number or list")
            else:
                thetas = tuple(float(x) for x in th)
        if "omega_het" in d:
            omega_het = d["omega_het"]
            if not isinstance(omega_het, (int, float)) or isinstance(omega_het, bool):
                errors.append(f"{_where(lines, 'detection', 'omega_het')}detection.omega_het: expected a number")
                omega_het = p.omega_het
        for th in thetas:
            try:
                DetectionConfig(th, float(omega_het)).check_grid(g.coarse_step)
            except ValueError as exc:
                errors.append(f"{_where(lines, 'detection', 'theta')}detection: {exc}")
                break

    filt = p.filter
    if "filter" in data:
        try:
            filt = _merge_dataclass(filt, data["filter"], "filter", errors, lines, "filter")
        except ValueError as exc:
            errors.append(f"{_where(lines, 'filter', 'kind')}filter: {exc}")
    parent_flags = parent.flags if parent else Flags()
    flags = _merge_dataclass(parent_flags, data.get("flags", {}), "flags", errors, lines, "flags")

    def top(key, default, kind):
        if key not in data:
            return default
        v = data[key]
        if kind is int and (not isinstance(v, int) or isinstance(v, bool)):
            errors.append(f"{_where(lines, '', key)}{key}: expected an integer")
            return default
        if kind is str and not isinstance(v, str):
            errors.append(f"{_where(lines, '', key)}{key}: expected a string")
            return default
        return v

    n_traj = top("n_traj", parent.n_traj if parent else p.n_traj, int)
    if n_traj < 1:
        errors.append(f"{_where(lines, '', 'n_traj')}n_traj: must be >= 1")
    seed = top("master_seed", parent.master_seed if parent else 1, int)
    workers = top("workers", parent.workers if parent else None, int)
    if workers is not None and workers < 1:
        errors.append(f"{_where(lines, '', 'workers')}workers: must be >= 1")
    outdir = top("output_dir", parent.output_dir if parent else "t2sl-out", str)
    batch = top("batch_size", parent.batch_size if parent else 100, int)
    if batch < 1:
        errors.append(f"{_where(lines, '', 'batch_size')}batch_size: must be >= 1")
    oc = data.get("output_constant", parent.output_constant if parent else None)
    if oc is not None and not (oc in ("paper", "calibrated") or
                               (isinstance(oc, (int, float)) and not isinstance(oc, bool) and oc > 0)):
        errors.append(f"{_where(lines, '', 'output_constant')}output_constant: 'paper', 'calibrated' or a positive number")

    if errors:
        raise ConfigError(errors)
    preset = replace(p, spec=spec, grid=g, thetas=thetas, omega_het=float(omega_het), filter=filt)
    return RunConfig(preset, int(n_traj), int(seed), workers, outdir, flags, int(batch), oc, text)


def load_config(path: str) -> RunConfig:
    return parse_config(Path(path).read_text(), os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# serialisation


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return str(v)


def _table(obj) -> List[str]:
    return [f"{f.name} = {_fmt(getattr(obj, f.name))}" for f in fields(obj)]


def dump_config(cfg: RunConfig) -> str:
    """Config text that parses back to an equivalent RunConfig."""
    p = cfg.preset
    out = [f"scenario = {_fmt(p.name)}", f"n_traj = {cfg.n_traj}", f"master_seed = {cfg.master_seed}",
           f"output_dir = {_fmt(cfg.output_dir)}", f"batch_size = {cfg.batch_size}"]
    if cfg.workers is not None:
        out.append(f"workers = {cfg.workers}")
    if cfg.output_constant is not None:
        out.append(f"output_constant = {_fmt(cfg.output_constant)}")
    g = p.grid
    out += ["", "[grid]", f"total_span = {_fmt(g.total_span)}", f"coarse_step = {_fmt(g.coarse_step)}",
            f"fine_step = {_fmt(g.fine_step)}"]
    if g.transient is not None:
        out.append(f"transient = {_fmt(g.transient)}")
    out += ["", "[detection]", f"theta = {_fmt(list(p.thetas))}", f"omega_het = {_fmt(p.omega_het)}"]
    out += ["", "[filter]"] + _table(p.filter)
    out += ["", "[flags]"] + _table(cfg.flags)
    for sec in ("optical", "mechanical", "couplings"):
        for m in getattr(p.spec, sec):
            out += ["", f"[[{sec}]]"] + _table(m)
    if p.spec.modulation is not None:
        out += ["", "[modulation]"] + _table(p.spec.modulation)
    return "\n".join(out) + "\n"


def preset_to_config(name: str, **kw) -> str:
    p = sc.preset(name)
    return dump_config(RunConfig(p, kw.pop("n_traj", p.n_traj), **kw))
