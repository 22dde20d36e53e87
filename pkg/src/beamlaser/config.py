"""Run configuration files.

INI-style text with the sections ``[physical]``, ``[simulation]``,
``[meanfield]`` and ``[design]``.  Physical quantities carry units (see
:mod:`beamlaser.units`); times in ``[simulation]`` are in units of the
transit time.  Any ``[physical]`` or grid value may be a comma-separated
list or ``linspace(start, stop, n)``, which turns the run into a sweep over
the Cartesian product of all listed values.

``[physical]`` takes either the full set of dimensional parameters or the
dimensionless groups ``flux_param``, ``doppler_param``, ``n_atoms`` with
optional ``kappa_tau``, ``delta_tau`` and ``gamma_tau``.
"""

import configparser
import hashlib
import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .design import DesignInput
from .langevin import SimOptions
from .params import PhysicalParams, from_dimensionless
from .units import UnitError, evaluate, parse_quantity

__all__ = ["ConfigError", "Config", "SimulationSettings", "MeanfieldSettings",
           "load_config", "load_design", "parse_values"]


class ConfigError(ValueError):
    """Malformed configuration; the message names the file, line and key."""


_PHYSICAL = {
    "g": "angular_rate", "kappa": "angular_rate", "delta": "angular_rate",
    "gamma": "angular_rate", "tau": "time", "phi": "rate", "delta_d": "angular_rate",
    "waist": "length", "wavelength": "length", "omega_a": "angular_rate",
}
_DIMENSIONLESS = {
    "flux_param": "dimensionless", "doppler_param": "dimensionless",
    "n_atoms": "dimensionless", "kappa_tau": "dimensionless",
    "delta_tau": "dimensionless", "gamma_tau": "dimensionless",
}
_PHYSICAL_DEFAULTS = {"delta": "0", "gamma": "0"}
_DIMENSIONLESS_REQUIRED = ("flux_param", "doppler_param", "n_atoms")

_SIMULATION = {
    "t_total": float, "sample_dt": float, "n_sub": int, "cavity_noise": bool,
    "spontaneous": bool, "trajectories": int, "seed": int, "workers": int,
    "t0": float, "max_lag": float, "save_trajectories": bool,
}
_MEANFIELD = {"flux_param": "grid", "doppler_param": "grid", "kappa_tau": float}
_DESIGN = {
    "gamma": "angular_rate", "wavelength": "length", "flux": "rate",
    "v_longitudinal": "velocity", "waist": "length", "cavity_length": "length",
    "finesse": "dimensionless", "cooperativity": "dimensionless",
    "accel_sensitivity": "per_acceleration", "cte": "per_temperature",
    "doppler_width": "angular_rate", "label": str,
}
_SECTIONS = {"physical", "simulation", "meanfield", "design"}


@dataclass(frozen=True)
class SimulationSettings:
    opts: SimOptions
    trajectories: int = 30
    seed: int = 0
    workers: Optional[int] = None
    t0: float = 10.0
    max_lag: Optional[float] = None
    save_trajectories: bool = True


@dataclass(frozen=True)
class MeanfieldSettings:
    flux_values: tuple
    doppler_values: tuple
    kappa_tau: Optional[float] = None


@dataclass(frozen=True)
class Config:
    path: str
    text: str
    sha256: str
    points: list = field(default_factory=list)   # [(sweep labels dict, PhysicalParams)]
    swept: tuple = ()
    simulation: Optional[SimulationSettings] = None
    meanfield: Optional[MeanfieldSettings] = None
    design: Optional[DesignInput] = None


class _Locator:
    """Maps (section, key) to source line numbers."""

    _SECTION = re.compile(r"^\s*\[([^\]]+)\]")
    _KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")

    def __init__(self, path, text):
        self.path = path
        self.lines = {}
        section = None
        for no, line in enumerate(text.splitlines(), 1):
            m = self._SECTION.match(line)
            if m:
                section = m.group(1).strip().lower()
                self.lines[(section, None)] = no
                continue
            m = self._KEY.match(line)
            if m and section is not None and not line[:1].isspace():
                self.lines[(section, m.group(1).strip().lower())] = no

    def error(self, section, key, msg):
        no = self.lines.get((section, key), self.lines.get((section, None), 0))
        where = f"[{section}] {key}" if key else f"[{section}]"
        return ConfigError(f"{self.path}:{no}: {where}: {msg}")


_LINSPACE = re.compile(r"^\s*linspace\s*\((.*)\)\s*$")


def parse_values(text):
    """Split a value into a list: ``linspace(a, b, n)`` or comma-separated items."""
    m = _LINSPACE.match(text)
    if m:
        parts = [p.strip() for p in m.group(1).split(",")]
        if len(parts) != 3:
            raise UnitError("linspace needs (start, stop, n)")
        a, b, n = evaluate(parts[0]), evaluate(parts[1]), evaluate(parts[2])
        if n != int(n) or n < 1:
            raise UnitError("linspace n must be a positive integer")
        return [float(x) for x in np.linspace(a, b, int(n))]
    return [p.strip() for p in text.split(",") if p.strip()]


def _as_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UnitError(f"expected a boolean, got {text!r}")


def _as_int(text):
    v = evaluate(text)
    if v != int(v):
        raise UnitError(f"expected an integer, got {text!r}")
    return int(v)


def _scalar(text, kind):
    if kind is bool:
        return _as_bool(text)
    if kind is int:
        return _as_int(text)
    if kind is float:
        return float(evaluate(text))
    if kind is str:
        return text.strip()
    return parse_quantity(text, kind)


def _read(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    loc = _Locator(str(path), text)
    for sec in parser.sections():
        if sec.lower() not in _SECTIONS:
            raise loc.error(sec.lower(), None, "unknown section")
    return text, parser, loc


def _section(parser, loc, name, schema):
    if not parser.has_section(name):
        return None
    out = {}
    for key, raw in parser.items(name):
        if key not in schema:
            raise loc.error(name, key, f"unknown key (allowed: {', '.join(sorted(schema))})")
        out[key] = raw
    return out


def _physical_points(raw, loc):
    dims = set(raw) & set(_DIMENSIONLESS)
    phys = set(raw) & set(_PHYSICAL)
    if dims and phys:
        key = sorted(dims)[0]
        raise loc.error("physical", key, "cannot mix dimensionless groups with physical parameters")
    schema = _DIMENSIONLESS if dims else _PHYSICAL
    required = _DIMENSIONLESS_REQUIRED if dims else [k for k in _PHYSICAL if k not in _PHYSICAL_DEFAULTS]
    for key in required:
        if key not in raw:
            raise loc.error("physical", None, f"missing key {key!r}")
    if not dims:
        raw = {**_PHYSICAL_DEFAULTS, **raw}

    values = {}
    for key, text in raw.items():
        try:
            items = parse_values(text)
            values[key] = [v if isinstance(v, float) else parse_quantity(v, schema[key])
                           for v in items]
        except UnitError as exc:
            raise loc.error("physical", key, str(exc)) from None
        if not values[key]:
            raise loc.error("physical", key, "empty value")
    swept = tuple(k for k in raw if len(values[k]) > 1)
    keys = list(values)
    points = []
    for combo in itertools.product(*(values[k] for k in keys)):
        kw = dict(zip(keys, combo))
        try:
            if dims:
                n = kw.pop("n_atoms")
                if n != int(n):
                    raise ValueError("n_atoms must be an integer")
                p = from_dimensionless(n_atoms=int(n), **kw)
            else:
                p = PhysicalParams(**kw)
        except (TypeError, ValueError) as exc:
            raise loc.error("physical", None, str(exc)) from None
        points.append(({k: dict(zip(keys, combo))[k] for k in swept}, p))
    return points, swept


def _simulation(raw, loc):
    vals = {}
    for key, text in raw.items():
        try:
            vals[key] = _scalar(text, _SIMULATION[key])
        except UnitError as exc:
            raise loc.error("simulation", key, str(exc)) from None
    opt_keys = ("t_total", "sample_dt", "n_sub", "cavity_noise", "spontaneous")
    try:
        opts = SimOptions(**{k: vals.pop(k) for k in opt_keys if k in vals})
        settings = SimulationSettings(opts=opts, **vals)
    except ValueError as exc:
        raise loc.error("simulation", None, str(exc)) from None
    if settings.trajectories < 1:
        raise loc.error("simulation", "trajectories", "must be >= 1")
    if settings.seed < 0:
        raise loc.error("simulation", "seed", "must be >= 0")
    if not 0 <= settings.t0 < opts.t_total:
        raise loc.error("simulation", "t0", "must lie in [0, t_total)")
    return settings


def _meanfield(raw, loc):
    vals = {}
    for key in ("flux_param", "doppler_param"):
        if key not in raw:
            raise loc.error("meanfield", None, f"missing key {key!r}")
        try:
            vals[key] = tuple(v if isinstance(v, float) else float(evaluate(v))
                              for v in parse_values(raw[key]))
        except UnitError as exc:
            raise loc.error("meanfield", key, str(exc)) from None
    kt = None
    if "kappa_tau" in raw:
        try:
            kt = float(evaluate(raw["kappa_tau"]))
        except UnitError as exc:
            raise loc.error("meanfield", "kappa_tau", str(exc)) from None
    return MeanfieldSettings(vals["flux_param"], vals["doppler_param"], kt)


def _design(raw, loc):
    vals = {}
    for key, text in raw.items():
        try:
            vals[key] = _scalar(text, _DESIGN[key])
        except UnitError as exc:
            raise loc.error("design", key, str(exc)) from None
    try:
        return DesignInput(**vals)
    except TypeError as exc:
        missing = [k for k in _DESIGN if k not in vals and k not in ("doppler_width", "label")]
        raise loc.error("design", None, f"missing keys {missing}") from exc
    except ValueError as exc:
        raise loc.error("design", None, str(exc)) from None


def load_config(path):
    """Parse and validate a run configuration; raises :class:`ConfigError`."""
    text, parser, loc = _read(path)
    raw_phys = _section(parser, loc, "physical", {**_PHYSICAL, **_DIMENSIONLESS})
    raw_sim = _section(parser, loc, "simulation", _SIMULATION)
    raw_mf = _section(parser, loc, "meanfield", _MEANFIELD)
    raw_des = _section(parser, loc, "design", _DESIGN)
    points, swept = _physical_points(raw_phys, loc) if raw_phys is not None else ([], ())
    sim = _simulation(raw_sim, loc) if raw_sim is not None else None
    if sim is not None and not points:
        raise loc.error("simulation", None, "a [physical] section is required")
    return Config(
        path=str(path), text=text, sha256=hashlib.sha256(text.encode()).hexdigest(),
        points=points, swept=swept, simulation=sim,
        meanfield=_meanfield(raw_mf, loc) if raw_mf is not None else None,
        design=_design(raw_des, loc) if raw_des is not None else None,
    )


def load_design(path):
    """Read a design input file (a config with a ``[design]`` section)."""
    cfg = load_config(path)
    if cfg.design is None:
        raise ConfigError(f"{path}: no [design] section")
    return cfg.design
