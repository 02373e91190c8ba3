"""YAML configuration files for runs.

Layout (all sections optional except where a preset is not given)::

    units: G            # or MHz: frequencies as ω/2π in MHz, times in ns
    g_mhz: 50.0         # G/2π used for MHz conversion
    preset: qtune-fig4a # start from a named preset, then apply the sections below
    params:     {kappa_coll: 1.0, Delta_c_static: 8.0, ...}
    ensemble:   {n_classes: 300, lineshape: gaussian, ...}
    protocol:   {kind: qtune, sweep_range: 3.0, T: 100.0}
    stage: mw-only
    initial: spin
    photon:     {T: 10.0, field: grid}
    eval_time: null
    integrator: {method: rk-adaptive-5(4), rel_tol: 1.0e-9}

Internally everything is in units of G; :func:`dump_config` writes G units
unless asked otherwise.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Mapping

import yaml

from .integrator import IntegratorConfig
from .model import G_MHZ, EnsembleSpec, PhysicalParams
from .scan import PhotonSettings, Protocol, ProtocolRun

UNITS = ("G", "MHz")

# which fields carry frequency or time dimensions (for unit conversion)
_FREQ = {
    "params": {f.name for f in fields(PhysicalParams)} - {"n_spins_effective"},
    "ensemble": {"width_sb", "width_ab"},
    "protocol": {"sweep_range", "detuning"},
    "photon": set(),
    "integrator": set(),
}
_TIME = {
    "params": set(),
    "ensemble": set(),
    "protocol": {"T"},
    "photon": {"T"},
    "integrator": {"dt", "max_step", "record_interval"},
}
_SECTIONS = {
    "params": PhysicalParams,
    "ensemble": EnsembleSpec,
    "protocol": Protocol,
    "photon": PhotonSettings,
    "integrator": IntegratorConfig,
}
_SCALARS = ("stage", "initial", "eval_time", "name")
_TOP = set(_SECTIONS) | set(_SCALARS) | {"units", "g_mhz", "preset"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    run: ProtocolRun = field(default_factory=ProtocolRun)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)


def _g_per_mhz(g_mhz: float) -> float:
    return 1.0 / g_mhz


def _time_factor(g_mhz: float) -> float:
    # t[1/G] = t[ns] * 2π g_mhz 1e-3
    return 2.0 * math.pi * g_mhz * 1e-3


def _convert(doc: dict, to_G: bool, g_mhz: float) -> dict:
    fq = _g_per_mhz(g_mhz)
    ft = _time_factor(g_mhz)
    if not to_G:
        fq, ft = 1.0 / fq, 1.0 / ft
    out = copy.deepcopy(doc)
    for sec in _SECTIONS:
        body = out.get(sec)
        if not isinstance(body, dict):
            continue
        for k, v in body.items():
            if v is None or isinstance(v, (str, bool, list)):
                continue
            if k in _FREQ[sec]:
                body[k] = v * fq
            elif k in _TIME[sec] and not (isinstance(v, float) and math.isinf(v)):
                body[k] = v * ft
    if out.get("eval_time") is not None:
        out["eval_time"] = out["eval_time"] * ft
    return out


def run_to_doc(cfg: RunConfig) -> dict:
    d = cfg.run.to_dict()
    d["integrator"] = asdict(cfg.integrator)
    return d


def _build(doc: Mapping) -> RunConfig:
    base = RunConfig()
    if doc.get("preset"):
        from .presets import preset_run

        try:
            base = RunConfig(preset_run(doc["preset"]))
        except KeyError as e:
            raise ConfigError(str(e.args[0])) from None
    merged = run_to_doc(base)
    for sec in _SECTIONS:
        body = doc.get(sec)
        if body is None:
            continue
        if not isinstance(body, Mapping):
            raise ConfigError(f"section {sec!r} must be a mapping")
        allowed = {f.name for f in fields(_SECTIONS[sec])}
        for k, v in body.items():
            if k not in allowed:
                raise ConfigError(f"unknown key {sec}.{k}; valid keys: {', '.join(sorted(allowed))}")
            merged[sec][k] = v
    for k in _SCALARS:
        if k in doc:
            merged[k] = doc[k]
    integ = merged.pop("integrator")
    try:
        run = ProtocolRun.from_dict(merged)
        if isinstance(integ.get("max_step"), str):
            integ["max_step"] = float(integ["max_step"])
        ic = IntegratorConfig(**integ)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    return RunConfig(run, ic)


def config_from_doc(doc: Mapping) -> RunConfig:
    """Validate a parsed document and build the in-memory configuration."""
    if not isinstance(doc, Mapping):
        raise ConfigError("configuration must be a mapping at top level")
    unknown = set(doc) - _TOP
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(unknown))}")
    units = doc.get("units", "G")
    if units not in UNITS:
        raise ConfigError(f"units must be one of {UNITS}, got {units!r}")
    g_mhz = float(doc.get("g_mhz", G_MHZ))
    if units == "MHz":
        doc = _convert(dict(doc), to_G=True, g_mhz=g_mhz)
    if not doc.get("preset") and "protocol" not in doc and doc.get("stage", "mw-only") == "mw-only":
        raise ConfigError("configuration needs a preset or a protocol section")
    return _build(doc)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from None
    return config_from_doc(doc or {})


def dump_config(cfg: RunConfig, units: str = "G", g_mhz: float = G_MHZ) -> str:
    if units not in UNITS:
        raise ConfigError(f"units must be one of {UNITS}")
    doc = run_to_doc(cfg)
    if units == "MHz":
        doc = _convert(doc, to_G=False, g_mhz=g_mhz)
    if math.isinf(doc["integrator"]["max_step"]):
        doc["integrator"]["max_step"] = "inf"
    head = {"units": units}
    if units == "MHz":
        head["g_mhz"] = g_mhz
    head.update(doc)
    note = ("# frequencies in units of G, times in units of 1/G\n" if units == "G"
            else "# frequencies as ω/2π in MHz, times in ns\n")
    return note + yaml.safe_dump(head, sort_keys=False)


def parse_value(text: str):
    """Scalar from an override string (YAML rules: 3 → int, 1e-3 → float, null → None)."""
    try:
        v = yaml.safe_load(text)
    except yaml.YAMLError:
        return text
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    return v


def apply_overrides(cfg: RunConfig, overrides: Iterable[str]) -> RunConfig:
    """Apply ``section.key=value`` (or top-level ``key=value``) overrides.

    Values are in the same units as the configuration (G units)."""
    doc = run_to_doc(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        key = key.strip()
        value = parse_value(text.strip())
        parts = key.split(".")
        if len(parts) == 1:
            if parts[0] not in _SCALARS:
                raise ConfigError(f"unknown override key {key!r}")
            doc[parts[0]] = value
        elif len(parts) == 2 and parts[0] in _SECTIONS:
            sec, k = parts
            if k not in {f.name for f in fields(_SECTIONS[sec])}:
                raise ConfigError(f"unknown override key {key!r}")
            if sec == "ensemble" and k == "disorder_xi":
                value = [float(complex(str(value).replace(" ", "")).real),
                         float(complex(str(value).replace(" ", "")).imag)]
            doc[sec][k] = value
        else:
            raise ConfigError(f"unknown override key {key!r}")
    return config_from_doc(doc)
