"""Scenario configuration: strict YAML schema with defaults and units in key names."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .continuation import ContinuationOptions, InternalFriction
from .scenarios import Scenario, XTranslation
from .solvers import DynamicOptions, NewtonOptions


class ConfigError(ValueError):
    """Raised for schema violations; the message names the offending key."""


# key -> default; nested dicts are blocks and ``None`` marks an optional
# value that is derived when unset. Geometry and material are SI: lengths in
# m, rho areal [kg/m^2], g [m/s^2], eta_m and eta_b [s^2/m^2].
SCHEMA = {
    "geometry": {
        "l": 0.3,
        "b": 1.0,
        "x_f": None,
    },
    "material": {
        "eta_m": 1e-3,
        "eta_b": 100.0,
        "nu": 0.0,
        "rho": 1.0,
        "g": 9.81,
    },
    "mesh": {
        "nx": None,
        "nz": 4,
    },
    "model": {
        "grasp": "clamp",
        "stress_model": "svk",
        "contact_factor": 1e4,
        "lumped_mass": False,
    },
    "static": {
        "max_iterations": 50,
        "relative_tolerance": 1e-8,
        "backtrack": 0.5,
    },
    "dynamic": {
        "dt_seconds": 4e-3,
        "beta": 0.49,
        "gamma": 0.9,
        "alpha_m_per_second": 2.0,
        "settle_energy": 1e-6,
        "settle_steps": 20,
        "max_steps": 20000,
    },
    "eigen": {
        "max_shift_tries": 40,
    },
    "continuation": {
        "step": 0.01,
        "min_step": 1e-4,
        "eps_stab": 1e-6,
        "failure_ratio": 1e-3,
        "bracket_tol_meters": None,
        "handoff": True,
        "kick": 1e-3,
        "friction": {
            "enabled": False,
            "coefficient": None,
            "scale": 1e-3,
            "cap": 1e-2,
        },
    },
    "path": {
        "generator": "x_translation",
        "file": None,
        "z_meters": 0.05,
        "x_start_meters": 0.24,
        "x_end_meters": 0.295,
        "theta_radians": 0.0,
        "points": 41,
    },
    "sweep": {
        "z_meters": [0.05],
        "eta_b": None,
    },
    "assess": {
        "paths": ["triangular", "circular", "r_path"],
        "r_path_friction": True,
    },
    "output": {
        "directory": "out",
        "snapshot_stride": 10,
        "svg": True,
    },
    "seed": 0,
    "expect_stable": False,
}

GENERATORS = ("x_translation", "triangular", "circular", "r_path", "file")


def _merge(schema, data, prefix=""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    out = {}
    for key in data:
        if key not in schema:
            raise ConfigError(f"unknown key '{prefix}{key}'")
    for key, default in schema.items():
        name = prefix + key
        if isinstance(default, dict):
            out[key] = _merge(default, data.get(key, {}) or {}, name + ".")
        elif key in data:
            out[key] = _coerce(name, default, data[key])
        else:
            out[key] = copy.deepcopy(default)
    return out


def _coerce(name, default, value):
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"'{name}' must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{name}' must be an integer")
        return value
    if isinstance(default, float) or default is None and isinstance(value, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{name}' must be a number")
        return float(value)
    if isinstance(default, list) or (default is None and isinstance(value, list)):
        if not isinstance(value, list):
            raise ConfigError(f"'{name}' must be a list")
        return list(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"'{name}' must be a string")
        return value
    return value


def resolve(data, base_dir=None):
    """Validate a raw mapping and expand every default.

    Relative file names are resolved against ``base_dir``.
    """
    cfg = _merge(SCHEMA, data or {})
    gen = cfg["path"]["generator"]
    if gen not in GENERATORS:
        raise ConfigError(f"'path.generator' must be one of {', '.join(GENERATORS)}")
    if gen == "file":
        f = cfg["path"]["file"]
        if not f:
            raise ConfigError("'path.file' is required with generator 'file'")
        p = Path(f)
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        if not p.exists():
            raise ConfigError(f"'path.file' does not exist: {p}")
        cfg["path"]["file"] = str(p)
    if cfg["model"]["grasp"] not in ("clamp", "pin"):
        raise ConfigError("'model.grasp' must be 'clamp' or 'pin'")
    if cfg["sweep"]["eta_b"] is None:
        cfg["sweep"]["eta_b"] = [cfg["material"]["eta_b"]]
    for name in ("z_meters", "eta_b"):
        vals = cfg["sweep"][name]
        if not vals or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            raise ConfigError(f"'sweep.{name}' must be a non-empty list of numbers")
        cfg["sweep"][name] = [float(v) for v in vals]
    for p in cfg["assess"]["paths"]:
        if p not in ("triangular", "circular", "r_path") and not str(p).startswith("file:"):
            raise ConfigError(f"'assess.paths' entry {p!r} is not a path name")
    try:
        build_scenario(cfg)
        continuation_options(cfg)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load(path):
    """Read and resolve a YAML configuration file."""
    p = Path(path)
    try:
        data = yaml.safe_load(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return resolve(data, base_dir=p.parent)


def config_hash(cfg):
    """SHA-256 of the canonical JSON form of a resolved configuration."""
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# --------------------------------------------------------------------------
# config -> objects


def build_scenario(cfg, eta_b=None):
    g, m, mesh, model = cfg["geometry"], cfg["material"], cfg["mesh"], cfg["model"]
    l = g["l"]
    x_f = g["x_f"] if g["x_f"] is not None else 0.55 * l
    sc = Scenario(
        length=l,
        fold_ratio=x_f / l,
        width=g["b"],
        eta_m=m["eta_m"],
        eta_b=m["eta_b"] if eta_b is None else float(eta_b),
        nu=m["nu"],
        rho=m["rho"],
        gravity=m["g"],
        nz=mesh["nz"],
        grasp=model["grasp"],
        contact_factor=model["contact_factor"],
        stress_model=model["stress_model"],
        lumped_mass=model["lumped_mass"],
    )
    from .scenarios import resolution_for

    nx = mesh["nx"] if mesh["nx"] is not None else resolution_for(sc)
    sc = sc.with_(nx=int(nx))
    sc.geometry()  # validates geometry and material
    return sc


def x_translation(cfg, z=None):
    p = cfg["path"]
    return XTranslation(
        z=p["z_meters"] if z is None else float(z),
        x_start=p["x_start_meters"],
        x_end=p["x_end_meters"],
        theta=p["theta_radians"],
    )


def continuation_options(cfg):
    c, s, d = cfg["continuation"], cfg["static"], cfg["dynamic"]
    newton = NewtonOptions(
        max_iterations=s["max_iterations"],
        relative_tolerance=s["relative_tolerance"],
        backtrack=s["backtrack"],
    )
    dynamic = DynamicOptions(
        dt=d["dt_seconds"],
        beta=d["beta"],
        gamma=d["gamma"],
        alpha_m=d["alpha_m_per_second"],
        settle_energy=d["settle_energy"],
        settle_steps=d["settle_steps"],
        max_steps=d["max_steps"],
    )
    return ContinuationOptions(
        step=c["step"],
        min_step=c["min_step"],
        eps_stab=c["eps_stab"],
        failure_ratio=c["failure_ratio"],
        bracket_tol=c["bracket_tol_meters"],
        handoff=c["handoff"],
        kick=c["kick"],
        eigen_shift_tries=cfg["eigen"]["max_shift_tries"],
        newton=newton,
        dynamic=dynamic,
    )


def friction(cfg):
    f = cfg["continuation"]["friction"]
    return InternalFriction(enabled=f["enabled"], coefficient=f["coefficient"], scale=f["scale"], cap=f["cap"])
