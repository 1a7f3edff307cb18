"""Scenario configuration files.

Grammar (YAML mapping; every key optional except ``protocol``)::

    protocol: two_bump          # two_bump | three_term | bec
    a: 4 um                     # length: m, mm, um, nm, or a bare number in a_ho
    omega: 780 rad/s            # angular frequency: rad/s or 1/s (unit required)
    mass: 1.44e-25 kg           # kg or amu (unit required)
    t_f: 320 ms                 # time: s, ms, us, or a bare number in 1/omega
    gamma: 1.0                  # Gaussian width parameter in 1/a_ho
    g: 0.0                      # gN / (hbar omega a_ho)
    lambda: [0.0]               # step heights in units of hbar omega
    resolution:
      half_width: 12.0          # a_ho
      n_x: 513                  # odd
      n_t: 4000                 # design samples
      dt: null                  # propagation step in 1/omega; null = automatic
    toggles:
      two_mode: false
      criteria: false
      initial: perturbed        # perturbed | unperturbed
    sweep:
      axis: lambda              # lambda | tf | g
      values: null              # null = the lambda list; tf values take time units
    output:
      dir: out
      dump_stride: 0            # density snapshots every k steps in ``evolve``

A quantity is written ``"<number> <unit>"``. Unknown keys are rejected.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, fields, replace

import yaml

from .lab import PROTOCOLS, Scenario
from .numerics import Units


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


LENGTH = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9}
TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6}
FREQUENCY = {"rad/s": 1.0, "1/s": 1.0}
MASS = {"kg": 1.0, "amu": 1.66053906660e-27}

_QTY = re.compile(r"^\s*([-+0-9.eE]+)\s*(\S*)\s*$")


@dataclass(frozen=True)
class Quantity:
    value: float
    unit: str = ""

    def __str__(self) -> str:
        return f"{self.value!r} {self.unit}" if self.unit else repr(self.value)


def _quantity(key: str, raw, table: dict, required: bool) -> Quantity:
    if isinstance(raw, bool):
        raise ConfigError(key, "expected a quantity")
    if isinstance(raw, (int, float)):
        if required:
            raise ConfigError(key, f"unit tag required (one of {', '.join(table)})")
        return Quantity(float(raw))
    m = _QTY.match(str(raw))
    if not m:
        raise ConfigError(key, f"cannot parse quantity {raw!r}")
    try:
        value = float(m.group(1))
    except ValueError:
        raise ConfigError(key, f"cannot parse number in {raw!r}") from None
    unit = m.group(2)
    if unit == "" and required:
        raise ConfigError(key, f"unit tag required (one of {', '.join(table)})")
    if unit and unit not in table:
        raise ConfigError(key, f"unit {unit!r} not allowed here (use {', '.join(table)})")
    return Quantity(value, unit)


@dataclass(frozen=True)
class ScenarioConfig:
    protocol: str
    a: Quantity = Quantity(4.0, "um")
    omega: Quantity = Quantity(780.0, "rad/s")
    mass: Quantity = Quantity(1.44e-25, "kg")
    t_f: Quantity = Quantity(320.0, "ms")
    gamma: float = 1.0
    g: float = 0.0
    lams: tuple = (0.0,)
    half_width: float = 12.0
    n_x: int = 513
    n_t: int = 4000
    dt: float | None = None
    two_mode: bool = False
    criteria: bool = False
    initial: str = "perturbed"
    sweep_axis: str = "lambda"
    sweep_values: tuple | None = None
    out_dir: str = "out"
    dump_stride: int = 0

    @property
    def units(self) -> Units:
        return Units(self.mass.value * MASS[self.mass.unit],
                     self.omega.value * FREQUENCY[self.omega.unit])

    def length(self, q: Quantity) -> float:
        return q.value if not q.unit else self.units.to_length(q.value * LENGTH[q.unit])

    def time(self, q: Quantity) -> float:
        return q.value if not q.unit else self.units.to_time(q.value * TIME[q.unit])

    @property
    def a_dimensionless(self) -> float:
        return self.length(self.a)

    @property
    def t_f_dimensionless(self) -> float:
        return self.time(self.t_f)

    def scenario(self) -> Scenario:
        return Scenario(
            protocol=self.protocol, a=self.a_dimensionless, gamma=self.gamma,
            t_f=self.t_f_dimensionless, g=self.g, lams=self.lams,
            half_width=self.half_width, n_x=self.n_x, n_t=self.n_t, dt=self.dt,
            initial=self.initial, two_mode=self.two_mode, criteria=self.criteria,
        )

    def sweep_points(self) -> list[float]:
        """Sweep values in oscillator units."""
        if self.sweep_values is None:
            return list(self.lams)
        if self.sweep_axis == "tf":
            return [self.time(q) for q in self.sweep_values]
        return list(self.sweep_values)

    def to_dict(self) -> dict:
        sweep_values = None
        if self.sweep_values is not None:
            sweep_values = [str(v) if isinstance(v, Quantity) else v for v in self.sweep_values]
        return {
            "protocol": self.protocol,
            "a": str(self.a),
            "omega": str(self.omega),
            "mass": str(self.mass),
            "t_f": str(self.t_f),
            "gamma": self.gamma,
            "g": self.g,
            "lambda": list(self.lams),
            "resolution": {"half_width": self.half_width, "n_x": self.n_x,
                           "n_t": self.n_t, "dt": self.dt},
            "toggles": {"two_mode": self.two_mode, "criteria": self.criteria,
                        "initial": self.initial},
            "sweep": {"axis": self.sweep_axis, "values": sweep_values},
            "output": {"dir": self.out_dir, "dump_stride": self.dump_stride},
        }


TOP_KEYS = {"protocol", "a", "omega", "mass", "t_f", "gamma", "g", "lambda",
            "resolution", "toggles", "sweep", "output"}
SECTIONS = {
    "resolution": {"half_width", "n_x", "n_t", "dt"},
    "toggles": {"two_mode", "criteria", "initial"},
    "sweep": {"axis", "values"},
    "output": {"dir", "dump_stride"},
}


def _number(key, raw, kind=float, allow_none=False):
    if raw is None and allow_none:
        return None
    if isinstance(raw, str):
        # YAML 1.1 reads exponents without a dot (1e-3) as strings
        try:
            raw = float(raw)
        except ValueError:
            raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(key, f"expected a number, got {raw!r}")
    if kind is int:
        if float(raw) != int(raw):
            raise ConfigError(key, "expected an integer")
        return int(raw)
    return float(raw)


def _flag(key, raw):
    if not isinstance(raw, bool):
        raise ConfigError(key, f"expected true/false, got {raw!r}")
    return raw


def from_dict(data) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    for k in data:
        if k not in TOP_KEYS:
            raise ConfigError(str(k), "unknown key")
    if "protocol" not in data:
        raise ConfigError("protocol", "missing (one of " + ", ".join(PROTOCOLS) + ")")
    kw: dict = {}
    protocol = data["protocol"]
    if protocol not in PROTOCOLS:
        raise ConfigError("protocol", f"unknown protocol {protocol!r}")
    kw["protocol"] = protocol
    if "a" in data:
        kw["a"] = _quantity("a", data["a"], LENGTH, False)
    if "omega" in data:
        kw["omega"] = _quantity("omega", data["omega"], FREQUENCY, True)
    if "mass" in data:
        kw["mass"] = _quantity("mass", data["mass"], MASS, True)
    if "t_f" in data:
        kw["t_f"] = _quantity("t_f", data["t_f"], TIME, False)
    if "gamma" in data:
        kw["gamma"] = _number("gamma", data["gamma"])
    if "g" in data:
        kw["g"] = _number("g", data["g"])
    if "lambda" in data:
        raw = data["lambda"]
        raw = raw if isinstance(raw, list) else [raw]
        lams = tuple(_number("lambda", v) for v in raw)
        if any(v < 0 for v in lams):
            raise ConfigError("lambda", "values must be non-negative")
        kw["lams"] = lams

    for sec, allowed in SECTIONS.items():
        block = data.get(sec) or {}
        if not isinstance(block, dict):
            raise ConfigError(sec, "expected a mapping")
        for k in block:
            if k not in allowed:
                raise ConfigError(f"{sec}.{k}", "unknown key")

    res = data.get("resolution") or {}
    if "half_width" in res:
        kw["half_width"] = _number("resolution.half_width", res["half_width"])
    if "n_x" in res:
        kw["n_x"] = _number("resolution.n_x", res["n_x"], int)
        if kw["n_x"] < 5 or kw["n_x"] % 2 == 0:
            raise ConfigError("resolution.n_x", "must be odd and >= 5")
    if "n_t" in res:
        kw["n_t"] = _number("resolution.n_t", res["n_t"], int)
    if "dt" in res:
        kw["dt"] = _number("resolution.dt", res["dt"], allow_none=True)

    tog = data.get("toggles") or {}
    if "two_mode" in tog:
        kw["two_mode"] = _flag("toggles.two_mode", tog["two_mode"])
    if "criteria" in tog:
        kw["criteria"] = _flag("toggles.criteria", tog["criteria"])
    if "initial" in tog:
        if tog["initial"] not in ("perturbed", "unperturbed"):
            raise ConfigError("toggles.initial", "must be perturbed or unperturbed")
        kw["initial"] = tog["initial"]

    sw = data.get("sweep") or {}
    if "axis" in sw:
        if sw["axis"] not in ("lambda", "tf", "g"):
            raise ConfigError("sweep.axis", "must be lambda, tf or g")
        kw["sweep_axis"] = sw["axis"]
    if sw.get("values") is not None:
        vals = sw["values"]
        if not isinstance(vals, list):
            raise ConfigError("sweep.values", "expected a list")
        if kw.get("sweep_axis", "lambda") == "tf":
            kw["sweep_values"] = tuple(_quantity("sweep.values", v, TIME, False) for v in vals)
        else:
            kw["sweep_values"] = tuple(_number("sweep.values", v) for v in vals)

    out = data.get("output") or {}
    if "dir" in out:
        kw["out_dir"] = str(out["dir"])
    if "dump_stride" in out:
        kw["dump_stride"] = _number("output.dump_stride", out["dump_stride"], int)

    cfg = ScenarioConfig(**kw)
    if cfg.omega.value <= 0 or cfg.mass.value <= 0:
        raise ConfigError("omega" if cfg.omega.value <= 0 else "mass", "must be positive")
    if cfg.t_f.value <= 0:
        raise ConfigError("t_f", "must be positive")
    return cfg


def parse_config(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<syntax>", str(exc)) from None
    return from_dict(data)


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def serialize(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def with_overrides(cfg: ScenarioConfig, **kw) -> ScenarioConfig:
    names = {f.name for f in fields(ScenarioConfig)}
    bad = set(kw) - names
    if bad:
        raise ConfigError(sorted(bad)[0], "unknown key")
    return replace(cfg, **kw)


__all__ = ["ConfigError", "Quantity", "ScenarioConfig", "from_dict", "parse_config",
           "load_config", "serialize", "with_overrides"]
