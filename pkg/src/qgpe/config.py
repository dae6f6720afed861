"""Flat key-value run configuration.

Format: one ``section.key = value`` pair per line, ``#`` comments, UTF-8;
dotted section names only (no bracket syntax), trivially parseable
anywhere.  Unknown keys and malformed lines are errors carrying the line
number.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .params import PhysParams


class ConfigError(ValueError):
    """Invalid configuration; carries an exit-code-2 contract at the CLI."""

    def __init__(self, message: str, lineno: int | None = None, key: str | None = None):
        loc = []
        if lineno is not None:
            loc.append(f"line {lineno}")
        if key is not None:
            loc.append(f"key {key!r}")
        prefix = f"[{', '.join(loc)}] " if loc else ""
        super().__init__(prefix + message)
        self.lineno = lineno
        self.key = key


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines into a string map."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno=lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError("empty key or value", lineno=lineno)
        if key in out:
            raise ConfigError("duplicate key", lineno=lineno, key=key)
        out[key] = value
    return out


_INIT_KINDS = ("qg_random", "osc_random", "mixed_theorem2", "mixed_theorem4")
_METHODS = ("if-rk4", "etd-rk2")


@dataclass
class RunConfig:
    grid_n: int = 32
    grid_box_length: float = 8.0 * np.pi
    phys_epsilon: float = 0.1
    phys_F: float = 2.0
    phys_nu: float = 0.05
    phys_nu_prime: float = 0.05
    trunc_m: float = 0.1
    trunc_M: float = 0.2
    time_dt: float = 0.01
    time_t_end: float = 1.0
    time_method: str = "if-rk4"
    init_kind: str = "qg_random"
    init_gamma: float = 0.0
    init_delta: float = 0.1
    init_alpha0: float = 1.0
    init_seed: int = 1234
    output_dir: str = "out"
    output_snapshot_every: int = 0

    KEYMAP = {
        "grid.n": ("grid_n", int),
        "grid.box_length": ("grid_box_length", float),
        "phys.epsilon": ("phys_epsilon", float),
        "phys.F": ("phys_F", float),
        "phys.nu": ("phys_nu", float),
        "phys.nu_prime": ("phys_nu_prime", float),
        "trunc.m": ("trunc_m", float),
        "trunc.M": ("trunc_M", float),
        "time.dt": ("time_dt", float),
        "time.t_end": ("time_t_end", float),
        "time.method": ("time_method", str),
        "init.kind": ("init_kind", str),
        "init.gamma": ("init_gamma", float),
        "init.delta": ("init_delta", float),
        "init.alpha0": ("init_alpha0", float),
        "init.seed": ("init_seed", int),
        "output.dir": ("output_dir", str),
        "output.snapshot_every": ("output_snapshot_every", int),
    }

    @classmethod
    def from_mapping(cls, kv: dict[str, str]) -> "RunConfig":
        cfg = cls()
        for key, value in kv.items():
            if key not in cls.KEYMAP:
                raise ConfigError("unknown key", key=key)
            attr, conv = cls.KEYMAP[key]
            try:
                setattr(cfg, attr, conv(value))
            except ValueError:
                raise ConfigError(f"cannot parse {value!r} as {conv.__name__}", key=key) from None
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.grid_n < 8 or self.grid_n % 2 != 0:
            raise ConfigError("grid.n must be even and >= 8", key="grid.n")
        if self.grid_box_length <= 0:
            raise ConfigError("grid.box_length must be positive", key="grid.box_length")
        if self.phys_F == 1.0:
            raise ConfigError("F must differ from 1 (the non-dispersive regime is out of scope)",
                              key="phys.F")
        if self.phys_nu <= 0 or self.phys_nu_prime <= 0:
            raise ConfigError("viscosities must be positive for runs", key="phys.nu")
        try:
            self.phys_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.time_dt <= 0:
            raise ConfigError("time.dt must be positive", key="time.dt")
        if self.time_t_end < 0:
            raise ConfigError("time.t_end must be nonnegative", key="time.t_end")
        if self.time_method not in _METHODS:
            raise ConfigError(f"time.method must be one of {_METHODS}", key="time.method")
        if self.init_kind not in _INIT_KINDS:
            raise ConfigError(f"init.kind must be one of {_INIT_KINDS}", key="init.kind")
        if self.init_kind != "qg_random" and self.init_gamma < 0:
            raise ConfigError("init.gamma must be nonnegative", key="init.gamma")
        if self.init_delta <= 0:
            raise ConfigError("init.delta must be positive", key="init.delta")
        if self.output_snapshot_every < 0:
            raise ConfigError("output.snapshot_every must be >= 0", key="output.snapshot_every")

    def phys_params(self) -> PhysParams:
        return PhysParams(self.phys_epsilon, self.phys_F, self.phys_nu,
                          self.phys_nu_prime, self.trunc_m, self.trunc_M)

    def to_mapping(self) -> dict[str, str]:
        inverse = {attr: key for key, (attr, _) in self.KEYMAP.items()}
        return {inverse[f.name]: str(getattr(self, f.name))
                for f in fields(self) if f.name in inverse}


def load_config(path: str | None = None, overrides: list[str] | None = None) -> RunConfig:
    kv: dict[str, str] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                kv = parse_kv_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        kv[key.strip()] = value.strip()
    return RunConfig.from_mapping(kv)


_SWEEP_KEYS = {
    "sweep.kind": ("kind", str),
    "sweep.parameter": ("parameter", str),
    "sweep.values": ("values", "floats"),
    "sweep.data_family": ("data_family", str),
    "sweep.seed": ("seed", int),
    "sweep.grid_n": ("grid_n", int),
    "sweep.box_length": ("box_length", float),
    "sweep.F": ("froude_F", float),
    "sweep.nu": ("nu", float),
    "sweep.nu_prime": ("nu_prime", float),
    "sweep.m": ("m", float),
    "sweep.M": ("M", float),
    "sweep.C0": ("C0", float),
    "sweep.gamma": ("gamma", float),
    "sweep.alpha0": ("alpha0", float),
    "sweep.delta": ("delta_reg", float),
    "sweep.t_end": ("t_end", float),
    "sweep.dt_cap": ("dt_cap", float),
    "sweep.method": ("method", str),
    "sweep.radii": ("radii", "radii"),
    "sweep.epsilon_fixed": ("epsilon_fixed", float),
}


def load_sweep_plan(path: str, overrides: list[str] | None = None):
    from .experiments import SweepPlan

    try:
        with open(path, "r", encoding="utf-8") as fh:
            kv = parse_kv_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read plan: {exc}")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        kv[key.strip()] = value.strip()
    kwargs = {}
    for key, value in kv.items():
        if key not in _SWEEP_KEYS:
            raise ConfigError("unknown key", key=key)
        attr, conv = _SWEEP_KEYS[key]
        try:
            if conv == "floats":
                kwargs[attr] = tuple(float(tok) for tok in value.replace(",", " ").split())
            elif conv == "radii":
                if value.strip().lower() == "coupled":
                    kwargs[attr] = None
                else:
                    toks = [float(tok) for tok in value.replace(",", " ").split()]
                    if len(toks) != 2:
                        raise ValueError("expected two radii or 'coupled'")
                    kwargs[attr] = (toks[0], toks[1])
            else:
                kwargs[attr] = conv(value)
        except ValueError as exc:
            raise ConfigError(str(exc), key=key) from None
    if "kind" not in kwargs:
        raise ConfigError("missing required key", key="sweep.kind")
    try:
        return SweepPlan(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
