"""Run configuration: typed fields, INI or JSON files, environment overrides."""
import configparser
import dataclasses
import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

ENV_PREFIX = "MSG_"
SUITES = ("identities", "convergence", "evolution", "gauge_flow", "inequalities")
DATA_KINDS = ("flat", "perturbation", "traveling_wave")
PROFILES = ("sine", "exp_sine", "bump")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dim: int = 2
    n: int = 32
    codim: int = 1
    t_final: float = 1.0
    dt: float = 0.05
    mode: str = "parametric"
    data: str = "flat"
    seed: int = 0
    amplitude: float = 0.0
    band: int = 4
    profile: str = "sine"
    suite: str = "identities"
    out: str = "runs"
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        need(self.dim in (1, 2, 3), f"dim must be 1, 2 or 3, got {self.dim}")
        need(self.n >= 4 and self.n % 2 == 0 and self.n <= 512, f"n must be even in [4, 512], got {self.n}")
        need(1 <= self.codim <= 3, f"codim must be 1..3, got {self.codim}")
        need(self.t_final >= 0, "t_final must be non-negative")
        need(0 < self.dt <= 1, f"dt must lie in (0, 1], got {self.dt}")
        need(self.mode in ("scalar", "parametric"), f"unknown mode {self.mode!r}")
        need(self.mode == "parametric" or self.codim == 1, "scalar mode is codimension one")
        need(self.data in DATA_KINDS, f"data must be one of {DATA_KINDS}")
        need(self.seed >= 0 and self.seed < 2**64, "seed must be an unsigned 64-bit integer")
        need(0 <= self.amplitude <= 0.5, f"amplitude must lie in [0, 0.5], got {self.amplitude}")
        need(1 <= self.band <= 64, f"band must lie in [1, 64], got {self.band}")
        need(self.profile in PROFILES, f"profile must be one of {PROFILES}")
        need(self.suite in SUITES, f"suite must be one of {SUITES}")
        for k, v in self.tolerances.items():
            need(isinstance(v, float) and v > 0, f"tolerance {k!r} must be a positive float")

    # serialization ---------------------------------------------------------
    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_ini(self):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        flat = self.to_dict()
        tol = flat.pop("tolerances")
        cp["run"] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in flat.items()}
        cp["tolerances"] = {k: repr(v) for k, v in sorted(tol.items())}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def config_hash(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name, value):
    if name not in _FIELDS or name == "tolerances":
        raise ConfigError(f"unknown config key {name!r}")
    kind = type(_FIELDS[name].default)
    try:
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot read {value!r} as {kind.__name__}") from exc


def from_mapping(values: dict, tolerances=None) -> RunConfig:
    values = dict(values)
    tol = dict(values.pop("tolerances", {}) or {})
    tol.update(tolerances or {})
    kwargs = {k: _coerce(k, v) for k, v in values.items()}
    try:
        tol = {str(k): float(v) for k, v in tol.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad tolerance value: {exc}") from exc
    return RunConfig(**kwargs, tolerances=tol)


def parse_ini(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    extra = set(cp.sections()) - {"run", "tolerances"}
    if extra:
        raise ConfigError(f"unknown sections {sorted(extra)}")
    run = dict(cp["run"]) if cp.has_section("run") else {}
    tol = dict(cp["tolerances"]) if cp.has_section("tolerances") else {}
    return from_mapping(run, tol)


def parse_json(text: str) -> RunConfig:
    try:
        values = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(values, dict):
        raise ConfigError("JSON config must be an object")
    return from_mapping(values)


def load(path=None, env=None, **overrides) -> RunConfig:
    """File (INI, or JSON by extension/content) < environment < explicit overrides."""
    values = {}
    tol = {}
    if path is not None:
        text = Path(path).read_text()
        base = parse_json(text) if text.lstrip().startswith("{") else parse_ini(text)
        values = base.to_dict()
        tol = values.pop("tolerances")
    env = os.environ if env is None else env
    for key, val in env.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        if name.startswith("tol_"):
            tol[name[4:]] = val
        elif name in _FIELDS:
            values[name] = val
    values.update({k: v for k, v in overrides.items() if v is not None})
    return from_mapping(values, tol)
