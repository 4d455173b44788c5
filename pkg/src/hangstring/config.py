"""TOML experiment configuration with strict key checking.

Layout (every section optional except where the kind needs it)::

    kind = "eigenmode"
    seed = 20240611
    output_dir = "runs/eigenmode"

    [mesh]
    n = 512
    grading = 1.0

    [time]
    T = 5.2255
    dt = 0.001

    [physics]
    g = [0.0, -1.0]
    background = "straight"     # or a CSV path, or "swaying"
    eps = 0.0

    [data]
    generator = "chain_mode"    # zero | constant | chain_mode | transverse_chain_mode | random_smooth | file
    value = 1.0                 # constant generator
    path = ""                   # file generator: CSV with columns s, comp, u0, u1

    [params]                    # kind-specific, see KIND_PARAMS
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .errors import ConfigError

KINDS = ("eigenmode", "epsilon_sweep", "refinement", "picard_gamma_sweep", "compat_check",
         "norm_equivalence", "energy_verify")

GENERATORS = ("zero", "constant", "chain_mode", "transverse_chain_mode", "random_smooth", "file")

# default params per kind; keys not listed here are rejected
KIND_PARAMS = {
    "eigenmode": {"freq_tol": 0.01, "refine_n": [], "min_order": 1.8, "periods": 1.0, "csv_stride": 50},
    "epsilon_sweep": {"eps_list": [0.1, 0.05, 0.025, 0.0125, 0.0], "min_slope": 0.9, "csv_stride": 50},
    "refinement": {"n_list": [64, 128, 256, 512], "min_order": 1.9, "exact_tol": 1e-12},
    "picard_gamma_sweep": {"gamma_list": [5.0, 10.0, 20.0, 40.0], "max_iter": 30, "tol": 1e-10,
                           "slope_range": [-1.3, -0.7], "match_tol": 1e-6, "csv_stride": 10},
    "compat_check": {"m": 2, "tol": 1e-6, "dt_coeff": 1e-3},
    "norm_equivalence": {"m_list": [0, 1, 2], "n_list": [256, 512], "draws": 50, "max_spread": 20.0,
                         "stability": 0.10},
    "energy_verify": {"gamma_list": [1.0, 2.0, 4.0, 8.0, 16.0], "cap": 50.0, "m": 2, "allow_m4": False,
                      "scale": 1.0, "csv_stride": 50},
}

_REQUIRED_TIME = {"eigenmode", "epsilon_sweep", "picard_gamma_sweep", "energy_verify"}


@dataclass
class MeshConfig:
    n: int = 128
    grading: float = 1.0


@dataclass
class TimeConfig:
    T: float = 1.0
    dt: float = 1e-2


@dataclass
class PhysicsConfig:
    g: list = field(default_factory=lambda: [0.0, -1.0])
    background: str = "straight"
    eps: float = 0.0


@dataclass
class DataConfig:
    generator: str = "chain_mode"
    value: float = 1.0
    path: str = ""


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    output_dir: str = "runs"
    mesh: MeshConfig = field(default_factory=MeshConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    data: DataConfig = field(default_factory=DataConfig)
    params: dict = field(default_factory=dict)
    source: str = ""

    def resolved(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d


_SECTIONS = {"mesh": MeshConfig, "time": TimeConfig, "physics": PhysicsConfig, "data": DataConfig}
_TOP = {"kind", "seed", "output_dir", "params"} | set(_SECTIONS)


def _build(cls, raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = set(cls.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    return cls(**raw)


def _number(x, name, positive=True):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{name} must be a number")
    if positive and not x > 0:
        raise ConfigError(f"{name} must be positive")


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    unknown = set(raw) - _TOP
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}; got {kind!r}")
    sections = {name: _build(cls, raw.get(name, {}), name) for name, cls in _SECTIONS.items()}
    if kind in _REQUIRED_TIME and "time" not in raw:
        raise ConfigError(f"kind {kind} needs a [time] section")
    params = copy.deepcopy(KIND_PARAMS[kind])
    given = raw.get("params", {})
    if not isinstance(given, dict):
        raise ConfigError("[params] must be a table")
    bad = set(given) - set(params)
    if bad:
        raise ConfigError(f"unknown key(s) in [params] for {kind}: {', '.join(sorted(bad))}")
    params.update(given)
    cfg = ExperimentConfig(kind=kind, seed=int(raw.get("seed", 0)), output_dir=str(raw.get("output_dir", "runs")),
                           params=params, source=source, **sections)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if not isinstance(cfg.mesh.n, int) or cfg.mesh.n < 4:
        raise ConfigError("mesh.n must be an integer >= 4")
    _number(cfg.mesh.grading, "mesh.grading")
    if cfg.mesh.grading < 1:
        raise ConfigError("mesh.grading must be >= 1")
    _number(cfg.time.T, "time.T")
    _number(cfg.time.dt, "time.dt")
    if cfg.time.dt > cfg.time.T:
        raise ConfigError("time.dt must not exceed time.T")
    if not (isinstance(cfg.physics.g, list) and len(cfg.physics.g) in (1, 2, 3)):
        raise ConfigError("physics.g must be a list of 1 to 3 numbers")
    for x in cfg.physics.g:
        _number(x, "physics.g entry", positive=False)
    _number(cfg.physics.eps, "physics.eps", positive=False)
    if not 0 <= cfg.physics.eps <= 1:
        raise ConfigError("physics.eps must lie in [0, 1]")
    bgname = cfg.physics.background
    if bgname not in ("straight", "swaying") and not Path(bgname).is_file():
        raise ConfigError(f"background file not found: {bgname}")
    if cfg.data.generator not in GENERATORS:
        raise ConfigError(f"data.generator must be one of {', '.join(GENERATORS)}")
    if cfg.data.generator == "file" and not Path(cfg.data.path).is_file():
        raise ConfigError(f"data file not found: {cfg.data.path}")
    p = cfg.params
    for key in ("freq_tol", "tol", "match_tol", "exact_tol", "cap", "dt_coeff", "max_spread", "stability"):
        if key in p:
            _number(p[key], f"params.{key}")
    for key in ("eps_list", "gamma_list", "n_list", "m_list", "refine_n", "slope_range"):
        if key in p and not isinstance(p[key], list):
            raise ConfigError(f"params.{key} must be a list")
    if "eps_list" in p:
        e = p["eps_list"]
        if len(e) < 1 or any(b >= a for a, b in zip(e, e[1:])) or any(x < 0 for x in e):
            raise ConfigError("params.eps_list must be strictly decreasing and nonnegative")
    if "gamma_list" in p and (not p["gamma_list"] or any(not g > 0 for g in p["gamma_list"])):
        raise ConfigError("params.gamma_list must hold positive values")
    if "m" in p and p["m"] not in (2, 3, 4):
        raise ConfigError("params.m must be 2, 3 or 4")


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, str(p))
