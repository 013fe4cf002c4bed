"""Experiment configuration: one YAML file drives every CLI command.

Sections mirror the pipeline stages (plant, excitation, structure, network,
training, control, reference, simulation). Unknown keys are rejected and
cross-section consistency is validated before any computation runs. The
canonical-JSON hash of the parsed configuration is embedded in the derived
artifacts so every output can be traced back to its exact settings.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .controllers import ControlConfig, FORMULATIONS
from .errors import ConfigError
from .mlp import TrainConfig
from .plant import PendulumParams
from .signals import MultisineSpec, ReferenceSpec
from .sqp import SolverOptions

CONFIG_VERSION = 1


@dataclass
class PlantSection:
    mass: float = 1.0
    length: float = 1.0
    gravity: float = 9.81
    damping: float = 0.1
    ts: float = 0.033
    noise_std: float = 0.0
    x0: tuple[float, float] = (0.0, 0.0)

    def params(self) -> PendulumParams:
        return PendulumParams(mass=self.mass, length=self.length,
                              gravity=self.gravity, damping=self.damping, ts=self.ts)


@dataclass
class StructureSection:
    t_ini: int = 5
    horizon: int = 10


@dataclass
class NetworkSection:
    hidden: tuple[int, ...] = (30,)
    activation: str = "tanh"


@dataclass
class SimulationSection:
    t_sim: int = 600


@dataclass
class ExperimentConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    plant: PlantSection = field(default_factory=PlantSection)
    excitation: MultisineSpec = field(default_factory=MultisineSpec)
    structure: StructureSection = field(default_factory=StructureSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    training: TrainConfig = field(default_factory=TrainConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    simulation: SimulationSection = field(default_factory=SimulationSection)

    # ------------------------------------------------------------------
    @property
    def data_samples(self) -> int:
        """Rollout length: one excitation record plus ``t_ini`` extra samples
        (periodic continuation), so the Hankel column count comes out as
        ``excitation length - horizon`` (1000-sample record, horizon 10 ->
        990 columns)."""
        return (self.excitation.period * self.excitation.num_periods
                + self.structure.t_ini)

    @property
    def hankel_columns(self) -> int:
        return self.data_samples - self.structure.t_ini - self.structure.horizon

    def validate(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        self.excitation.validate()
        self.reference.validate()
        t_ini, n = self.structure.t_ini, self.structure.horizon
        if t_ini < 1 or n < 1:
            raise ConfigError("structure.t_ini and structure.horizon must be >= 1")
        regressor_dim = 2 * t_ini + n  # single-input single-output pipeline
        if self.hankel_columns < regressor_dim:
            raise ConfigError(
                f"data yields {self.hankel_columns} Hankel columns but the "
                f"regressor needs at least {regressor_dim}"
            )
        if not self.network.hidden or any(h < 1 for h in self.network.hidden):
            raise ConfigError("network.hidden must be a list of positive widths")
        if self.network.activation not in ("tanh", "linear"):
            raise ConfigError("network.activation must be 'tanh' or 'linear'")
        self.training.validate()
        if self.control.formulation != "compare":
            self.control.validate(1, 1)
        if self.control.horizon != n:
            raise ConfigError("control.horizon must equal structure.horizon")
        if self.simulation.t_sim < 1:
            raise ConfigError("simulation.t_sim must be >= 1")

    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        def convert(obj):
            if dataclasses.is_dataclass(obj):
                return {f.name: convert(getattr(obj, f.name))
                        for f in dataclasses.fields(obj)}
            if isinstance(obj, (list, tuple)):
                return [convert(v) for v in obj]
            if isinstance(obj, np.generic):
                return obj.item()
            if isinstance(obj, np.ndarray):
                return obj.tolist()
            return obj

        return convert(self)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


_SECTION_TYPES = {
    "plant": PlantSection,
    "excitation": MultisineSpec,
    "structure": StructureSection,
    "network": NetworkSection,
    "training": TrainConfig,
    "control": ControlConfig,
    "reference": ReferenceSpec,
    "simulation": SimulationSection,
}

# YAML keys that map onto differently named dataclass fields
_FIELD_ALIASES = {
    "excitation": {"range": "amplitude_range"},
    "control": {"q": "q_weight", "r": "r_weight", "lambda": "reg_weight"},
}


def _coerce(value, default, context: str):
    """Match a YAML scalar to the field's default type.

    YAML 1.1 reads exponents like ``1.0e4`` as strings, so numeric fields
    accept strings that parse as numbers.
    """
    if isinstance(value, (list, tuple)):
        elem = default[0] if isinstance(default, tuple) and default else None
        return tuple(_coerce(v, elem, context) for v in value)
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{context} must be a boolean, got {value!r}")
    try:
        if isinstance(default, float):
            return float(value)
        if isinstance(default, int):
            return int(float(value))
        if default is None and isinstance(value, str):
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context} must be a number, got {value!r}") from exc
    return value


def _build_section(name: str, cls, raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    aliases = _FIELD_ALIASES.get(name, {})
    known = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    kwargs = {}
    for key, value in raw.items():
        target = aliases.get(key, key)
        if target == "solver" and name == "control":
            kwargs["solver"] = _build_section("control.solver", SolverOptions, value)
            continue
        if target not in known:
            raise ConfigError(f"unknown key {key!r} in section {name!r}")
        default = getattr(defaults, target)
        if isinstance(value, (str, list, tuple)) and not isinstance(default, str):
            value = _coerce(value, default, f"{name}.{key}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[target] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {name!r}: {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    kwargs = {}
    for key, value in raw.items():
        if key in ("version", "seed"):
            kwargs[key] = int(value)
        elif key in _SECTION_TYPES:
            kwargs[key] = _build_section(key, _SECTION_TYPES[key], value or {})
        else:
            raise ConfigError(f"unknown top-level key {key!r}")
    cfg = ExperimentConfig(**kwargs)
    control_raw = raw.get("control") or {}
    if "horizon" not in control_raw:
        cfg.control.horizon = cfg.structure.horizon
    if cfg.control.formulation != "compare" and cfg.control.formulation not in FORMULATIONS:
        raise ConfigError(f"unknown formulation {cfg.control.formulation!r}")
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw or {})
