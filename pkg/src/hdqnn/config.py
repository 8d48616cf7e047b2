"""Run configuration: one JSON document, schema-validated, with flat overrides.

A config names the environment, the middle-block variant, the quantum layer,
TD3 and qtDNN hyperparameters, the seeds and the step budget. Unknown keys
are rejected at every level so typos fail loudly instead of being ignored.

Overrides are ``dotted.key=value`` strings; the value is parsed as JSON when
possible (``pqc.shots=1000``, ``seeds=[0,1]``) and kept as a string otherwise
(``env=reacher``).
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import jsonschema

from .envs import ENVIRONMENTS
from .pqc_layer import PqcConfig
from .quantum_core import NoiseConfig
from .rl_agent import VARIANTS, AgentConfig, QtConfig, TrainSettings

OUTPUT_ROOT_ENV = "HDQNN_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Invalid configuration; the message is meant for the command line."""


def _object(properties: dict, required=()) -> dict:
    return {"type": "object", "properties": properties, "required": list(required), "additionalProperties": False}


_INT = {"type": "integer"}
_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_NUM = {"type": "number"}
_RATE = {"type": "number", "minimum": 0, "maximum": 1}

SCHEMA = _object(
    {
        "env": {"enum": sorted(ENVIRONMENTS)},
        "variant": {"enum": list(VARIANTS)},
        "pqc": _object(
            {
                "num_qubits": {"type": "integer", "minimum": 1, "maximum": 24},
                "num_layers": _POS_INT,
                "shots": _POS_INT,
                "bit_flip_rate": _RATE,
                "phase_flip_rate": _RATE,
                "output_mode": {"enum": ["marginal", "most_probable_bitstring"]},
            }
        ),
        "agent": _object(
            {
                "gamma": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "tau": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "batch_size": _POS_INT,
                "actor_delay": _POS_INT,
                "exploration_sigma": {"type": "number", "minimum": 0},
                "target_noise": {"type": "number", "minimum": 0},
                "target_clip": {"type": "number", "minimum": 0},
                "warmup_steps": _NONNEG_INT,
                "replay_capacity": _POS_INT,
                "hidden": _POS_INT,
                "d_clink": _NONNEG_INT,
            }
        ),
        "qt": _object(
            {
                "hidden": _POS_INT,
                "n_tiny": _NONNEG_INT,
                "tiny_batch_size": _POS_INT,
                "buffer_capacity": _POS_INT,
                "buffer_fraction": _RATE,
            }
        ),
        "seeds": {"type": "array", "items": _NONNEG_INT, "minItems": 1},
        "total_steps": _NONNEG_INT,
        "eval_interval": _NONNEG_INT,
        "eval_episodes": _POS_INT,
        "eval_noiseless": {"type": "boolean"},
        "checkpoint_interval": _NONNEG_INT,
        "output_dir": {"type": "string", "minLength": 1},
        "grid": _object(
            {
                "variants": {"type": "array", "items": {"enum": list(VARIANTS)}, "minItems": 1},
                "shots": {"type": "array", "items": _POS_INT, "minItems": 1},
                "qubits": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 24}, "minItems": 1},
            }
        ),
    }
)


@dataclass
class GridConfig:
    variants: list = field(default_factory=lambda: list(VARIANTS))
    shots: list = field(default_factory=lambda: [100])
    qubits: list = field(default_factory=lambda: [5])


@dataclass
class RunConfig:
    env: str = "pendulum"
    variant: str = "pqc"
    pqc: PqcConfig = field(default_factory=PqcConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    qt: QtConfig = field(default_factory=QtConfig)
    seeds: list = field(default_factory=lambda: [0])
    total_steps: int = 50_000
    eval_interval: int = 1000
    eval_episodes: int = 10
    eval_noiseless: bool = False
    checkpoint_interval: int = 0
    output_dir: str = "runs/default"
    grid: GridConfig = field(default_factory=GridConfig)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["pqc"] = self.pqc.to_dict()
        d["agent"] = asdict(self.agent)
        d["qt"] = asdict(self.qt)
        d["grid"] = asdict(self.grid)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        validate(d)
        base = cls()
        pqc = {**base.pqc.to_dict(), **d.get("pqc", {})}
        kw = {k: v for k, v in d.items() if k not in ("pqc", "agent", "qt", "grid")}
        try:
            return cls(
                pqc=PqcConfig(
                    num_qubits=pqc["num_qubits"],
                    num_layers=pqc["num_layers"],
                    shots=pqc["shots"],
                    noise=NoiseConfig(pqc["bit_flip_rate"], pqc["phase_flip_rate"]),
                    output_mode=pqc["output_mode"],
                ),
                agent=AgentConfig(**d.get("agent", {})),
                qt=QtConfig(**d.get("qt", {})),
                grid=GridConfig(**d.get("grid", {})),
                **kw,
            )
        except ValueError as exc:  # semantic checks inside the component configs
            raise ConfigError(str(exc)) from None

    def train_settings(self) -> TrainSettings:
        return TrainSettings(
            total_steps=self.total_steps,
            eval_interval=self.eval_interval,
            eval_episodes=self.eval_episodes,
            checkpoint_interval=self.checkpoint_interval,
            eval_noiseless=self.eval_noiseless,
        )

    def resolved_output_dir(self) -> Path:
        """``output_dir`` resolved against ``$HDQNN_OUTPUT_ROOT`` when relative."""
        out = Path(self.output_dir)
        if out.is_absolute():
            return out
        return Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / out


def validate(d: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for err in errors:
            where = ".".join(str(p) for p in err.absolute_path) or "<root>"
            lines.append(f"{where}: {err.message}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))


def parse_override(text: str) -> tuple[list[str], object]:
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {text!r} is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(d: dict, overrides) -> dict:
    out = copy.deepcopy(d)
    for text in overrides or ():
        path, value = parse_override(text)
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r}: {part!r} is not a section")
        node[path[-1]] = value
    return out


def load_config(path=None, overrides=None) -> RunConfig:
    """Read, override and validate a config. ``path=None`` starts from defaults."""
    if path is None:
        raw = {}
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    return RunConfig.from_dict(apply_overrides(raw, overrides))
